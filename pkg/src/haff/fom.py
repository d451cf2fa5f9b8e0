"""Failover management: persistence of failover-point state.

Records are keyed by ``(session_id, method_id, level_count)``; the FOP index
lives inside the record. Two backends share one behaviour: an in-memory store
and a directory of per-session ``.fostate`` files.

Recovery activations
--------------------
A method activation is *in recovery* when a record for its key existed at the
moment the activation began (:meth:`FailoverManagement.begin_activation`).
``get_fop_count`` reports the persisted index until ``recover_state`` consumes
it; from then on, and for anything the activation stores itself, it reports 0.
"""

from __future__ import annotations

import os
import re
import threading
import xml.etree.ElementTree as ET
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from haff.atomic import write_atomic
from haff.errors import BackendIoError, ConfigError, NoRecordError, NoRuleError, SerializationError

Value = Union[int, str, bool]
Key = tuple[int, int]  # (method_id, level_count) within one session

INT_MIN, INT_MAX = -2**63, 2**63 - 1
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_SESSION = re.compile(r"[A-Za-z0-9_.\-]+\Z")


@dataclass(frozen=True)
class FopIdentity:
    session_id: str
    method_id: int
    level_count: int
    fop_index: int

    def __post_init__(self):
        if not self.session_id:
            raise ValueError("session_id must be nonempty")
        for name in ("method_id", "level_count", "fop_index"):
            v = getattr(self, name)
            if type(v) is not int or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")


@dataclass
class FopRecord:
    fop_index: int
    bindings: list[tuple[str, Value]]
    stored_at: int = 0

    def as_dict(self) -> dict[str, Value]:
        return dict(self.bindings)


def check_bindings(bindings) -> list[tuple[str, Value]]:
    items = list(bindings.items()) if isinstance(bindings, dict) else list(bindings)
    seen = set()
    out = []
    for name, value in items:
        if not isinstance(name, str) or not _NAME.match(name):
            raise SerializationError(f"bad variable name {name!r}")
        if name in seen:
            raise SerializationError(f"duplicate binding {name!r}")
        seen.add(name)
        if type(value) is int:
            if not INT_MIN <= value <= INT_MAX:
                raise SerializationError(f"{name}: int out of 64-bit range")
        elif type(value) not in (str, bool):
            raise SerializationError(f"{name}: cannot persist value of type {type(value).__name__}")
        out.append((name, value))
    return out


# --- state file format ----------------------------------------------------

def _encode_str(s: str) -> str:
    return s.replace("%", "%25").replace(" ", "%20").replace("\n", "%0A")


def _decode_str(s: str) -> str:
    return re.sub(r"%(25|20|0A)", lambda m: {"25": "%", "20": " ", "0A": "\n"}[m.group(1)], s)


def dump_state(records: dict[Key, FopRecord]) -> str:
    lines = []
    for (method_id, level), rec in sorted(records.items()):
        lines.append(f"rec {method_id} {level} {rec.fop_index} {rec.stored_at}")
        for name, value in rec.bindings:
            if type(value) is bool:
                lines.append(f"var {name} bool {'true' if value else 'false'}")
            elif type(value) is int:
                lines.append(f"var {name} int {value}")
            else:
                lines.append(f"var {name} str {_encode_str(value)}")
    return "".join(line + "\n" for line in lines)


def _int_field(raw: str, lineno: int) -> int:
    try:
        return int(raw)
    except ValueError:
        raise BackendIoError(f"state line {lineno}: bad integer {raw!r}") from None


def load_state(text: str) -> dict[Key, FopRecord]:
    records: dict[Key, FopRecord] = {}
    current: FopRecord | None = None
    for lineno, line in enumerate(text.split("\n"), 1):
        if line == "":
            continue
        if line.startswith("rec "):
            parts = line.split(" ")
            if len(parts) != 5:
                raise BackendIoError(f"state line {lineno}: malformed record header")
            method_id, level, index, stamp = (_int_field(p, lineno) for p in parts[1:])
            current = FopRecord(index, [], stamp)
            records[(method_id, level)] = current
        elif line.startswith("var "):
            parts = line.split(" ", 3)
            if current is None or len(parts) != 4:
                raise BackendIoError(f"state line {lineno}: variable outside a record")
            _, name, typ, raw = parts
            if typ == "int":
                value: Value = _int_field(raw, lineno)
            elif typ == "bool":
                if raw not in ("true", "false"):
                    raise BackendIoError(f"state line {lineno}: bad bool {raw!r}")
                value = raw == "true"
            elif typ == "str":
                value = _decode_str(raw)
            else:
                raise BackendIoError(f"state line {lineno}: unknown type {typ!r}")
            current.bindings.append((name, value))
        else:
            raise BackendIoError(f"state line {lineno}: unrecognised line {line!r}")
    return records


# --- management -----------------------------------------------------------

class FailoverManagement:
    """Backend-agnostic FOP record administration."""

    backend = "abstract"

    def __init__(self):
        self._live: set[tuple[str, int, int]] = set()
        self._locks: dict[str, threading.RLock] = defaultdict(threading.RLock)
        self._locks_guard = threading.Lock()

    def _lock(self, session_id: str) -> threading.RLock:
        with self._locks_guard:
            return self._locks[session_id]

    # storage primitives
    def _load(self, session_id: str) -> dict[Key, FopRecord]:
        raise NotImplementedError

    def _save(self, session_id: str, records: dict[Key, FopRecord]) -> None:
        raise NotImplementedError

    def sessions(self) -> list[str]:
        raise NotImplementedError

    # operations
    def begin_activation(self, session_id: str, method_id: int, level_count: int) -> bool:
        """Start a method activation; returns True when it is a recovery activation."""
        with self._lock(session_id):
            key = (session_id, method_id, level_count)
            self._live.discard(key)
            return (method_id, level_count) in self._load(session_id)

    def get_fop_count(self, session_id: str, method_id: int, level_count: int) -> int:
        FopIdentity(session_id, method_id, level_count, 1)
        with self._lock(session_id):
            if (session_id, method_id, level_count) in self._live:
                return 0
            rec = self._load(session_id).get((method_id, level_count))
            return rec.fop_index if rec else 0

    def store_state(self, session_id: str, method_id: int, level_count: int,
                    fop_index: int, bindings) -> None:
        FopIdentity(session_id, method_id, level_count, fop_index)
        clean = check_bindings(bindings)
        with self._lock(session_id):
            records = self._load(session_id)
            stamp = max((r.stored_at for r in records.values()), default=0) + 1
            records[(method_id, level_count)] = FopRecord(fop_index, clean, stamp)
            self._save(session_id, records)
            self._live.add((session_id, method_id, level_count))

    def recover_state(self, session_id: str, method_id: int, level_count: int,
                      fop_index: int) -> list[tuple[str, Value]]:
        FopIdentity(session_id, method_id, level_count, fop_index)
        with self._lock(session_id):
            key = (session_id, method_id, level_count)
            rec = self._load(session_id).get((method_id, level_count))
            if rec is None:
                raise NoRecordError(f"no record for {key}")
            if rec.fop_index != fop_index:
                raise NoRecordError(
                    f"record for {key} holds FOP {rec.fop_index}, recovery asked for {fop_index}")
            if key in self._live:
                raise NoRecordError(f"record for {key} was already consumed by this activation")
            self._live.add(key)
            return list(rec.bindings)

    def clear_level(self, session_id: str, method_id: int, level_count: int) -> None:
        with self._lock(session_id):
            records = self._load(session_id)
            self._live.discard((session_id, method_id, level_count))
            if records.pop((method_id, level_count), None) is not None:
                self._save(session_id, records)

    def clear_session(self, session_id: str) -> None:
        with self._lock(session_id):
            self._live = {k for k in self._live if k[0] != session_id}
            self._save(session_id, {})

    def records(self, session_id: str) -> dict[Key, FopRecord]:
        with self._lock(session_id):
            return {k: FopRecord(r.fop_index, list(r.bindings), r.stored_at)
                    for k, r in self._load(session_id).items()}


class MemoryFom(FailoverManagement):
    backend = "memory"

    def __init__(self):
        super().__init__()
        self._store: dict[str, dict[Key, FopRecord]] = {}

    def _load(self, session_id):
        return {k: FopRecord(r.fop_index, list(r.bindings), r.stored_at)
                for k, r in self._store.get(session_id, {}).items()}

    def _save(self, session_id, records):
        if records:
            self._store[session_id] = {k: FopRecord(r.fop_index, list(r.bindings), r.stored_at)
                                       for k, r in records.items()}
        else:
            self._store.pop(session_id, None)

    def sessions(self):
        return sorted(self._store)

    def seed(self, session_id: str, records: dict[Key, FopRecord]) -> None:
        self._save(session_id, records)


class FileFom(FailoverManagement):
    """One ``<session_id>.fostate`` file per session inside ``directory``."""

    backend = "file"

    def __init__(self, directory: str | os.PathLike):
        super().__init__()
        self.directory = Path(directory)

    def path_for(self, session_id: str) -> Path:
        if not _SESSION.match(session_id) or session_id in (".", ".."):
            raise BackendIoError(f"session id {session_id!r} is not usable as a file name")
        return self.directory / f"{session_id}.fostate"

    def _load(self, session_id):
        path = self.path_for(session_id)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            return {}
        except OSError as e:
            raise BackendIoError(f"cannot read {path}: {e}") from e
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise BackendIoError(f"{path} is not valid UTF-8: {e}") from e
        return load_state(text)

    def _save(self, session_id, records):
        path = self.path_for(session_id)
        try:
            if records:
                write_atomic(path, dump_state(records))
            else:
                path.unlink(missing_ok=True)
        except OSError as e:
            raise BackendIoError(f"cannot write {path}: {e}") from e

    def sessions(self):
        if not self.directory.is_dir():
            return []
        return sorted(p.name[:-len(".fostate")] for p in self.directory.glob("*.fostate"))


# --- configuration and factory ---------------------------------------------

BACKENDS = ("memory", "file")


@dataclass(frozen=True)
class FomRule:
    service_pattern: str
    backend: str
    params: dict[str, str] = field(default_factory=dict)

    def matches(self, service: str) -> bool:
        return self.service_pattern == "*" or self.service_pattern == service


@dataclass
class FomConfig:
    rules: list[FomRule] = field(default_factory=list)

    def rule_for(self, service: str) -> FomRule:
        for rule in self.rules:
            if rule.matches(service):
                return rule
        raise NoRuleError(f"no failover management rule for service {service!r}")


def parse_config(text: str, base_dir: str | os.PathLike | None = None) -> FomConfig:
    """Parse the ``<failover><service .../></failover>`` XML configuration.

    Relative ``dir`` attributes resolve against ``base_dir`` when given.
    """
    if "<!DOCTYPE" in text or "<!ENTITY" in text:
        raise ConfigError("DTDs and entities are not supported in failover config")
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise ConfigError(f"malformed config XML: {e}") from e
    if root.tag != "failover":
        raise ConfigError(f"config root must be <failover>, got <{root.tag}>")
    rules = []
    for el in root:
        if el.tag != "service":
            raise ConfigError(f"unexpected element <{el.tag}> in config")
        attrs = dict(el.attrib)
        name = attrs.pop("name", None)
        backend = attrs.pop("fom", None)
        if not name or not backend:
            raise ConfigError("<service> needs name and fom attributes")
        if "dir" in attrs and base_dir is not None and not os.path.isabs(attrs["dir"]):
            attrs["dir"] = str(Path(base_dir) / attrs["dir"])
        rules.append(FomRule(name, backend, attrs))
    return FomConfig(rules)


def load_config(path: str | os.PathLike) -> FomConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, base_dir=path.parent)


def fom_for_service(config: FomConfig, service_name: str) -> FailoverManagement:
    """Factory: first matching rule decides the backend."""
    rule = config.rule_for(service_name)
    if rule.backend == "memory":
        return MemoryFom()
    if rule.backend == "file":
        directory = rule.params.get("dir")
        if not directory:
            raise ConfigError(f"file backend for {rule.service_pattern!r} needs a dir attribute")
        return FileFom(Path(directory) / service_name)
    raise ConfigError(f"unknown failover backend {rule.backend!r}; expected one of {BACKENDS}")
