"""Line-oriented cluster scenarios.

::

    # comments and blank lines are ignored
    config poll_interval 5
    at 0 start_server Apphope0 [capacity]
    at 0 deploy FlightBooking Apphope0
    at 10 invoke s1 FlightBooking book 3, "LH400"
    at 100 crash_server Apphope0
    at 150 recover_server Apphope0
    at 40 set_load_threshold 5 [server]
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from haff.errors import HaffError, ScenarioError
from haff.runtime import Value, parse_args_text

CONFIG_KEYS = ("poll_interval", "miss_threshold", "capacity", "overload_threshold", "steps_per_tick")
ACTIONS = ("start_server", "deploy", "invoke", "crash_server", "recover_server", "set_load_threshold")

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*\Z")
_SESSION = re.compile(r"[A-Za-z0-9_.\-]+\Z")


@dataclass(frozen=True)
class SimConfig:
    poll_interval: int = 5
    miss_threshold: int = 2
    capacity: int = 100
    overload_threshold: int = 10
    steps_per_tick: int = 1


@dataclass
class ScenarioEvent:
    tick: int
    action: str
    line: int
    server: str = ""
    service: str = ""
    session: str = ""
    method: str = ""
    args: list[Value] = field(default_factory=list)
    value: Optional[int] = None


@dataclass
class Scenario:
    events: list[ScenarioEvent] = field(default_factory=list)
    config: SimConfig = field(default_factory=SimConfig)

    def ordered(self) -> list[ScenarioEvent]:
        # stable sort keeps file order within a tick
        return sorted(self.events, key=lambda e: e.tick)


def _int(text: str, what: str, lineno: int, minimum: int = 0) -> int:
    try:
        n = int(text)
    except ValueError:
        raise ScenarioError(f"{what} must be an integer, got {text!r}", lineno) from None
    if n < minimum:
        raise ScenarioError(f"{what} must be >= {minimum}, got {n}", lineno)
    return n


def _name(text: str, what: str, lineno: int, pattern: re.Pattern = _NAME) -> str:
    if not pattern.match(text):
        raise ScenarioError(f"invalid {what} {text!r}", lineno)
    return text


def _arity(parts: list[str], low: int, high: int, usage: str, lineno: int) -> None:
    if not low <= len(parts) <= high:
        raise ScenarioError(f"expected '{usage}'", lineno)


def _event(tick: int, action: str, rest: str, lineno: int) -> ScenarioEvent:
    parts = rest.split()
    ev = ScenarioEvent(tick, action, lineno)
    if action == "start_server":
        _arity(parts, 1, 2, "start_server <server> [capacity]", lineno)
        ev.server = _name(parts[0], "server name", lineno)
        if len(parts) == 2:
            ev.value = _int(parts[1], "capacity", lineno, 1)
    elif action == "deploy":
        _arity(parts, 2, 2, "deploy <service> <server>", lineno)
        ev.service = _name(parts[0], "service name", lineno)
        ev.server = _name(parts[1], "server name", lineno)
    elif action == "invoke":
        head = rest.split(None, 3)
        if len(head) < 3:
            raise ScenarioError("expected 'invoke <session> <service> <method> [args]'", lineno)
        ev.session = _name(head[0], "session id", lineno, _SESSION)
        ev.service = _name(head[1], "service name", lineno)
        ev.method = _name(head[2], "method name", lineno)
        try:
            ev.args = parse_args_text(head[3]) if len(head) == 4 else []
        except HaffError as e:
            raise ScenarioError(f"bad invoke arguments: {e}", lineno) from None
    elif action in ("crash_server", "recover_server"):
        _arity(parts, 1, 1, f"{action} <server>", lineno)
        ev.server = _name(parts[0], "server name", lineno)
    elif action == "set_load_threshold":
        _arity(parts, 1, 2, "set_load_threshold <value> [server]", lineno)
        ev.value = _int(parts[0], "load threshold", lineno)
        if len(parts) == 2:
            ev.server = _name(parts[1], "server name", lineno)
    else:
        raise ScenarioError(f"unknown action {action!r}; expected one of {', '.join(ACTIONS)}", lineno)
    return ev


def parse_scenario(text: str) -> Scenario:
    events: list[ScenarioEvent] = []
    settings: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 3)
        if parts[0] == "config":
            if len(parts) != 3 or parts[1] not in CONFIG_KEYS:
                raise ScenarioError(f"expected 'config <key> <value>' with key in {', '.join(CONFIG_KEYS)}",
                                    lineno)
            minimum = 0 if parts[1] == "overload_threshold" else 1
            settings[parts[1]] = _int(parts[2], parts[1], lineno, minimum)
            continue
        if parts[0] != "at" or len(parts) < 3:
            raise ScenarioError("expected 'at <tick> <action> <args>' or 'config <key> <value>'", lineno)
        tick = _int(parts[1], "tick", lineno)
        events.append(_event(tick, parts[2], parts[3] if len(parts) == 4 else "", lineno))
    return Scenario(events, SimConfig(**settings))
