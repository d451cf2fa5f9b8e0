"""Parsing of failover directives found inside ``<MISet>`` blocks.

Recognised directives::

    failover.VarSetDef("VarSet1", str, i)
    failover.Failoverpoint(j, #VarSet1)
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from haff.errors import MetaSyntaxError

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<setref>\#[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"[^"\\\n]*")
  | (?P<punct>[.(),;])
""", re.VERBOSE)


@dataclass(frozen=True)
class Ident:
    name: str


@dataclass(frozen=True)
class SetRef:
    name: str


@dataclass(frozen=True)
class VarSetDef:
    name: str
    vars: tuple[str, ...]


@dataclass(frozen=True)
class Failoverpoint:
    args: tuple[Union[Ident, SetRef], ...]


MetaDirective = Union[VarSetDef, Failoverpoint]


def _lex(raw: str) -> list[tuple[str, str]]:
    out = []
    pos = 0
    while pos < len(raw):
        m = _TOKEN.match(raw, pos)
        if m is None:
            raise MetaSyntaxError(f"unexpected character {raw[pos]!r} in meta-information")
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group()))
        pos = m.end()
    return out


def parse_meta(raw: str) -> list[MetaDirective]:
    """Parse the text between ``<MISet>`` and ``</MISet>`` into directives, in order."""
    toks = _lex(raw)
    i = 0
    directives: list[MetaDirective] = []

    def expect(kind: str, value: str | None = None) -> str:
        nonlocal i
        if i >= len(toks):
            raise MetaSyntaxError(f"unexpected end of meta-information, expected {value or kind}")
        k, v = toks[i]
        if k != kind or (value is not None and v != value):
            raise MetaSyntaxError(f"expected {value or kind}, got {v!r}")
        i += 1
        return v

    while i < len(toks):
        if toks[i] == ("punct", ";"):
            i += 1
            continue
        prefix = expect("ident")
        if prefix != "failover":
            raise MetaSyntaxError(f"unknown directive namespace {prefix!r}")
        expect("punct", ".")
        name = expect("ident")
        expect("punct", "(")
        args: list[tuple[str, str]] = []
        if i < len(toks) and toks[i] != ("punct", ")"):
            while True:
                if i >= len(toks):
                    raise MetaSyntaxError("unterminated argument list")
                args.append(toks[i])
                i += 1
                if i < len(toks) and toks[i] == ("punct", ","):
                    i += 1
                    continue
                break
        expect("punct", ")")
        directives.append(_build(name, args))
    return directives


def _build(name: str, args: list[tuple[str, str]]) -> MetaDirective:
    if name == "VarSetDef":
        if not args or args[0][0] != "string":
            raise MetaSyntaxError("VarSetDef needs a quoted set name first")
        set_name = args[0][1][1:-1]
        if not set_name:
            raise MetaSyntaxError("VarSetDef set name must be nonempty")
        members = args[1:]
        if not members:
            raise MetaSyntaxError(f"VarSetDef {set_name!r} lists no variables")
        for kind, value in members:
            if kind != "ident":
                raise MetaSyntaxError(f"VarSetDef members must be identifiers, got {value!r}")
        return VarSetDef(set_name, tuple(v for _, v in members))
    if name == "Failoverpoint":
        if not args:
            raise MetaSyntaxError("Failoverpoint needs at least one argument")
        items: list[Union[Ident, SetRef]] = []
        for kind, value in args:
            if kind == "ident":
                items.append(Ident(value))
            elif kind == "setref":
                items.append(SetRef(value[1:]))
            else:
                raise MetaSyntaxError(f"bad Failoverpoint argument {value!r}")
        return Failoverpoint(tuple(items))
    raise MetaSyntaxError(f"unknown directive failover.{name}")
