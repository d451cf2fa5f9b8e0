"""Tokenizer for SvcLang source text."""

from __future__ import annotations

from dataclasses import dataclass

from haff.errors import SvcSyntaxError, UnterminatedMetaError

KEYWORDS = frozenset({
    "method", "var", "if", "else", "while", "call", "return", "print", "fault",
    "true", "false",
})

# longest first so two-character operators win
PUNCT = ("&&", "||", "==", "!=", "<=", ">=",
         "+", "-", "*", "/", "%", "<", ">", "!", "=",
         "(", ")", "{", "}", ",", ";", ".")

META_OPEN = "/*<MISet>"
META_CLOSE = "</MISet>*/"

_DIGITS = frozenset("0123456789")
_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\", "0": "\0"}


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, INT, STRING, KEYWORD, PUNCT, META, EOF
    value: object
    line: int
    column: int
    start: int
    end: int

    def is_(self, kind: str, value: object = None) -> bool:
        return self.kind == kind and (value is None or self.value == value)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    line_start = 0
    n = len(source)

    def err(msg: str, at: int, cls=SvcSyntaxError):
        ln = source.count("\n", 0, at) + 1
        col = at - (source.rfind("\n", 0, at) + 1) + 1
        return cls(msg, ln, col)

    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            line_start = i + 1
            i += 1
            continue
        if ch in " \t\r\f\v﻿":
            i += 1
            continue
        col = i - line_start + 1
        if source.startswith(META_OPEN, i):
            end = source.find(META_CLOSE, i + len(META_OPEN))
            if end < 0:
                raise err("<MISet> without matching </MISet>*/", i, UnterminatedMetaError)
            raw = source[i + len(META_OPEN):end]
            stop = end + len(META_CLOSE)
            tokens.append(Token("META", raw, line, col, i, stop))
            line += raw.count("\n")
            if "\n" in raw:
                line_start = i + len(META_OPEN) + raw.rfind("\n") + 1
            i = stop
            continue
        if source.startswith("/*", i):
            end = source.find("*/", i + 2)
            if end < 0:
                raise err("unterminated comment", i)
            body = source[i:end + 2]
            if "<MISet>" in body:
                raise err("<MISet> must directly follow '/*'", i)
            line += body.count("\n")
            if "\n" in body:
                line_start = i + body.rfind("\n") + 1
            i = end + 2
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch in _DIGITS:
            j = i
            while j < n and source[j] in _DIGITS:
                j += 1
            if j < n and (source[j].isalpha() or source[j] == "_"):
                raise err(f"malformed number {source[i:j + 1]!r}", i)
            tokens.append(Token("INT", int(source[i:j]), line, col, i, j))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            word = source[i:j]
            if not word.isascii():
                raise err(f"non-ASCII identifier {word!r}", i)
            kind = "KEYWORD" if word in KEYWORDS else "IDENT"
            tokens.append(Token(kind, word, line, col, i, j))
            i = j
            continue
        if ch == '"':
            j = i + 1
            buf = []
            while True:
                if j >= n or source[j] == "\n":
                    raise err("unterminated string literal", i)
                c = source[j]
                if c == '"':
                    break
                if c == "\\":
                    if j + 1 >= n or source[j + 1] not in _ESCAPES:
                        raise err("bad escape sequence in string", j)
                    buf.append(_ESCAPES[source[j + 1]])
                    j += 2
                    continue
                buf.append(c)
                j += 1
            tokens.append(Token("STRING", "".join(buf), line, col, i, j + 1))
            i = j + 1
            continue
        for p in PUNCT:
            if source.startswith(p, i):
                tokens.append(Token("PUNCT", p, line, col, i, i + len(p)))
                i += len(p)
                break
        else:
            raise err(f"unexpected character {ch!r}", i)
    tokens.append(Token("EOF", None, line, i - line_start + 1, n, n))
    return tokens


def quote_string(value: str) -> str:
    out = ['"']
    for c in value:
        if c == '"':
            out.append('\\"')
        elif c == "\\":
            out.append("\\\\")
        elif c == "\n":
            out.append("\\n")
        elif c == "\t":
            out.append("\\t")
        elif c == "\r":
            out.append("\\r")
        elif c == "\0":
            out.append("\\0")
        else:
            out.append(c)
    out.append('"')
    return "".join(out)
