"""CodeToASLT: recursive-descent parser from SvcLang text to an :class:`AsltTree`."""

from __future__ import annotations

from haff.aslt import FRAME_INTRINSIC_ARGS, INTRINSICS, AsltTree, Kind
from haff.errors import MetaPlacementError, SvcSyntaxError
from haff.lexer import Token, tokenize

INT_MAX = 2**63 - 1

# binary precedence levels, loosest first
_LEVELS: list[tuple[str, ...]] = [
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
]


class Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.pos = 0
        self.tree = AsltTree(root=0, nodes={}, next_id=0)
        self._byte_offsets = None if source.isascii() else _byte_offset_table(source)

    # --- token helpers ---------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def error(self, msg: str, tok: Token | None = None, cls=SvcSyntaxError) -> SvcSyntaxError:
        t = tok or self.tok
        return cls(msg, t.line, t.column)

    def expect(self, kind: str, value: object = None) -> Token:
        t = self.tok
        if not t.is_(kind, value):
            want = repr(value) if value is not None else kind.lower()
            got = "end of input" if t.kind == "EOF" else repr(t.value)
            if t.kind == "META":
                raise self.error(f"meta-information is not allowed here (expected {want})",
                                 cls=MetaPlacementError)
            raise self.error(f"expected {want}, got {got}")
        return self.advance()

    def accept(self, kind: str, value: object = None) -> Token | None:
        if self.tok.is_(kind, value):
            return self.advance()
        return None

    def span(self, start: Token) -> tuple[int, int]:
        prev = self.tokens[self.pos - 1] if self.pos else start
        lo, hi = start.start, max(prev.end, start.end)
        if self._byte_offsets is not None:
            lo, hi = self._byte_offsets[lo], self._byte_offsets[hi]
        return (lo, hi)

    def new(self, kind: Kind, start: Token, children=None, **attrs) -> int:
        return self.tree.new(kind, children, span=self.span(start), **attrs)

    # --- grammar ---------------------------------------------------------

    def parse_unit(self) -> AsltTree:
        start = self.tok
        items: list[int] = []
        while self.tok.kind != "EOF":
            if self.tok.kind == "META":
                meta_tok = self.advance()
                if self.tok.kind == "EOF":
                    raise self.error("meta-information at end of unit does not precede a method",
                                     meta_tok, MetaPlacementError)
                items.append(self.new(Kind.META_INFO_SET, meta_tok, raw=meta_tok.value))
            elif self.tok.is_("KEYWORD", "method"):
                items.append(self.parse_method())
            else:
                raise self.error(f"expected 'method', got {self.tok.value!r}")
        self.tree.root = self.new(Kind.UNIT, start, items)
        return self.tree

    def parse_method(self) -> int:
        start = self.expect("KEYWORD", "method")
        name = self.expect("IDENT").value
        self.expect("PUNCT", "(")
        params: list[int] = []
        seen: set[str] = set()
        if not self.tok.is_("PUNCT", ")"):
            while True:
                ptok = self.expect("IDENT")
                if ptok.value in seen:
                    raise self.error(f"duplicate parameter {ptok.value!r}", ptok)
                seen.add(ptok.value)
                params.append(self.new(Kind.PARAM, ptok, name=ptok.value))
                if not self.accept("PUNCT", ","):
                    break
        self.expect("PUNCT", ")")
        body = self.parse_block()
        return self.new(Kind.METHOD_DECL, start, params + [body], name=name)

    def parse_block(self) -> int:
        start = self.expect("PUNCT", "{")
        stmts: list[int] = []
        while not self.tok.is_("PUNCT", "}"):
            if self.tok.kind == "EOF":
                raise self.error("unterminated block: expected '}'")
            stmts.append(self.parse_statement())
        self.expect("PUNCT", "}")
        return self.new(Kind.BLOCK, start, stmts)

    def parse_statement(self) -> int:
        t = self.tok
        if t.kind == "META":
            self.advance()
            return self.new(Kind.META_INFO_SET, t, raw=t.value)
        if t.kind == "KEYWORD":
            kw = t.value
            if kw == "var":
                self.advance()
                name = self.expect("IDENT").value
                self.expect("PUNCT", "=")
                value = self.parse_expr()
                self.expect("PUNCT", ";")
                return self.new(Kind.VAR_DECL, t, [value], name=name)
            if kw == "if":
                return self.parse_if()
            if kw == "while":
                self.advance()
                self.expect("PUNCT", "(")
                cond = self.parse_expr()
                self.expect("PUNCT", ")")
                body = self.parse_block()
                return self.new(Kind.WHILE, t, [cond, body])
            if kw == "call":
                node = self.parse_call()
                self.expect("PUNCT", ";")
                return node
            if kw == "return":
                self.advance()
                kids = [] if self.tok.is_("PUNCT", ";") else [self.parse_expr()]
                self.expect("PUNCT", ";")
                return self.new(Kind.RETURN, t, kids)
            if kw == "print":
                self.advance()
                self.expect("PUNCT", "(")
                value = self.parse_expr()
                self.expect("PUNCT", ")")
                self.expect("PUNCT", ";")
                return self.new(Kind.PRINT, t, [value])
            if kw == "fault":
                self.advance()
                self.expect("PUNCT", "(")
                label = self.expect("STRING").value
                if not label:
                    raise self.error("fault label must be nonempty", t)
                self.expect("PUNCT", ")")
                self.expect("PUNCT", ";")
                return self.new(Kind.FAULT, t, label=label)
            raise self.error(f"unexpected keyword {kw!r}")
        if t.kind == "IDENT":
            if t.value == "fo" and self.peek().is_("PUNCT", "."):
                node = self.parse_intrinsic()
                self.expect("PUNCT", ";")
                return node
            self.advance()
            target = self.new(Kind.VAR_REF, t, name=t.value)
            self.expect("PUNCT", "=")
            value = self.parse_expr()
            self.expect("PUNCT", ";")
            return self.new(Kind.ASSIGN, t, [target, value])
        if t.kind == "EOF":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected {t.value!r} at start of statement")

    def parse_if(self) -> int:
        start = self.expect("KEYWORD", "if")
        self.expect("PUNCT", "(")
        cond = self.parse_expr()
        self.expect("PUNCT", ")")
        kids = [cond, self.parse_block()]
        if self.accept("KEYWORD", "else"):
            kids.append(self.parse_if() if self.tok.is_("KEYWORD", "if") else self.parse_block())
        return self.new(Kind.IF, start, kids)

    def parse_call(self) -> int:
        start = self.expect("KEYWORD", "call")
        name = self.expect("IDENT").value
        return self.new(Kind.CALL, start, self.parse_args(), name=name)

    def parse_intrinsic(self) -> int:
        start = self.expect("IDENT", "fo")
        self.expect("PUNCT", ".")
        name_tok = self.expect("IDENT")
        name = name_tok.value
        if name not in INTRINSICS:
            raise self.error(f"unknown intrinsic fo.{name}", name_tok)
        args = self.parse_args()
        lo, hi = INTRINSICS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            raise self.error(f"wrong number of arguments to fo.{name}", name_tok)
        kids = [self.tree[a] for a in args]
        if name == "getFOPCount":
            if [k.attributes.get("name") if k.kind is Kind.VAR_REF else None for k in kids] \
                    != list(FRAME_INTRINSIC_ARGS):
                raise self.error("fo.getFOPCount takes (sID, mID, levelCount)", name_tok)
        elif name in ("storeState", "recoverState"):
            first = kids[0]
            if first.kind is not Kind.LITERAL or type(first["value"]) is not int or first["value"] < 1:
                raise self.error(f"fo.{name} needs a positive FOP index", name_tok)
            if any(k.kind is not Kind.VAR_REF for k in kids[1:]):
                raise self.error(f"fo.{name} saves plain variables only", name_tok)
        return self.new(Kind.INTRINSIC_CALL, start, args, name=name)

    def parse_args(self) -> list[int]:
        self.expect("PUNCT", "(")
        args: list[int] = []
        if not self.tok.is_("PUNCT", ")"):
            while True:
                args.append(self.parse_expr())
                if not self.accept("PUNCT", ","):
                    break
        self.expect("PUNCT", ")")
        return args

    def parse_expr(self, level: int = 0) -> int:
        if level == len(_LEVELS):
            return self.parse_unary()
        start = self.tok
        left = self.parse_expr(level + 1)
        ops = _LEVELS[level]
        while self.tok.kind == "PUNCT" and self.tok.value in ops:
            op = self.advance().value
            right = self.parse_expr(level + 1)
            left = self.new(Kind.BINARY_OP, start, [left, right], op=op)
        return left

    def parse_unary(self) -> int:
        t = self.tok
        if t.is_("PUNCT", "!"):
            self.advance()
            return self.new(Kind.UNARY_OP, t, [self.parse_unary()], op="!")
        if t.is_("PUNCT", "-"):
            self.advance()
            if self.tok.kind == "INT":
                lit = self.advance()
                value = -lit.value
                if value < -INT_MAX - 1:
                    raise self.error("integer literal out of 64-bit range", lit)
                return self.new(Kind.LITERAL, t, value=value)
            return self.new(Kind.UNARY_OP, t, [self.parse_unary()], op="-")
        return self.parse_primary()

    def parse_primary(self) -> int:
        t = self.tok
        if t.kind == "INT":
            self.advance()
            if t.value > INT_MAX:
                raise self.error("integer literal out of 64-bit range", t)
            return self.new(Kind.LITERAL, t, value=t.value)
        if t.kind == "STRING":
            self.advance()
            return self.new(Kind.LITERAL, t, value=t.value)
        if t.is_("KEYWORD", "true") or t.is_("KEYWORD", "false"):
            self.advance()
            return self.new(Kind.LITERAL, t, value=(t.value == "true"))
        if t.is_("KEYWORD", "call"):
            return self.parse_call()
        if t.kind == "IDENT":
            if t.value == "fo" and self.peek().is_("PUNCT", "."):
                return self.parse_intrinsic()
            self.advance()
            return self.new(Kind.VAR_REF, t, name=t.value)
        if t.is_("PUNCT", "("):
            self.advance()
            inner = self.parse_expr()
            self.expect("PUNCT", ")")
            return inner
        if t.kind == "META":
            raise self.error("meta-information is not allowed inside an expression",
                             cls=MetaPlacementError)
        got = "end of input" if t.kind == "EOF" else repr(t.value)
        raise self.error(f"expected an expression, got {got}")


def _byte_offset_table(source: str) -> list[int]:
    table = [0]
    total = 0
    for ch in source:
        total += len(ch.encode("utf-8"))
        table.append(total)
    return table


def code_to_aslt(source: str) -> AsltTree:
    """Parse SvcLang ``source`` into a tree.

    ``/*<MISet>...</MISet>*/`` comments become MetaInfoSet nodes at the
    statement (or unit) position they precede; other comments are dropped.
    """
    return Parser(source).parse_unit()
