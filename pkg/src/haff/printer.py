"""ASLTToCode: canonical pretty-printer for SvcLang trees."""

from __future__ import annotations

from haff.aslt import AsltNode, AsltTree, Kind, validate
from haff.lexer import META_CLOSE, META_OPEN, quote_string

INDENT = "    "

_PRECEDENCE = {
    "||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5, "*": 6, "/": 6, "%": 6,
}
_UNARY_PREC = 7
_ATOM_PREC = 8


def literal_text(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return quote_string(value)  # type: ignore[arg-type]


class Printer:
    def __init__(self, tree: AsltTree):
        self.tree = tree
        self.lines: list[str] = []

    def emit(self, depth: int, text: str) -> None:
        self.lines.append(INDENT * depth + text)

    def unit(self) -> str:
        root = self.tree[self.tree.root]
        prev_kind = None
        for child in self.tree.children(root.id):
            if child.kind is Kind.METHOD_DECL:
                if prev_kind is Kind.METHOD_DECL:
                    self.lines.append("")
                self.method(child)
            else:
                if prev_kind is Kind.METHOD_DECL:
                    self.lines.append("")
                self.meta(child, 0)
            prev_kind = child.kind
        return "\n".join(self.lines) + "\n" if self.lines else ""

    def meta(self, node: AsltNode, depth: int) -> None:
        self.emit(depth, META_OPEN + node["raw"] + META_CLOSE)

    def method(self, node: AsltNode) -> None:
        kids = self.tree.children(node.id)
        params = ", ".join(p["name"] for p in kids[:-1])
        self.emit(0, f"method {node['name']}({params}) {{")
        self.block_body(kids[-1], 1)
        self.emit(0, "}")

    def block_body(self, block: AsltNode, depth: int) -> None:
        for stmt in self.tree.children(block.id):
            self.statement(stmt, depth)

    def statement(self, node: AsltNode, depth: int) -> None:
        k = node.kind
        kids = self.tree.children(node.id)
        if k is Kind.META_INFO_SET:
            self.meta(node, depth)
        elif k is Kind.VAR_DECL:
            self.emit(depth, f"var {node['name']} = {self.expr(kids[0])};")
        elif k is Kind.ASSIGN:
            self.emit(depth, f"{kids[0]['name']} = {self.expr(kids[1])};")
        elif k is Kind.IF:
            self.if_chain(node, depth, "")
        elif k is Kind.WHILE:
            self.emit(depth, f"while ({self.expr(kids[0])}) {{")
            self.block_body(kids[1], depth + 1)
            self.emit(depth, "}")
        elif k in (Kind.CALL, Kind.INTRINSIC_CALL):
            self.emit(depth, self.expr(node) + ";")
        elif k is Kind.RETURN:
            self.emit(depth, f"return {self.expr(kids[0])};" if kids else "return;")
        elif k is Kind.PRINT:
            self.emit(depth, f"print({self.expr(kids[0])});")
        elif k is Kind.FAULT:
            self.emit(depth, f"fault({quote_string(node['label'])});")
        else:  # pragma: no cover - validate() rules this out
            raise AssertionError(k)

    def if_chain(self, node: AsltNode, depth: int, prefix: str) -> None:
        kids = self.tree.children(node.id)
        self.emit(depth, f"{prefix}if ({self.expr(kids[0])}) {{")
        self.block_body(kids[1], depth + 1)
        if len(kids) == 3:
            other = kids[2]
            if other.kind is Kind.IF:
                # closing brace shares the line with the following "else if"
                self.if_chain(other, depth, "} else ")
                return
            self.emit(depth, "} else {")
            self.block_body(other, depth + 1)
        self.emit(depth, "}")

    # --- expressions -----------------------------------------------------

    def expr(self, node: AsltNode) -> str:
        return self._expr(node)[0]

    def _expr(self, node: AsltNode) -> tuple[str, int]:
        k = node.kind
        kids = self.tree.children(node.id)
        if k is Kind.LITERAL:
            value = node["value"]
            prec = _UNARY_PREC if type(value) is int and value < 0 else _ATOM_PREC
            return literal_text(value), prec
        if k is Kind.VAR_REF:
            return node["name"], _ATOM_PREC
        if k is Kind.CALL:
            return f"call {node['name']}({self.args(kids)})", _ATOM_PREC
        if k is Kind.INTRINSIC_CALL:
            return f"fo.{node['name']}({self.args(kids)})", _ATOM_PREC
        if k is Kind.UNARY_OP:
            inner, prec = self._expr(kids[0])
            operand = kids[0]
            # "-5" would re-parse as a negative literal, so guard literal operands
            needs_parens = prec < _UNARY_PREC or (
                node["op"] == "-" and operand.kind is Kind.LITERAL
                and type(operand["value"]) is int and operand["value"] >= 0)
            if needs_parens:
                inner = f"({inner})"
            return node["op"] + inner, _UNARY_PREC
        if k is Kind.BINARY_OP:
            op = node["op"]
            p = _PRECEDENCE[op]
            left, lp = self._expr(kids[0])
            right, rp = self._expr(kids[1])
            if lp < p:
                left = f"({left})"
            if rp <= p:
                right = f"({right})"
            return f"{left} {op} {right}", p
        raise AssertionError(k)  # pragma: no cover

    def args(self, kids: list[AsltNode]) -> str:
        return ", ".join(self.expr(k) for k in kids)


def aslt_to_code(tree: AsltTree) -> str:
    """Render ``tree`` as canonical SvcLang text.

    One statement per line, four spaces per block level. MetaInfoSet nodes are
    re-emitted verbatim. Raises InvalidTreeError for malformed trees.
    """
    validate(tree)
    return Printer(tree).unit()
