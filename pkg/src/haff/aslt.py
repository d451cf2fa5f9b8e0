"""Abstract syntax language tree (ASLT) for SvcLang.

Nodes live in a flat id-indexed store owned by an :class:`AsltTree`; children
are referenced by id. Trees are treated as values: the manipulation helpers
(:func:`splice`, the transformer) work on copies.
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from typing import Any, Iterator

from haff.errors import CycleError, InvalidTreeError, UnknownNodeError


class Kind(str, enum.Enum):
    UNIT = "Unit"
    METHOD_DECL = "MethodDecl"
    PARAM = "Param"
    BLOCK = "Block"
    VAR_DECL = "VarDecl"
    ASSIGN = "Assign"
    IF = "If"
    WHILE = "While"
    CALL = "Call"
    RETURN = "Return"
    PRINT = "Print"
    FAULT = "Fault"
    INTRINSIC_CALL = "IntrinsicCall"
    LITERAL = "Literal"
    VAR_REF = "VarRef"
    BINARY_OP = "BinaryOp"
    UNARY_OP = "UnaryOp"
    META_INFO_SET = "MetaInfoSet"


STATEMENT_KINDS = frozenset({
    Kind.VAR_DECL, Kind.ASSIGN, Kind.IF, Kind.WHILE, Kind.CALL, Kind.RETURN,
    Kind.PRINT, Kind.FAULT, Kind.INTRINSIC_CALL, Kind.META_INFO_SET,
})

EXPRESSION_KINDS = frozenset({
    Kind.CALL, Kind.INTRINSIC_CALL, Kind.LITERAL, Kind.VAR_REF,
    Kind.BINARY_OP, Kind.UNARY_OP,
})

BINARY_OPERATORS = ("||", "&&", "==", "!=", "<", "<=", ">", ">=", "+", "-", "*", "/", "%")
UNARY_OPERATORS = ("!", "-")

# name -> (min args, max args); None means unbounded
INTRINSICS: dict[str, tuple[int, int | None]] = {
    "getFOPCount": (3, 3),
    "storeState": (1, None),
    "recoverState": (1, None),
    "levelInc": (0, 0),
    "levelDec": (0, 1),
}

FRAME_INTRINSIC_ARGS = ("sID", "mID", "levelCount")


@dataclass
class AsltNode:
    id: int
    kind: Kind
    children: list[int] = field(default_factory=list)
    attributes: dict[str, Any] = field(default_factory=dict)
    source_span: tuple[int, int] = (0, 0)

    def __getitem__(self, key: str) -> Any:
        return self.attributes[key]


@dataclass
class AsltTree:
    root: int
    nodes: dict[int, AsltNode]
    next_id: int

    @classmethod
    def empty(cls) -> "AsltTree":
        tree = cls(root=0, nodes={}, next_id=0)
        tree.root = tree.new(Kind.UNIT)
        return tree

    def new(self, kind: Kind, children: list[int] | None = None,
            span: tuple[int, int] = (0, 0), **attributes: Any) -> int:
        node_id = self.next_id
        self.next_id += 1
        self.nodes[node_id] = AsltNode(node_id, Kind(kind), list(children or []),
                                       dict(attributes), span)
        return node_id

    def node(self, node_id: int) -> AsltNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(f"no node with id {node_id}") from None

    def __getitem__(self, node_id: int) -> AsltNode:
        return self.node(node_id)

    def children(self, node_id: int) -> list[AsltNode]:
        return [self.nodes[c] for c in self.node(node_id).children]

    def copy(self) -> "AsltTree":
        return copy.deepcopy(self)

    def walk(self, start: int | None = None) -> Iterator[AsltNode]:
        """Pre-order traversal from ``start`` (default: root)."""
        stack = [self.root if start is None else start]
        while stack:
            node = self.node(stack.pop())
            yield node
            stack.extend(reversed(node.children))

    def parents(self) -> dict[int, int]:
        parents: dict[int, int] = {}
        for node in self.nodes.values():
            for child in node.children:
                parents[child] = node.id
        return parents

    def methods(self) -> list[AsltNode]:
        return [n for n in self.children(self.root) if n.kind is Kind.METHOD_DECL]

    def method(self, name: str) -> AsltNode | None:
        for m in self.methods():
            if m["name"] == name:
                return m
        return None


def method_params(tree: AsltTree, method: AsltNode) -> list[str]:
    return [tree[c]["name"] for c in method.children[:-1]]


def method_body(tree: AsltTree, method: AsltNode) -> AsltNode:
    return tree[method.children[-1]]


def canonical(tree: AsltTree, node_id: int | None = None) -> tuple:
    """Structural fingerprint: kind, attributes and children, ignoring ids and spans."""
    node = tree.node(tree.root if node_id is None else node_id)
    attrs = tuple(sorted((k, type(v).__name__, v) for k, v in node.attributes.items()))
    return (node.kind.value, attrs, tuple(canonical(tree, c) for c in node.children))


def structurally_equal(a: AsltTree, b: AsltTree) -> bool:
    return canonical(a) == canonical(b)


def _arity_error(node: AsltNode, expected: str) -> InvalidTreeError:
    return InvalidTreeError(
        node.id, f"{node.kind.value} expects {expected}, has {len(node.children)} children")


def validate(tree: AsltTree) -> None:
    """Check tree-shape and kind-specific arity invariants.

    Raises :class:`InvalidTreeError` naming the first offending node.
    """
    if tree.root not in tree.nodes:
        raise InvalidTreeError(tree.root, "root does not exist")
    if tree.nodes[tree.root].kind is not Kind.UNIT:
        raise InvalidTreeError(tree.root, "root is not a Unit")
    if tree.nodes and tree.next_id <= max(tree.nodes):
        raise InvalidTreeError(max(tree.nodes), "next_id does not exceed stored ids")
    seen: set[int] = set()
    stack = [tree.root]
    while stack:
        node_id = stack.pop()
        if node_id in seen:
            raise InvalidTreeError(node_id, "node reachable twice (shared child or cycle)")
        seen.add(node_id)
        node = tree.nodes.get(node_id)
        if node is None:
            raise InvalidTreeError(node_id, "dangling child reference")
        for c in node.children:
            if c not in tree.nodes:
                raise InvalidTreeError(node_id, f"child {c} does not exist")
        _check_node(tree, node)
        stack.extend(node.children)


def _kinds(tree: AsltTree, node: AsltNode) -> list[Kind]:
    return [tree.nodes[c].kind for c in node.children]


def _require_attr(node: AsltNode, name: str, typ: type | tuple[type, ...] = str) -> None:
    value = node.attributes.get(name)
    if not isinstance(value, typ) or (typ is str and value == "" and name != "raw"):
        raise InvalidTreeError(node.id, f"{node.kind.value} needs attribute '{name}'")


def _check_node(tree: AsltTree, node: AsltNode) -> None:
    k = node.kind
    n = len(node.children)
    kinds = _kinds(tree, node)
    if k is Kind.UNIT:
        for ck in kinds:
            if ck not in (Kind.METHOD_DECL, Kind.META_INFO_SET):
                raise InvalidTreeError(node.id, f"Unit cannot contain {ck.value}")
        if kinds and kinds[-1] is Kind.META_INFO_SET:
            raise InvalidTreeError(node.children[-1], "unit-level MetaInfoSet must precede a method")
    elif k is Kind.METHOD_DECL:
        _require_attr(node, "name")
        if n < 1 or kinds[-1] is not Kind.BLOCK or any(ck is not Kind.PARAM for ck in kinds[:-1]):
            raise InvalidTreeError(node.id, "MethodDecl expects Param* followed by a Block")
    elif k in (Kind.PARAM, Kind.VAR_REF):
        _require_attr(node, "name")
        if n:
            raise _arity_error(node, "0")
    elif k is Kind.BLOCK:
        for ck in kinds:
            if ck not in STATEMENT_KINDS:
                raise InvalidTreeError(node.id, f"Block cannot contain {ck.value}")
    elif k is Kind.VAR_DECL:
        _require_attr(node, "name")
        if n != 1:
            raise _arity_error(node, "1")
        _expect_expr(tree, node, 0)
    elif k is Kind.ASSIGN:
        if n != 2:
            raise _arity_error(node, "exactly 2")
        if kinds[0] is not Kind.VAR_REF:
            raise InvalidTreeError(node.id, "Assign target must be a VarRef")
        _expect_expr(tree, node, 1)
    elif k is Kind.IF:
        if n not in (2, 3):
            raise _arity_error(node, "2 or 3")
        _expect_expr(tree, node, 0)
        if kinds[1] is not Kind.BLOCK:
            raise InvalidTreeError(node.id, "If then-branch must be a Block")
        if n == 3 and kinds[2] not in (Kind.BLOCK, Kind.IF):
            raise InvalidTreeError(node.id, "If else-branch must be a Block or If")
    elif k is Kind.WHILE:
        if n != 2:
            raise _arity_error(node, "exactly 2")
        _expect_expr(tree, node, 0)
        if kinds[1] is not Kind.BLOCK:
            raise InvalidTreeError(node.id, "While body must be a Block")
    elif k is Kind.CALL:
        _require_attr(node, "name")
        for i in range(n):
            _expect_expr(tree, node, i)
    elif k is Kind.RETURN:
        if n > 1:
            raise _arity_error(node, "0 or 1")
        if n:
            _expect_expr(tree, node, 0)
    elif k is Kind.PRINT:
        if n != 1:
            raise _arity_error(node, "1")
        _expect_expr(tree, node, 0)
    elif k is Kind.FAULT:
        _require_attr(node, "label")
        if n:
            raise _arity_error(node, "0")
    elif k is Kind.INTRINSIC_CALL:
        _check_intrinsic(tree, node)
    elif k is Kind.LITERAL:
        value = node.attributes.get("value")
        if n or not isinstance(value, (int, str, bool)):
            raise InvalidTreeError(node.id, "Literal needs an int/str/bool value and no children")
        if isinstance(value, int) and not isinstance(value, bool) and not -2**63 <= value < 2**63:
            raise InvalidTreeError(node.id, "int literal out of 64-bit range")
    elif k is Kind.BINARY_OP:
        if node.attributes.get("op") not in BINARY_OPERATORS:
            raise InvalidTreeError(node.id, f"unknown binary operator {node.attributes.get('op')!r}")
        if n != 2:
            raise _arity_error(node, "exactly 2")
        _expect_expr(tree, node, 0)
        _expect_expr(tree, node, 1)
    elif k is Kind.UNARY_OP:
        if node.attributes.get("op") not in UNARY_OPERATORS:
            raise InvalidTreeError(node.id, f"unknown unary operator {node.attributes.get('op')!r}")
        if n != 1:
            raise _arity_error(node, "exactly 1")
        _expect_expr(tree, node, 0)
    elif k is Kind.META_INFO_SET:
        _require_attr(node, "raw")
        if "</MISet>*/" in node["raw"]:
            raise InvalidTreeError(node.id, "MetaInfoSet raw text contains the closing delimiter")
        if n:
            raise _arity_error(node, "0")


def _expect_expr(tree: AsltTree, node: AsltNode, index: int) -> None:
    child = tree.nodes[node.children[index]]
    if child.kind not in EXPRESSION_KINDS:
        raise InvalidTreeError(node.id, f"child {index} must be an expression, got {child.kind.value}")


def _check_intrinsic(tree: AsltTree, node: AsltNode) -> None:
    name = node.attributes.get("name")
    if name not in INTRINSICS:
        raise InvalidTreeError(node.id, f"unknown intrinsic {name!r}")
    lo, hi = INTRINSICS[name]
    n = len(node.children)
    if n < lo or (hi is not None and n > hi):
        raise InvalidTreeError(node.id, f"intrinsic {name} has wrong argument count {n}")
    kids = tree.children(node.id)
    if name == "getFOPCount":
        if [c.attributes.get("name") for c in kids] != list(FRAME_INTRINSIC_ARGS) or \
                any(c.kind is not Kind.VAR_REF for c in kids):
            raise InvalidTreeError(node.id, "getFOPCount takes (sID, mID, levelCount)")
    elif name in ("storeState", "recoverState"):
        first = kids[0]
        if first.kind is not Kind.LITERAL or isinstance(first["value"], bool) \
                or not isinstance(first["value"], int) or first["value"] < 1:
            raise InvalidTreeError(node.id, f"{name} needs a positive FOP index first")
        if any(c.kind is not Kind.VAR_REF for c in kids[1:]):
            raise InvalidTreeError(node.id, f"{name} saves plain variables only")
    elif name == "levelDec" and kids:
        _expect_expr(tree, node, 0)


def splice(tree: AsltTree, target: int, replacement: list[int]) -> AsltTree:
    """Return a copy of ``tree`` with ``target`` replaced in place by ``replacement``.

    Replacement nodes must already exist in ``tree`` and be detached. The
    removed subtree is dropped from the store.
    """
    out = tree.copy()
    splice_inplace(out, target, replacement)
    return out


def splice_inplace(tree: AsltTree, target: int, replacement: list[int]) -> None:
    if target not in tree.nodes:
        raise UnknownNodeError(f"no node with id {target}")
    for r in replacement:
        if r not in tree.nodes:
            raise UnknownNodeError(f"no node with id {r}")
    parents = tree.parents()
    if target not in parents:
        raise UnknownNodeError(f"node {target} has no parent")
    # an attached replacement that is an ancestor of target would create a cycle
    ancestors = set()
    cur = target
    while cur in parents:
        cur = parents[cur]
        ancestors.add(cur)
    for r in replacement:
        if r in ancestors or r == target:
            raise CycleError(f"replacement node {r} is an ancestor of {target}")
        if r in parents:
            raise UnknownNodeError(f"replacement node {r} is still attached to {parents[r]}")
    if len(set(replacement)) != len(replacement):
        raise CycleError("replacement list repeats a node")
    parent = tree.nodes[parents[target]]
    pos = parent.children.index(target)
    parent.children[pos:pos + 1] = list(replacement)
    for dead in [n.id for n in tree.walk(target)]:
        del tree.nodes[dead]
