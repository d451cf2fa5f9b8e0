"""Failover-point preprocessor.

Finds failover meta-information in a parsed unit, numbers methods and their
failover points, and rewrites every method body into guarded segments::

    fo.levelInc();
    if (fo.getFOPCount(sID, mID, levelCount) < 1) {
        ...statements before FOP 1...
        fo.storeState(1, j, str, i);
    } else if (fo.getFOPCount(sID, mID, levelCount) == 1) {
        fo.recoverState(1, j, str, i);
    }
    ...statements after the last FOP...
    fo.levelDec();

``return e;`` becomes ``return fo.levelDec(e);`` so the return value is
computed before the level is released.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from haff.aslt import (
    FRAME_INTRINSIC_ARGS,
    AsltNode,
    AsltTree,
    Kind,
    method_body,
    method_params,
    splice_inplace,
)
from haff.errors import (
    AlreadyTransformedError,
    DuplicateMethodError,
    DuplicateVarSetError,
    HaffError,
    InternalError,
    NestedFopError,
    TransformError,
    TransformErrorGroup,
    UnknownVariableError,
    UnknownVarSetError,
)
from haff.meta import Failoverpoint, Ident, VarSetDef, parse_meta


@dataclass
class MethodRegistry:
    entries: dict[str, int] = field(default_factory=dict)
    fop_total: dict[str, int] = field(default_factory=dict)

    def add(self, name: str, fops: int = 0) -> int:
        if name in self.entries:
            raise DuplicateMethodError(f"method {name!r} declared twice")
        method_id = len(self.entries) + 1
        self.entries[name] = method_id
        self.fop_total[name] = fops
        return method_id

    def id_of(self, name: str) -> int:
        return self.entries[name]

    def name_of(self, method_id: int) -> str:
        for name, mid in self.entries.items():
            if mid == method_id:
                return name
        raise KeyError(method_id)

    @classmethod
    def from_tree(cls, tree: AsltTree) -> "MethodRegistry":
        """Registry by declaration order, with FOP counts read off existing guards."""
        reg = cls()
        for m in tree.methods():
            stores = sum(1 for n in tree.walk(m.id)
                         if n.kind is Kind.INTRINSIC_CALL and n["name"] == "storeState")
            reg.add(m["name"], stores)
        return reg


@dataclass
class VarSetTable:
    sets: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def define(self, name: str, members: tuple[str, ...]) -> None:
        if name in self.sets:
            raise DuplicateVarSetError(f"variable set {name!r} defined twice")
        self.sets[name] = members

    def expand(self, name: str) -> tuple[str, ...]:
        try:
            return self.sets[name]
        except KeyError:
            raise UnknownVarSetError(f"unknown variable set #{name}") from None


@dataclass(frozen=True)
class FopSite:
    method_id: int
    fop_index: int
    saved_vars: tuple[str, ...]
    position: int


def _declared_in(tree: AsltTree, node_id: int) -> set[str]:
    return {n["name"] for n in tree.walk(node_id) if n.kind is Kind.VAR_DECL}


def _directives(node: AsltNode):
    return parse_meta(node["raw"])


def _nested_metas(tree: AsltTree, stmt: AsltNode) -> list[AsltNode]:
    return [n for n in tree.walk(stmt.id) if n.kind is Kind.META_INFO_SET and n.id != stmt.id]


def _collect_varsets(tree: AsltTree) -> VarSetTable:
    table = VarSetTable()
    for node in tree.children(tree.root):
        if node.kind is not Kind.META_INFO_SET:
            continue
        for d in _directives(node):
            if isinstance(d, VarSetDef):
                table.define(d.name, d.vars)
            else:
                raise TransformError("Failoverpoint outside a method body")
    return table


def _collect_method(tree: AsltTree, method: AsltNode, method_id: int,
                    varsets: VarSetTable) -> list[FopSite]:
    body = method_body(tree, method)
    declared = set(method_params(tree, method))
    sites: list[FopSite] = []
    position = 0
    for stmt in tree.children(body.id):
        if stmt.kind is Kind.META_INFO_SET:
            for d in _directives(stmt):
                if isinstance(d, VarSetDef):
                    raise TransformError(
                        f"VarSetDef {d.name!r} inside a method; variable sets belong at unit scope")
                sites.append(FopSite(method_id, len(sites) + 1,
                                     _expand(d, varsets, declared), position))
            continue
        for nested in _nested_metas(tree, stmt):
            for d in _directives(nested):
                if isinstance(d, Failoverpoint):
                    raise NestedFopError(
                        f"failover point inside {stmt.kind.value} block "
                        f"(only top-level statement positions are supported)")
                raise TransformError(f"VarSetDef {d.name!r} inside a method body")
        declared |= _declared_in(tree, stmt.id)
        position += 1
    return sites


def _expand(fop: Failoverpoint, varsets: VarSetTable, declared: set[str]) -> tuple[str, ...]:
    explicit = [a.name for a in fop.args if isinstance(a, Ident)]
    from_sets: list[str] = []
    for a in fop.args:
        if not isinstance(a, Ident):
            from_sets.extend(varsets.expand(a.name))
    saved: list[str] = []
    for name in explicit + from_sets:
        if name not in saved:
            saved.append(name)
    for name in saved:
        if name not in declared:
            raise UnknownVariableError(
                f"failover point saves {name!r}, which is neither a parameter "
                f"nor declared before the failover point")
    return tuple(saved)


def _attach(err: HaffError, method: str) -> HaffError:
    if getattr(err, "method", None) is None:
        err.method = method  # type: ignore[attr-defined]
    return err


def _raise_collected(errors: list[HaffError]) -> None:
    if len(errors) == 1:
        raise errors[0]
    if errors:
        raise TransformErrorGroup(errors)  # type: ignore[arg-type]


def collect(tree: AsltTree) -> tuple[MethodRegistry, VarSetTable, list[FopSite]]:
    """Gather method ids, variable sets and failover sites from a parsed unit."""
    varsets = _collect_varsets(tree)
    registry = MethodRegistry()
    sites: list[FopSite] = []
    errors: list[HaffError] = []
    for method in tree.methods():
        try:
            method_id = registry.add(method["name"])
            found = _collect_method(tree, method, method_id, varsets)
        except HaffError as e:
            errors.append(_attach(e, method["name"]))
            continue
        registry.fop_total[method["name"]] = len(found)
        sites.extend(found)
    _raise_collected(errors)
    return registry, varsets, sites


def _intrinsic(tree: AsltTree, name: str, args: list[int] | None = None) -> int:
    return tree.new(Kind.INTRINSIC_CALL, args or [], name=name)


def _fop_count(tree: AsltTree) -> int:
    refs = [tree.new(Kind.VAR_REF, name=n) for n in FRAME_INTRINSIC_ARGS]
    return _intrinsic(tree, "getFOPCount", refs)


def _state_call(tree: AsltTree, name: str, site: FopSite) -> int:
    args = [tree.new(Kind.LITERAL, value=site.fop_index)]
    args += [tree.new(Kind.VAR_REF, name=v) for v in site.saved_vars]
    return _intrinsic(tree, name, args)


def _guard(tree: AsltTree, site: FopSite, segment: list[int]) -> int:
    i = site.fop_index
    then_block = tree.new(Kind.BLOCK, segment + [_state_call(tree, "storeState", site)])
    cond = tree.new(Kind.BINARY_OP, [_fop_count(tree), tree.new(Kind.LITERAL, value=i)], op="<")
    recover_cond = tree.new(Kind.BINARY_OP,
                            [_fop_count(tree), tree.new(Kind.LITERAL, value=i)], op="==")
    recover = tree.new(Kind.IF, [recover_cond,
                                 tree.new(Kind.BLOCK, [_state_call(tree, "recoverState", site)])])
    return tree.new(Kind.IF, [cond, then_block, recover])


def _wrap_returns(tree: AsltTree, body_id: int) -> None:
    returns = [n.id for n in tree.walk(body_id) if n.kind is Kind.RETURN]
    for rid in returns:
        node = tree[rid]
        if node.children:
            node.children = [_intrinsic(tree, "levelDec", [node.children[0]])]
        else:
            dec = _intrinsic(tree, "levelDec")
            moved = tree.new(Kind.RETURN)
            splice_inplace(tree, rid, [dec, moved])


def _rewrite_inplace(tree: AsltTree, method_id: int, sites: list[FopSite]) -> None:
    method = tree[method_id]
    body = method_body(tree, method)
    sites = sorted(sites, key=lambda s: s.fop_index)
    if [s.fop_index for s in sites] != list(range(1, len(sites) + 1)):
        raise InternalError("failover indices are not 1..k")

    for stmt in tree.children(body.id):
        if stmt.kind is Kind.META_INFO_SET:
            continue
        for nested in _nested_metas(tree, stmt):
            if any(isinstance(d, Failoverpoint) for d in _directives(nested)):
                raise NestedFopError(f"failover point inside {stmt.kind.value} block")
            # directive-free comment blocks are simply dropped
            splice_inplace(tree, nested.id, [])

    real = [c for c in body.children if tree[c].kind is not Kind.META_INFO_SET]
    for c in body.children:
        if tree[c].kind is Kind.META_INFO_SET:
            del tree.nodes[c]
    body.children = list(real)

    bounds = [s.position for s in sites]
    if bounds != sorted(bounds) or any(not 0 <= b <= len(real) for b in bounds):
        raise InternalError("failover positions out of order or out of range")
    cuts = [0] + bounds + [len(real)]
    segments = [real[cuts[i]:cuts[i + 1]] for i in range(len(cuts) - 1)]
    flat = [s for seg in segments for s in seg]
    if flat != real:
        raise InternalError("segmentation does not cover every statement exactly once")

    new_children = [_intrinsic(tree, "levelInc")]
    for site, segment in zip(sites, segments):
        new_children.append(_guard(tree, site, segment))
    final = segments[-1]
    new_children.extend(final)
    if not (final and tree[final[-1]].kind is Kind.RETURN):
        new_children.append(_intrinsic(tree, "levelDec"))
    body.children = new_children
    _wrap_returns(tree, body.id)


def rewrite_method(method: int, sites: list[FopSite], tree: AsltTree) -> AsltTree:
    """Return a copy of ``tree`` with method node ``method`` rewritten around ``sites``."""
    out = tree.copy()
    _rewrite_inplace(out, method, sites)
    return out


def is_transformed(tree: AsltTree) -> bool:
    return any(n.kind is Kind.INTRINSIC_CALL for n in tree.walk())


def transform_unit(tree: AsltTree) -> tuple[AsltTree, MethodRegistry]:
    if is_transformed(tree):
        raise AlreadyTransformedError("unit already contains generated failover code")
    registry, _, sites = collect(tree)
    out = tree.copy()
    by_method: dict[int, list[FopSite]] = {}
    for s in sites:
        by_method.setdefault(s.method_id, []).append(s)
    errors: list[HaffError] = []
    for method in out.methods():
        mid = registry.id_of(method["name"])
        try:
            _rewrite_inplace(out, method.id, by_method.get(mid, []))
        except HaffError as e:
            errors.append(_attach(e, method["name"]))
    _raise_collected(errors)
    root = out[out.root]
    for c in list(root.children):
        if out[c].kind is Kind.META_INFO_SET:
            root.children.remove(c)
            del out.nodes[c]
    return out, registry


def emit_registry(reg: MethodRegistry) -> str:
    lines = [f"method {name} id {mid} fops {reg.fop_total.get(name, 0)}"
             for name, mid in sorted(reg.entries.items(), key=lambda kv: kv[1])]
    return "".join(line + "\n" for line in lines)


def parse_registry(text: str) -> MethodRegistry:
    entries: list[tuple[int, str, int]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6 or parts[0] != "method" or parts[2] != "id" or parts[4] != "fops":
            raise ValueError(f"registry line {lineno}: malformed {line!r}")
        entries.append((int(parts[3]), parts[1], int(parts[5])))
    entries.sort()
    reg = MethodRegistry()
    for expected, (mid, name, fops) in enumerate(entries, 1):
        if mid != expected:
            raise ValueError(f"registry ids are not dense: expected {expected}, got {mid}")
        reg.add(name, fops)
    return reg
