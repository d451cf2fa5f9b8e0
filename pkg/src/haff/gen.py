"""Random SvcLang program generators used by the test corpora.

``random_unit`` builds arbitrary well-formed trees for parser/printer
round-trips. ``random_service`` builds terminating, type-correct programs that
follow the failover developer contract (every failover point saves all live
variables, failover-bearing callees are called at most once per segment and
never from a loop), so crash/resume runs must agree with the original.
"""

from __future__ import annotations

import random
import string

from haff.aslt import FRAME_INTRINSIC_ARGS, AsltTree, Kind
from haff.lexer import KEYWORDS

_NAMES = list(string.ascii_lowercase) + ["str", "acc", "tmp", "n1", "x_2"]
_BIN_OPS = ("||", "&&", "==", "!=", "<", "<=", ">", ">=", "+", "-", "*", "/", "%")
_STR_CHARS = "ab xyz%\"\\\n\t01é-"


def _ident(rng: random.Random) -> str:
    name = rng.choice(_NAMES)
    assert name not in KEYWORDS
    return name


def _string(rng: random.Random) -> str:
    return "".join(rng.choice(_STR_CHARS) for _ in range(rng.randint(0, 6)))


class _UnitBuilder:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.tree = AsltTree(root=0, nodes={}, next_id=0)

    def literal(self) -> int:
        r = self.rng.random()
        if r < 0.45:
            value: object = self.rng.choice([0, 1, 7, 42, -3, -9223372036854775808, 9223372036854775807,
                                             self.rng.randint(-1000, 1000)])
        elif r < 0.8:
            value = _string(self.rng)
        else:
            value = self.rng.random() < 0.5
        return self.tree.new(Kind.LITERAL, value=value)

    def expr(self, depth: int) -> int:
        rng, t = self.rng, self.tree
        if depth <= 0 or rng.random() < 0.3:
            return self.literal() if rng.random() < 0.5 else t.new(Kind.VAR_REF, name=_ident(rng))
        r = rng.random()
        if r < 0.5:
            return t.new(Kind.BINARY_OP, [self.expr(depth - 1), self.expr(depth - 1)],
                         op=rng.choice(_BIN_OPS))
        if r < 0.65:
            return t.new(Kind.UNARY_OP, [self.expr(depth - 1)], op=rng.choice(("!", "-")))
        if r < 0.85:
            args = [self.expr(depth - 1) for _ in range(rng.randint(0, 3))]
            return t.new(Kind.CALL, args, name=_ident(rng))
        if r < 0.92:
            refs = [t.new(Kind.VAR_REF, name=n) for n in FRAME_INTRINSIC_ARGS]
            return t.new(Kind.INTRINSIC_CALL, refs, name="getFOPCount")
        return t.new(Kind.INTRINSIC_CALL, [self.expr(depth - 1)], name="levelDec")

    def meta(self) -> int:
        rng = self.rng
        options = [
            "",
            '\nfailover.VarSetDef("VarSet1",str,i)\n',
            "\nfailover.Failoverpoint(j,#VarSet1)\n",
            f" failover.Failoverpoint({_ident(rng)}) ",
            "\n    free text, not parsed until transform */ \n",
        ]
        return self.tree.new(Kind.META_INFO_SET, raw=rng.choice(options))

    def block(self, depth: int) -> int:
        stmts = [self.statement(depth) for _ in range(self.rng.randint(0, 4))]
        return self.tree.new(Kind.BLOCK, stmts)

    def if_stmt(self, depth: int) -> int:
        rng, t = self.rng, self.tree
        kids = [self.expr(2), self.block(depth - 1)]
        r = rng.random()
        if r < 0.3:
            kids.append(self.block(depth - 1))
        elif r < 0.5:
            kids.append(self.if_stmt(depth - 1))
        return t.new(Kind.IF, kids)

    def statement(self, depth: int) -> int:
        rng, t = self.rng, self.tree
        choices = ["var", "assign", "call", "return", "print", "fault", "meta", "intrinsic"]
        if depth > 0:
            choices += ["if", "while", "if"]
        kind = rng.choice(choices)
        if kind == "var":
            return t.new(Kind.VAR_DECL, [self.expr(3)], name=_ident(rng))
        if kind == "assign":
            return t.new(Kind.ASSIGN, [t.new(Kind.VAR_REF, name=_ident(rng)), self.expr(3)])
        if kind == "call":
            args = [self.expr(2) for _ in range(rng.randint(0, 3))]
            return t.new(Kind.CALL, args, name=_ident(rng))
        if kind == "return":
            return t.new(Kind.RETURN, [self.expr(3)] if rng.random() < 0.8 else [])
        if kind == "print":
            return t.new(Kind.PRINT, [self.expr(3)])
        if kind == "fault":
            return t.new(Kind.FAULT, label=rng.choice(["f1", "crash here", "x\"y"]))
        if kind == "meta":
            return self.meta()
        if kind == "intrinsic":
            name = rng.choice(["levelInc", "levelDec", "storeState", "recoverState"])
            if name in ("storeState", "recoverState"):
                args = [t.new(Kind.LITERAL, value=rng.randint(1, 4))]
                args += [t.new(Kind.VAR_REF, name=_ident(rng)) for _ in range(rng.randint(0, 3))]
            else:
                args = []
            return t.new(Kind.INTRINSIC_CALL, args, name=name)
        if kind == "if":
            return self.if_stmt(depth)
        return t.new(Kind.WHILE, [self.expr(2), self.block(depth - 1)])

    def method(self, name: str) -> int:
        rng, t = self.rng, self.tree
        params = rng.sample(_NAMES, rng.randint(0, 3))
        kids = [t.new(Kind.PARAM, name=p) for p in params]
        kids.append(self.block(3))
        return t.new(Kind.METHOD_DECL, kids, name=name)

    def unit(self) -> AsltTree:
        items = []
        for i in range(self.rng.randint(0, 4)):
            if self.rng.random() < 0.4:
                items.append(self.meta())
            items.append(self.method(f"m{i}"))
        self.tree.root = self.tree.new(Kind.UNIT, items)
        return self.tree


def random_unit(seed: int) -> AsltTree:
    """A well-formed (not necessarily executable) tree exercising every node kind."""
    return _UnitBuilder(random.Random(seed)).unit()


# --- executable services -------------------------------------------------

class _ServiceWriter:
    """Emits source text for a terminating service with failover points."""

    def __init__(self, rng: random.Random, methods: int):
        self.rng = rng
        self.count = methods
        self.has_fops = [rng.random() < 0.7 for _ in range(methods)]
        self.params = [[f"p{k}" for k in range(rng.randint(0, 2))] for _ in range(methods)]
        self.fault_no = 0

    def fault(self) -> str:
        self.fault_no += 1
        return f'fault("f{self.fault_no}");'

    def int_expr(self, ints: list[str], depth: int = 2) -> str:
        rng = self.rng
        if depth == 0 or rng.random() < 0.35:
            return rng.choice(ints) if ints and rng.random() < 0.7 else str(rng.randint(-20, 50))
        op = rng.choice(["+", "-", "*", "/", "%"])
        left = self.int_expr(ints, depth - 1)
        if op in ("/", "%"):
            return f"({left}) {op} {rng.randint(1, 9)}"
        return f"({left}) {op} ({self.int_expr(ints, depth - 1)})"

    def bool_expr(self, ints: list[str], bools: list[str]) -> str:
        rng = self.rng
        r = rng.random()
        if r < 0.3 and bools:
            return rng.choice(bools)
        if r < 0.45 and bools:
            return f"!{rng.choice(bools)}"
        cmp_ = rng.choice(["<", "<=", ">", ">=", "==", "!="])
        base = f"{self.int_expr(ints, 1)} {cmp_} {self.int_expr(ints, 1)}"
        if r > 0.85 and bools:
            return f"{base} {rng.choice(['&&', '||'])} {rng.choice(bools)}"
        return base

    def simple(self, ints, strs, bools, indent: str) -> list[str]:
        rng = self.rng
        r = rng.random()
        if r < 0.3:
            return [f"{indent}{rng.choice(ints)} = {self.int_expr(ints)};"]
        if r < 0.45:
            s = rng.choice(strs)
            return [f'{indent}{s} = {s} + "{rng.choice("abc")}" + {rng.choice(ints)};']
        if r < 0.55:
            return [f"{indent}{rng.choice(bools)} = {self.bool_expr(ints, bools)};"]
        if r < 0.75:
            what = rng.choice(ints + strs + bools)
            return [f'{indent}print("{what}=" + {what});']
        return [indent + self.fault()]

    def chunk(self, ints, strs, bools, loop_var: str) -> list[str]:
        rng = self.rng
        r = rng.random()
        if r < 0.5:
            return self.simple(ints, strs, bools, "    ")
        if r < 0.75:
            lines = [f"    if ({self.bool_expr(ints, bools)}) {{"]
            for _ in range(rng.randint(1, 2)):
                lines += self.simple(ints, strs, bools, "        ")
            lines.append("    } else {")
            lines += self.simple(ints, strs, bools, "        ")
            lines.append("    }")
            return lines
        lines = [f"    {loop_var} = 0;", f"    while ({loop_var} < {rng.randint(1, 4)}) {{"]
        for _ in range(rng.randint(1, 3)):
            lines += self.simple(ints, strs, bools, "        ")
        lines += [f"        {loop_var} = {loop_var} + 1;", "    }"]
        return lines

    def method(self, idx: int) -> list[str]:
        rng = self.rng
        params = self.params[idx]
        ints = params + ["a", "b"]
        strs = ["s"]
        bools = ["flag"]
        lines = [f"method m{idx}({', '.join(params)}) {{",
                 f"    var a = {rng.randint(0, 9)};",
                 f"    var b = {self.int_expr(params, 1) if params else rng.randint(0, 9)};",
                 f'    var s = "m{idx}";',
                 "    var flag = true;",
                 "    var lp = 0;",
                 "    var r = 0;"]
        saved = params + ["a", "b", "s", "flag", "r"]
        callees = list(range(idx + 1, self.count))
        calls_left = rng.randint(1, 4) if self.has_fops[idx] else 1
        for seg in range(rng.randint(1, 4)):
            if self.has_fops[idx] and (seg > 0 or rng.random() < 0.5):
                lines.append(f"    /*<MISet> failover.Failoverpoint({', '.join(saved)}) </MISet>*/")
            for _ in range(rng.randint(1, 3)):
                lines += self.chunk(ints, strs, bools, "lp")
            # one call per segment: a second call to the same callee could pick up its stale record
            if callees and calls_left and rng.random() < 0.7:
                calls_left -= 1
                callee = rng.choice(callees)
                args = ", ".join(self.int_expr(ints, 1) for _ in self.params[callee])
                lines.append(f"    r = r + call m{callee}({args});")
                lines += self.simple(ints, strs, bools, "    ")
        lines.append('    print(s + " " + flag);')
        lines.append(f"    return {self.int_expr(ints + ['r'])};")
        lines.append("}")
        return lines

    def unit(self) -> str:
        out: list[str] = []
        for idx in range(self.count):
            out += self.method(idx) + [""]
        return "\n".join(out)


def random_service(seed: int, methods: int = 3) -> tuple[str, str, list[int]]:
    """Source of a terminating service, its entry method and integer arguments."""
    rng = random.Random(seed)
    writer = _ServiceWriter(rng, methods)
    src = writer.unit()
    args = [rng.randint(-5, 20) for _ in writer.params[0]]
    return src, "m0", args
