"""Tree-walking interpreter for SvcLang, original or failover-transformed.

Crashes are simulated as process death: a triggered ``fault`` (or an
exhausted step budget) aborts the invocation on the spot. No level is
released and every persisted record stays in the backend, so a later
``invoke`` with the same session id resumes from the last failover points.
"""

from __future__ import annotations

import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Union

from haff.aslt import AsltNode, AsltTree, Kind, method_body, method_params
from haff.errors import (
    HaffError,
    InternalError,
    NoRecordError,
    SvcRuntimeError,
    UnboundVariableError,
)
from haff.fom import FailoverManagement, MemoryFom
from haff.lexer import tokenize
from haff.printer import literal_text
from haff.transform import MethodRegistry, is_transformed

Value = Union[int, str, bool]
MAX_CALL_DEPTH = 400

# an activation is identified by the call path leading to it:
# ((site node id, ordinal at that site, method name), ...)
Activation = tuple[tuple[int, int, str], ...]


def to_text(value: Value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def wrap64(n: int) -> int:
    return (n + 2**63) % 2**64 - 2**63


def default_value() -> Value:
    return 0


@dataclass
class CrashPlan:
    """Crash on the n-th execution of ``fault(label)``; optionally after a step budget."""

    triggers: dict[str, int] = field(default_factory=dict)
    max_steps: Optional[int] = None

    def __post_init__(self):
        for label, n in self.triggers.items():
            if type(n) is not int or n < 1:
                raise ValueError(f"crash occurrence for {label!r} must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "CrashPlan":
        triggers: dict[str, int] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 3 or parts[0] != "crash":
                raise ValueError(f"crash plan line {lineno}: expected 'crash <label> <occurrence>'")
            try:
                n = int(parts[2])
            except ValueError:
                raise ValueError(f"crash plan line {lineno}: occurrence must be an integer") from None
            triggers[parts[1]] = n
        return cls(triggers)


@dataclass
class Frame:
    method: str
    method_id: int
    level_count: int
    locals: dict[str, Value]
    activation: Activation
    recovery_pending: Optional[int] = None
    site_counts: Counter = field(default_factory=Counter)


@dataclass
class Returned:
    value: Optional[Value]
    transcript: list[str]
    final_locals: dict[str, Value] = field(default_factory=dict)
    segments: Counter = field(default_factory=Counter)
    recovered: list[tuple[str, int, int]] = field(default_factory=list)
    completed: set = field(default_factory=set)
    steps: int = 0
    faults: Counter = field(default_factory=Counter)

    crashed = False


@dataclass
class Crashed:
    transcript: list[str]
    stack: list[tuple[str, int, int, Activation]] = field(default_factory=list)
    label: Optional[str] = None
    segments: Counter = field(default_factory=Counter)
    recovered: list[tuple[str, int, int]] = field(default_factory=list)
    completed: set = field(default_factory=set)
    steps: int = 0

    crashed = True


Outcome = Union[Returned, Crashed]


@dataclass
class Session:
    session_id: str
    service_name: str = ""
    transcript: list[str] = field(default_factory=list)
    status: str = "Fresh"  # Fresh | Failed | Completed


class _Crash(BaseException):
    def __init__(self, label: Optional[str]):
        self.label = label


class _Return(Exception):
    def __init__(self, value: Optional[Value]):
        self.value = value


@dataclass
class _MethodInfo:
    node: AsltNode
    params: list[str]
    body: list[int]
    slots: frozenset[str]
    guards: dict[int, int]  # If node id -> fop index
    final_start: int
    fops: int


def _guard_index(tree: AsltTree, node: AsltNode) -> Optional[int]:
    """FOP index i if ``node`` is ``if (fo.getFOPCount(...) < i)``."""
    if node.kind is not Kind.IF:
        return None
    cond = tree[node.children[0]]
    if cond.kind is not Kind.BINARY_OP or cond["op"] != "<":
        return None
    lhs, rhs = tree.children(cond.id)
    if lhs.kind is Kind.INTRINSIC_CALL and lhs["name"] == "getFOPCount" \
            and rhs.kind is Kind.LITERAL and type(rhs["value"]) is int:
        return rhs["value"]
    return None


def _analyze(tree: AsltTree, method: AsltNode) -> _MethodInfo:
    params = method_params(tree, method)
    body = list(method_body(tree, method).children)
    slots = set(params)
    slots.update(n["name"] for n in tree.walk(method.id) if n.kind is Kind.VAR_DECL)
    guards: dict[int, int] = {}
    last_guard = -1
    for idx, sid in enumerate(body):
        i = _guard_index(tree, tree[sid])
        if i is not None:
            guards[sid] = i
            last_guard = idx
    if last_guard >= 0:
        final_start = last_guard + 1
    else:
        first = tree[body[0]] if body else None
        leading_inc = (first is not None and first.kind is Kind.INTRINSIC_CALL
                       and first["name"] == "levelInc")
        final_start = 1 if leading_inc else 0
    return _MethodInfo(method, params, body, frozenset(slots), guards, final_start, len(guards))


class Interpreter:
    def __init__(self, tree: AsltTree, registry: Optional[MethodRegistry] = None,
                 fom: Optional[FailoverManagement] = None, session_id: str = "session",
                 crash_plan: Optional[CrashPlan] = None):
        self.tree = tree
        self.registry = registry or MethodRegistry.from_tree(tree)
        self.transformed = is_transformed(tree)
        if fom is None and self.transformed:
            fom = MemoryFom()
        self.fom = fom
        self.session_id = session_id
        self.crash_plan = crash_plan or CrashPlan()
        self.methods: dict[str, _MethodInfo] = {}
        for m in tree.methods():
            if m["name"] in self.methods:
                raise SvcRuntimeError(f"method {m['name']!r} declared twice")
            self.methods[m["name"]] = _analyze(tree, m)
        for name in self.methods:
            if name not in self.registry.entries:
                raise SvcRuntimeError(f"method {name!r} missing from the method registry")
        self._reset()

    def _reset(self) -> None:
        self.transcript: list[str] = []
        self.stack: list[Frame] = []
        self.level = 0
        self.steps = 0
        self.fault_counts: Counter = Counter()
        self.segments: Counter = Counter()
        self.recovered: list[tuple[str, int, int]] = []
        self.completed: set = set()
        self.level_incs = 0
        self.level_decs = 0

    # --- entry -----------------------------------------------------------

    def invoke(self, method_name: str, args: list[Value]) -> Outcome:
        self._reset()
        if method_name not in self.methods:
            raise SvcRuntimeError(f"unknown method {method_name!r}")
        top: list[Frame] = []
        old_limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old_limit, 20 * MAX_CALL_DEPTH + 1000))
        try:
            value = self._call(method_name, list(args), site=-1, capture=top)
        except _Crash as c:
            stack = [(f.method, f.method_id, f.level_count, f.activation) for f in self.stack]
            return Crashed(list(self.transcript), stack, c.label, self.segments,
                           list(self.recovered), set(self.completed), self.steps)
        finally:
            sys.setrecursionlimit(old_limit)
        return Returned(value, list(self.transcript), dict(top[0].locals), self.segments,
                        list(self.recovered), set(self.completed), self.steps,
                        Counter(self.fault_counts))

    # --- calls -----------------------------------------------------------

    def _call(self, name: str, args: list[Value], site: int,
              capture: Optional[list] = None) -> Optional[Value]:
        info = self.methods.get(name)
        if info is None:
            raise SvcRuntimeError(f"unknown method {name!r}")
        if len(args) != len(info.params):
            raise SvcRuntimeError(
                f"method {name!r} takes {len(info.params)} arguments, got {len(args)}")
        if len(self.stack) >= MAX_CALL_DEPTH:
            raise SvcRuntimeError(f"call depth exceeds {MAX_CALL_DEPTH}")
        if self.stack:
            parent = self.stack[-1]
            parent.site_counts[site] += 1
            activation = parent.activation + ((site, parent.site_counts[site], name),)
        else:
            activation = ((site, 1, name),)
        # transformed code assigns the level in fo.levelInc()
        depth = 0 if self.transformed else len(self.stack) + 1
        frame = Frame(name, self.registry.id_of(name), depth,
                      dict(zip(info.params, args)), activation)
        if capture is not None:
            capture.append(frame)
        self.stack.append(frame)
        result: Optional[Value] = None
        try:
            body = info.body
            for idx, sid in enumerate(body):
                if idx == info.final_start:
                    self.segments[(activation, info.fops)] += 1
                self._exec(self.tree.nodes[sid], frame)
            if info.final_start >= len(body):
                self.segments[(activation, info.fops)] += 1
        except _Return as r:
            result = r.value
        self.stack.pop()
        self.completed.add(activation)
        return result

    # --- statements ------------------------------------------------------

    def _exec_block(self, block: AsltNode, frame: Frame) -> None:
        nodes = self.tree.nodes
        for sid in block.children:
            self._exec(nodes[sid], frame)

    def _exec(self, node: AsltNode, frame: Frame) -> None:
        k = node.kind
        if k is Kind.META_INFO_SET:
            return
        budget = self.crash_plan.max_steps
        if budget is not None and self.steps >= budget:
            raise _Crash(None)
        self.steps += 1
        nodes = self.tree.nodes
        if k is Kind.VAR_DECL:
            frame.locals[node["name"]] = self._eval(nodes[node.children[0]], frame)
        elif k is Kind.ASSIGN:
            name = nodes[node.children[0]]["name"]
            value = self._eval(nodes[node.children[1]], frame)
            if name not in frame.locals:
                raise UnboundVariableError(f"assignment to undeclared variable {name!r}")
            frame.locals[name] = value
        elif k is Kind.IF:
            guard = self.methods[frame.method].guards.get(node.id)
            cond = self._truth(self._eval(nodes[node.children[0]], frame), "if")
            if cond:
                if guard is not None:
                    self.segments[(frame.activation, guard - 1)] += 1
                self._exec_block(nodes[node.children[1]], frame)
            elif len(node.children) == 3:
                other = nodes[node.children[2]]
                if other.kind is Kind.IF:
                    self._exec(other, frame)
                else:
                    self._exec_block(other, frame)
        elif k is Kind.WHILE:
            cond_node, body = nodes[node.children[0]], nodes[node.children[1]]
            while self._truth(self._eval(cond_node, frame), "while"):
                self._exec_block(body, frame)
        elif k is Kind.CALL:
            self._eval(node, frame, allow_void=True)
        elif k is Kind.INTRINSIC_CALL:
            self._intrinsic(node, frame)
        elif k is Kind.RETURN:
            value = self._eval(nodes[node.children[0]], frame, allow_void=True) \
                if node.children else None
            raise _Return(value)
        elif k is Kind.PRINT:
            self.transcript.append(to_text(self._eval(nodes[node.children[0]], frame)))
        elif k is Kind.FAULT:
            label = node["label"]
            self.fault_counts[label] += 1
            if self.crash_plan.triggers.get(label) == self.fault_counts[label]:
                raise _Crash(label)
        else:
            raise SvcRuntimeError(f"cannot execute {k.value}")

    def _truth(self, value: Value, where: str) -> bool:
        if type(value) is not bool:
            raise SvcRuntimeError(f"{where} condition must be bool, got {literal_text(value)}")
        return value

    # --- intrinsics ------------------------------------------------------

    def _intrinsic(self, node: AsltNode, frame: Frame) -> Optional[Value]:
        name = node["name"]
        fom = self.fom
        assert fom is not None
        kids = self.tree.children(node.id)
        sid, mid = self.session_id, frame.method_id
        if name == "levelInc":
            self.level += 1
            self.level_incs += 1
            frame.level_count = self.level
            if fom.begin_activation(sid, mid, frame.level_count):
                frame.recovery_pending = fom.get_fop_count(sid, mid, frame.level_count)
            return None
        if name == "levelDec":
            value = self._eval(kids[0], frame, allow_void=True) if kids else None
            fom.clear_level(sid, mid, frame.level_count)
            self.level -= 1
            self.level_decs += 1
            return value
        if name == "getFOPCount":
            return fom.get_fop_count(sid, mid, frame.level_count)
        info = self.methods[frame.method]
        index = kids[0]["value"]
        names = [k["name"] for k in kids[1:]]
        for v in names:
            if v not in info.slots:
                raise UnboundVariableError(f"saved variable {v!r} has no slot in {frame.method}")
        if name == "storeState":
            bindings = [(v, frame.locals.get(v, default_value())) for v in names]
            fom.store_state(sid, mid, frame.level_count, index, bindings)
            return None
        if name == "recoverState":
            try:
                bindings = fom.recover_state(sid, mid, frame.level_count, index)
            except NoRecordError as e:
                raise InternalError(f"recovery failed in {frame.method}: {e}") from e
            for slot in info.slots:
                frame.locals.setdefault(slot, default_value())
            wanted = set(names)
            for v, value in bindings:
                if v in wanted:
                    frame.locals[v] = value
            frame.recovery_pending = None
            self.recovered.append((frame.method, frame.level_count, index))
            return None
        raise SvcRuntimeError(f"unknown intrinsic fo.{name}")

    # --- expressions -----------------------------------------------------

    def _eval(self, node: AsltNode, frame: Frame, allow_void: bool = False) -> Value:
        k = node.kind
        nodes = self.tree.nodes
        if k is Kind.LITERAL:
            return node["value"]
        if k is Kind.VAR_REF:
            try:
                return frame.locals[node["name"]]
            except KeyError:
                raise UnboundVariableError(f"variable {node['name']!r} is not bound") from None
        if k is Kind.BINARY_OP:
            return self._binary(node, frame)
        if k is Kind.UNARY_OP:
            v = self._eval(nodes[node.children[0]], frame)
            if node["op"] == "!":
                if type(v) is not bool:
                    raise SvcRuntimeError("operator ! needs a bool")
                return not v
            if type(v) is not int:
                raise SvcRuntimeError("unary - needs an int")
            return wrap64(-v)
        if k is Kind.CALL:
            args = [self._eval(nodes[c], frame) for c in node.children]
            result = self._call(node["name"], args, node.id)
        elif k is Kind.INTRINSIC_CALL:
            result = self._intrinsic(node, frame)
        else:
            raise SvcRuntimeError(f"cannot evaluate {k.value}")
        if result is None and not allow_void:
            raise SvcRuntimeError(f"{node.attributes.get('name')} returned no value")
        return result  # type: ignore[return-value]

    def _binary(self, node: AsltNode, frame: Frame) -> Value:
        op = node["op"]
        nodes = self.tree.nodes
        left = self._eval(nodes[node.children[0]], frame)
        if op in ("&&", "||"):
            if type(left) is not bool:
                raise SvcRuntimeError(f"operator {op} needs bools")
            if (op == "&&" and not left) or (op == "||" and left):
                return left
            right = self._eval(nodes[node.children[1]], frame)
            if type(right) is not bool:
                raise SvcRuntimeError(f"operator {op} needs bools")
            return right
        right = self._eval(nodes[node.children[1]], frame)
        if op == "==":
            return type(left) is type(right) and left == right
        if op == "!=":
            return not (type(left) is type(right) and left == right)
        if op == "+" and (type(left) is str or type(right) is str):
            return to_text(left) + to_text(right)
        if op in ("<", "<=", ">", ">="):
            if type(left) is not type(right) or type(left) not in (int, str):
                raise SvcRuntimeError(f"operator {op} needs two ints or two strings")
            return {"<": left < right, "<=": left <= right,
                    ">": left > right, ">=": left >= right}[op]
        if type(left) is not int or type(right) is not int:
            raise SvcRuntimeError(f"operator {op} needs ints, got "
                                  f"{literal_text(left)} and {literal_text(right)}")
        if op == "+":
            return wrap64(left + right)
        if op == "-":
            return wrap64(left - right)
        if op == "*":
            return wrap64(left * right)
        if right == 0:
            raise SvcRuntimeError("division by zero" if op == "/" else "modulo by zero")
        q = abs(left) // abs(right)
        if (left < 0) != (right < 0):
            q = -q
        if op == "/":
            return wrap64(q)
        return wrap64(left - q * right)


def invoke(unit: AsltTree, registry: Optional[MethodRegistry], fom: Optional[FailoverManagement],
           session_id: str, method_name: str, args: list[Value],
           crash_plan: Optional[CrashPlan] = None, clear_on_success: bool = True) -> Outcome:
    """Run ``method_name(*args)`` for one session.

    Returns :class:`Returned` or :class:`Crashed`; runtime faults raise
    :class:`SvcRuntimeError`. A successful run clears the session's records.
    """
    interp = Interpreter(unit, registry, fom, session_id, crash_plan)
    outcome = interp.invoke(method_name, args)
    if not outcome.crashed and clear_on_success and interp.fom is not None:
        interp.fom.clear_session(session_id)
    return outcome


def parse_args_text(text: str) -> list[Value]:
    """Parse a comma-separated list of SvcLang literals, e.g. ``3, "abc", -2, true``."""
    toks = [t for t in tokenize(text) if t.kind != "EOF"]
    values: list[Value] = []
    i = 0
    while i < len(toks):
        neg = False
        if toks[i].is_("PUNCT", "-"):
            neg = True
            i += 1
        if i >= len(toks):
            raise HaffError("dangling '-' in argument list")
        t = toks[i]
        if t.kind == "INT":
            v: Value = -t.value if neg else t.value  # type: ignore[operator]
            if not -2**63 <= v < 2**63:  # type: ignore[operator]
                raise HaffError(f"argument {v} out of 64-bit range")
        elif neg:
            raise HaffError("'-' must precede an integer")
        elif t.kind == "STRING":
            v = t.value  # type: ignore[assignment]
        elif t.is_("KEYWORD", "true") or t.is_("KEYWORD", "false"):
            v = t.value == "true"
        else:
            raise HaffError(f"bad argument {t.value!r}; expected an int, string or bool literal")
        values.append(v)
        i += 1
        if i < len(toks):
            if not toks[i].is_("PUNCT", ","):
                raise HaffError(f"expected ',' between arguments, got {toks[i].value!r}")
            i += 1
            if i >= len(toks):
                raise HaffError("trailing ',' in argument list")
    return values
