import pytest

from haff import code_to_aslt
from haff.errors import HaffError, InternalError, SvcRuntimeError, UnboundVariableError
from haff.fom import MemoryFom
from haff.runtime import CrashPlan, Interpreter, invoke, parse_args_text, wrap64
from haff.transform import transform_unit

from helpers import CRASH_CORPUS


def run(src, method="m", args=(), **kw):
    return invoke(code_to_aslt(src), None, None, "s", method, list(args), **kw)


def value(expr, decls=""):
    return run(f"method m() {{ {decls} return {expr}; }}").value


@pytest.mark.parametrize("expr, expected", [
    ("7 / 2", 3), ("-7 / 2", -3), ("7 / -2", -3),
    ("7 % 3", 1), ("-7 % 3", -1), ("7 % -3", 1),
    ("9223372036854775807 + 1", -2**63),
    ("-9223372036854775808 / -1", -2**63),
    ("-9223372036854775808 % -1", 0),
    ('"a" + 1', "a1"), ('1 + "a"', "1a"), ('"x" + true', "xtrue"),
    ("1 == 1", True), ('1 == "1"', False), ("true != false", True),
    ('"abc" < "abd"', True), ("2 >= 3", False),
    ("!true || true && false", False),
    ("-(3 - 5)", 2),
])
def test_expression_semantics(expr, expected):
    got = value(expr)
    assert type(got) is type(expected) and got == expected


def test_short_circuit():
    assert value("false && 1 / 0 == 0") is False
    assert value("true || 1 / 0 == 0") is True


@pytest.mark.parametrize("expr", ["1 / 0", "1 % 0", '"a" - 1', "1 < true", "!1", "-true",
                                  "1 && true", 'if_missing'])
def test_runtime_errors(expr):
    with pytest.raises(SvcRuntimeError):
        value(expr)


def test_if_needs_bool():
    with pytest.raises(SvcRuntimeError):
        run("method m() { if (1) { } }")


def test_assign_undeclared():
    with pytest.raises(UnboundVariableError):
        run("method m() { x = 1; }")


def test_void_value_is_error():
    with pytest.raises(SvcRuntimeError):
        run("method v() { } method m() { return call v() + 1; }")


def test_unknown_method_and_arity():
    with pytest.raises(SvcRuntimeError):
        run("method m() { }", method="zz")
    with pytest.raises(SvcRuntimeError):
        run("method m(a) { }", args=())


def test_print_and_locals():
    out = run('method m(n) { var s = ""; while (n > 0) { s = s + n; n = n - 1; } print(s); return s; }',
              args=[3])
    assert out.value == "321" and out.transcript == ["321"]
    assert out.final_locals == {"n": 0, "s": "321"}


def test_recursion_limit():
    with pytest.raises(SvcRuntimeError):
        run("method m(n) { return call m(n + 1); }", args=[0])


def test_wrap64():
    assert wrap64(2**63) == -2**63 and wrap64(-2**63 - 1) == 2**63 - 1


def test_fault_without_plan_is_noop():
    out = run('method m() { fault("x"); return 1; }')
    assert out.value == 1 and out.faults["x"] == 1


def test_crash_plan_occurrence():
    out = run('method m() { var i = 0; while (i < 5) { print(i); fault("f"); i = i + 1; } }',
              crash_plan=CrashPlan({"f": 3}))
    assert out.crashed and out.label == "f" and out.transcript == ["0", "1", "2"]


def test_crash_plan_parse():
    plan = CrashPlan.parse("# comment\ncrash post 2\n\ncrash end 1\n")
    assert plan.triggers == {"post": 2, "end": 1}
    for bad in ("crash x", "boom x 1", "crash x y", "crash x 0"):
        with pytest.raises(ValueError):
            CrashPlan.parse(bad)


def test_parse_args_text():
    assert parse_args_text('3, "a, b", -2, true, false') == [3, "a, b", -2, True, False]
    assert parse_args_text("") == []
    for bad in ("1 2", "1,", "-", '-"x"', "x"):
        with pytest.raises(HaffError):
            parse_args_text(bad)


# --- failover behaviour ----------------------------------------------------

def doubling():
    tree = code_to_aslt((CRASH_CORPUS / "doubling.svc").read_text())
    return tree, transform_unit(tree)


def test_transformed_matches_original_without_crash():
    tree, (fo, reg) = doubling()
    a = invoke(tree, None, None, "s", "test", [])
    b = invoke(fo, reg, MemoryFom(), "s", "test", [])
    assert (a.value, a.transcript, a.final_locals) == (b.value, b.transcript, b.final_locals)


def test_untransformed_ignores_comments():
    tree, _ = doubling()
    out = invoke(tree, None, None, "s", "test", [])
    assert out.value == 37


def test_crash_after_fop_resumes_without_precode():
    _, (fo, reg) = doubling()
    fom = MemoryFom()
    first = invoke(fo, reg, fom, "s", "test", [], CrashPlan({"post": 1}))
    assert first.crashed and first.transcript == ["code before failover point: 01234"]
    second = invoke(fo, reg, fom, "s", "test", [])
    assert second.transcript == ["code after failover point: 37"]
    assert second.value == 37 and second.recovered == [("test", 1, 1)]
    assert second.faults["pre"] == 0
    assert {k: second.final_locals[k] for k in ("j", "str", "i")} == {"j": 32, "str": "01234", "i": 5}
    assert fom.records("s") == {}


def test_crash_before_fop_reexecutes_everything():
    _, (fo, reg) = doubling()
    fom = MemoryFom()
    first = invoke(fo, reg, fom, "s", "test", [], CrashPlan({"pre": 3}))
    assert first.crashed and fom.records("s") == {}
    second = invoke(fo, reg, fom, "s", "test", [])
    assert second.faults["pre"] == 5 and second.recovered == []
    assert len(second.transcript) == 2


def test_store_then_recover_restores_locals_exactly():
    src = """method m() {
        var j = 7; var i = 3; var str = "x";
        /*<MISet> failover.Failoverpoint(j, i, str) </MISet>*/
        fault("after");
        return str + j + i;
    }"""
    fo, reg = transform_unit(code_to_aslt(src))
    fom = MemoryFom()
    assert invoke(fo, reg, fom, "s", "m", [], CrashPlan({"after": 1})).crashed
    assert fom.records("s")[(1, 1)].bindings == [("j", 7), ("i", 3), ("str", "x")]
    out = invoke(fo, reg, fom, "s", "m", [])
    assert out.value == "x73"
    assert out.final_locals == {"j": 7, "i": 3, "str": "x"}


def test_level_counts():
    src = "method inner() { return 0; } method outer() { return call inner(); }"
    fo, reg = transform_unit(code_to_aslt(src))
    levels = []

    class Spy(MemoryFom):
        def begin_activation(self, sid, mid, level):
            levels.append((reg.name_of(mid), level))
            return super().begin_activation(sid, mid, level)

    invoke(fo, reg, Spy(), "s", "outer", [])
    assert levels == [("outer", 1), ("inner", 2)]


COUNTDOWN = """
method countdown(n) {
    var here = n;
    /*<MISet> failover.Failoverpoint(n, here) </MISet>*/
    if (n == 1) {
        fault("bottom");
        return 1;
    }
    var below = call countdown(n - 1);
    return here + below;
}

method main(n) {
    var r = 0;
    /*<MISet> failover.Failoverpoint(n, r) </MISet>*/
    r = call countdown(n);
    return r;
}
"""


def test_recursion_levels_recovered_independently():
    fo, reg = transform_unit(code_to_aslt(COUNTDOWN))
    fom = MemoryFom()
    assert invoke(fo, reg, fom, "s", "main", [3], CrashPlan({"bottom": 1})).crashed
    mid = reg.id_of("countdown")
    assert {k: r.as_dict() for k, r in fom.records("s").items() if k[0] == mid} == {
        (mid, 2): {"n": 3, "here": 3},
        (mid, 3): {"n": 2, "here": 2},
        (mid, 4): {"n": 1, "here": 1},
    }
    out = invoke(fo, reg, fom, "s", "main", [3])
    assert out.value == 6
    assert sorted(r for r in out.recovered if r[0] == "countdown") == \
        [("countdown", 2, 1), ("countdown", 3, 1), ("countdown", 4, 1)]


def test_sequential_calls_run_fully():
    src = """
    method b(x) {
        var y = x;
        /*<MISet> failover.Failoverpoint(x, y) </MISet>*/
        print("b " + y);
        return y;
    }
    method m() {
        var t = call b(1);
        t = t + call b(2);
        return t;
    }"""
    fo, reg = transform_unit(code_to_aslt(src))
    out = invoke(fo, reg, MemoryFom(), "s", "m", [])
    assert out.value == 3 and out.transcript == ["b 1", "b 2"] and out.recovered == []
    # two activations of b, two segments each, every segment run once
    assert [n for (act, _), n in out.segments.items() if act[-1][2] == "b"] == [1, 1, 1, 1]


def test_recovery_mismatch_is_internal_error():
    _, (fo, reg) = doubling()
    fom = MemoryFom()
    fom.store_state("s", 1, 1, 1, [("j", 1)])
    interp = Interpreter(fo, reg, fom, "s")

    class Liar(MemoryFom):
        def get_fop_count(self, *a):
            return 1

        def recover_state(self, *a):
            return fom.recover_state("s", 1, 1, 2)

    interp.fom = Liar()
    with pytest.raises(InternalError):
        interp.invoke("test", [])


def test_missing_registry_entry():
    fo, reg = transform_unit(code_to_aslt("method a() { }"))
    other = transform_unit(code_to_aslt("method b() { }"))[1]
    with pytest.raises(SvcRuntimeError):
        invoke(fo, other, None, "s", "a", [])
