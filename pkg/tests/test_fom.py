import os
import subprocess
import sys
import textwrap

import pytest

from haff.errors import BackendIoError, ConfigError, NoRecordError, NoRuleError, SerializationError
from haff.fom import (
    FileFom,
    FomConfig,
    FopIdentity,
    FopRecord,
    MemoryFom,
    dump_state,
    fom_for_service,
    load_state,
    parse_config,
)

S = "sess1"


@pytest.fixture(params=["memory", "file"])
def fom(request, tmp_path):
    return MemoryFom() if request.param == "memory" else FileFom(tmp_path / "svc")


def restart(fom, tmp_path):
    """A fresh handle on the same store, as a restarted server would see it."""
    if isinstance(fom, FileFom):
        return FileFom(fom.directory)
    fresh = MemoryFom()
    for sid in fom.sessions():
        fresh.seed(sid, fom.records(sid))
    return fresh


def test_fresh_session_counts_zero(fom):
    assert fom.begin_activation(S, 1, 1) is False
    assert fom.get_fop_count(S, 1, 1) == 0


def test_stored_fop_seen_after_restart(fom, tmp_path):
    fom.begin_activation(S, 1, 1)
    fom.store_state(S, 1, 1, 1, [("j", 7), ("i", 3), ("str", "x")])
    # the storing activation itself never resumes from its own record
    assert fom.get_fop_count(S, 1, 1) == 0
    again = restart(fom, tmp_path)
    assert again.begin_activation(S, 1, 1) is True
    assert again.get_fop_count(S, 1, 1) == 1
    assert again.recover_state(S, 1, 1, 1) == [("j", 7), ("i", 3), ("str", "x")]
    assert again.get_fop_count(S, 1, 1) == 0


def test_recover_twice_is_an_error(fom):
    fom.store_state(S, 1, 1, 1, [("a", 1)])
    fom.begin_activation(S, 1, 1)
    fom.recover_state(S, 1, 1, 1)
    with pytest.raises(NoRecordError):
        fom.recover_state(S, 1, 1, 1)


def test_later_store_replaces_earlier(fom):
    fom.store_state(S, 2, 1, 1, [("a", 1)])
    fom.store_state(S, 2, 1, 2, [("a", 2), ("b", True)])
    recs = fom.records(S)
    assert list(recs) == [(2, 1)]
    assert recs[(2, 1)].fop_index == 2 and recs[(2, 1)].as_dict() == {"a": 2, "b": True}
    fom.begin_activation(S, 2, 1)
    with pytest.raises(NoRecordError):
        fom.recover_state(S, 2, 1, 1)


def test_sessions_are_independent(fom):
    fom.store_state("s1", 1, 1, 1, [("a", 1)])
    fom.store_state("s2", 1, 1, 2, [("a", 2)])
    assert fom.records("s1")[(1, 1)].fop_index == 1
    assert fom.records("s2")[(1, 1)].fop_index == 2
    fom.clear_session("s1")
    assert fom.records("s1") == {} and fom.records("s2")


def test_missing_record(fom):
    fom.begin_activation(S, 1, 1)
    with pytest.raises(NoRecordError):
        fom.recover_state(S, 1, 1, 1)


def test_clear_level(fom):
    fom.store_state(S, 1, 2, 1, [("a", 1)])
    fom.clear_level(S, 1, 2)
    fom.begin_activation(S, 1, 2)
    assert fom.get_fop_count(S, 1, 2) == 0
    fom.clear_level(S, 9, 9)  # absent: no-op


def test_stamps_increase(fom):
    fom.store_state(S, 1, 1, 1, [])
    fom.store_state(S, 2, 2, 1, [])
    fom.store_state(S, 1, 1, 2, [])
    recs = fom.records(S)
    assert recs[(2, 2)].stored_at == 2 and recs[(1, 1)].stored_at == 3


@pytest.mark.parametrize("bindings, err", [
    ([("a", 1.5)], SerializationError),
    ([("a", None)], SerializationError),
    ([("a", 2**63)], SerializationError),
    ([("a", 1), ("a", 2)], SerializationError),
    ([("1x", 1)], SerializationError),
])
def test_bad_bindings(fom, bindings, err):
    with pytest.raises(err):
        fom.store_state(S, 1, 1, 1, bindings)


@pytest.mark.parametrize("fields", [("", 1, 1, 1), ("s", 0, 1, 1), ("s", 1, 0, 1), ("s", 1, 1, 0)])
def test_identity_validation(fields):
    with pytest.raises(ValueError):
        FopIdentity(*fields)


def test_state_file_format_is_exact(tmp_path):
    fom = FileFom(tmp_path)
    fom.store_state("abc", 3, 2, 1, [("n", -5), ("ok", False), ("msg", "50% off\nnow")])
    fom.store_state("abc", 1, 1, 2, [("t", "")])
    assert fom.path_for("abc").read_bytes() == (
        b"rec 1 1 2 2\n"
        b"var t str \n"
        b"rec 3 2 1 1\n"
        b"var n int -5\n"
        b"var ok bool false\n"
        b"var msg str 50%25%20off%0Anow\n"
    )
    assert FileFom(tmp_path).records("abc") == fom.records("abc")


def test_empty_session_removes_file(tmp_path):
    fom = FileFom(tmp_path)
    fom.store_state("x", 1, 1, 1, [("a", 1)])
    assert fom.sessions() == ["x"]
    fom.clear_level("x", 1, 1)
    assert not fom.path_for("x").exists() and fom.sessions() == []


def test_no_temp_files_left(tmp_path):
    fom = FileFom(tmp_path)
    for i in range(1, 5):
        fom.store_state("x", 1, 1, i, [("a", i)])
    assert sorted(p.name for p in tmp_path.iterdir()) == ["x.fostate"]


@pytest.mark.parametrize("sid", ["../evil", "a/b", "", ".."])
def test_unsafe_session_ids(tmp_path, sid):
    with pytest.raises((BackendIoError, ValueError)):
        FileFom(tmp_path).store_state(sid, 1, 1, 1, [])


@pytest.mark.parametrize("text", ["rec 1 1\n", "var a int 1\n", "rec 1 1 1 1\nvar a int x\n",
                                  "rec 1 1 1 1\nvar a float 1\n", "junk\n"])
def test_corrupt_state(text):
    with pytest.raises(BackendIoError):
        load_state(text)


def test_unreadable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(BackendIoError):
        FileFom(blocker / "sub").store_state("s", 1, 1, 1, [])


def test_dump_load_identity():
    recs = {(1, 1): FopRecord(2, [("s", " %\n\t"), ("b", True), ("n", -2**63)], 7)}
    assert load_state(dump_state(recs)) == recs


def test_config_and_factory(tmp_path):
    cfg = parse_config("""<?xml version="1.0"?>
        <failover>
          <service name="FlightBooking" fom="file" dir="/tmp/fo"/>
          <service name="*" fom="memory"/>
        </failover>""")
    handle = fom_for_service(cfg, "FlightBooking")
    assert isinstance(handle, FileFom) and str(handle.directory) == "/tmp/fo/FlightBooking"
    assert isinstance(fom_for_service(cfg, "Other"), MemoryFom)


def test_catch_all_only():
    cfg = parse_config('<failover><service name="*" fom="memory"/></failover>')
    assert isinstance(fom_for_service(cfg, "anything"), MemoryFom)


def test_first_rule_wins():
    cfg = parse_config('<failover><service name="*" fom="memory"/>'
                       '<service name="A" fom="file" dir="d"/></failover>')
    assert isinstance(fom_for_service(cfg, "A"), MemoryFom)


def test_relative_dir_resolves_against_config(tmp_path):
    cfg = parse_config('<failover><service name="A" fom="file" dir="state"/></failover>', tmp_path)
    assert fom_for_service(cfg, "A").directory == tmp_path / "state" / "A"


def test_no_rule():
    with pytest.raises(NoRuleError):
        fom_for_service(FomConfig([]), "A")


@pytest.mark.parametrize("xml", [
    '<failover><service name="A" fom="tape"/></failover>',
    '<failover><service name="A" fom="file"/></failover>',
    '<failover><service fom="memory"/></failover>',
    "<other/>",
    "<failover>",
    '<!DOCTYPE x [<!ENTITY e "boom">]><failover/>',
])
def test_config_errors(xml):
    with pytest.raises(ConfigError):
        fom_for_service(parse_config(xml), "A")


KILL_SCRIPT = textwrap.dedent("""
    import os, signal, sys
    from haff import code_to_aslt
    from haff.fom import FileFom
    from haff.runtime import invoke
    from haff.transform import transform_unit

    class Dying(FileFom):
        def store_state(self, *args):
            super().store_state(*args)
            os.kill(os.getpid(), signal.SIGKILL)

    tree, reg = transform_unit(code_to_aslt(open(sys.argv[1]).read()))
    invoke(tree, reg, Dying(sys.argv[2]), "s1", "test", [])
    print("unreachable")
""")


@pytest.mark.skipif(not hasattr(os, "kill") or sys.platform == "win32", reason="needs SIGKILL")
def test_sigkill_after_store_then_fresh_process_resumes(tmp_path):
    from helpers import CRASH_CORPUS

    unit = CRASH_CORPUS / "doubling.svc"
    state = tmp_path / "state"
    proc = subprocess.run([sys.executable, "-c", KILL_SCRIPT, str(unit), str(state)],
                          capture_output=True, text=True)
    assert proc.returncode == -9 and "unreachable" not in proc.stdout
    assert (state / "s1.fostate").read_bytes() == (
        b"rec 1 1 1 1\nvar j int 32\nvar str str 01234\nvar i int 5\n")
    resume = textwrap.dedent("""
        import sys
        from haff import code_to_aslt
        from haff.fom import FileFom
        from haff.runtime import invoke
        from haff.transform import transform_unit
        tree, reg = transform_unit(code_to_aslt(open(sys.argv[1]).read()))
        out = invoke(tree, reg, FileFom(sys.argv[2]), "s1", "test", [])
        print(out.value, out.transcript, out.recovered)
    """)
    done = subprocess.run([sys.executable, "-c", resume, str(unit), str(state)],
                          capture_output=True, text=True, check=True)
    assert done.stdout.strip() == "37 ['code after failover point: 37'] [('test', 1, 1)]"
    assert list(state.iterdir()) == []
