import shutil
import subprocess
import sys

import pytest

from haff.cli import main

from helpers import CRASH_CORPUS, FLIGHT, GOLDEN

CONFIG = '<failover><service name="*" fom="file" dir="state"/></failover>\n'


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    shutil.copy(CRASH_CORPUS / "doubling.svc", tmp_path)
    (tmp_path / "fo.xml").write_text(CONFIG)
    return tmp_path


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_transform_single_fop(work, capsys):
    code, out, _ = cli(capsys, "transform", "doubling.svc")
    assert code == 0 and out == "1 method, 1 FOP\n"
    text = (work / "doubling.fo.svc").read_text()
    assert "if (fo.getFOPCount(sID, mID, levelCount) < 1) {" in text
    assert "} else if (fo.getFOPCount(sID, mID, levelCount) == 1) {" in text
    assert (work / "doubling.fopreg").read_text() == "method test id 1 fops 1\n"


def test_transform_explicit_output(work, capsys):
    code, _, _ = cli(capsys, "transform", "doubling.svc", "out/x.fo.svc")
    assert code == 0 and (work / "out" / "x.fo.svc").exists() and (work / "out" / "x.fopreg").exists()


def test_transform_without_meta(work, capsys):
    (work / "plain.svc").write_text("method a() { } method b() { return 1; }")
    assert cli(capsys, "transform", "plain.svc")[1] == "2 methods, 0 FOPs\n"


def test_transform_nested_fop(work, capsys):
    (work / "bad.svc").write_text(
        "method m(x) { if (x) { /*<MISet> failover.Failoverpoint(x) </MISet>*/ print(x); } }")
    code, _, err = cli(capsys, "transform", "bad.svc")
    assert code == 1 and "NestedFopError" in err and "bad.svc" in err
    assert not (work / "bad.fo.svc").exists()


def test_transform_syntax_error_position(work, capsys):
    (work / "bad.svc").write_text("method m() {\n  var = 1;\n}")
    code, _, err = cli(capsys, "transform", "bad.svc")
    assert code == 1 and "bad.svc:2:" in err


def test_transform_twice_rejected(work, capsys):
    cli(capsys, "transform", "doubling.svc")
    code, _, err = cli(capsys, "transform", "doubling.fo.svc", "again.svc")
    assert code == 1 and "AlreadyTransformedError" in err


def test_run_crash_then_resume(work, capsys):
    cli(capsys, "transform", "doubling.svc")
    (work / "plan").write_text("crash post 1\n")
    full = cli(capsys, "run", "doubling.svc", "--entry", "test")
    assert full[0] == 0
    code, out1, err = cli(capsys, "run", "doubling.fo.svc", "--entry", "test", "--config", "fo.xml",
                          "--crash-plan", "plan", "--session", "c1")
    assert code == 3 and "--resume" in err
    assert (work / "state" / "doubling" / "c1.fostate").exists()
    code, out2, _ = cli(capsys, "run", "doubling.fo.svc", "--entry", "test", "--config", "fo.xml",
                        "--session", "c1", "--resume")
    assert code == 0
    assert out1 + out2 == full[1]
    assert not (work / "state" / "doubling" / "c1.fostate").exists()


def test_run_without_resume_starts_over(work, capsys):
    cli(capsys, "transform", "doubling.svc")
    (work / "plan").write_text("crash post 1\n")
    args = ["run", "doubling.fo.svc", "--entry", "test", "--config", "fo.xml", "--session", "c2"]
    assert cli(capsys, *args, "--crash-plan", "plan")[0] == 3
    code, out, _ = cli(capsys, *args)
    assert code == 0 and out.startswith("code before failover point")


def test_run_plain_source(work, capsys):
    code, out, _ = cli(capsys, "run", "doubling.svc", "--entry", "test")
    assert code == 0 and out.splitlines()[-1] == "return: 37"


def test_run_args(work, capsys):
    (work / "g.svc").write_text('method g(a, b) { return a + ":" + b; } method v() { }')
    assert cli(capsys, "run", "g.svc", "--entry", "g", "--args", '4, "x"')[1] == "return: 4:x\n"
    assert cli(capsys, "run", "g.svc", "--entry", "v")[1] == "return: void\n"


@pytest.mark.parametrize("extra", [
    ["--entry", "nope"],
    ["--entry", "test", "--args", "1,"],
    ["--entry", "test", "--config", "fo.xml"],
    ["--entry", "test", "--crash-plan", "missing.plan"],
])
def test_run_domain_errors(work, capsys, extra):
    code, _, err = cli(capsys, "run", "doubling.svc", *extra)
    assert code == 1 and err.startswith("haff: ")


def test_usage_errors_exit_2(work, capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "doubling.svc", "--entry", "test", "--bogus"])
    assert info.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_module_entry_point(work):
    proc = subprocess.run([sys.executable, "-m", "haff", "transform"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage:" in proc.stderr


def test_simulate_matches_golden(work, capsys):
    scenario = FLIGHT / "flightbooking.scenario"
    args = ["simulate", str(scenario), str(FLIGHT / "units"), "--trace", "t.jsonl", "--history", "h.csv"]
    assert cli(capsys, *args)[0] == 0
    first = (work / "t.jsonl").read_bytes()
    assert first == (GOLDEN / "flightbooking.trace.jsonl").read_bytes()
    assert (work / "h.csv").read_bytes() == (GOLDEN / "flightbooking.history.csv").read_bytes()
    assert cli(capsys, *args)[0] == 0
    assert (work / "t.jsonl").read_bytes() == first
    code, out, _ = cli(capsys, "simulate", str(scenario), str(FLIGHT / "units"))
    assert out.encode() == first


def test_simulate_with_file_config(work, capsys):
    fb = work / "fb"
    shutil.copytree(FLIGHT, fb)
    code, _, _ = cli(capsys, "simulate", str(fb / "flightbooking.scenario"), str(fb / "units"),
                     "--config", str(fb / "failover.xml"), "--trace", "t.jsonl")
    assert code == 0
    assert (work / "t.jsonl").read_bytes() == (GOLDEN / "flightbooking.trace.jsonl").read_bytes()
    # every session completed, so the shared file store is empty again
    assert list((fb / "fostate" / "FlightBooking").iterdir()) == []


def test_simulate_empty(work, capsys):
    (work / "empty.scenario").write_text("# nothing\n")
    (work / "units").mkdir()
    code, out, _ = cli(capsys, "simulate", "empty.scenario", "units", "--trace", "t.jsonl")
    assert code == 0 and (work / "t.jsonl").read_text() == ""


def test_simulate_unknown_server(work, capsys):
    (work / "bad.scenario").write_text("at 0 start_server A\n\nat 1 crash_server Ghost\n")
    code, _, err = cli(capsys, "simulate", "bad.scenario", str(FLIGHT / "units"))
    assert code == 1 and "line 3" in err and "Ghost" in err


def test_history_command(work, capsys):
    base = ["history", str(FLIGHT / "flightbooking.scenario"), str(FLIGHT / "units"),
            "--service", "FlightBooking", "--server", "Apphope0"]
    code, out, _ = cli(capsys, *base)
    assert code == 0 and out == "start,end,state\n0,110,UP\n110,155,DOWN\n155,,UP\n"
    code, out, _ = cli(capsys, *base, "--format", "jsonl")
    assert out.splitlines()[1] == '{"start": 110, "end": 155, "state": "DOWN"}'
    code, _, err = cli(capsys, *base[:-1], "Nowhere")
    assert code == 1 and "Nowhere" in err


def test_units_prefer_transformed_copy(work, capsys):
    units = work / "units"
    units.mkdir()
    shutil.copy(FLIGHT / "units" / "FlightBooking.svc", units)
    assert cli(capsys, "transform", str(units / "FlightBooking.svc"))[0] == 0
    args = ["simulate", str(FLIGHT / "flightbooking.scenario"), str(units)]
    assert cli(capsys, *args)[1].encode() == (GOLDEN / "flightbooking.trace.jsonl").read_bytes()
