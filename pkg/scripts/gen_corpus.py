"""Regenerate the committed round-trip corpus and the simulator golden files.

    python3 scripts/gen_corpus.py
"""

from pathlib import Path

from haff.cli import load_units
from haff.cluster import export_all_histories, run_scenario
from haff.gen import random_unit
from haff.printer import aslt_to_code
from haff.scenario import parse_scenario

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "src" / "haff" / "data"
ROUNDTRIP_SEEDS = range(60)


def main() -> None:
    out = ROOT / "tests" / "corpus" / "roundtrip"
    out.mkdir(parents=True, exist_ok=True)
    for seed in ROUNDTRIP_SEEDS:
        (out / f"gen_{seed:03d}.svc").write_text(aslt_to_code(random_unit(seed)), encoding="utf-8")

    fb = DATA / "flightbooking"
    trace = run_scenario(parse_scenario((fb / "flightbooking.scenario").read_text()),
                         load_units(fb / "units"))
    golden = ROOT / "tests" / "golden"
    golden.mkdir(exist_ok=True)
    (golden / "flightbooking.trace.jsonl").write_text(trace.to_jsonl(), encoding="utf-8")
    (golden / "flightbooking.history.csv").write_text(export_all_histories(trace.registry),
                                                      encoding="utf-8")


if __name__ == "__main__":
    main()
