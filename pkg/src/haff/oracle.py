"""Crash-then-resume equivalence checking.

Compares an uninterrupted run of the *original* unit against a crashed run of
the transformed unit followed by a resume on the same session.
"""

from __future__ import annotations

import difflib
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from haff.aslt import AsltTree
from haff.fom import MemoryFom
from haff.runtime import Activation, CrashPlan, Crashed, Returned, Value, invoke
from haff.transform import FopSite, MethodRegistry, collect, transform_unit

SESSION = "oracle"


@dataclass
class OracleReport:
    method: str
    args: list[Value]
    crash_site: tuple[str, int]
    crashed: bool
    reference: Returned
    resumed: Optional[Returned]
    crashed_run: Optional[Crashed]
    saved_vars: tuple[str, ...]
    last_fops: dict[Activation, int] = field(default_factory=dict)
    segment_counts: dict[str, Counter] = field(default_factory=dict)
    transcript_diff: list[str] = field(default_factory=list)
    discrepancies: list[str] = field(default_factory=list)
    prefix_violations: list[tuple[Activation, int, int]] = field(default_factory=list)
    reexecuted_completed: list[Activation] = field(default_factory=list)
    resumed_is_suffix: bool = True

    @property
    def ok(self) -> bool:
        return not self.discrepancies and not self.prefix_violations


def saved_vars_of(sites: list[FopSite], registry: MethodRegistry, method: str) -> tuple[str, ...]:
    mid = registry.id_of(method)
    out: list[str] = []
    for s in sites:
        if s.method_id == mid:
            out.extend(v for v in s.saved_vars if v not in out)
    return tuple(out)


def compare_outcomes(reference: Returned, candidate: Returned,
                     saved: tuple[str, ...]) -> list[str]:
    problems = []
    if type(reference.value) is not type(candidate.value) or reference.value != candidate.value:
        problems.append(f"return value {candidate.value!r} != reference {reference.value!r}")
    for name in saved:
        ref = reference.final_locals.get(name)
        got = candidate.final_locals.get(name)
        if type(ref) is not type(got) or ref != got:
            problems.append(f"final {name} = {got!r} != reference {ref!r}")
    return problems


def resume_equivalence_oracle(unit: AsltTree, method: str, args: list[Value],
                              crash_site: tuple[str, int],
                              transformed: Optional[tuple[AsltTree, MethodRegistry]] = None
                              ) -> OracleReport:
    """Run reference, crash and resume executions and report every discrepancy.

    ``unit`` is the original (untransformed) tree. ``crash_site`` is a
    ``(fault label, occurrence)`` pair.
    """
    registry, _, sites = collect(unit)
    fo_unit, fo_registry = transformed or transform_unit(unit)
    saved = saved_vars_of(sites, registry, method)

    reference = invoke(unit, None, None, SESSION, method, args)
    assert isinstance(reference, Returned)

    fom = MemoryFom()
    label, occurrence = crash_site
    first = invoke(fo_unit, fo_registry, fom, SESSION, method, args,
                   CrashPlan({label: occurrence}))
    report = OracleReport(method, list(args), crash_site, first.crashed, reference,
                          None, None, saved)

    if isinstance(first, Returned):
        # crash site never reached: the single run must already match
        report.resumed = first
        report.discrepancies += compare_outcomes(reference, first, saved)
        if first.transcript != reference.transcript:
            report.discrepancies.append("transcript differs from reference")
        report.transcript_diff = list(difflib.unified_diff(
            reference.transcript, first.transcript, "reference", "run", lineterm=""))
        report.segment_counts = {"run": Counter(first.segments)}
        return report

    report.crashed_run = first
    records = fom.records(SESSION)
    for (_, method_id, level, activation) in first.stack:
        rec = records.get((method_id, level))
        report.last_fops[activation] = rec.fop_index if rec else 0

    resumed = invoke(fo_unit, fo_registry, fom, SESSION, method, args)
    assert isinstance(resumed, Returned)
    report.resumed = resumed
    report.discrepancies += compare_outcomes(reference, resumed, saved)

    combined = Counter(first.segments) + Counter(resumed.segments)
    report.segment_counts = {"crashed": Counter(first.segments),
                             "resumed": Counter(resumed.segments),
                             "combined": combined}
    for activation, last in report.last_fops.items():
        for seg in range(last):
            n = combined[(activation, seg)]
            if resumed.segments[(activation, seg)] or n != 1:
                report.prefix_violations.append((activation, seg, n))

    on_path = set(report.last_fops)
    report.reexecuted_completed = sorted(
        a for a in first.completed if a not in on_path and a in resumed.completed)

    ref_t, res_t = reference.transcript, resumed.transcript
    report.resumed_is_suffix = len(res_t) <= len(ref_t) and ref_t[len(ref_t) - len(res_t):] == res_t
    report.transcript_diff = list(difflib.unified_diff(
        ref_t, first.transcript + res_t, "reference", "crashed+resumed", lineterm=""))
    return report
