"""``haff`` command line: transform, run, simulate, history.

Exit codes: 0 success, 1 domain error, 2 usage error, 3 injected crash.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from haff.aslt import AsltTree
from haff.atomic import write_atomic
from haff.cluster import ServiceUnit, export_all_histories, export_history, run_scenario
from haff.errors import HaffError, SvcSyntaxError
from haff.fom import fom_for_service, load_config
from haff.parser import code_to_aslt
from haff.printer import aslt_to_code
from haff.runtime import CrashPlan, Interpreter, parse_args_text, to_text
from haff.scenario import parse_scenario
from haff.transform import MethodRegistry, emit_registry, is_transformed, parse_registry, transform_unit

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CRASH = 0, 1, 2, 3
FO_SUFFIX = ".fo.svc"


class CliError(Exception):
    """A domain failure already phrased for the user."""


def _plural(n: int, word: str) -> str:
    return f"{n} {word}" if n == 1 else f"{n} {word}s"


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"{path}: {e.strerror or e}") from None


def _parse_file(path: Path) -> AsltTree:
    text = _read(path)
    try:
        return code_to_aslt(text)
    except SvcSyntaxError as e:
        raise CliError(f"{path}:{e.line}:{e.column}: {e.message}") from None
    except HaffError as e:
        raise CliError(f"{path}: {e}") from None


def service_name(path: Path) -> str:
    name = path.name
    for suffix in (FO_SUFFIX, ".svc"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def registry_path(unit_path: Path) -> Path:
    return unit_path.with_name(service_name(unit_path) + ".fopreg")


def load_unit(path: Path, transform: bool) -> ServiceUnit:
    """Parse a unit; transform it in memory when asked and not already done."""
    tree = _parse_file(path)
    if is_transformed(tree):
        sidecar = registry_path(path)
        if sidecar.exists():
            try:
                return tree, parse_registry(_read(sidecar))
            except ValueError as e:
                raise CliError(f"{sidecar}: {e}") from None
        return tree, MethodRegistry.from_tree(tree)
    if not transform:
        return tree, MethodRegistry.from_tree(tree)
    try:
        return transform_unit(tree)
    except HaffError as e:
        raise CliError(f"{path}: {type(e).__name__}: {e}") from None


def load_units(directory: Path) -> dict[str, ServiceUnit]:
    if not directory.is_dir():
        raise CliError(f"{directory}: not a directory")
    files = sorted(directory.glob("*.svc"))
    units: dict[str, ServiceUnit] = {}
    # a transformed copy wins over its source
    for path in sorted(files, key=lambda p: not p.name.endswith(FO_SUFFIX)):
        units.setdefault(service_name(path), load_unit(path, transform=True))
    return units


# --- commands --------------------------------------------------------------

def cmd_transform(args) -> int:
    src = Path(args.input)
    out = Path(args.output) if args.output else src.with_name(service_name(src) + FO_SUFFIX)
    tree = _parse_file(src)
    try:
        fo_tree, registry = transform_unit(tree)
    except HaffError as e:
        raise CliError(f"{src}: {type(e).__name__}: {e}") from None
    write_atomic(out, aslt_to_code(fo_tree))
    write_atomic(registry_path(out), emit_registry(registry))
    print(f"{_plural(len(registry.entries), 'method')}, {_plural(sum(registry.fop_total.values()), 'FOP')}")
    return EXIT_OK


def cmd_run(args) -> int:
    path = Path(args.unit)
    tree, registry = load_unit(path, transform=False)
    transformed = is_transformed(tree)
    fom = None
    if args.config:
        if not transformed:
            raise CliError(f"{path}: --config needs a transformed unit (run 'haff transform' first)")
        try:
            fom = fom_for_service(load_config(args.config), service_name(path))
        except HaffError as e:
            raise CliError(f"{args.config}: {e}") from None
    try:
        values = parse_args_text(args.args)
    except HaffError as e:
        raise CliError(f"--args: {e}") from None
    plan = CrashPlan()
    if args.crash_plan:
        try:
            plan = CrashPlan.parse(_read(Path(args.crash_plan)))
        except ValueError as e:
            raise CliError(f"{args.crash_plan}: {e}") from None
    try:
        interp = Interpreter(tree, registry, fom, args.session, plan)
        if interp.fom is not None and not args.resume:
            interp.fom.clear_session(args.session)
        outcome = interp.invoke(args.entry, values)
    except HaffError as e:
        raise CliError(f"{path}: {type(e).__name__}: {e}") from None
    for line in outcome.transcript:
        print(line)
    if outcome.crashed:
        sys.stdout.flush()
        where = f"fault {outcome.label!r}" if outcome.label else "step budget"
        print(f"crashed at {where}; rerun with --resume to continue session {args.session!r}",
              file=sys.stderr)
        return EXIT_CRASH
    if interp.fom is not None:
        interp.fom.clear_session(args.session)
    print(f"return: {'void' if outcome.value is None else to_text(outcome.value)}")
    return EXIT_OK


def _simulate(args):
    scenario_path = Path(args.scenario)
    units = load_units(Path(args.units_dir))
    config = None
    if args.config:
        try:
            config = load_config(args.config)
        except HaffError as e:
            raise CliError(f"{args.config}: {e}") from None
    try:
        scenario = parse_scenario(_read(scenario_path))
        return run_scenario(scenario, units, config)
    except HaffError as e:
        raise CliError(f"{scenario_path}: {e}") from None


def cmd_simulate(args) -> int:
    trace = _simulate(args)
    text = trace.to_jsonl()
    if args.trace:
        write_atomic(args.trace, text)
    else:
        sys.stdout.write(text)
    if args.history:
        write_atomic(args.history, export_all_histories(trace.registry))
    return EXIT_OK


def cmd_history(args) -> int:
    trace = _simulate(args)
    try:
        text = export_history(trace.registry, args.service, args.server, args.format)
    except HaffError as e:
        raise CliError(str(e)) from None
    if args.output:
        write_atomic(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="haff", description="Failover-enabled service toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="insert failover code at the marked failover points")
    p.add_argument("input")
    p.add_argument("output", nargs="?", help=f"default: <input stem>{FO_SUFFIX}")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("run", help="invoke one method of a unit")
    p.add_argument("unit")
    p.add_argument("--entry", required=True, help="method to invoke")
    p.add_argument("--args", default="", help='comma-separated literals, e.g. 3, "LH400", true')
    p.add_argument("--session", default="cli")
    p.add_argument("--config", help="failover XML config; enables persistent state")
    p.add_argument("--crash-plan", help="file of 'crash <label> <occurrence>' lines")
    p.add_argument("--resume", action="store_true", help="continue from the session's saved state")
    p.set_defaults(func=cmd_run)

    for name, func, helptext in (("simulate", cmd_simulate, "run a cluster scenario"),
                                 ("history", cmd_history, "export one availability history")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("scenario")
        p.add_argument("units_dir", help="directory of <Service>.svc units")
        p.add_argument("--config", help="failover XML config (default: in-memory state)")
        if name == "simulate":
            p.add_argument("--trace", help="write the JSON-lines trace here instead of stdout")
            p.add_argument("--history", help="write every availability history here as CSV")
        else:
            p.add_argument("--service", required=True)
            p.add_argument("--server", required=True)
            p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
            p.add_argument("--output", help="write here instead of stdout")
        p.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"haff: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (HaffError, OSError) as e:
        print(f"haff: {e}", file=sys.stderr)
        return EXIT_ERROR
