"""Command line front end: ``ltvcommute {check,simulate,run,list-builtins}``.

Exit codes: 0 agreement (or success), 1 contradiction between algebra and
simulation, 2 usage, parse or validation error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .expr import DomainError
from .scenario import (
    ScenarioError,
    check,
    list_builtins,
    load_builtin,
    resolve_scenario,
    run,
    simulate,
    write_artifacts,
)
from .simulate import SimulationError

EXIT_OK = 0
EXIT_CONTRADICTION = 1
EXIT_ERROR = 2

log = logging.getLogger("ltvcommute")


def _add_overrides(p: argparse.ArgumentParser):
    p.add_argument("scenarios", nargs="+", metavar="SCENARIO",
                   help="scenario file or built-in name (see list-builtins)")
    p.add_argument("--t0", type=float, help="initial time")
    p.add_argument("--t-end", type=float, help="end of the simulation window")
    p.add_argument("--h", type=float, help="RK4 step")
    p.add_argument("--tol-sim", type=float,
                   help="relative equality threshold: responses agree if |AB-BA| <= tol*(1+max|y|)")
    for k in ("k2", "k1", "k0"):
        p.add_argument(f"--{k}", type=float, help=f"override constant {k}")


def _add_output(p: argparse.ArgumentParser):
    p.add_argument("--out-dir", default="ltvcommute-out",
                   help="artifacts go to OUT_DIR/<scenario name>/ (default: %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="scenarios to run in parallel")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltvcommute",
        description="Check and simulate commutativity of second-order LTV cascades.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="algebraic conditions only")
    _add_overrides(p)
    p.add_argument("--dump", action="store_true", help="print key=value lines instead of text")

    p = sub.add_parser("simulate", help="write AB/BA trajectories only")
    _add_overrides(p)
    _add_output(p)

    p = sub.add_parser("run", help="conditions, simulation and their agreement")
    _add_overrides(p)
    _add_output(p)

    sub.add_parser("list-builtins", help="names of the bundled scenarios")
    return parser


def _load(spec: str, args):
    sc = resolve_scenario(spec)
    return sc.with_overrides(t0=args.t0, t_end=args.t_end, h=args.h, sim_rel=args.tol_sim,
                             k2=args.k2, k1=args.k1, k0=args.k0)


def _one(command: str, spec: str, args) -> tuple[int, str]:
    """Run one scenario; returns (exit code, printable output)."""
    try:
        sc = _load(spec, args)
        if command == "check":
            cond = check(sc)
            return EXIT_OK, (cond.to_dump() if args.dump else f"[{sc.name}]\n{cond.to_text()}")
        out_dir = Path(args.out_dir) / sc.name
        if command == "simulate":
            paths = write_artifacts(out_dir, trajectories=simulate(sc))
            return EXIT_OK, "".join(f"wrote {p}\n" for p in paths)
        result = run(sc)
        paths = write_artifacts(out_dir, result.condition, result.trajectories, result.report)
        text = result.condition.to_text() + result.report.to_text()
        text += "".join(f"wrote {p}\n" for p in paths)
        return result.exit_code, text
    except ScenarioError as exc:
        return EXIT_ERROR, f"error: {exc}\n"
    except (DomainError, SimulationError, ValueError) as exc:
        return EXIT_ERROR, f"error: {spec}: {exc}\n"


def _one_star(job):
    return _one(*job)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "list-builtins":
        for name in list_builtins():
            print(f"{name:24s} {load_builtin(name).description}")
        return EXIT_OK

    jobs = [(args.command, spec, args) for spec in args.scenarios]
    workers = getattr(args, "jobs", 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_star, jobs))
    else:
        results = [_one_star(j) for j in jobs]

    code = EXIT_OK
    for status, text in results:
        (sys.stderr if status == EXIT_ERROR else sys.stdout).write(text)
        code = max(code, status)
    return code


if __name__ == "__main__":
    sys.exit(main())
