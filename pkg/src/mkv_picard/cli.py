"""Command-line entry point.

Exit codes: 0 success, 1 invariant failure, 2 invalid input (JSON error
listing on stdout), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import benchmark, invariants
from .config import ConfigError, RunConfig
from .model import validate_problem
from .parallel import ENV_VAR, worker_count
from .picard import PicardError

EXIT_OK, EXIT_INVARIANT, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3

SWEEP_CASES = ("gaussian_1d", "kou_1d", "multidim_2", "multidim_5", "stable_init_2")


def _invalid(errors, **extra) -> int:
    print(json.dumps({"ok": False, "errors": list(errors), **extra}, indent=2))
    return EXIT_INVALID


def _emit(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    out = Path(path)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)


def _warn(report) -> None:
    # integrability is irrelevant on the trigonometric path; moment failures are worth a note
    for w in report.warnings:
        if w.key in ("first_moments", "higher_moments"):
            print(f"warning: assumption {w.key!r} not satisfied ({w.detail}); running anyway", file=sys.stderr)


def _summary(report: benchmark.ExperimentReport, verbose: int = 0) -> None:
    print(f"{report.case_id}: slope = {report.slope:.4f}, intercept = {report.intercept:.4f}", file=sys.stderr)
    if verbose:
        for run in report.runs:
            print(f"  n={run.n:5d} m={run.m:2d} E(n)={run.max_error:.6e}", file=sys.stderr)


def _parse_n(values) -> Optional[list[int]]:
    if values is None:
        return None
    if any(v < 1 for v in values):
        raise ValueError("--n values must be positive")
    return sorted(set(values))


def cmd_run_example(args) -> int:
    try:
        case = benchmark.case_from_id(args.case_id)
        n_list = _parse_n(args.n) or list(benchmark.DEFAULT_N)
    except ValueError as exc:
        return _invalid([str(exc)])
    problem = case.problem()
    report = validate_problem(problem.triplet, problem.law, problem.drift, problem.horizon)
    if not report.ok:
        return _invalid(["problem failed validation"], report=report.as_dict())
    _warn(report)
    try:
        rep = benchmark.error_report(case, n_list)
    except (PicardError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"ok": False, "numerical_error": str(exc)}), file=sys.stderr)
        return EXIT_NUMERICAL
    _emit(rep.to_csv(timings=args.timings), args.csv)
    if args.trajectory:
        _emit(rep.trajectory_csv(args.trajectory_n), args.trajectory)
    _summary(rep, args.verbose)
    return EXIT_OK


def cmd_run_custom(args) -> int:
    try:
        cfg = RunConfig.load(args.config)
    except ConfigError as exc:
        return _invalid(exc.errors)
    try:
        problem = cfg.problem()
    except ValueError as exc:
        return _invalid([str(exc)])
    report = validate_problem(problem.triplet, problem.law, problem.drift, problem.horizon)
    if not report.ok:
        return _invalid(["problem failed validation"], report=report.as_dict())
    out = cfg.output
    _warn(report)
    case_id = Path(args.config).stem
    try:
        rep = benchmark.self_convergence_report(problem, cfg.picard_config, cfg.n_values, case_id=case_id)
    except (PicardError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(json.dumps({"ok": False, "numerical_error": str(exc)}), file=sys.stderr)
        return EXIT_NUMERICAL
    timings = out["timings"] or args.timings
    _emit(rep.to_csv(timings=timings), args.csv or out["csv"])
    traj = args.trajectory or out["trajectory"]
    if traj:
        _emit(rep.trajectory_csv(), traj)
    if len(rep.runs) >= 2:
        _summary(rep, out["verbosity"] or args.verbose)
    return EXIT_OK


def cmd_invariants(args) -> int:
    failed = 0
    for check in invariants.ALL_CHECKS:
        try:
            result = check()
        except Exception as exc:  # noqa: BLE001
            print(f"[FAIL] {check.__name__}: raised {type(exc).__name__}: {exc}")
            failed += 1
            continue
        print(result.line())
        failed += not result.passed
    print(f"{len(invariants.ALL_CHECKS) - failed}/{len(invariants.ALL_CHECKS)} invariant checks passed")
    return EXIT_OK if failed == 0 else EXIT_INVARIANT


def cmd_sweep(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cases = args.cases or list(SWEEP_CASES)
    try:
        built = [benchmark.case_from_id(c) for c in cases]
        n_list = _parse_n(args.n) or list(benchmark.DEFAULT_N)
    except ValueError as exc:
        return _invalid([str(exc)])
    for case in built:
        try:
            rep = benchmark.error_report(case, n_list)
        except (PicardError, FloatingPointError, np.linalg.LinAlgError) as exc:
            print(json.dumps({"ok": False, "case": case.case_id, "numerical_error": str(exc)}), file=sys.stderr)
            return EXIT_NUMERICAL
        (out_dir / f"{case.case_id}.csv").write_text(rep.to_csv(timings=args.timings))
        (out_dir / f"{case.case_id}_trajectory.csv").write_text(rep.trajectory_csv(min(n_list)))
        print(f"{case.case_id},{rep.slope!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mkv-picard", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker cap (overrides the {ENV_VAR} environment variable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def output_args(p):
        p.add_argument("--csv", default=None, help="error-report CSV path (default: stdout)")
        p.add_argument("--trajectory", default=None, help="trajectory CSV path")
        p.add_argument("--timings", action="store_true", help="fill the wall_ms column (not reproducible)")
        p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("run-example", help="run a built-in experiment")
    p.add_argument("case_id", help="gaussian_1d | kou_1d | multidim_<d> | stable_init_<d>")
    p.add_argument("--n", type=int, nargs="+", default=None, help="step counts (default 16 32 64 128 256)")
    p.add_argument("--trajectory-n", type=int, default=None, help="restrict the trajectory dump to one n")
    output_args(p)
    p.set_defaults(func=cmd_run_example)

    p = sub.add_parser("run-custom", help="run a problem described by a TOML file")
    p.add_argument("config")
    output_args(p)
    p.set_defaults(func=cmd_run_custom)

    p = sub.add_parser("invariants", help="run the numerical invariant suite")
    p.set_defaults(func=cmd_invariants)

    p = sub.add_parser("sweep", help="run every built-in experiment and write CSVs to a directory")
    p.add_argument("--out", default="results")
    p.add_argument("--cases", nargs="+", default=None)
    p.add_argument("--n", type=int, nargs="+", default=None)
    p.add_argument("--timings", action="store_true")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            return _invalid(["--threads must be positive"])
        os.environ[ENV_VAR] = str(args.threads)
    try:
        worker_count()
    except ValueError as exc:
        return _invalid([str(exc)])
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
