"""Command-line entry point ``fracblowup``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 theory violation (FAIL verdict) or property-suite failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .blowup import SWEEP_AXES, Verdict, run_pipeline, sweep, write_sweep
from .config import (build_boundary, build_coefficients, build_problem, build_space, eigen_tolerances,
                     load_config)
from .elliptic import assemble_adjoint, principal_eigenpair
from .errors import (ConfigError, ConvergenceError, DegeneracyError, DomainError, FracBlowupError,
                     NumericalFailureError)
from .fpde import jensen_check, write_run
from .fracops import mittag_leffler
from .io import write_csv
from .validation import run_all, write_counterexample

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VIOLATION = 3


def _eigenpair(cfg):
    grid = build_space(cfg)
    bc = build_boundary(cfg)
    coeffs = build_coefficients(cfg, grid, bc)
    tol, res_tol = eigen_tolerances(cfg)
    return principal_eigenpair(assemble_adjoint(grid, coeffs, bc), tol=tol, residual_tol=res_tol)


def cmd_eigen(args) -> int:
    cfg = load_config(args.config)
    pair = _eigenpair(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eigen_report.txt").write_text(pair.report())
    pair.phi1.to_csv(out / "phi1.csv", value_name="phi1")
    print(f"lambda1 = {pair.lambda1!r}")
    for side, sigma in sorted(pair.boundary_sigma.items()):
        print(f"adjoint_sigma_{side} = [{float(np.min(sigma))!r}, {float(np.max(sigma))!r}]")
    return EXIT_OK


def _oracle_error(result) -> float:
    """Max deviation of the weighted trace from ``a0 E_alpha(-lambda1 t^alpha)`` at snapshot times."""
    traj = result.trajectory
    alpha = result.problem.alpha
    lam = result.eigenpair.lambda1
    a0 = result.initial.a0
    idx = np.searchsorted(traj.times, traj.snapshot_times)
    exact = np.array([a0 * mittag_leffler(alpha, 1.0, -lam * t**alpha) for t in traj.snapshot_times])
    return float(np.max(np.abs(traj.eta.values[idx] - exact)))


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    problem = build_problem(cfg)
    pair = _eigenpair(cfg)
    result = run_pipeline(problem, pair)
    out = write_run(args.out, result.trajectory, result.report)
    result.certificate.write(out / "certificate.txt")
    rep = result.report
    print(f"status = {rep.status.value}")
    if rep.t_num is not None:
        print(f"t_num = {rep.t_num!r}")
        print(f"t_num_extrapolated = {rep.t_num_extrapolated!r}")
    if result.certificate.t_star is not None:
        print(f"t_star = {result.certificate.t_star!r}")
    if problem.nonlinearity.is_zero:
        print(f"oracle_eta_max_error = {_oracle_error(result)!r}")
    if problem.nonlinearity.convex:
        jensen = jensen_check(result.trajectory, pair.phi1, problem.nonlinearity)
        print(f"jensen_min_deficit = {jensen.min_deficit!r}")
    print(f"verdict = {result.verdict.value}")
    return EXIT_VIOLATION if result.verdict is Verdict.FAIL else EXIT_OK


def _parse_values(raw: str) -> list[float]:
    if raw is None or not raw.strip():
        return []
    try:
        return [float(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: expected comma-separated numbers, got {raw!r}") from None


def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"--axis must be one of {', '.join(SWEEP_AXES)}")
    values = _parse_values(args.values)
    problem = build_problem(load_config(args.config))
    rows = sweep(problem, args.axis, values, workers=args.workers)
    path = write_sweep(Path(args.out) / "sweep.csv", rows)
    for row in rows:
        print(f"{row.parameter} = {row.value!r}: {row.verdict}"
              + (f" ({row.message})" if row.errored else ""))
    print(f"wrote {path}")
    if any(row.failed for row in rows):
        return EXIT_VIOLATION
    if any(row.errored for row in rows):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_validate(args) -> int:
    results = run_all(args.seed, inject_fault=args.inject_fault)
    failed = None
    for res in results:
        print(f"{res.summary()} ({res.seconds:.2f} s)")
        if not res.ok and failed is None:
            failed = res
    if failed is None:
        return EXIT_OK
    path = write_counterexample(Path(args.out) / "counterexample.json", failed)
    print(f"counterexample written to {path}")
    return EXIT_VIOLATION


def cmd_ml(args) -> int:
    points = _parse_values(args.points)
    if not points:
        raise ConfigError("--points: give at least one evaluation point")
    try:
        values = [mittag_leffler(args.alpha, args.beta, z) for z in points]
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    if args.out:
        write_csv(args.out, ["z", "value"], [points, values])
    else:
        for z, v in zip(points, values):
            print(f"{z!r},{v!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracblowup",
                                     description="Blow-up experiments for time-fractional diffusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigen", help="principal eigenpair of the adjoint operator")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser("simulate", help="simulate, certify and judge one problem")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="run the randomised property suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("sweep", help="certify + simulate over a parameter ladder")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", default="")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ml", help="evaluate the Mittag-Leffler function")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--points", required=True, help="comma-separated evaluation points")
    p.add_argument("--out", default=None, help="CSV file (default: standard output)")
    p.set_defaults(func=cmd_ml)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, DegeneracyError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc} (last valid time {exc.last_valid_time})", file=sys.stderr)
        return EXIT_NUMERICAL
    except FracBlowupError as exc:
        # remaining domain/shape errors stem from the inputs
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"elapsed = {time.perf_counter() - start:.3f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
