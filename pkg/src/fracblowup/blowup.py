r"""Certified upper bounds on the blow-up time and verdicts against simulations.

For a convex source with :math:`f(\xi) \ge c_0 \xi^p` (:math:`\xi \ge 1`) and
principal eigenvalue ``lambda1`` of the adjoint operator, the weighted mass
``a0`` of the initial data gives

* ``lambda1 <= 0``: ``T* = ((p - 1) Gamma(2 - alpha) c0 a0^(p-1))^(-1/alpha)``;
* ``lambda1 > 0`` and ``a0 > (lambda1/c0)^(1/(p-1))``:
  ``T* = ((p - 1) Gamma(2 - alpha) (c0 a0^(p-1) - lambda1))^(-1/alpha)``.

Sub-threshold problems get no bound; their runs are informational.
"""

from __future__ import annotations

import dataclasses
import enum
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .elliptic import (BoundaryCondition, CoefficientField, EigenPair, GridFunction, SpatialGrid,
                       assemble_adjoint, principal_eigenpair)
from .errors import ConfigError, DomainError, FracBlowupError
from .fode import DEFAULT_BLOWUP_CAP, LowerSolutionParams, Nonlinearity, lower_solution_eval
from .fpde import BlowupReport, InitialData, SimulationConfig, SolutionTrajectory, simulate
from .fracops import FractionalOrder, TimeGrid, gamma_fn
from .io import format_record, write_rows

#: Eigenvalues with smaller magnitude are treated as zero when picking the case.
LAMBDA_DEADBAND = 1e-8

#: Default relative allowance on ``t_num <= t_star``.
DEFAULT_TOL_REL = 0.05

#: A completed run proves nothing unless it reached this multiple of ``t_star``.
HORIZON_FACTOR = 1.5

SWEEP_AXES = ("alpha", "p", "c0", "a0_scale", "sigma")


class CaseTag(enum.Enum):
    NONPOSITIVE = "NonpositiveLambda"
    POSITIVE = "PositiveLambda"

    @classmethod
    def for_eigenvalue(cls, lambda1: float) -> CaseTag:
        return cls.POSITIVE if lambda1 >= LAMBDA_DEADBAND else cls.NONPOSITIVE


class Verdict(enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INFORMATIONAL = "INFORMATIONAL"
    INCONCLUSIVE = "INCONCLUSIVE"


def _check_params(alpha: float, p: float, c0: float, a0: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not (p > 1 and c0 > 0 and a0 > 0):
        raise DomainError(f"need p > 1, c0 > 0 and a0 > 0, got p={p!r}, c0={c0!r}, a0={a0!r}")


def threshold(lambda1: float, c0: float, p: float) -> float:
    """Smallest weighted mass for which the positive-eigenvalue bound applies."""
    if not lambda1 > 0:
        raise DomainError("threshold is only defined for lambda1 > 0; use the nonpositive case")
    if not (c0 > 0 and p > 1):
        raise DomainError(f"need c0 > 0 and p > 1, got c0={c0!r}, p={p!r}")
    return (lambda1 / c0) ** (1.0 / (p - 1.0))


def t_star(case_tag, alpha: float, p: float, c0: float, a0: float, lambda1: float) -> float | None:
    """Upper bound on the blow-up time, or ``None`` when no bound is certified."""
    case = CaseTag(case_tag) if not isinstance(case_tag, CaseTag) else case_tag
    _check_params(alpha, p, c0, a0)
    growth = c0 * a0 ** (p - 1.0)
    if case is CaseTag.POSITIVE:
        if not a0 > threshold(lambda1, c0, p):
            return None
        growth -= lambda1
    return ((p - 1.0) * gamma_fn(2.0 - alpha) * growth) ** (-1.0 / alpha)


@dataclass(frozen=True)
class BlowupCertificate:
    case_tag: CaseTag
    lambda1: float
    c0: float | None
    p: float | None
    a0: float
    alpha: float
    threshold: float | None
    t_star: float | None
    applies: bool
    note: str = ""

    def record(self) -> dict:
        return {
            "case_tag": self.case_tag.value,
            "applies": self.applies,
            "lambda1": self.lambda1,
            "c0": self.c0,
            "p": self.p,
            "a0": self.a0,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "t_star": self.t_star,
            "note": self.note,
        }

    def to_text(self) -> str:
        return format_record(self.record())

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text())
        return path


def certify(elliptic_result: EigenPair, nonlinearity: Nonlinearity, initial: InitialData,
            order: FractionalOrder) -> BlowupCertificate:
    """Pick the case from the sign of ``lambda1`` and evaluate the bound."""
    lam = elliptic_result.lambda1
    case = CaseTag.for_eigenvalue(lam)
    f = nonlinearity
    common = dict(case_tag=case, lambda1=lam, c0=f.c0, p=f.p, a0=initial.a0, alpha=order.alpha)
    if not f.certified or not f.convex:
        return BlowupCertificate(threshold=None, t_star=None, applies=False,
                                 note="source has no convex power-growth certificate", **common)
    thr = threshold(lam, f.c0, f.p) if case is CaseTag.POSITIVE else None
    lam_eff = lam if case is CaseTag.POSITIVE else 0.0
    bound = t_star(case, order.alpha, f.p, f.c0, initial.a0, lam_eff)
    note = "" if bound is not None else "weighted mass does not exceed the threshold"
    return BlowupCertificate(threshold=thr, t_star=bound, applies=bound is not None, note=note, **common)


def verdict(certificate: BlowupCertificate, report: BlowupReport,
            tol_rel: float = DEFAULT_TOL_REL) -> Verdict:
    """Compare a simulation outcome with the certificate.

    A blow-up no later than ``t_star (1 + tol_rel)`` passes whatever the
    horizon; a completed run fails only if it reached ``1.5 t_star``.
    """
    if not certificate.applies:
        return Verdict.INFORMATIONAL
    bound = certificate.t_star * (1.0 + tol_rel)
    if report.blew_up:
        return Verdict.PASS if report.t_num <= bound else Verdict.FAIL
    if report.horizon < HORIZON_FACTOR * certificate.t_star * (1 - 1e-12):
        return Verdict.INCONCLUSIVE
    return Verdict.FAIL


def lower_solution_margin(trajectory: SolutionTrajectory, certificate: BlowupCertificate,
                          t_num: float, fraction: float = 0.9) -> float:
    """``min (eta - a0 (T/(T - t))^(1/(p-1)))`` over ``[0, fraction * t_num]`` with ``T = t_star``."""
    if not certificate.applies:
        raise DomainError("lower solution needs an applicable certificate")
    params = LowerSolutionParams.for_exponent(certificate.a0, certificate.p, certificate.t_star)
    times = trajectory.eta.times
    mask = times <= min(fraction * t_num, certificate.t_star * (1 - 1e-12))
    return float(np.min(trajectory.eta.values[mask] - lower_solution_eval(params, times[mask])))


# --------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class Problem:
    """Everything needed to run one certify + simulate + verdict pipeline.

    ``profile`` is the unscaled initial shape. With ``a0_target`` set it is
    rescaled to that weighted mass first; ``a0_scale`` multiplies the result.
    ``horizon=None`` means ``horizon_factor * t_star`` when the certificate
    applies and ``fallback_horizon`` otherwise.
    """

    alpha: float
    nonlinearity: Nonlinearity
    space: SpatialGrid
    coeffs: CoefficientField
    bc: BoundaryCondition
    profile: GridFunction
    a0_target: float | None = None
    a0_scale: float = 1.0
    time_steps: int = 2000
    uniform_time: bool = False
    horizon: float | None = None
    horizon_factor: float = HORIZON_FACTOR
    fallback_horizon: float = 1.0
    blowup_cap: float = DEFAULT_BLOWUP_CAP
    newton_tol: float = 1e-12
    max_step_halvings: int = 20
    max_newton: int = 50
    max_relative_change: float = 1.0
    snapshot_limit: int = 200
    method: str = "newton"
    tol_rel: float = DEFAULT_TOL_REL

    def with_parameter(self, axis: str, value: float) -> Problem:
        value = float(value)
        if axis == "alpha":
            return dataclasses.replace(self, alpha=value)
        if axis in ("p", "c0"):
            f = self.nonlinearity
            if f.kind not in ("pure_power", "power_plus_linear"):
                raise ConfigError(f"cannot sweep {axis} for a {f.kind} source")
            return dataclasses.replace(self, nonlinearity=dataclasses.replace(f, **{axis: value}))
        if axis == "a0_scale":
            return dataclasses.replace(self, a0_scale=value)
        if axis == "sigma":
            if not self.bc.is_robin:
                raise ConfigError("sigma sweeps need a Robin boundary condition")
            return dataclasses.replace(self, coeffs=self.coeffs.replace(sigma=value))
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")


@dataclass(frozen=True)
class PipelineResult:
    problem: Problem
    eigenpair: EigenPair
    initial: InitialData
    certificate: BlowupCertificate
    config: SimulationConfig
    trajectory: SolutionTrajectory
    report: BlowupReport
    verdict: Verdict


def build_initial(problem: Problem, phi1: GridFunction) -> InitialData:
    initial = InitialData.from_samples(problem.profile, phi1)
    if problem.a0_target is not None:
        initial = initial.scaled(problem.a0_target / initial.a0)
    if problem.a0_scale != 1.0:
        initial = initial.scaled(problem.a0_scale)
    return initial


def run_pipeline(problem: Problem, eigenpair: EigenPair | None = None) -> PipelineResult:
    order = FractionalOrder(problem.alpha)
    if eigenpair is None:
        eigenpair = principal_eigenpair(assemble_adjoint(problem.space, problem.coeffs, problem.bc))
    initial = build_initial(problem, eigenpair.phi1)
    cert = certify(eigenpair, problem.nonlinearity, initial, order)
    horizon = problem.horizon
    if horizon is None:
        horizon = problem.horizon_factor * cert.t_star if cert.applies else problem.fallback_horizon
    if problem.uniform_time:
        grid = TimeGrid.uniform(horizon, problem.time_steps)
    else:
        grid = TimeGrid.for_order(horizon, problem.time_steps, order)
    config = SimulationConfig(
        order=order, grid=grid, space=problem.space, coeffs=problem.coeffs, bc=problem.bc,
        nonlinearity=problem.nonlinearity, initial=initial, blowup_cap=problem.blowup_cap,
        newton_tol=problem.newton_tol, max_step_halvings=problem.max_step_halvings,
        max_newton=problem.max_newton, max_relative_change=problem.max_relative_change,
        snapshot_limit=problem.snapshot_limit, method=problem.method)
    trajectory, report = simulate(config, eigenpair)
    return PipelineResult(problem, eigenpair, initial, cert, config, trajectory, report,
                          verdict(cert, report, problem.tol_rel))


# --------------------------------------------------------------------------
# sweeps

SWEEP_HEADER = ["parameter", "value", "lambda1", "a0", "threshold", "t_star", "t_num",
                "verdict", "status", "message"]


@dataclass(frozen=True)
class SweepRow:
    parameter: str
    value: float
    lambda1: float | None = None
    a0: float | None = None
    threshold: float | None = None
    t_star: float | None = None
    t_num: float | None = None
    verdict: str = "ERROR"
    status: str = ""
    message: str = ""

    def as_list(self) -> list:
        return [getattr(self, name) for name in SWEEP_HEADER]

    @property
    def failed(self) -> bool:
        return self.verdict == Verdict.FAIL.value

    @property
    def errored(self) -> bool:
        return self.verdict == "ERROR"


def _sweep_one(args) -> SweepRow:
    base, axis, value = args
    try:
        res = run_pipeline(base.with_parameter(axis, value))
    except FracBlowupError as exc:
        return SweepRow(axis, float(value), message=f"{type(exc).__name__}: {exc}")
    cert, rep = res.certificate, res.report
    return SweepRow(axis, float(value), cert.lambda1, cert.a0, cert.threshold, cert.t_star,
                    rep.t_num, res.verdict.value, rep.status.value, rep.reason)


def sweep(base: Problem, axis: str, values, workers: int = 1) -> list[SweepRow]:
    """Run the pipeline for each value of ``axis``; rows keep the input order.

    A failing run is recorded as an ``ERROR`` row and the sweep continues.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    jobs = [(base, axis, float(v)) for v in values]
    if not jobs:
        return []
    if workers <= 1 or len(jobs) == 1:
        return [_sweep_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_one, jobs))


def write_sweep(path, rows: list[SweepRow]) -> Path:
    return write_rows(path, SWEEP_HEADER, (row.as_list() for row in rows))


def case_i_bound(alpha: float, p: float = 2.0, c0: float = 1.0, a0: float = 1.0) -> float:
    """Convenience: the nonpositive-eigenvalue bound."""
    return t_star(CaseTag.NONPOSITIVE, alpha, p, c0, a0, 0.0)


__all__ = [
    "CaseTag", "Verdict", "BlowupCertificate", "Problem", "PipelineResult", "SweepRow",
    "threshold", "t_star", "certify", "verdict", "lower_solution_margin", "run_pipeline",
    "build_initial", "sweep", "write_sweep", "case_i_bound", "LAMBDA_DEADBAND", "SWEEP_AXES",
]
