r"""Semilinear time-fractional diffusion with blow-up detection.

Solves

.. math::

    d_t^\alpha (u - a) = -A u + f(u), \qquad u(\cdot, 0) = a,

on a node-centred spatial grid with the L1 scheme in time. Each step is an
implicit nonlinear system solved by Newton's method on the whole spatial
vector; failed steps are refined by local halving. Because the L1 sum
differences ``u`` against ``u^0 = a`` the scheme realises the Caputo
derivative of ``u - a`` and of ``u`` identically.

The weighted trace ``eta(t) = int u(x, t) phi1(x) dx`` and the L1 norm are
recorded at every accepted step; full spatial snapshots are thinned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sps
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

from .elliptic import (BoundaryCondition, CoefficientField, EigenPair, GridFunction, SpatialGrid,
                       assemble, assemble_adjoint, principal_eigenpair, weighted_mass)
from .errors import ConfigError, DomainError, NumericalFailureError, ShapeError
from .fode import DEFAULT_BLOWUP_CAP, Nonlinearity, Status
from .fracops import FractionalOrder, L1History, SampledFunction, TimeGrid, caputo_l1, l1_march
from .io import format_record, write_csv

#: Stored snapshots may dip this far below zero before it counts as a sign violation.
NONNEGATIVITY_TOL = 1e-8

#: Absolute floor added to the reduction-check allowance (matters when rhs == 0).
ROUNDOFF_FLOOR = 1e-10


@dataclass(frozen=True)
class InitialData:
    """Nonnegative initial profile together with its weighted mass ``a0``."""

    samples: GridFunction
    a0: float

    def __post_init__(self) -> None:
        values = self.samples.values
        if not np.all(np.isfinite(values)):
            raise DomainError("initial data must be finite")
        if np.any(values < 0):
            raise DomainError(f"initial data must be nonnegative (min {values.min():.3e})")
        if not np.any(values > 0):
            raise DomainError("initial data must not vanish identically")
        if not self.a0 > 0:
            raise DomainError(f"weighted initial mass must be positive, got {self.a0!r}")

    @classmethod
    def from_samples(cls, samples: GridFunction, phi1: GridFunction) -> InitialData:
        values = samples.values
        if np.any(values < 0) or not np.any(values > 0):
            # report the profile problem rather than a derived mass problem
            return cls(samples, 1.0)
        return cls(samples, weighted_mass(samples, phi1))

    @classmethod
    def with_mass(cls, profile: GridFunction, phi1: GridFunction, a0: float) -> InitialData:
        """Rescale ``profile`` so that its weighted mass equals ``a0``."""
        base = cls.from_samples(profile, phi1)
        return base.scaled(a0 / base.a0)

    def scaled(self, factor: float) -> InitialData:
        if not factor > 0:
            raise DomainError("scale factor must be positive")
        return InitialData(self.samples.with_values(self.samples.values * factor), self.a0 * factor)

    @property
    def max_value(self) -> float:
        return float(self.samples.values.max())


@dataclass(frozen=True)
class SimulationConfig:
    order: FractionalOrder
    grid: TimeGrid
    space: SpatialGrid
    coeffs: CoefficientField
    bc: BoundaryCondition
    nonlinearity: Nonlinearity
    initial: InitialData
    blowup_cap: float = DEFAULT_BLOWUP_CAP
    newton_tol: float = 1e-12
    max_step_halvings: int = 20
    max_newton: int = 50
    max_relative_change: float = 1.0
    snapshot_limit: int = 200
    method: str = "newton"

    def __post_init__(self) -> None:
        if not self.blowup_cap > self.initial.max_value:
            raise ConfigError("blowup_cap must exceed the maximum of the initial data")
        if not self.newton_tol > 0 or not self.max_relative_change > 0:
            raise ConfigError("solver tolerances must be positive")
        if self.max_step_halvings < 0 or self.max_newton < 1:
            raise ConfigError("max_step_halvings must be >= 0 and max_newton >= 1")
        if self.snapshot_limit < 2:
            raise ConfigError("snapshot_limit must be at least 2")
        if self.method not in ("newton", "semi-implicit"):
            raise ConfigError(f"unknown method {self.method!r}; use 'newton' or 'semi-implicit'")
        samples = self.initial.samples
        if samples.grid != self.space or samples.kind is not self.bc.kind:
            raise ConfigError("initial data does not live on the configured spatial grid")
        if self.coeffs.a11.shape != self.space.full_shape:
            raise ConfigError("coefficient field does not match the spatial grid")

    @property
    def horizon(self) -> float:
        return self.grid.horizon


@dataclass(frozen=True)
class SolutionTrajectory:
    """Accepted times with per-step traces and thinned snapshots."""

    order: FractionalOrder
    phi1: GridFunction
    times: np.ndarray
    eta: SampledFunction
    l1_norms: np.ndarray
    max_norms: np.ndarray
    snapshot_times: np.ndarray
    snapshots: tuple
    min_value: float

    @property
    def nonnegative(self) -> bool:
        return self.min_value >= -NONNEGATIVITY_TOL


@dataclass(frozen=True)
class BlowupReport:
    status: Status
    t_num: float | None
    t_num_extrapolated: float | None
    clamp_events: int
    final_eta: float
    horizon: float
    reason: str
    accepted_steps: int
    halvings: int
    deepest_halving: int
    min_value: float
    max_norm: float
    final_l1_norm: float
    mesh: dict = field(default_factory=dict)

    @property
    def blew_up(self) -> bool:
        return self.status is Status.BLOWUP

    def record(self) -> dict:
        out = {
            "status": self.status.value,
            "t_num": self.t_num,
            "t_num_extrapolated": self.t_num_extrapolated,
            "reason": self.reason,
            "clamp_events": self.clamp_events,
            "final_eta": self.final_eta,
            "final_l1_norm": self.final_l1_norm,
            "max_norm": self.max_norm,
            "min_value": self.min_value,
            "horizon": self.horizon,
            "accepted_steps": self.accepted_steps,
            "halvings": self.halvings,
            "deepest_halving": self.deepest_halving,
        }
        out.update(self.mesh)
        return out

    def to_text(self) -> str:
        return format_record(self.record())


# --------------------------------------------------------------------------
# linear algebra for one step


class _StepSystem:
    """Solves ``(w I + A - diag(d)) x = r``; banded in 1D, sparse LU otherwise."""

    def __init__(self, matrix: sps.csr_matrix, one_dimensional: bool) -> None:
        self.matrix = matrix
        self.diag = matrix.diagonal()
        self.banded = None
        if one_dimensional:
            n = matrix.shape[0]
            ab = np.zeros((3, n))
            ab[0, 1:] = matrix.diagonal(1)
            ab[1] = self.diag
            ab[2, :-1] = matrix.diagonal(-1)
            self.banded = ab
        else:
            self.eye = sps.identity(matrix.shape[0], format="csr")

    def solve(self, shift: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        if self.banded is not None:
            ab = self.banded.copy()
            ab[1] += shift
            return solve_banded((1, 1), ab, rhs, check_finite=False)
        mat = self.matrix + sps.diags(shift, format="csr")
        return spsolve(mat.tocsc(), rhs)


def _snapshot_stride(steps: int, limit: int) -> int:
    # t=0, the stride multiples and a possibly off-stride final state
    return max(1, math.ceil(steps / max(limit - 2, 1)))


def _extrapolate(times: np.ndarray, eta: np.ndarray, p: float | None) -> float | None:
    """Zero of a linear fit of ``eta**-(p-1)`` through the last five points."""
    if p is None or times.size < 5:
        return None
    t = times[-5:]
    y = eta[-5:]
    if np.any(y <= 0):
        return None
    # centre and scale the abscissa, the last points are nearly coincident
    span = float(t[-1] - t[0])
    if not span > 0:
        return None
    slope, intercept = np.polyfit((t - t[-1]) / span, y ** (-(p - 1.0)), 1)
    if not slope < 0:
        return None
    return float(t[-1] - span * intercept / slope)


def simulate(config: SimulationConfig, eigenpair: EigenPair | None = None,
             ) -> tuple[SolutionTrajectory, BlowupReport]:
    """Run the L1/Newton time march described in the module docstring.

    ``eigenpair`` is the principal pair of the configured adjoint problem;
    it is computed when omitted.
    """
    space, bc = config.space, config.bc
    if eigenpair is None:
        eigenpair = principal_eigenpair(assemble_adjoint(space, config.coeffs, bc))
    phi1 = eigenpair.phi1
    if phi1.grid != space or phi1.kind is not bc.kind:
        raise ConfigError("eigenpair was computed on a different grid or boundary condition")

    op = assemble(space, config.coeffs, bc)
    system = _StepSystem(op.matrix, space.dimension == 1)
    weights = op.weights
    phi_w = weights * phi1.flat
    f = config.nonlinearity
    linear_source = f.kind == "linear"
    u0 = config.initial.samples.flat.copy()
    shape = config.initial.samples.values.shape
    limit_factor = config.max_relative_change

    def step(t: float, w: float, hist: np.ndarray, prev: np.ndarray):
        limit = limit_factor * max(1.0, float(np.max(np.abs(prev))))
        known = w * prev - hist
        u = prev.copy()
        iterations = 1 if (linear_source or config.method == "semi-implicit") else config.max_newton
        for _ in range(iterations):
            fu, dfu, _ = f.clamped(u)
            # Newton on G(u) = w (u - prev) + hist + A u - f(u), solved for the new iterate
            u_new = system.solve(w - dfu, known + fu - dfu * u)
            if not np.all(np.isfinite(u_new)):
                return None
            if float(np.max(np.abs(u_new - prev))) > limit:
                return None
            delta = float(np.max(np.abs(u_new - u)))
            u = u_new
            if iterations == 1 or delta <= config.newton_tol * (1.0 + float(np.max(np.abs(u)))):
                _, dfu, _ = f.clamped(u)
                if np.any(w + system.diag - dfu <= 0):
                    return None
                return u
        return None

    stride = _snapshot_stride(config.grid.steps, config.snapshot_limit)
    eta = [float(phi_w @ u0)]
    l1 = [float(weights @ np.abs(u0))]
    max_norms = [float(np.max(np.abs(u0)))]
    snap_times = [0.0]
    snaps = [u0.copy()]
    state = {"clamps": 0, "capped": False, "min": float(u0.min()), "last": u0}

    def on_accept(t: float, u: np.ndarray, idx) -> bool:
        if not np.all(np.isfinite(u)):
            raise NumericalFailureError("non-finite state accepted", times_hint[-1])
        times_hint.append(t)
        eta.append(float(phi_w @ u))
        l1.append(float(weights @ np.abs(u)))
        norm = float(np.max(np.abs(u)))
        max_norms.append(norm)
        state["clamps"] += int(np.count_nonzero(u < 0))
        state["min"] = min(state["min"], float(u.min()))
        state["last"] = u
        if idx is not None and idx % stride == 0:
            snap_times.append(t)
            snaps.append(u.copy())
        if norm > config.blowup_cap:
            state["capped"] = True
            return False
        return True

    times_hint = [0.0]
    history = L1History(config.order.alpha, u0)
    outcome = l1_march(history, config.grid.nodes, step, config.max_step_halvings, on_accept)
    times = np.asarray(history.nodes)
    if snap_times[-1] != times[-1]:
        snap_times.append(float(times[-1]))
        snaps.append(np.asarray(state["last"]).copy())

    eta_arr = np.asarray(eta)
    if outcome.completed:
        status, t_num, t_ext = Status.COMPLETED, None, None
        reason = outcome.reason
    else:
        if times[-1] <= 0:
            raise NumericalFailureError("no time step could be resolved", 0.0)
        status, t_num = Status.BLOWUP, float(times[-1])
        t_ext = _extrapolate(times, eta_arr, f.p)
        reason = "cap exceeded" if state["capped"] else outcome.reason

    grading = config.grid.grading_exponent
    trajectory = SolutionTrajectory(
        order=config.order,
        phi1=phi1,
        times=times,
        eta=SampledFunction(TimeGrid(times, grading if outcome.completed else None), eta_arr),
        l1_norms=np.asarray(l1),
        max_norms=np.asarray(max_norms),
        snapshot_times=np.asarray(snap_times),
        snapshots=tuple(GridFunction(space, bc.kind, s.reshape(shape)) for s in snaps),
        min_value=state["min"],
    )
    mesh = {
        "alpha": config.order.alpha,
        "time_steps": config.grid.steps,
        "time_grading": grading if grading is not None else 1.0,
        "space_nodes": "x".join(str(n) for n in shape),
        "boundary": bc.kind.value,
        "method": config.method,
        "blowup_cap": config.blowup_cap,
        "a0": config.initial.a0,
        "lambda1": eigenpair.lambda1,
    }
    report = BlowupReport(
        status=status,
        t_num=t_num,
        t_num_extrapolated=t_ext,
        clamp_events=state["clamps"],
        final_eta=float(eta_arr[-1]),
        horizon=config.horizon,
        reason=reason,
        accepted_steps=times.size - 1,
        halvings=outcome.halvings,
        deepest_halving=outcome.deepest,
        min_value=state["min"],
        max_norm=max_norms[-1],
        final_l1_norm=l1[-1],
        mesh=mesh,
    )
    return trajectory, report


def write_run(out_dir, trajectory: SolutionTrajectory, report: BlowupReport,
              write_snapshots: bool = True) -> Path:
    """Write ``eta.csv``, ``report.txt`` and ``snapshots/`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "eta.csv", ["t", "eta", "l1_norm"],
              [trajectory.times, trajectory.eta.values, trajectory.l1_norms])
    (out / "report.txt").write_text(report.to_text())
    if write_snapshots:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        index = np.arange(len(trajectory.snapshots), dtype=float)
        write_csv(snap_dir / "index.csv", ["index", "t"], [index, trajectory.snapshot_times])
        for i, snap in enumerate(trajectory.snapshots):
            snap.to_csv(snap_dir / f"snapshot_{i:04d}.csv", value_name="u")
    return out


# --------------------------------------------------------------------------
# diagnostics


def _check_phi(trajectory: SolutionTrajectory, phi1: GridFunction) -> None:
    if not trajectory.snapshots:
        raise DomainError("trajectory has no stored snapshots")
    first = trajectory.snapshots[0]
    if phi1.grid != first.grid or phi1.kind is not first.kind:
        raise ShapeError("phi1 lives on a different grid than the trajectory")


def eta_trace(trajectory: SolutionTrajectory, phi1: GridFunction) -> SampledFunction:
    """Weighted integral of every stored snapshot against ``phi1``."""
    _check_phi(trajectory, phi1)
    values = np.array([weighted_mass(s, phi1) for s in trajectory.snapshots])
    return SampledFunction(TimeGrid(trajectory.snapshot_times), values)


@dataclass(frozen=True)
class JensenReport:
    times: np.ndarray
    averaged: np.ndarray
    of_mean: np.ndarray
    tol: float

    @property
    def deficits(self) -> np.ndarray:
        return self.averaged - self.of_mean

    @property
    def min_deficit(self) -> float:
        return float(self.deficits.min())

    @property
    def holds(self) -> bool:
        return self.min_deficit >= -self.tol

    def __bool__(self) -> bool:
        return self.holds


def jensen_check(trajectory: SolutionTrajectory, phi1: GridFunction, f: Nonlinearity,
                 tol: float = 1e-8) -> JensenReport:
    """Compare ``int f(u) phi1`` with ``f(int u phi1)`` at every stored snapshot.

    ``f`` is evaluated on ``max(u, 0)`` as in the solver.
    """
    _check_phi(trajectory, phi1)
    w = phi1.weights * phi1.values
    averaged = np.empty(len(trajectory.snapshots))
    of_mean = np.empty_like(averaged)
    for i, snap in enumerate(trajectory.snapshots):
        fu, _, _ = f.clamped(snap.values)
        averaged[i] = float(np.sum(w * fu))
        of_mean[i] = float(f(max(float(np.sum(w * snap.values)), 0.0)))
    return JensenReport(trajectory.snapshot_times, averaged, of_mean, tol)


@dataclass(frozen=True)
class ReductionReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    allowance: float
    window_end: float

    @property
    def slack(self) -> np.ndarray:
        return self.lhs - self.rhs

    @property
    def min_slack(self) -> float:
        return float(self.slack.min()) if self.slack.size else 0.0

    @property
    def max_abs_slack(self) -> float:
        return float(np.abs(self.slack).max()) if self.slack.size else 0.0

    @property
    def holds(self) -> bool:
        return self.min_slack >= -self.allowance

    @property
    def equality_holds(self) -> bool:
        return self.max_abs_slack <= self.allowance

    def __bool__(self) -> bool:
        return self.holds


def ode_reduction_check(trajectory: SolutionTrajectory, phi1: GridFunction, lambda1: float,
                        f: Nonlinearity, window_end: float | None = None,
                        allowance_factor: float = 1e-2, blowup_time: float | None = None,
                        ) -> ReductionReport:
    """Discrete check of ``d^alpha (eta - a0) >= -lambda1 eta + f(eta)``.

    The Caputo derivative is the L1 operator on the accepted mesh. Only
    times up to ``window_end`` are compared; by default that is
    ``0.8 * blowup_time`` when a blow-up time is given and the whole run
    otherwise; ``t = 0`` is excluded. The allowance is
    ``allowance_factor * max |rhs|`` on the window plus a round-off floor.
    """
    _check_phi(trajectory, phi1)
    if abs(trajectory.eta.values[0] - weighted_mass(trajectory.snapshots[0], phi1)) > 1e-12 * max(
            1.0, abs(trajectory.eta.values[0])):
        raise ShapeError("trajectory was traced with a different phi1")
    eta = trajectory.eta
    lhs = caputo_l1(eta - SampledFunction(eta.grid, np.full(eta.values.shape, eta.values[0])),
                    trajectory.order).values
    fe, _, _ = f.clamped(eta.values)
    rhs = -lambda1 * eta.values + fe
    if window_end is None:
        window_end = 0.8 * blowup_time if blowup_time is not None else float(eta.times[-1])
    # the L1 derivative at t = 0 is not defined by the scheme
    mask = (eta.times > 0) & (eta.times <= window_end)
    scale = float(np.max(np.abs(rhs[mask]))) if mask.any() else 0.0
    allowance = allowance_factor * scale + ROUNDOFF_FLOOR
    return ReductionReport(eta.times[mask], lhs[mask], rhs[mask], allowance, float(window_end))
