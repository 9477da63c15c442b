r"""Scalar fractional ODEs and the lower-solution machinery.

Every equation here has the form

.. math::

    d_t^\alpha (y - y_0) = F(t, y), \qquad y(0) = y_0,

discretised with the L1 scheme and solved implicitly in ``y`` at each node.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, ShapeError, UnsupportedRangeError
from .fracops import FractionalOrder, L1History, SampledFunction, TimeGrid, l1_march

#: Default state bound above which a run is declared blown up.
DEFAULT_BLOWUP_CAP = 1e8


class Status(enum.Enum):
    COMPLETED = "Completed"
    BLOWUP = "Blowup"


@dataclass(frozen=True)
class Nonlinearity:
    r"""Source term ``f`` on ``[0, inf)`` with its growth certificate.

    ``c0`` and ``p`` certify :math:`f(\xi) \ge c_0 \xi^p` for :math:`\xi \ge 1`;
    both are ``None`` for sources without such a certificate (zero and linear
    sources, used in diagnostics). Construction spot-checks nonnegativity,
    the certificate and, when ``convex`` is set, convexity.
    """

    kind: str
    c0: float | None = None
    p: float | None = None
    slope: float = 0.0
    offset: float = 0.0
    convex: bool = True
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    deriv: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("pure_power", "power_plus_linear", "linear", "custom"):
            raise DomainError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "custom" and (self.func is None or self.deriv is None):
            raise DomainError("custom nonlinearities need func and deriv")
        if (self.c0 is None) != (self.p is None):
            raise DomainError("c0 and p must be given together")
        if self.kind in ("pure_power", "power_plus_linear") and self.c0 is None:
            raise DomainError(f"{self.kind} needs c0 and p")
        if self.c0 is not None and not (self.c0 > 0 and self.p > 1):
            raise DomainError(f"growth certificate needs c0 > 0 and p > 1, got c0={self.c0}, p={self.p}")

        xi = np.linspace(0.0, 10.0, 201)
        fx = self.evaluate(xi)
        if np.any(fx < 0):
            raise DomainError("nonlinearity must be nonnegative on [0, inf)")
        if self.c0 is not None:
            big = np.geomspace(1.0, 1e3, 61)
            if np.any(self.evaluate(big) < self.c0 * big**self.p * (1 - 1e-12)):
                raise DomainError(f"f(xi) >= {self.c0} xi^{self.p} fails for some xi >= 1")
        if self.convex:
            second = fx[2:] - 2 * fx[1:-1] + fx[:-2]
            if np.any(second < -1e-9 * (1.0 + np.abs(fx[1:-1]))):
                raise DomainError("nonlinearity is flagged convex but is not")

    @classmethod
    def pure_power(cls, c0: float, p: float) -> Nonlinearity:
        return cls("pure_power", c0=float(c0), p=float(p))

    @classmethod
    def power_plus_linear(cls, c0: float, p: float, slope: float = 0.0, offset: float = 0.0) -> Nonlinearity:
        return cls("power_plus_linear", c0=float(c0), p=float(p), slope=float(slope), offset=float(offset))

    @classmethod
    def linear(cls, slope: float = 0.0, offset: float = 0.0) -> Nonlinearity:
        return cls("linear", slope=float(slope), offset=float(offset))

    @classmethod
    def zero(cls) -> Nonlinearity:
        return cls.linear()

    @classmethod
    def custom(cls, func, deriv, c0: float | None = None, p: float | None = None,
               convex: bool = True) -> Nonlinearity:
        return cls("custom", c0=c0, p=p, convex=convex, func=func, deriv=deriv)

    @property
    def certified(self) -> bool:
        return self.c0 is not None

    @property
    def is_zero(self) -> bool:
        return self.kind == "linear" and self.slope == 0.0 and self.offset == 0.0

    def evaluate(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.func(xi), dtype=float)
        out = self.slope * xi + self.offset
        if self.c0 is not None:
            out = out + self.c0 * xi**self.p
        return out

    def derivative(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.deriv(xi), dtype=float)
        out = np.full_like(xi, self.slope)
        if self.c0 is not None:
            out = out + self.c0 * self.p * xi ** (self.p - 1)
        return out

    __call__ = evaluate

    def clamped(self, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
        """``(f(max(xi, 0)), f'(max(xi, 0)), number of clamped entries)``."""
        xi = np.asarray(xi, dtype=float)
        negative = xi < 0
        safe = np.where(negative, 0.0, xi)
        return self.evaluate(safe), self.derivative(safe), int(np.count_nonzero(negative))

    def describe(self) -> str:
        if self.kind == "custom":
            return f"custom(c0={self.c0}, p={self.p}, convex={self.convex})"
        parts = []
        if self.c0 is not None:
            parts.append(f"{self.c0!r}*u^{self.p!r}")
        if self.slope:
            parts.append(f"{self.slope!r}*u")
        if self.offset:
            parts.append(f"{self.offset!r}")
        return " + ".join(parts) if parts else "0"


@dataclass(frozen=True)
class ScalarIVP:
    """``d_t^alpha (y - initial) = rhs(t, y)``.

    ``rhs_dy`` is the partial derivative in ``y``; a centred difference is
    used when it is omitted.
    """

    order: FractionalOrder
    initial: float
    rhs: Callable[[float, float], float]
    rhs_dy: Callable[[float, float], float] | None = None

    def derivative(self, t: float, y: float) -> float:
        if self.rhs_dy is not None:
            return self.rhs_dy(t, y)
        h = 1e-7 * max(1.0, abs(y))
        return (self.rhs(t, y + h) - self.rhs(t, y - h)) / (2 * h)


def semilinear_ivp(order: FractionalOrder, a0: float, f: Nonlinearity, decay: float = 0.0,
                   forcing: Callable[[float], float] | None = None) -> ScalarIVP:
    """IVP with ``rhs = -decay * y + f(max(y, 0)) + forcing(t)``."""

    def rhs(t: float, y: float) -> float:
        val = -decay * y + float(f.evaluate(max(y, 0.0)))
        return val + forcing(t) if forcing is not None else val

    def rhs_dy(t: float, y: float) -> float:
        return -decay + float(f.derivative(max(y, 0.0)))

    return ScalarIVP(order, float(a0), rhs, rhs_dy)


@dataclass(frozen=True)
class FodeStatus:
    status: Status
    t_blowup: float | None
    reason: str
    halvings: int
    clamp_events: int

    @property
    def blew_up(self) -> bool:
        return self.status is Status.BLOWUP


def solve_linear_fode(order: FractionalOrder, y0: float, lam, forcing: SampledFunction) -> SampledFunction:
    """L1 solution of ``d_t^alpha (y - y0) = -lam(t) y + forcing(t)``.

    ``lam`` is a constant or an array sampled on the forcing's grid.
    """
    grid = forcing.grid
    lam = np.broadcast_to(np.asarray(lam, dtype=float), grid.nodes.shape)
    hist = L1History(order.alpha, y0)
    out = np.empty_like(grid.nodes)
    out[0] = y0
    for n in range(1, grid.nodes.size):
        t = float(grid.nodes[n])
        w, h = hist.history(t)
        denom = w + lam[n]
        if not denom > 0:
            raise DomainError(
                f"time step at t={t:.3g} too coarse for growth rate {-lam[n]:.3g}: refine the grid")
        out[n] = (w * out[n - 1] - h[0] + forcing.values[n]) / denom
        hist.accept(t, out[n])
    return SampledFunction(grid, out)


def solve_semilinear_fode(ivp: ScalarIVP, grid: TimeGrid, blowup_cap: float = DEFAULT_BLOWUP_CAP,
                          newton_tol: float = 1e-12, max_newton: int = 50,
                          max_halvings: int = 20, max_relative_change: float = 1.0,
                          ) -> tuple[SampledFunction, FodeStatus]:
    """Implicit L1 stepping with a scalar Newton solve per node.

    A step is refined by halving when Newton fails: no convergence in
    ``max_newton`` iterations, a non-finite iterate, a non-positive Newton
    slope, or a change larger than ``max_relative_change * max(1, |y|)``.
    The run ends as ``Blowup`` when ``|y|`` exceeds ``blowup_cap`` or the
    step cannot be refined further; the reported time is the last accepted
    node. The returned samples live on the accepted (possibly refined) mesh.
    """
    if not blowup_cap > ivp.initial:
        raise DomainError("blow-up cap must exceed the initial value")
    hist = L1History(ivp.order.alpha, ivp.initial)
    values = [ivp.initial]
    state = {"clamps": 0, "capped": False}

    def step(t: float, w: float, h: np.ndarray, prev: np.ndarray):
        y_prev = float(prev[0])
        limit = max_relative_change * max(1.0, abs(y_prev))
        y = y_prev
        for _ in range(max_newton):
            g = w * (y - y_prev) + h[0] - ivp.rhs(t, y)
            dg = w - ivp.derivative(t, y)
            if not (math.isfinite(g) and math.isfinite(dg)) or dg <= 0:
                return None
            y_new = y - g / dg
            if not math.isfinite(y_new) or abs(y_new - y_prev) > limit:
                return None
            if abs(y_new - y) <= newton_tol * (1.0 + abs(y_new)):
                if w - ivp.derivative(t, y_new) <= 0:
                    return None
                return np.array([y_new])
            y = y_new
        return None

    def accept(t: float, new: np.ndarray, _idx) -> bool:
        y = float(new[0])
        values.append(y)
        if y < 0:
            state["clamps"] += 1
        if abs(y) > blowup_cap:
            state["capped"] = True
            return False
        return True

    outcome = l1_march(hist, grid.nodes, step, max_halvings, accept)
    nodes = np.asarray(hist.nodes)
    solution = SampledFunction(TimeGrid(nodes, grid.grading_exponent if outcome.completed else None),
                               np.asarray(values))
    if outcome.completed:
        status = FodeStatus(Status.COMPLETED, None, outcome.reason, outcome.halvings, state["clamps"])
    else:
        reason = "cap exceeded" if state["capped"] else outcome.reason
        status = FodeStatus(Status.BLOWUP, float(nodes[-1]), reason, outcome.halvings, state["clamps"])
    return solution, status


@dataclass(frozen=True)
class ComparisonResult:
    holds: bool
    first_violation: int | None
    violation_time: float | None
    min_margin: float

    def __bool__(self) -> bool:
        return self.holds


def comparison_check(y: SampledFunction, z: SampledFunction, tol: float = 1e-8) -> ComparisonResult:
    """Check ``y >= z - tol`` at every node and report the first violation."""
    if y.grid != z.grid:
        raise ShapeError("comparison needs both functions on the same time grid")
    margin = y.values - z.values
    bad = np.nonzero(margin < -tol)[0]
    if bad.size:
        j = int(bad[0])
        return ComparisonResult(False, j, float(y.times[j]), float(margin.min()))
    return ComparisonResult(True, None, None, float(margin.min()))


@dataclass(frozen=True)
class LowerSolutionParams:
    """Parameters of the blowing-up profile ``a0 (T/(T - t))^q``."""

    a0: float
    q: float
    T: float

    def __post_init__(self) -> None:
        if not (self.a0 > 0 and self.q > 0 and self.T > 0):
            raise DomainError("lower-solution parameters a0, q and T must be positive")

    @classmethod
    def for_exponent(cls, a0: float, p: float, T: float) -> LowerSolutionParams:
        """The choice ``q = 1/(p - 1)``."""
        if not p > 1:
            raise DomainError(f"need p > 1, got {p!r}")
        return cls(a0, 1.0 / (p - 1.0), T)


def lower_solution_eval(params: LowerSolutionParams, t):
    """``a0 (T/(T - t))^q`` for ``0 <= t < T``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr >= params.T):
        raise DomainError(f"lower solution is defined on [0, {params.T}) only")
    out = params.a0 * (params.T / (params.T - t_arr)) ** params.q
    return float(out) if out.ndim == 0 else out


def lower_solution_caputo_series(params: LowerSolutionParams, t: float, order: FractionalOrder,
                                 truncation_tol: float = 1e-14, max_terms: int = 1_000_000) -> float:
    r"""Caputo derivative of ``a0 (T/(T - t))^q`` from its power series.

    .. math::

        \frac{a_0 q t^{1-\alpha}}{T} \sum_{k \ge 0}
        \frac{(q+1)\cdots(q+k)}{\Gamma(k+2-\alpha)} \Big(\frac{t}{T}\Big)^k

    Summation stops once the geometric bound on the remaining tail, with
    ratio ``(t/T)(q+k+1)/(k+1)``, drops below ``truncation_tol`` times the
    partial sum.
    """
    a0, q, T = params.a0, params.q, params.T
    alpha = order.alpha
    if t < 0 or t >= T:
        raise DomainError(f"series is defined on [0, {T}) only")
    if t == 0:
        return 0.0
    x = t / T
    term = 1.0 / math.gamma(2.0 - alpha)
    terms = [term]
    total = term
    k = 0
    while True:
        rho = x * (q + k + 1) / (k + 1)
        if rho < 1 and term * rho / (1 - rho) <= truncation_tol * total:
            break
        term *= x * (q + k + 1) / (k + 2 - alpha)
        terms.append(term)
        total += term
        k += 1
        if k > max_terms:
            raise UnsupportedRangeError(f"t/T = {x} needs more than {max_terms} series terms")
    return a0 * q * t ** (1.0 - alpha) / T * math.fsum(terms)


@dataclass(frozen=True)
class PowerBoundReport:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray
    holds: bool

    @property
    def min_slack(self) -> float:
        return float(self.slack.min())

    def __bool__(self) -> bool:
        return self.holds

    def to_csv(self, path) -> None:
        from .io import write_csv

        write_csv(path, ["t", "lhs", "rhs", "slack"], [self.times, self.lhs, self.rhs, self.slack])


def caputo_power_bound(q: float, T: float, order: FractionalOrder, t):
    """Upper bound ``q/(Gamma(2-alpha) T^alpha) (T/(T-t))^(q+1)`` for the Caputo derivative of ``(T/(T-t))^q``."""
    alpha = order.alpha
    return q / (math.gamma(2.0 - alpha) * T**alpha) * (T / (T - np.asarray(t, dtype=float))) ** (q + 1)


def verify_lemma3(params: LowerSolutionParams, order: FractionalOrder, sample_count: int,
                  slack_tol: float = 1e-10) -> PowerBoundReport:
    """Compare the series derivative of ``(T/(T-t))^q`` with its power-law bound.

    Samples are ``0.95 T i / sample_count`` for ``i = 1..sample_count``; the
    inequality holds when every slack ``rhs - lhs`` is at least ``-slack_tol``.
    """
    if sample_count < 1:
        raise DomainError("need at least one sample point")
    unit = LowerSolutionParams(1.0, params.q, params.T)
    times = 0.95 * params.T * np.arange(1, sample_count + 1) / sample_count
    lhs = np.array([lower_solution_caputo_series(unit, float(t), order) for t in times])
    rhs = caputo_power_bound(params.q, params.T, order, times)
    slack = rhs - lhs
    return PowerBoundReport(times, lhs, rhs, slack, bool(np.all(slack >= -slack_tol)))


def gamma_lower_bound_holds(alpha: float, kmax: int = 50) -> bool:
    """Check ``Gamma(k + 2 - alpha) >= Gamma(2 - alpha) k!`` for ``k = 0..kmax``."""
    g = math.gamma(2.0 - alpha)
    return all(math.gamma(k + 2.0 - alpha) >= g * math.factorial(k) * (1 - 1e-15) for k in range(kmax + 1))
