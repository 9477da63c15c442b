r"""Fractional calculus on time meshes.

Contents:

* :class:`FractionalOrder`, :class:`TimeGrid`, :class:`SampledFunction`
* :func:`gamma_fn`, :func:`rl_integral`, :func:`caputo_l1`
* :func:`mittag_leffler`
* :class:`L1History` and :func:`l1_march`, the adaptive L1 time-stepping
  machinery shared by the scalar and the spatial solvers.

The L1 scheme on a mesh :math:`0 = t_0 < \dots < t_N` approximates

.. math::

    d_t^\alpha f(t_n) \approx \sum_{j=0}^{n-1} w_{n,j} (f_{j+1} - f_j),
    \qquad
    w_{n,j} = \frac{(t_n - t_j)^{1-\alpha} - (t_n - t_{j+1})^{1-\alpha}}
                   {\Gamma(2-\alpha)\,(t_{j+1} - t_j)},

which is the Caputo derivative of the piecewise-linear interpolant,
integrated exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DomainError, ShapeError, UnsupportedRangeError

logger = logging.getLogger(__name__)

#: Largest grading exponent used by :meth:`TimeGrid.graded` when derived from alpha.
MAX_GRADING = 7.0

#: ``|z|`` up to which :func:`mittag_leffler` uses the power series.
ML_SERIES_RADIUS = 10.0


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FractionalOrder:
    """Order ``alpha`` of a Caputo derivative, restricted to ``0 < alpha < 1``."""

    alpha: float

    def __post_init__(self) -> None:
        alpha = float(self.alpha)
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"fractional order must satisfy 0 < alpha < 1, got {alpha!r}")
        object.__setattr__(self, "alpha", alpha)

    def default_grading(self) -> float:
        """Grading exponent ``(2 - alpha)/alpha`` capped at :data:`MAX_GRADING`."""
        return min((2.0 - self.alpha) / self.alpha, MAX_GRADING)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes starting at 0.

    ``grading_exponent`` is ``1.0`` for uniform meshes, ``r > 1`` for graded
    meshes ``t_j = T (j/N)^r`` and ``None`` for meshes built from arbitrary
    nodes (for instance by adaptive step halving).
    """

    nodes: np.ndarray
    grading_exponent: float | None = None

    def __post_init__(self) -> None:
        nodes = _frozen(self.nodes)
        if nodes.ndim != 1 or nodes.size < 1:
            raise DomainError("time grid needs a one-dimensional array of nodes")
        if nodes[0] != 0.0:
            raise DomainError("time grid must start at t = 0")
        if nodes.size > 1 and not np.all(np.diff(nodes) > 0):
            raise DomainError("time grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, horizon: float, steps: int) -> TimeGrid:
        return cls.graded(horizon, steps, 1.0)

    @classmethod
    def graded(cls, horizon: float, steps: int, exponent: float) -> TimeGrid:
        if horizon <= 0:
            raise DomainError(f"horizon must be positive, got {horizon!r}")
        if steps < 1:
            raise DomainError(f"need at least one time step, got {steps!r}")
        if exponent < 1:
            raise DomainError(f"grading exponent must be >= 1, got {exponent!r}")
        nodes = horizon * (np.arange(steps + 1) / steps) ** exponent
        nodes[-1] = horizon
        return cls(nodes, float(exponent))

    @classmethod
    def for_order(cls, horizon: float, steps: int, order: FractionalOrder,
                  uniform: bool = False) -> TimeGrid:
        """Graded mesh with the default exponent for ``order`` (or uniform)."""
        return cls.graded(horizon, steps, 1.0 if uniform else order.default_grading())

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> int:
        return self.nodes.size - 1

    def __len__(self) -> int:
        return self.nodes.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.nodes.shape == other.nodes.shape and bool(np.all(self.nodes == other.nodes))

    def __hash__(self) -> int:
        return hash(self.nodes.tobytes())


@dataclass(frozen=True)
class SampledFunction:
    """Values of a function of time at the nodes of a :class:`TimeGrid`."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _frozen(self.values)
        if values.shape != self.grid.nodes.shape:
            raise DomainError(
                f"expected {self.grid.nodes.size} samples, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(cls, grid: TimeGrid, func: Callable[[np.ndarray], np.ndarray]) -> SampledFunction:
        return cls(grid, np.broadcast_to(func(grid.nodes), grid.nodes.shape))

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    def __add__(self, other: SampledFunction) -> SampledFunction:
        _same_grid(self, other)
        return SampledFunction(self.grid, self.values + other.values)

    def __sub__(self, other: SampledFunction) -> SampledFunction:
        _same_grid(self, other)
        return SampledFunction(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> SampledFunction:
        return SampledFunction(self.grid, scalar * self.values)

    __rmul__ = __mul__

    def to_csv(self, path, value_name: str = "value") -> None:
        from .io import write_csv

        write_csv(path, ["t", value_name], [self.times, self.values])


def _same_grid(f: SampledFunction, g: SampledFunction) -> None:
    if f.grid != g.grid:
        raise ShapeError("sampled functions live on different time grids")


def gamma_fn(x: float) -> float:
    """Gamma function for ``x > 0``."""
    if not x > 0:
        raise DomainError(f"gamma_fn is restricted to x > 0, got {x!r}")
    return math.gamma(x)


def l1_weights(nodes: np.ndarray, n: int, alpha: float) -> np.ndarray:
    """L1 weights ``w[n, j]`` for ``j = 0..n-1`` on an arbitrary mesh."""
    t = nodes[: n + 1]
    lag = t[n] - t
    e = 1.0 - alpha
    return (lag[:-1] ** e - lag[1:] ** e) / (math.gamma(2.0 - alpha) * np.diff(t))


def caputo_l1(f: SampledFunction, order: FractionalOrder) -> SampledFunction:
    """L1 approximation of the Caputo derivative at every node (0 at ``t = 0``)."""
    nodes = f.grid.nodes
    if nodes.size < 2:
        raise DomainError("caputo_l1 needs at least two nodes")
    increments = np.diff(f.values)
    out = np.zeros_like(nodes)
    for n in range(1, nodes.size):
        out[n] = l1_weights(nodes, n, order.alpha) @ increments[:n]
    return SampledFunction(f.grid, out)


def rl_integral(f: SampledFunction, beta: float) -> SampledFunction:
    r"""Riemann-Liouville integral :math:`J^\beta f` by product integration.

    The piecewise-linear interpolant of ``f`` is integrated exactly against
    :math:`(t_n - s)^{\beta - 1}/\Gamma(\beta)`.
    """
    if not beta > 0:
        raise DomainError(f"integration order must be positive, got {beta!r}")
    nodes = f.grid.nodes
    vals = f.values
    out = np.zeros_like(nodes)
    scale = 1.0 / math.gamma(beta)
    for n in range(1, nodes.size):
        t = nodes[: n + 1]
        far = t[n] - t[:-1]
        near = t[n] - t[1:]
        h = np.diff(t)
        m0 = (far**beta - near**beta) / beta
        m1 = (far ** (beta + 1) - near ** (beta + 1)) / (beta + 1)
        # weights of the left and right endpoint values on each interval
        left = (m1 - near * m0) / h
        right = (far * m0 - m1) / h
        out[n] = scale * (left @ vals[:n] + right @ vals[1 : n + 1])
    return SampledFunction(f.grid, out)


# --------------------------------------------------------------------------
# Mittag-Leffler function


def mittag_leffler(alpha: float, beta: float, z: float) -> float:
    r"""Two-parameter Mittag-Leffler function :math:`E_{\alpha,\beta}(z)` for real ``z``.

    Methods, by region:

    * ``|z| <= 10``: power series. Positive ``z`` and ``-1 <= z < 0`` are
      summed in double precision with :func:`math.fsum`; other negative ``z``
      are summed in extended precision sized to the cancellation (``mpmath``).
    * ``z > 10``: the same positive series while the terms stay finite.
    * ``z < -10`` with ``alpha < 1``: the algebraic asymptotic expansion
      :math:`-\sum_k z^{-k}/\Gamma(\beta - \alpha k)` at optimal truncation,
      accepted when its error estimate is below ``1e-11`` relative.
    * Otherwise, for ``beta = 1`` and ``alpha < 1``, the Laplace-type integral
      representation of :math:`E_\alpha(-x)` evaluated by adaptive quadrature.

    Anything else raises :class:`UnsupportedRangeError`.
    """
    alpha = float(alpha)
    beta = float(beta)
    z = float(z)
    if not 0.0 < alpha <= 2.0:
        raise UnsupportedRangeError(f"alpha must lie in (0, 2], got {alpha!r}")
    if not beta > 0.0:
        raise UnsupportedRangeError(f"beta must be positive, got {beta!r}")
    if not math.isfinite(z):
        raise UnsupportedRangeError(f"z must be finite, got {z!r}")
    if z == 0.0:
        return 1.0 / math.gamma(beta)
    if z > 0.0:
        return _ml_series_positive(alpha, beta, z)
    if z >= -1.0:
        return _ml_series_small(alpha, beta, z)
    if -z <= ML_SERIES_RADIUS:
        value = _ml_series_negative(alpha, beta, z)
        if value is not None:
            return value
    if alpha < 1.0:
        value = _ml_asymptotic(alpha, beta, z)
        if value is not None:
            return value
        if beta == 1.0:
            return _ml_laplace(alpha, -z)
    raise UnsupportedRangeError(
        f"no supported evaluation for E_({alpha}, {beta})({z})")


def _ml_series_positive(alpha: float, beta: float, z: float) -> float:
    terms = []
    k = 0
    peak_passed = False
    prev = -math.inf
    log_z = math.log(z)
    while True:
        log_t = k * log_z - math.lgamma(alpha * k + beta)
        if log_t > 700.0:
            raise UnsupportedRangeError(f"Mittag-Leffler series overflows at z = {z}")
        term = math.exp(log_t)
        terms.append(term)
        peak_passed = peak_passed or log_t < prev
        prev = log_t
        if peak_passed and term < 1e-18 * math.fsum(terms):
            break
        k += 1
    return math.fsum(terms)


def _ml_series_small(alpha: float, beta: float, z: float) -> float:
    # |z| <= 1: terms are bounded by 1/Gamma, cancellation costs at most a few ulps
    terms = []
    for k in range(2000):
        term = z**k / math.gamma(alpha * k + beta) if alpha * k + beta < 170 else 0.0
        terms.append(term)
        if k > 2 and abs(term) < 1e-18:
            break
    return math.fsum(terms)


def _ml_series_negative(alpha: float, beta: float, z: float) -> float | None:
    import mpmath
    from scipy.special import gammaln

    k = np.arange(0, 5000)
    log10_terms = (k * math.log(-z) - gammaln(alpha * k + beta)) / math.log(10.0)
    peak = int(np.argmax(log10_terms))
    below = np.nonzero((k > peak) & (log10_terms < -40.0))[0]
    if below.size == 0:
        return None
    digits = int(max(log10_terms[peak], 0.0)) + 40
    if digits > 400:
        return None
    with mpmath.workdps(digits):
        # Gamma arguments must be formed in extended precision too
        mz, ma, mb = mpmath.mpf(z), mpmath.mpf(alpha), mpmath.mpf(beta)
        terms = [mz**j * mpmath.rgamma(ma * j + mb) for j in range(int(below[0]) + 1)]
        return float(mpmath.fsum(terms))


def _ml_asymptotic(alpha: float, beta: float, z: float) -> float | None:
    from scipy.special import rgamma

    terms = []
    best = math.inf
    for k in range(1, 400):
        term = -(z ** (-k)) * float(rgamma(beta - alpha * k))
        size = abs(term)
        if not math.isfinite(size):
            break
        if size == 0.0:
            # pole of the gamma function: the term vanishes, keep going
            terms.append(0.0)
            continue
        if size > best and k > 2:
            break
        best = min(best, size)
        terms.append(term)
    value = math.fsum(terms)
    # a diverging expansion has no small term; measure against the leading term
    lead = next((abs(t) for t in terms if t != 0.0), 0.0)
    if not math.isfinite(value) or value == 0.0 or best > 1e-11 * min(abs(value), lead):
        return None
    return value


def _ml_laplace(alpha: float, x: float) -> float:
    # E_alpha(-x) = sin(alpha pi)/(alpha pi) * int_0^inf exp(-(u x)^(1/alpha)) / (u^2 + 2u cos(alpha pi) + 1) du
    c = math.cos(alpha * math.pi)
    scale = x ** (1.0 / alpha)

    def integrand(u: float) -> float:
        return math.exp(-scale * u ** (1.0 / alpha)) / (u * u + 2.0 * u * c + 1.0)

    # the integrand decays on the scale u ~ 1/x
    knee = 1.0 / x
    pieces = [(0.0, knee), (knee, 40.0 * knee)]
    head, _ = integrate.quad(integrand, *pieces[0], epsabs=0.0, epsrel=1e-13, limit=200)
    floor = 1e-15 * head
    mid, _ = integrate.quad(integrand, *pieces[1], epsabs=floor, epsrel=1e-13, limit=200)
    tail, _ = integrate.quad(integrand, 40.0 * knee, np.inf, epsabs=floor, epsrel=1e-13, limit=200)
    return math.sin(alpha * math.pi) / (alpha * math.pi) * (head + mid + tail)


# --------------------------------------------------------------------------
# Adaptive L1 time stepping


@dataclass
class L1History:
    """Accepted nodes and increments of an L1 time integration.

    ``state0`` may be a scalar or an array; increments are stored in a
    growable buffer so that the history sum is one matrix-vector product.
    """

    alpha: float
    state0: np.ndarray
    nodes: list[float] = field(default_factory=lambda: [0.0])

    def __post_init__(self) -> None:
        self.state0 = np.atleast_1d(np.asarray(self.state0, dtype=float)).copy()
        self._inc = np.zeros((64, self.state0.size))
        self._count = 0
        self.last = self.state0.copy()
        self._g2a = math.gamma(2.0 - self.alpha)

    @property
    def time(self) -> float:
        return self.nodes[-1]

    def history(self, t_new: float) -> tuple[float, np.ndarray]:
        """Return ``(w_last, H)`` so that the L1 sum at ``t_new`` is ``w_last*(u - last) + H``."""
        t = np.asarray(self.nodes + [t_new])
        lag = t_new - t
        e = 1.0 - self.alpha
        w = (lag[:-1] ** e - lag[1:] ** e) / (self._g2a * np.diff(t))
        hist = w[:-1] @ self._inc[: self._count] if self._count else np.zeros_like(self.last)
        return float(w[-1]), hist

    def accept(self, t_new: float, state: np.ndarray) -> None:
        state = np.atleast_1d(np.asarray(state, dtype=float))
        if self._count == self._inc.shape[0]:
            self._inc = np.concatenate([self._inc, np.zeros_like(self._inc)])
        self._inc[self._count] = state - self.last
        self._count += 1
        self.nodes.append(float(t_new))
        self.last = state.copy()


#: A step solver returns the new state, or ``None`` when the step must be refined.
StepSolver = Callable[[float, float, np.ndarray, np.ndarray], "np.ndarray | None"]


@dataclass
class MarchOutcome:
    """How an :func:`l1_march` run ended."""

    completed: bool
    reason: str
    halvings: int
    deepest: int


def l1_march(history: L1History, targets: np.ndarray, solve_step: StepSolver,
             max_halvings: int,
             on_accept: Callable[[float, np.ndarray, int | None], bool]) -> MarchOutcome:
    """Advance ``history`` through ``targets`` with local step halving.

    ``solve_step(t_new, w_last, hist, previous)`` returns the new state or
    ``None``. After a failure the local step is halved; after a success the
    step may double again, never beyond the remaining distance to the next
    target node. ``on_accept(t, state, target_index)`` is called for every
    accepted state (``target_index`` is set when a target node is reached)
    and returns ``False`` to stop the march.
    """
    halvings = 0
    deepest = 0
    for idx in range(1, len(targets)):
        target = float(targets[idx])
        base = target - history.time
        step = base
        depth = 0
        while True:
            t_prev = history.time
            t_try = t_prev + step
            if target - t_try <= 1e-9 * step:
                # snap roundoff slivers onto the target node
                t_try = target
            if t_try <= t_prev:
                return MarchOutcome(False, "step underflow", halvings, deepest)
            w_last, hist = history.history(t_try)
            state = solve_step(t_try, w_last, hist, history.last)
            if state is None:
                depth += 1
                halvings += 1
                deepest = max(deepest, depth)
                if depth > max_halvings:
                    return MarchOutcome(False, "step halvings exhausted", halvings, deepest)
                step *= 0.5
                continue
            history.accept(t_try, state)
            reached = t_try >= target
            if not on_accept(t_try, state, idx if reached else None):
                return MarchOutcome(False, "stopped", halvings, deepest)
            if reached:
                break
            if depth > 0:
                depth -= 1
                step *= 2.0
    return MarchOutcome(True, "completed", halvings, deepest)
