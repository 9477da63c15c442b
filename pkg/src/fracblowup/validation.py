"""Randomised property suites for the scalar and spatial machinery.

Each suite draws its cases from a :class:`numpy.random.Generator`, so a seed
fixes every case. A suite returns a :class:`SuiteResult` carrying the first
counterexample, serialisable to JSON.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .elliptic import (BoundaryCondition, CoefficientField, SpatialGrid, assemble_adjoint,
                       principal_eigenpair)
from .errors import FracBlowupError
from .fode import (LowerSolutionParams, Nonlinearity, comparison_check, semilinear_ivp,
                   solve_linear_fode, solve_semilinear_fode, verify_lemma3)
from .fracops import FractionalOrder, SampledFunction, TimeGrid, gamma_fn, mittag_leffler


@dataclass
class SuiteResult:
    name: str
    passed: int = 0
    total: int = 0
    counterexample: dict | None = None
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def record(self, ok: bool, case: dict) -> None:
        self.total += 1
        if ok:
            self.passed += 1
        elif self.counterexample is None:
            self.counterexample = {"suite": self.name, **case}

    def summary(self) -> str:
        return f"{self.name}: {self.passed}/{self.total} passed"


def _plain(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    return value


def write_counterexample(path, result: SuiteResult) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(result.counterexample), indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# linear fractional ODE: positivity and the Mittag-Leffler solution


def linear_fode_suite(rng: np.random.Generator, cases: int = 20, oracle_cases: int = 5,
                      steps: int = 400) -> SuiteResult:
    """Nonnegativity for time-varying rates with nonnegative forcing, plus ML agreement."""
    res = SuiteResult("linear_fode")
    for _ in range(cases):
        alpha = float(rng.uniform(0.1, 0.9))
        y0 = float(rng.uniform(0.0, 2.0))
        order = FractionalOrder(alpha)
        grid = TimeGrid.uniform(1.0, steps)
        t = grid.nodes
        amp, freq, base = rng.uniform(0, 3), rng.uniform(0, 10), rng.uniform(-1, 3)
        # keep the most negative rate resolvable: it must stay above -w on this grid
        floor = -0.5 * grid.steps**alpha / gamma_fn(2.0 - alpha)
        base = max(base, floor + amp)
        lam = base + amp * np.sin(freq * t)
        forcing = SampledFunction(grid, rng.uniform(0, 1) * np.abs(np.cos(rng.uniform(0, 10) * t)))
        y = solve_linear_fode(order, y0, lam, forcing)
        low = float(y.values.min())
        res.record(low >= -1e-10, {"kind": "positivity", "alpha": alpha, "y0": y0, "rate_base": base,
                                   "rate_amp": amp, "rate_freq": freq, "min_value": low})
    for _ in range(oracle_cases):
        alpha = float(rng.uniform(0.3, 0.9))
        lam = float(rng.uniform(0.0, 3.0))
        order = FractionalOrder(alpha)
        grid = TimeGrid.for_order(1.0, 2000, order)
        y = solve_linear_fode(order, 1.0, lam, SampledFunction(grid, np.zeros(grid.nodes.size)))
        idx = np.linspace(0, grid.steps, 11).astype(int)
        exact = np.array([mittag_leffler(alpha, 1.0, -lam * grid.nodes[i] ** alpha) for i in idx])
        err = float(np.max(np.abs(y.values[idx] - exact)))
        res.record(err <= 1e-3, {"kind": "oracle", "alpha": alpha, "lam": lam, "max_error": err})
    return res


# --------------------------------------------------------------------------
# comparison of super- and subsolutions


def _random_power_plus_linear(rng: np.random.Generator) -> Nonlinearity:
    return Nonlinearity.power_plus_linear(c0=float(rng.uniform(0.2, 2.0)), p=float(rng.choice([2.0, 3.0])),
                                         slope=float(rng.uniform(0.0, 1.0)),
                                         offset=float(rng.uniform(0.0, 0.5)))


def _bump(rng: np.random.Generator, sign: float):
    level, amp, freq = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 20)
    return lambda t: sign * (level + amp * math.sin(freq * t) ** 2), (level, amp, freq)


def comparison_suite(rng: np.random.Generator, pairs: int = 20, steps: int = 200,
                     horizon: float = 0.5, tol: float = 1e-8, inject_fault: bool = False) -> SuiteResult:
    """Super/sub pairs with equal start: the upper run gets forcing ``F >= 0``, the lower ``G <= 0``.

    The horizon is cut to half the upper run's blow-up time when that comes
    first, so both runs normally cover the whole uniform grid. Neither run
    refines steps, so their accepted nodes share a prefix; ordering is
    checked on that prefix.
    """
    res = SuiteResult("comparison")
    for k in range(pairs):
        f = _random_power_plus_linear(rng)
        alpha = float(rng.choice([0.3, 0.5, 0.7]))
        decay = float(rng.uniform(-1.0, 2.0))
        a0 = float(rng.uniform(0.1, 1.0))
        plus, plus_args = _bump(rng, 1.0)
        minus, minus_args = _bump(rng, -1.0)
        order = FractionalOrder(alpha)
        end = horizon
        _, probe = solve_semilinear_fode(semilinear_ivp(order, a0, f, decay, plus),
                                         TimeGrid.for_order(horizon, steps, order))
        if probe.blew_up:
            end = min(horizon, 0.5 * probe.t_blowup)
        grid = TimeGrid.uniform(end, steps)
        upper, _ = solve_semilinear_fode(semilinear_ivp(order, a0, f, decay, plus), grid, max_halvings=0)
        lower, _ = solve_semilinear_fode(semilinear_ivp(order, a0, f, decay, minus), grid, max_halvings=0)
        n = min(upper.values.size, lower.values.size)
        common = TimeGrid(grid.nodes[:n])
        hi = upper.values[:n] - (1.0 if inject_fault and k == 0 else 0.0)
        check = comparison_check(SampledFunction(common, hi), SampledFunction(common, lower.values[:n]), tol)
        res.record(check.holds, {"alpha": alpha, "a0": a0, "decay": decay, "horizon": end,
                                 "c0": f.c0, "p": f.p,
                                 "slope": f.slope, "offset": f.offset, "upper_forcing": plus_args,
                                 "lower_forcing": minus_args, "nodes": n,
                                 "first_violation": check.first_violation,
                                 "min_margin": check.min_margin})
    return res


# --------------------------------------------------------------------------
# power-law bound on the Caputo derivative of the lower-solution profile


def lower_solution_suite(rng: np.random.Generator, triples: int = 30, points: int = 20,
                         slack_tol: float = 1e-10) -> SuiteResult:
    res = SuiteResult("lower_solution_bound")
    for _ in range(triples):
        q = float(rng.uniform(1e-3, 5.0))
        alpha = float(rng.uniform(0.02, 0.98))
        T = float(rng.uniform(1e-2, 10.0))
        rep = verify_lemma3(LowerSolutionParams(1.0, q, T), FractionalOrder(alpha), points, slack_tol)
        res.record(rep.holds, {"q": q, "alpha": alpha, "T": T, "min_slack": rep.min_slack})
    return res


# --------------------------------------------------------------------------
# Jensen inequality with principal eigenfunction weights


def jensen_suite(rng: np.random.Generator, cases: int = 20, nodes: int = 63,
                 tol: float = 1e-8) -> SuiteResult:
    res = SuiteResult("jensen")
    grid = SpatialGrid.interval(1.0, nodes)
    for _ in range(cases):
        robin = bool(rng.integers(0, 2))
        bc = BoundaryCondition.robin() if robin else BoundaryCondition.dirichlet()
        c = float(rng.uniform(-5.0, 5.0))
        b = float(rng.uniform(-1.0, 1.0))
        sigma = float(rng.uniform(0.0, 5.0)) + abs(b)
        coeffs = CoefficientField.build(grid, c=c, b=b, sigma=sigma if robin else None)
        try:
            phi = principal_eigenpair(assemble_adjoint(grid, coeffs, bc)).phi1
        except FracBlowupError as exc:
            res.record(False, {"robin": robin, "c": c, "b": b, "sigma": sigma, "error": str(exc)})
            continue
        f = _random_power_plus_linear(rng)
        u = rng.uniform(0.0, 1.0, phi.values.shape) * rng.uniform(0.1, 5.0)
        w = phi.weights * phi.values
        lhs = float(np.sum(w * f(u)))
        rhs = float(f(float(np.sum(w * u))))
        res.record(lhs - rhs >= -tol, {"robin": robin, "c": c, "b": b, "sigma": sigma, "c0": f.c0,
                                       "p": f.p, "slope": f.slope, "offset": f.offset,
                                       "deficit": lhs - rhs})
    return res


SUITES = {
    "linear_fode": linear_fode_suite,
    "comparison": comparison_suite,
    "lower_solution_bound": lower_solution_suite,
    "jensen": jensen_suite,
}


def run_all(seed: int, inject_fault: bool = False) -> list[SuiteResult]:
    """Run every suite with generators spawned from ``seed`` (one per suite)."""
    children = np.random.SeedSequence(seed).spawn(len(SUITES))
    out = []
    for (name, suite), child in zip(SUITES.items(), children):
        rng = np.random.default_rng(child)
        start = time.perf_counter()
        result = suite(rng, inject_fault=True) if (inject_fault and name == "comparison") else suite(rng)
        result.seconds = time.perf_counter() - start
        out.append(result)
    return out
