from __future__ import annotations

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fracblowup.blowup import CaseTag, t_star, threshold
from fracblowup.fode import (LowerSolutionParams, Nonlinearity, semilinear_ivp, solve_semilinear_fode,
                             verify_lemma3)
from fracblowup.fracops import FractionalOrder, SampledFunction, TimeGrid, caputo_l1, l1_weights, mittag_leffler
from fracblowup.io import format_record, parse_record

alphas = st.floats(0.05, 0.95)
settings.register_profile("fracblowup", max_examples=40, deadline=None)
settings.load_profile("fracblowup")


@given(alphas, st.floats(1.0, 6.0), st.integers(5, 60))
def test_l1_weights_positive_and_reproduce_lines(alpha, exponent, steps):
    grid = TimeGrid.graded(1.0, steps, exponent)
    w = l1_weights(grid.nodes, steps, alpha)
    assert np.all(w > 0)
    exact = grid.nodes ** (1 - alpha) / math.gamma(2 - alpha)
    got = caputo_l1(SampledFunction(grid, grid.nodes.copy()), FractionalOrder(alpha)).values
    assert np.allclose(got, exact, rtol=1e-9, atol=1e-12)


@given(alphas, st.integers(4, 80))
def test_uniform_l1_weights_decrease_with_lag(alpha, steps):
    grid = TimeGrid.uniform(1.0, steps)
    w = l1_weights(grid.nodes, steps, alpha)
    # w[j] grows as j approaches n (shorter lag)
    assert np.all(np.diff(w) > 0)


@given(st.floats(0.1, 0.95), st.lists(st.floats(0.0, 60.0), min_size=2, max_size=6, unique=True))
def test_mittag_leffler_monotone_on_negative_axis(alpha, xs):
    xs = sorted(xs)
    vals = [mittag_leffler(alpha, 1.0, -x) for x in xs]
    assert all(0 < v <= 1 for v in vals)
    assert all(a >= b for a, b in zip(vals, vals[1:]))


@given(alphas, st.floats(1.1, 4.0), st.floats(0.1, 5.0), st.floats(0.01, 50.0), st.floats(0.01, 50.0))
def test_t_star_applies_iff_above_threshold(alpha, p, c0, lam, a0):
    bound = t_star(CaseTag.POSITIVE, alpha, p, c0, a0, lam)
    thr = threshold(lam, c0, p)
    assert (bound is not None) == (a0 > thr)
    if bound is not None:
        assert bound > 0 and bound >= t_star(CaseTag.NONPOSITIVE, alpha, p, c0, a0, 0.0)


@given(alphas, st.floats(1.1, 4.0), st.floats(0.1, 5.0), st.floats(0.1, 10.0), st.floats(1.01, 3.0))
def test_t_star_decreases_in_mass(alpha, p, c0, a0, factor):
    lo = t_star(CaseTag.NONPOSITIVE, alpha, p, c0, a0, 0.0)
    hi = t_star(CaseTag.NONPOSITIVE, alpha, p, c0, a0 * factor, 0.0)
    assert hi < lo


@given(st.floats(0.02, 0.98), st.floats(1e-3, 5.0), st.floats(1e-2, 10.0), st.floats(0.1, 10.0))
def test_power_bound_for_lower_solution(alpha, q, horizon, a0):
    rep = verify_lemma3(LowerSolutionParams(a0, q, horizon), FractionalOrder(alpha), 12)
    assert rep.holds


@given(st.floats(1.1, 4.0), st.floats(0.1, 3.0),
       st.lists(st.floats(0.0, 10.0), min_size=2, max_size=8), st.lists(st.floats(0.01, 1.0), min_size=8, max_size=8))
def test_source_jensen(p, c0, xs, raw_w):
    f = Nonlinearity.power_plus_linear(c0, p, slope=0.5, offset=0.1)
    x = np.array(xs)
    w = np.array(raw_w[: x.size])
    w = w / w.sum()
    assert float(f(np.dot(w, x))) <= float(np.dot(w, f(x))) * (1 + 1e-12) + 1e-12


@given(st.floats(0.2, 0.9), st.floats(0.1, 1.0), st.floats(1.0, 2.0))
def test_fode_ordered_in_initial_value(alpha, a0, factor):
    order = FractionalOrder(alpha)
    f = Nonlinearity.pure_power(1.0, 2.0)
    grid = TimeGrid.for_order(0.5, 200, order)
    y_lo, s_lo = solve_semilinear_fode(semilinear_ivp(order, a0, f), grid)
    y_hi, s_hi = solve_semilinear_fode(semilinear_ivp(order, a0 * factor, f), grid)
    n = min(y_lo.values.size, y_hi.values.size)
    if s_lo.t_blowup is None and s_hi.t_blowup is None:
        assert np.all(y_hi.values[:n] >= y_lo.values[:n] - 1e-12)
    if s_hi.t_blowup is not None and s_lo.t_blowup is not None:
        assert s_hi.t_blowup <= s_lo.t_blowup


@given(st.dictionaries(st.from_regex(r"[a-z][a-z0-9_]{0,10}", fullmatch=True),
                       st.one_of(st.floats(allow_nan=False, allow_infinity=False), st.integers(), st.booleans()),
                       max_size=6))
def test_record_round_trip(items):
    back = parse_record(format_record(items))
    assert set(back) == set(items)
    for key, value in items.items():
        if isinstance(value, float):
            assert float(back[key]) == value
        else:
            assert back[key] == str(value)
