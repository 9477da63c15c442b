"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Reference numbers were computed with an independent mpmath script (30
digits), not with this package.
"""

from __future__ import annotations

import dataclasses
import math
import time
from pathlib import Path

import numpy as np
import pytest

from fracblowup.blowup import Verdict, lower_solution_margin, run_pipeline
from fracblowup.cli import main
from fracblowup.config import build_problem, load_config, parse_config
from fracblowup.elliptic import BoundaryCondition, CoefficientField, SpatialGrid, assemble_adjoint, principal_eigenpair
from fracblowup.fode import Status, solve_linear_fode
from fracblowup.fpde import jensen_check
from fracblowup.fracops import FractionalOrder, SampledFunction, TimeGrid, caputo_l1
from fracblowup.validation import comparison_suite, lower_solution_suite

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

CAPUTO_T2_AT_1 = 1.5045055561273501  # 8 / (3 sqrt(pi))
# E_{1/2}(-t^{1/2}) = exp(t) erfc(sqrt(t)); sampled on eleven points of [0, 1]
ML_TIMES = np.linspace(0.0, 1.0, 11)
CASE_I_BOUND = {0.3: 1.376245296401349, 0.5: 1.273239544735163, 0.7: 1.167115642416904}
CASE_II_BOUND = 0.0124066  # stated to six significant digits; exact value 0.0124067293...
TOL_REL = 0.05


def _case_i_problem(alpha):
    text = (CONFIGS / "case_i.ini").read_text().replace("alpha = 0.5", f"alpha = {alpha!r}")
    return build_problem(parse_config(text, CONFIGS / "case_i.ini"))


@pytest.fixture(scope="module")
def case_i_runs():
    runs = {}
    for alpha in sorted(CASE_I_BOUND):
        start = time.perf_counter()
        res = run_pipeline(_case_i_problem(alpha))
        runs[alpha] = (res, time.perf_counter() - start)
    return runs


@pytest.fixture(scope="module")
def case_ii_run():
    start = time.perf_counter()
    res = run_pipeline(build_problem(load_config(CONFIGS / "case_ii.ini")))
    return res, time.perf_counter() - start


def test_criterion_01_caputo_kernel(acceptance):
    start = time.perf_counter()
    order = FractionalOrder(0.5)
    errs = []
    for n in (1024, 2048):
        grid = TimeGrid.uniform(1.0, n)
        d = caputo_l1(SampledFunction(grid, grid.nodes**2), order)
        errs.append(abs(d.values[-1] - CAPUTO_T2_AT_1) / CAPUTO_T2_AT_1)
    elapsed = time.perf_counter() - start
    ratio = errs[0] / errs[1]
    ok = errs[0] <= 1e-2 and abs(ratio / 2**1.5 - 1) <= 0.2 and elapsed < 1.0
    acceptance(1, ok, f"rel err N=1024 {errs[0]:.3e}, ratio {ratio:.3f} (target 2.828 +-20%), {elapsed:.3f} s")
    assert ok


def test_criterion_02_linear_fode_vs_mittag_leffler(acceptance):
    order = FractionalOrder(0.5)
    grid = TimeGrid.for_order(1.0, 2000, order)
    start = time.perf_counter()
    y = solve_linear_fode(order, 1.0, 1.0, SampledFunction(grid, np.zeros(grid.nodes.size)))
    elapsed = time.perf_counter() - start
    fine = np.linspace(0.0, 1.0, 2001)
    exact_fine = np.exp(fine) * np.array([math.erfc(math.sqrt(t)) for t in fine])
    exact_nodes = np.exp(grid.nodes) * np.array([math.erfc(math.sqrt(t)) for t in grid.nodes])
    err_nodes = float(np.max(np.abs(y.values - exact_nodes)))
    err_fine = float(np.max(np.abs(np.interp(fine, grid.nodes, y.values) - exact_fine)))
    err = max(err_nodes, err_fine)
    ok = err <= 1e-3 and elapsed < 1.0
    acceptance(2, ok, f"max err on [0,1] {err:.3e} (nodes {err_nodes:.3e}), solve {elapsed:.3f} s")
    assert ok


def test_criterion_03_eigenpair(acceptance):
    start = time.perf_counter()
    grid = SpatialGrid.interval(1.0, 511)
    bc = BoundaryCondition.dirichlet()
    pair = principal_eigenpair(assemble_adjoint(grid, CoefficientField.build(grid), bc))
    elapsed = time.perf_counter() - start
    x = grid.coordinates(bc.kind)[0]
    lam_err = abs(pair.lambda1 - math.pi**2) / math.pi**2
    phi_err = float(np.max(np.abs(pair.phi1.values - 0.5 * math.pi * np.sin(math.pi * x))))
    ok = lam_err <= 1e-3 and phi_err <= 1e-3 and elapsed < 1.0
    acceptance(3, ok, f"lambda rel err {lam_err:.3e}, phi max err {phi_err:.3e}, {elapsed:.3f} s")
    assert ok


def test_criterion_04_power_bound_suite(acceptance):
    start = time.perf_counter()
    res = lower_solution_suite(np.random.default_rng(20240), triples=100, points=50, slack_tol=1e-10)
    elapsed = time.perf_counter() - start
    ok = res.passed == res.total == 100 and elapsed < 30.0
    acceptance(4, ok, f"{res.passed}/{res.total} triples, {elapsed:.2f} s")
    assert ok, res.counterexample


def test_criterion_05_comparison_suite(acceptance):
    start = time.perf_counter()
    res = comparison_suite(np.random.default_rng(20241), pairs=50, tol=1e-8)
    elapsed = time.perf_counter() - start
    ok = res.passed == res.total == 50 and elapsed < 60.0
    acceptance(5, ok, f"{res.passed}/{res.total} pairs ordered, {elapsed:.2f} s")
    assert ok, res.counterexample


def test_criterion_06_case_i_end_to_end(acceptance, case_i_runs):
    parts, ok = [], True
    for alpha, (res, elapsed) in sorted(case_i_runs.items()):
        bound = CASE_I_BOUND[alpha]
        rep = res.report
        good = (rep.status is Status.BLOWUP and rep.t_num <= bound * (1 + TOL_REL) and elapsed < 120.0
                and res.certificate.t_star == pytest.approx(bound, rel=1e-12) and res.verdict is Verdict.PASS)
        ok &= good
        parts.append(f"alpha={alpha}: t_num {rep.t_num:.6f} <= {bound * (1 + TOL_REL):.6f} ({elapsed:.2f} s)")
    acceptance(6, ok, "; ".join(parts))
    assert ok


def test_criterion_07_case_ii_end_to_end(acceptance, case_ii_run):
    res, elapsed = case_ii_run
    rep = res.report
    limit = CASE_II_BOUND * (1 + TOL_REL)
    ok = (rep.status is Status.BLOWUP and rep.t_num <= limit and elapsed < 120.0
          and res.initial.a0 == pytest.approx(20.0) and res.verdict is Verdict.PASS)
    acceptance(7, ok, f"lambda1 {res.eigenpair.lambda1:.6f}, t_num {rep.t_num:.7f} <= {limit:.7f} ({elapsed:.2f} s)")
    assert ok


def test_criterion_08_jensen(acceptance, case_i_runs, case_ii_run):
    runs = [res for res, _ in case_i_runs.values()] + [case_ii_run[0]]
    deficits = [jensen_check(r.trajectory, r.eigenpair.phi1, r.problem.nonlinearity, tol=1e-8) for r in runs]
    worst = min(d.min_deficit for d in deficits)
    stored = sum(d.deficits.size for d in deficits)
    ok = all(d.holds for d in deficits) and worst >= -1e-8
    acceptance(8, ok, f"min deficit {worst:.3e} over {stored} stored steps of 4 runs")
    assert ok


def test_criterion_09_lower_solution(acceptance, case_i_runs):
    res, _ = case_i_runs[0.5]
    margin = lower_solution_margin(res.trajectory, res.certificate, res.report.t_num, fraction=0.9)
    others = {a: lower_solution_margin(r.trajectory, r.certificate, r.report.t_num)
              for a, (r, _) in case_i_runs.items() if a != 0.5}
    ok = margin >= -1e-2
    acceptance(9, ok, f"min(eta - lower) on [0, 0.9 t_num] = {margin:.3e} (alpha=0.3: {others[0.3]:.3e}, "
                      f"alpha=0.7: {others[0.7]:.3e})")
    assert ok


def test_criterion_10_determinism(acceptance, tmp_path, capsys):
    outputs = []
    for name in ("first", "second"):
        code = main(["simulate", "--config", str(CONFIGS / "case_i.ini"), "--out", str(tmp_path / name)])
        outputs.append((code, (tmp_path / name / "eta.csv").read_bytes()))
    capsys.readouterr()
    ok = outputs[0][0] == outputs[1][0] == 0 and outputs[0][1] == outputs[1][1]
    acceptance(10, ok, f"eta.csv {len(outputs[0][1])} bytes, identical: {outputs[0][1] == outputs[1][1]}")
    assert ok
