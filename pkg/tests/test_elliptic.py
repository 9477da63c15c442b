from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from fracblowup.elliptic import (BoundaryCondition, CoefficientField, GridFunction, SpatialGrid,
                                 assemble, assemble_adjoint, principal_eigenpair, weighted_mass)
from fracblowup.errors import EllipticityError, ShapeError

DIRICHLET = BoundaryCondition.dirichlet()
ROBIN = BoundaryCondition.robin()


def eig(grid, bc=DIRICHLET, **coeffs):
    return principal_eigenpair(assemble_adjoint(grid, CoefficientField.build(grid, **coeffs), bc))


def test_grid_basics():
    g = SpatialGrid.interval(2.0, 9)
    assert g.spacing == (0.2,)
    assert g.shape(DIRICHLET.kind) == (9,) and g.shape(ROBIN.kind) == (11,)
    # trapezoid weights; the zero boundary values drop out
    assert g.weights(DIRICHLET.kind).sum() == pytest.approx(9 * 0.2)
    assert g.weights(ROBIN.kind).sum() == pytest.approx(2.0)
    g2 = SpatialGrid.rectangle((1.0, 2.0), (7, 9))
    assert g2.weights(ROBIN.kind).sum() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        SpatialGrid.interval(1.0, 2)


def test_dirichlet_laplacian_eigenpair():
    pair = eig(SpatialGrid.interval(1.0, 255))
    assert pair.lambda1 == pytest.approx(math.pi**2, rel=2e-5)
    x = pair.phi1.grid.coordinates(DIRICHLET.kind)[0]
    assert np.max(np.abs(pair.phi1.values - 0.5 * math.pi * np.sin(math.pi * x))) < 1e-4
    assert pair.phi1.integral() == pytest.approx(1.0, abs=1e-13)
    assert pair.residual < 1e-8


def test_constant_potential_shifts_eigenvalue_only():
    g = SpatialGrid.interval(1.0, 127)
    base = eig(g)
    shifted = eig(g, c=10.0)
    assert shifted.lambda1 == pytest.approx(base.lambda1 - 10.0, abs=1e-8)
    assert np.max(np.abs(shifted.phi1.values - base.phi1.values)) < 1e-8


def test_robin_eigenvalue_matches_transcendental_root():
    # -phi'' = k^2 phi, phi' = sigma phi at 0 and -phi' = sigma phi at 1: k tan(k/2) = sigma
    sigma = 1.0
    k = brentq(lambda k: k * math.tan(k / 2) - sigma, 1e-6, math.pi - 1e-6)
    pair = eig(SpatialGrid.interval(1.0, 255), ROBIN, sigma=sigma)
    assert pair.lambda1 == pytest.approx(k * k, rel=1e-4)
    assert np.all(pair.phi1.values > 0)


def test_robin_eigenvalue_increases_with_sigma():
    g = SpatialGrid.interval(1.0, 63)
    values = [eig(g, ROBIN, sigma=s).lambda1 for s in (0.0, 0.5, 2.0, 10.0, 1000.0)]
    assert values[0] == pytest.approx(0.0, abs=1e-10)
    assert np.all(np.diff(values) > 0)
    assert values[-1] < math.pi**2


def test_neumann_eigenfunction_is_constant():
    pair = eig(SpatialGrid.interval(1.0, 31), ROBIN, sigma=0.0)
    assert np.allclose(pair.phi1.values, 1.0, atol=1e-10)


def test_adjoint_robin_coefficient_reported():
    pair = eig(SpatialGrid.interval(1.0, 31), ROBIN, sigma=2.0, b=0.5)
    report = pair.report()
    assert "adjoint_sigma_x0_min = 2.5" in report
    assert "adjoint_sigma_x1_max = 1.5" in report


def _duality_gap(n):
    g = SpatialGrid.interval(1.0, n)
    coeffs = CoefficientField.build(g, a11=lambda x: 1 + 0.5 * x, b=lambda x: np.cos(x), c=lambda x: x)
    a, a_star = assemble(g, coeffs, DIRICHLET), assemble_adjoint(g, coeffs, DIRICHLET)
    x = g.coordinates(DIRICHLET.kind)[0]
    u = np.sin(math.pi * x)
    v = x * (1 - x) * np.exp(x)
    w = g.weights(DIRICHLET.kind)
    return abs(np.sum(w * (a @ u) * v) - np.sum(w * u * (a_star @ v)))


def test_adjoint_duality_is_second_order():
    coarse, fine = _duality_gap(63), _duality_gap(127)
    assert fine < coarse
    assert coarse / fine == pytest.approx(4.0, rel=0.25)


def test_two_dimensional_laplacian():
    pair = eig(SpatialGrid.rectangle((1.0, 1.0), (31, 31)))
    assert pair.lambda1 == pytest.approx(2 * math.pi**2, rel=2e-3)
    assert pair.phi1.values.shape == (31, 31)


def test_two_dimensional_cross_diffusion_runs():
    pair = eig(SpatialGrid.rectangle((1.0, 1.0), (21, 21)), a12=0.3)
    assert pair.lambda1 > 0 and np.all(pair.phi1.values > 0)


def test_robin_with_cross_diffusion_rejected():
    g = SpatialGrid.rectangle((1.0, 1.0), (7, 7))
    with pytest.raises(ValueError):
        assemble(g, CoefficientField.build(g, a12=0.2, sigma=1.0), ROBIN)


def test_ellipticity_enforced():
    g = SpatialGrid.interval(1.0, 9)
    with pytest.raises(EllipticityError):
        CoefficientField.build(g, a11=lambda x: x - 0.5)


def test_eigenpair_needs_adjoint():
    g = SpatialGrid.interval(1.0, 9)
    with pytest.raises(ValueError):
        principal_eigenpair(assemble(g, CoefficientField.build(g), DIRICHLET))


def test_weighted_mass():
    pair = eig(SpatialGrid.interval(1.0, 511))
    a = GridFunction.sample(pair.phi1.grid, DIRICHLET.kind, lambda x: np.sin(math.pi * x))
    assert weighted_mass(a, pair.phi1) == pytest.approx(math.pi / 4, rel=1e-5)
    other = GridFunction.sample(SpatialGrid.interval(1.0, 63), DIRICHLET.kind, lambda x: x)
    with pytest.raises(ShapeError):
        weighted_mass(other, pair.phi1)
