r"""Finite-difference elliptic operators on intervals and rectangles.

The operator is

.. math::

    A v = -\sum_{i,j} \partial_i (a_{ij} \partial_j v) - \sum_j b_j \partial_j v - c v,

and its formal adjoint

.. math::

    A^* v = -\sum_{i,j} \partial_i (a_{ij} \partial_j v) + \sum_j \partial_j (b_j v) - c v.

Grids are node-centred with spacing ``L / (n + 1)``. Dirichlet problems keep
the ``n`` interior nodes per axis as unknowns; Robin problems keep all
``n + 2`` nodes and close the boundary rows on half (or quarter) control
volumes, which is the ghost-node elimination of a centred conormal
derivative with the ghost flux mirrored.

Quadrature over the domain is the composite midpoint rule on the dual
(control-volume) cells, i.e. nodal trapezoidal weights. The same weights are
used for the eigenfunction normalisation and every weighted integral.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, DegeneracyError, EllipticityError, ShapeError


class BoundaryKind(enum.Enum):
    DIRICHLET = "dirichlet"
    ROBIN = "robin"


@dataclass(frozen=True)
class BoundaryCondition:
    """Homogeneous Dirichlet ``u = 0`` or Robin ``d_nu_A u + sigma u = 0``.

    The Robin coefficient ``sigma`` is carried by :class:`CoefficientField`.
    """

    kind: BoundaryKind

    @classmethod
    def dirichlet(cls) -> BoundaryCondition:
        return cls(BoundaryKind.DIRICHLET)

    @classmethod
    def robin(cls) -> BoundaryCondition:
        return cls(BoundaryKind.ROBIN)

    @property
    def is_robin(self) -> bool:
        return self.kind is BoundaryKind.ROBIN


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform node-centred grid on ``[0, L]`` or ``[0, L1] x [0, L2]``.

    ``resolution`` counts interior nodes per axis.
    """

    extent: tuple[float, ...]
    resolution: tuple[int, ...]

    def __post_init__(self) -> None:
        extent = tuple(float(v) for v in np.atleast_1d(self.extent))
        resolution = tuple(int(v) for v in np.atleast_1d(self.resolution))
        if len(extent) not in (1, 2) or len(extent) != len(resolution):
            raise ShapeError("grids are one- or two-dimensional with one resolution per axis")
        if any(n < 3 for n in resolution):
            raise ShapeError(f"need at least 3 interior nodes per axis, got {resolution}")
        if any(length <= 0 for length in extent):
            raise ShapeError(f"extent must be positive, got {extent}")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "resolution", resolution)

    @classmethod
    def interval(cls, length: float, nodes: int) -> SpatialGrid:
        return cls((length,), (nodes,))

    @classmethod
    def rectangle(cls, lengths: tuple[float, float], nodes: tuple[int, int]) -> SpatialGrid:
        return cls(tuple(lengths), tuple(nodes))

    @property
    def dimension(self) -> int:
        return len(self.extent)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / (n + 1) for L, n in zip(self.extent, self.resolution))

    @property
    def full_shape(self) -> tuple[int, ...]:
        return tuple(n + 2 for n in self.resolution)

    def full_axes(self) -> list[np.ndarray]:
        return [np.linspace(0.0, L, n + 2) for L, n in zip(self.extent, self.resolution)]

    def axes(self, kind: BoundaryKind) -> list[np.ndarray]:
        if kind is BoundaryKind.ROBIN:
            return self.full_axes()
        return [ax[1:-1] for ax in self.full_axes()]

    def shape(self, kind: BoundaryKind) -> tuple[int, ...]:
        return tuple(ax.size for ax in self.axes(kind))

    def coordinates(self, kind: BoundaryKind) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(kind), indexing="ij"))

    def full_coordinates(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.full_axes(), indexing="ij"))

    def weights(self, kind: BoundaryKind) -> np.ndarray:
        """Quadrature weights on the unknown nodes (dual-cell volumes)."""
        per_axis = []
        for h, n in zip(self.spacing, self.resolution):
            if kind is BoundaryKind.ROBIN:
                w = np.full(n + 2, h)
                w[0] = w[-1] = 0.5 * h
            else:
                w = np.full(n, h)
            per_axis.append(w)
        if len(per_axis) == 1:
            return per_axis[0]
        return np.multiply.outer(per_axis[0], per_axis[1])


@dataclass(frozen=True)
class GridFunction:
    """Values on the unknown nodes of a grid for a given boundary kind."""

    grid: SpatialGrid
    kind: BoundaryKind
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        expected = self.grid.shape(self.kind)
        if values.size == math.prod(expected) and values.shape != expected:
            values = values.reshape(expected)
        if values.shape != expected:
            raise ShapeError(f"grid function needs shape {expected}, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(cls, grid: SpatialGrid, kind: BoundaryKind, func: Callable[..., np.ndarray]) -> GridFunction:
        coords = grid.coordinates(kind)
        return cls(grid, kind, np.broadcast_to(func(*coords), coords[0].shape))

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights(self.kind)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def integral(self) -> float:
        return float(np.sum(self.weights * self.values))

    def with_values(self, values: np.ndarray) -> GridFunction:
        return GridFunction(self.grid, self.kind, np.asarray(values).reshape(self.values.shape))

    def to_csv(self, path, value_name: str = "value") -> None:
        from .io import write_csv

        coords = self.grid.coordinates(self.kind)
        names = ["x", "y"][: self.grid.dimension]
        write_csv(path, names + [value_name], [c.ravel() for c in coords] + [self.flat])


Samples = Union[float, Callable[..., np.ndarray], np.ndarray]


def _sample_full(grid: SpatialGrid, value: Samples, name: str) -> np.ndarray:
    shape = grid.full_shape
    if callable(value):
        arr = np.broadcast_to(np.asarray(value(*grid.full_coordinates()), dtype=float), shape)
    else:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            arr = np.full(shape, float(arr))
    if arr.shape != shape:
        raise ShapeError(f"coefficient {name!r} needs samples of shape {shape}, got {arr.shape}")
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CoefficientField:
    """Coefficient samples at every grid node, boundary nodes included.

    ``sigma`` is only read on boundary nodes. ``kappa`` is the ellipticity
    constant: the smallest eigenvalue of ``(a_ij)`` over all nodes.
    """

    grid: SpatialGrid
    a11: np.ndarray
    a22: np.ndarray | None
    a12: np.ndarray | None
    b: tuple[np.ndarray, ...]
    c: np.ndarray
    sigma: np.ndarray | None
    kappa: float = field(init=False)

    def __post_init__(self) -> None:
        if self.grid.dimension == 1:
            kappa = float(np.min(self.a11))
        else:
            if self.a22 is None or self.a12 is None:
                raise ShapeError("two-dimensional problems need a22 and a12")
            mean = 0.5 * (self.a11 + self.a22)
            radius = np.sqrt((0.5 * (self.a11 - self.a22)) ** 2 + self.a12**2)
            kappa = float(np.min(mean - radius))
        if len(self.b) != self.grid.dimension:
            raise ShapeError("need one drift component per axis")
        if not kappa > 0:
            raise EllipticityError(f"diffusion matrix is not uniformly elliptic (kappa = {kappa:.3g})")
        object.__setattr__(self, "kappa", kappa)

    @classmethod
    def build(cls, grid: SpatialGrid, a11: Samples = 1.0, a22: Samples | None = None,
              a12: Samples = 0.0, b: Samples | Sequence[Samples] = 0.0, c: Samples = 0.0,
              sigma: Samples | None = None) -> CoefficientField:
        """Sample coefficients given as constants, callables of the coordinates or arrays."""
        dim = grid.dimension
        if isinstance(b, (list, tuple)):
            b_parts = list(b)
        else:
            b_parts = [b] * dim
        if len(b_parts) != dim:
            raise ShapeError(f"need {dim} drift components, got {len(b_parts)}")
        return cls(
            grid=grid,
            a11=_sample_full(grid, a11, "a11"),
            a22=_sample_full(grid, a11 if a22 is None else a22, "a22") if dim == 2 else None,
            a12=_sample_full(grid, a12, "a12") if dim == 2 else None,
            b=tuple(_sample_full(grid, part, f"b{k + 1}") for k, part in enumerate(b_parts)),
            c=_sample_full(grid, c, "c"),
            sigma=None if sigma is None else _sample_full(grid, sigma, "sigma"),
        )

    def diagonal(self, axis: int) -> np.ndarray:
        return self.a11 if axis == 0 else self.a22

    def replace(self, **changes) -> CoefficientField:
        """Resample selected coefficients, keeping the others."""
        current = dict(a11=self.a11, a22=self.a22, a12=self.a12, b=self.b, c=self.c, sigma=self.sigma)
        current.update(changes)
        if self.grid.dimension == 1:
            current["a22"] = None
        return CoefficientField.build(self.grid, **current)

    @property
    def c_norm(self) -> float:
        return float(np.max(np.abs(self.c)))


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse matrix of ``A`` or ``A*`` acting on flattened unknowns.

    ``boundary_sigma`` maps boundary sides (``"x0"``, ``"x1"``, ``"y0"``,
    ``"y1"``) to the Robin coefficient actually imposed there; for ``A*``
    this is ``sigma - b . nu``.
    """

    matrix: sps.csr_matrix
    which: str
    grid: SpatialGrid
    bc: BoundaryCondition
    c_norm: float
    boundary_sigma: dict = field(default_factory=dict)

    @property
    def kind(self) -> BoundaryKind:
        return self.bc.kind

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights(self.kind).ravel()

    def __matmul__(self, v):
        if isinstance(v, GridFunction):
            return v.with_values(self.matrix @ v.flat)
        return self.matrix @ np.asarray(v)

    def apply(self, v):
        return self @ v


def assemble(grid: SpatialGrid, coeffs: CoefficientField, bc: BoundaryCondition) -> DiscreteOperator:
    """Discretise ``A`` with the given boundary condition."""
    return _assemble(grid, coeffs, bc, adjoint=False)


def assemble_adjoint(grid: SpatialGrid, coeffs: CoefficientField, bc: BoundaryCondition) -> DiscreteOperator:
    """Discretise ``A*``; Robin rows use the shifted coefficient ``sigma - b . nu``.

    The drift enters as ``b . grad v + (div b) v`` with ``div b`` from
    second-order differences of the samples.
    """
    return _assemble(grid, coeffs, bc, adjoint=True)


def _assemble(grid: SpatialGrid, coeffs: CoefficientField, bc: BoundaryCondition,
              adjoint: bool) -> DiscreteOperator:
    if coeffs.grid != grid:
        raise ShapeError("coefficients were sampled on a different grid")
    robin = bc.is_robin
    if robin and coeffs.sigma is None:
        raise ShapeError("Robin boundary condition needs sigma samples")
    if robin and grid.dimension == 2 and np.any(coeffs.a12 != 0):
        raise ValueError("mixed diffusion a12 is only supported with Dirichlet conditions")

    full = grid.full_shape
    mask = np.ones(full, dtype=bool)
    if not robin:
        mask[(slice(1, -1),) * grid.dimension] = False
        mask = ~mask
    index = -np.ones(full, dtype=np.int64)
    index[mask] = np.arange(int(mask.sum()))
    nodes = np.nonzero(mask)
    ids = index[nodes]
    size = ids.size

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    diag = np.zeros(size)

    def couple(sel: np.ndarray, target: tuple[np.ndarray, ...], coef: np.ndarray) -> None:
        tid = index[target]
        keep = tid >= 0
        rows.append(ids[sel][keep])
        cols.append(tid[keep])
        vals.append(coef[keep])

    boundary_sigma = {}
    for axis in range(grid.dimension):
        h = grid.spacing[axis]
        last = grid.resolution[axis] + 1
        a = coeffs.diagonal(axis)
        b = coeffs.b[axis]
        i = nodes[axis]

        def shifted(offset: int, sel: np.ndarray) -> tuple[np.ndarray, ...]:
            out = [n[sel] for n in nodes]
            out[axis] = out[axis] + offset
            return tuple(out)

        here = tuple(n for n in nodes)
        a_here = a[here]
        b_here = b[here]
        div_b = np.gradient(b, h, axis=axis, edge_order=2)[here] if adjoint else None

        inner = (i > 0) & (i < last)
        plus = shifted(1, inner)
        minus = shifted(-1, inner)
        a_plus = 0.5 * (a_here[inner] + a[plus])
        a_minus = 0.5 * (a_here[inner] + a[minus])
        diag[inner] += (a_plus + a_minus) / h**2
        drift = b_here[inner] / (2.0 * h)
        sign = 1.0 if adjoint else -1.0
        couple(inner, plus, -a_plus / h**2 + sign * drift)
        couple(inner, minus, -a_minus / h**2 - sign * drift)
        if adjoint:
            diag[inner] += div_b[inner]

        if robin:
            sigma = coeffs.sigma[here]
            for side, nu in ((0, -1.0), (last, 1.0)):
                sel = i == side
                s_eff = sigma[sel] - (nu * b_here[sel] if adjoint else 0.0)
                face = 0.5 * (a_here[sel] + a[shifted(-int(nu), sel)])
                diag[sel] += 2.0 * (face / h + s_eff) / h
                couple(sel, shifted(-int(nu), sel), -2.0 * face / h**2)
                # normal derivative from the boundary condition: d_x v = nu * (-s_eff / a) v
                slope = -nu * s_eff / a_here[sel]
                diag[sel] += (1.0 if adjoint else -1.0) * b_here[sel] * slope
                if adjoint:
                    diag[sel] += div_b[sel]
                name = "xy"[axis] + ("0" if nu < 0 else "1")
                boundary_sigma[name] = np.array(s_eff)

    if grid.dimension == 2 and coeffs.a12 is not None and np.any(coeffs.a12 != 0):
        a12 = coeffs.a12
        i, j = nodes
        scale = 1.0 / (4.0 * grid.spacing[0] * grid.spacing[1])
        corners = (
            (1, 1, a12[i + 1, j] + a12[i, j + 1]),
            (1, -1, -(a12[i + 1, j] + a12[i, j - 1])),
            (-1, 1, -(a12[i - 1, j] + a12[i, j + 1])),
            (-1, -1, a12[i - 1, j] + a12[i, j - 1]),
        )
        everyone = np.ones(size, dtype=bool)
        for di, dj, weight in corners:
            couple(everyone, (i + di, j + dj), -scale * weight)

    diag -= coeffs.c[nodes]
    rows.append(ids)
    cols.append(ids)
    vals.append(diag)
    matrix = sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size))
    matrix.sum_duplicates()
    return DiscreteOperator(matrix, "A_star" if adjoint else "A", grid, bc, coeffs.c_norm, boundary_sigma)


@dataclass(frozen=True)
class EigenPair:
    """Principal eigenvalue and positive eigenfunction with unit integral."""

    lambda1: float
    phi1: GridFunction
    residual: float
    iterations: int
    shift: float
    boundary_sigma: dict = field(default_factory=dict)

    def report(self) -> str:
        lines = [
            f"lambda1 = {self.lambda1!r}",
            f"residual = {self.residual!r}",
            f"iterations = {self.iterations}",
            f"shift = {self.shift!r}",
            f"boundary = {self.phi1.kind.value}",
            f"phi1_integral = {self.phi1.integral()!r}",
            f"phi1_min = {float(self.phi1.values.min())!r}",
        ]
        for side, sigma in sorted(self.boundary_sigma.items()):
            lines.append(f"adjoint_sigma_{side}_min = {float(np.min(sigma))!r}")
            lines.append(f"adjoint_sigma_{side}_max = {float(np.max(sigma))!r}")
        return "\n".join(lines) + "\n"


def principal_eigenpair(op: DiscreteOperator, tol: float = 1e-10, residual_tol: float = 1e-8,
                        max_iter: int = 10_000) -> EigenPair:
    r"""Eigenvalue of minimal real part of ``A*`` by shifted inverse iteration.

    The shift ``s = -2 ||c|| - 1`` makes ``A* - s I`` coercive, so inverse
    iteration on it converges to the principal pair. Convergence requires an
    eigenvalue increment below ``tol * max(1, |lambda|)`` and a residual
    ``||A* x - lambda x||_2`` (unit ``x``) below ``residual_tol``.
    """
    if op.which != "A_star":
        raise ValueError("principal_eigenpair expects the adjoint operator from assemble_adjoint")
    shift = -2.0 * op.c_norm - 1.0
    mat = op.matrix
    n = mat.shape[0]
    lu = splu((mat - shift * sps.identity(n, format="csr")).tocsc())
    x = np.full(n, 1.0 / math.sqrt(n))
    lam = math.inf
    residual = math.inf
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        x = y / np.linalg.norm(y)
        if x.sum() < 0:
            x = -x
        ax = mat @ x
        lam_new = float(x @ ax)
        residual = float(np.linalg.norm(ax - lam_new * x))
        scale = max(1.0, abs(lam_new))
        done = abs(lam_new - lam) < tol * scale and residual < residual_tol
        lam = lam_new
        if done:
            break
    else:
        raise ConvergenceError(
            f"inverse iteration did not converge in {max_iter} iterations (residual {residual:.3e})")

    weights = op.weights
    phi = x / float(weights @ x)
    if np.any(phi <= 0):
        raise DegeneracyError(
            f"principal eigenvector changes sign (min {phi.min():.3e}, max {phi.max():.3e})")
    phi_fn = GridFunction(op.grid, op.kind, phi)
    return EigenPair(lam, phi_fn, residual, it, shift, dict(op.boundary_sigma))


def weighted_mass(a: GridFunction, phi1: GridFunction) -> float:
    """Discrete integral of ``a * phi1`` (the weighted initial mass ``a0``)."""
    if a.grid != phi1.grid or a.kind is not phi1.kind or a.values.shape != phi1.values.shape:
        raise ShapeError("grid functions live on different grids")
    return float(np.sum(a.weights * a.values * phi1.values))
