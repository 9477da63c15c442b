"""INI run configuration.

Sections and keys (unknown sections or keys are rejected)::

    [fractional]    alpha
    [time]          steps, grid (graded | uniform), horizon (auto | float),
                    horizon_factor, fallback_horizon
    [space]         length (one value per axis), nodes (one value per axis)
    [coefficients]  a11, a22, a12, b (1D) or b1, b2 (2D), c, sigma
    [boundary]      kind (dirichlet | robin)
    [nonlinearity]  kind (pure_power | power_plus_linear | linear | zero),
                    c0, p, slope, offset
    [initial]       profile, a0, scale
    [solver]        blowup_cap, newton_tol, max_step_halvings, max_newton,
                    max_relative_change, method (newton | semi-implicit),
                    snapshot_limit, tol_rel, eigen_tol, residual_tol

Coefficients and the initial profile are *profiles*:

* a number, or ``constant:V``;
* ``sine-bump:A`` for ``A * prod sin(pi x_i / L_i)``;
* ``gaussian-bump:A,W[,X0[,Y0]]`` for ``A * exp(-|x - x0|^2 / (2 W^2))``,
  centred at the middle of the domain unless ``X0``/``Y0`` are given;
* ``table:FILE`` for a CSV with columns ``x,value`` (one-dimensional only),
  linearly interpolated; relative paths are resolved against the config file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blowup import Problem
from .elliptic import BoundaryCondition, CoefficientField, GridFunction, SpatialGrid
from .errors import ConfigError, FracBlowupError
from .fode import DEFAULT_BLOWUP_CAP, Nonlinearity

SCHEMA = {
    "fractional": {"alpha"},
    "time": {"steps", "grid", "horizon", "horizon_factor", "fallback_horizon"},
    "space": {"length", "nodes"},
    "coefficients": {"a11", "a22", "a12", "b", "b1", "b2", "c", "sigma"},
    "boundary": {"kind"},
    "nonlinearity": {"kind", "c0", "p", "slope", "offset"},
    "initial": {"profile", "a0", "scale"},
    "solver": {"blowup_cap", "newton_tol", "max_step_halvings", "max_newton", "max_relative_change",
               "method", "snapshot_limit", "tol_rel", "eigen_tol", "residual_tol"},
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration file; sections are plain string dictionaries."""

    path: Path | None
    sections: dict

    def has(self, section: str) -> bool:
        return section in self.sections

    def get(self, section: str, key: str, default=None, required: bool = False) -> str | None:
        values = self.sections.get(section, {})
        if key in values:
            return values[key]
        if required:
            if section not in self.sections:
                raise ConfigError(f"missing section [{section}] (needed for {section}.{key})")
            raise ConfigError(f"missing key {section}.{key}")
        return default

    def number(self, section: str, key: str, default=None, required: bool = False) -> float | None:
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected a number, got {raw!r}") from None

    def integer(self, section: str, key: str, default=None, required: bool = False) -> int | None:
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected an integer, got {raw!r}") from None

    def numbers(self, section: str, key: str, required: bool = False) -> list[float] | None:
        raw = self.get(section, key, None, required)
        if raw is None:
            return None
        try:
            return [float(part) for part in raw.split(",")]
        except ValueError:
            raise ConfigError(f"{section}.{key}: expected comma-separated numbers, got {raw!r}") from None

    def choice(self, section: str, key: str, options: tuple[str, ...], default: str | None = None,
               required: bool = False) -> str | None:
        raw = self.get(section, key, default, required)
        if raw is None:
            return None
        raw = raw.strip().lower()
        if raw not in options:
            raise ConfigError(f"{section}.{key}: expected one of {', '.join(options)}, got {raw!r}")
        return raw


def parse_config(text: str, path: Path | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path) if path else "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from None
    sections = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        items = dict(parser.items(name))
        for key in items:
            if key not in SCHEMA[name]:
                raise ConfigError(f"unknown key {name}.{key}")
        sections[name] = items
    return RunConfig(path, sections)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
    return parse_config(text, path)


# --------------------------------------------------------------------------
# profiles


def profile(spec: str, grid: SpatialGrid, where: str, base: Path | None = None):
    """Turn a profile string into a callable of the node coordinates."""
    spec = spec.strip()
    kind, _, args = spec.partition(":")
    kind = kind.strip().lower()
    lengths = grid.extent
    try:
        if not args:
            value = float(spec)
            return lambda *xs: np.full(np.shape(xs[0]), value)
        if kind == "constant":
            value = float(args)
            return lambda *xs: np.full(np.shape(xs[0]), value)
        nums = [float(a) for a in args.split(",")] if kind != "table" else []
    except ValueError:
        raise ConfigError(f"{where}: cannot read profile {spec!r}") from None

    if kind == "sine-bump":
        if len(nums) != 1:
            raise ConfigError(f"{where}: sine-bump takes one amplitude")
        amp = nums[0]

        def sine(*xs):
            out = np.full(np.shape(xs[0]), amp)
            for x, length in zip(xs, lengths):
                out = out * np.sin(np.pi * x / length)
            return out

        return sine
    if kind == "gaussian-bump":
        if not 2 <= len(nums) <= 2 + grid.dimension:
            raise ConfigError(f"{where}: gaussian-bump takes amplitude, width and optional centre")
        amp, width = nums[0], nums[1]
        if not width > 0:
            raise ConfigError(f"{where}: gaussian-bump width must be positive")
        centre = list(nums[2:]) + [0.5 * length for length in lengths[len(nums) - 2:]]

        def gauss(*xs):
            r2 = sum((x - c) ** 2 for x, c in zip(xs, centre))
            return amp * np.exp(-r2 / (2 * width**2))

        return gauss
    if kind == "table":
        if grid.dimension != 1:
            raise ConfigError(f"{where}: tabulated profiles are one-dimensional only")
        table_path = Path(args.strip())
        if base is not None and not table_path.is_absolute():
            table_path = base.parent / table_path
        try:
            data = np.loadtxt(table_path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{where}: cannot read table {table_path}: {exc}") from None
        if data.shape[1] != 2 or data.shape[0] < 2 or np.any(np.diff(data[:, 0]) <= 0):
            raise ConfigError(f"{where}: table needs increasing x and two columns x,value")
        xs_tab, vals = data[:, 0], data[:, 1]
        return lambda x: np.interp(x, xs_tab, vals)
    raise ConfigError(f"{where}: unknown profile kind {kind!r}")


# --------------------------------------------------------------------------
# builders


def build_space(cfg: RunConfig) -> SpatialGrid:
    lengths = cfg.numbers("space", "length", required=True)
    raw_nodes = cfg.get("space", "nodes", required=True)
    try:
        nodes = [int(n) for n in raw_nodes.split(",")]
    except ValueError:
        raise ConfigError(f"space.nodes: expected comma-separated integers, got {raw_nodes!r}") from None
    if len(lengths) != len(nodes) or len(nodes) not in (1, 2):
        raise ConfigError("space.length and space.nodes need one or two matching entries")
    try:
        if len(nodes) == 1:
            return SpatialGrid.interval(lengths[0], nodes[0])
        return SpatialGrid.rectangle((lengths[0], lengths[1]), (nodes[0], nodes[1]))
    except FracBlowupError as exc:
        raise ConfigError(f"space: {exc}") from None


def build_boundary(cfg: RunConfig) -> BoundaryCondition:
    kind = cfg.choice("boundary", "kind", ("dirichlet", "robin"), default="dirichlet")
    return BoundaryCondition.robin() if kind == "robin" else BoundaryCondition.dirichlet()


def build_coefficients(cfg: RunConfig, grid: SpatialGrid, bc: BoundaryCondition) -> CoefficientField:
    def prof(key: str, default: str | None):
        raw = cfg.get("coefficients", key, default)
        return None if raw is None else profile(raw, grid, f"coefficients.{key}", cfg.path)

    dim = grid.dimension
    if dim == 1:
        for key in ("a22", "a12", "b1", "b2"):
            if cfg.get("coefficients", key) is not None:
                raise ConfigError(f"coefficients.{key} is only valid for two-dimensional grids")
        b = prof("b", "0")
    else:
        if cfg.get("coefficients", "b") is not None:
            raise ConfigError("coefficients.b: use b1 and b2 on two-dimensional grids")
        b = (prof("b1", "0"), prof("b2", "0"))
    sigma = prof("sigma", None)
    if bc.is_robin and sigma is None:
        raise ConfigError("coefficients.sigma is required for a Robin boundary")
    if not bc.is_robin and sigma is not None:
        raise ConfigError("coefficients.sigma is only used with boundary.kind = robin")
    try:
        return CoefficientField.build(grid, a11=prof("a11", "1"), a22=prof("a22", None) if dim == 2 else None,
                                      a12=prof("a12", "0") if dim == 2 else 0.0, b=b, c=prof("c", "0"),
                                      sigma=sigma)
    except FracBlowupError as exc:
        raise ConfigError(f"coefficients: {exc}") from None


def build_nonlinearity(cfg: RunConfig) -> Nonlinearity:
    kind = cfg.choice("nonlinearity", "kind", ("pure_power", "power_plus_linear", "linear", "zero"),
                      required=True)
    c0 = cfg.number("nonlinearity", "c0", 1.0)
    p = cfg.number("nonlinearity", "p", 2.0)
    slope = cfg.number("nonlinearity", "slope", 0.0)
    offset = cfg.number("nonlinearity", "offset", 0.0)
    try:
        if kind == "pure_power":
            return Nonlinearity.pure_power(c0, p)
        if kind == "power_plus_linear":
            return Nonlinearity.power_plus_linear(c0, p, slope, offset)
        if kind == "linear":
            return Nonlinearity.linear(slope, offset)
        return Nonlinearity.zero()
    except FracBlowupError as exc:
        raise ConfigError(f"nonlinearity: {exc}") from None


def build_profile(cfg: RunConfig, grid: SpatialGrid, bc: BoundaryCondition) -> GridFunction:
    raw = cfg.get("initial", "profile", required=True)
    func = profile(raw, grid, "initial.profile", cfg.path)
    samples = GridFunction.sample(grid, bc.kind, func)
    if np.any(samples.values < 0) or not np.any(samples.values > 0):
        raise ConfigError("initial.profile must be nonnegative and not identically zero")
    return samples


def _positive(cfg: RunConfig, section: str, key: str, default: float) -> float:
    value = cfg.number(section, key, default)
    if not value > 0:
        raise ConfigError(f"{section}.{key} must be positive, got {value!r}")
    return value


def build_problem(cfg: RunConfig) -> Problem:
    """Assemble a :class:`~fracblowup.blowup.Problem` from every section."""
    alpha = cfg.number("fractional", "alpha", required=True)
    if not 0 < alpha < 1:
        raise ConfigError(f"fractional.alpha must lie in (0, 1), got {alpha!r}")
    grid = build_space(cfg)
    bc = build_boundary(cfg)
    coeffs = build_coefficients(cfg, grid, bc)
    f = build_nonlinearity(cfg)
    prof = build_profile(cfg, grid, bc)

    steps = cfg.integer("time", "steps", 2000)
    if steps < 1:
        raise ConfigError("time.steps must be at least 1")
    kind = cfg.choice("time", "grid", ("graded", "uniform"), default="graded")
    raw_horizon = (cfg.get("time", "horizon", "auto") or "auto").strip().lower()
    horizon = None if raw_horizon == "auto" else _positive(cfg, "time", "horizon", 1.0)
    a0 = cfg.number("initial", "a0")
    if a0 is not None and not a0 > 0:
        raise ConfigError(f"initial.a0 must be positive, got {a0!r}")
    method = cfg.choice("solver", "method", ("newton", "semi-implicit"), default="newton")
    halvings = cfg.integer("solver", "max_step_halvings", 20)
    max_newton = cfg.integer("solver", "max_newton", 50)
    snapshot_limit = cfg.integer("solver", "snapshot_limit", 200)
    if halvings < 0 or max_newton < 1 or snapshot_limit < 2:
        raise ConfigError("solver: need max_step_halvings >= 0, max_newton >= 1, snapshot_limit >= 2")
    return Problem(
        alpha=alpha, nonlinearity=f, space=grid, coeffs=coeffs, bc=bc, profile=prof,
        a0_target=a0, a0_scale=_positive(cfg, "initial", "scale", 1.0),
        time_steps=steps, uniform_time=kind == "uniform", horizon=horizon,
        horizon_factor=_positive(cfg, "time", "horizon_factor", 1.5),
        fallback_horizon=_positive(cfg, "time", "fallback_horizon", 1.0),
        blowup_cap=_positive(cfg, "solver", "blowup_cap", DEFAULT_BLOWUP_CAP),
        newton_tol=_positive(cfg, "solver", "newton_tol", 1e-12),
        max_step_halvings=halvings, max_newton=max_newton,
        max_relative_change=_positive(cfg, "solver", "max_relative_change", 1.0),
        snapshot_limit=snapshot_limit, method=method,
        tol_rel=_positive(cfg, "solver", "tol_rel", 0.05),
    )


def eigen_tolerances(cfg: RunConfig) -> tuple[float, float]:
    return (_positive(cfg, "solver", "eigen_tol", 1e-10),
            _positive(cfg, "solver", "residual_tol", 1e-8))
