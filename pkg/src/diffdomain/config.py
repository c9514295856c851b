"""Experiment configuration: TOML with flat dotted keys, validated into an ExperimentConfig."""
from __future__ import annotations

import dataclasses
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .extension import ExtensionMode, ProblemSpec, get_problem
from .fem import StructuredGrid
from .geometry import ImplicitDomain, PhaseField, make_circle, make_flower
from .solver import PRECONDITIONERS, SolverOptions
from .timestep import TimeGrid

log = logging.getLogger(__name__)

OUTPUT_ENV = "DIFFDOMAIN_OUTPUT_DIR"
OUTPUT_FORMATS = ("csv", "vtk", "none")

# Every accepted key with its default. ``None`` means "derived" or "unset".
DEFAULTS: dict[str, Any] = {
    "problem.id": "example1",
    "domain.kind": "circle",
    "domain.cx": 0.0,
    "domain.cy": 0.0,
    "domain.radius": 0.25,
    "domain.r0": 0.175,
    "domain.amplitude": 0.03,
    "domain.frequency": 4,
    "domain.vertices": 4096,
    "grid.x0": -0.5,
    "grid.x1": 0.5,
    "grid.y0": -0.5,
    "grid.y1": 0.5,
    "grid.nx": 64,
    "grid.ny": None,
    "time.T": 0.5,
    "time.steps": 64,
    "sweep.epsilons": ["1/8", "1/16"],
    "phase.floor": 1e-8,
    "quadrature.order": 4,
    "solver.preconditioner": "jacobi",
    "solver.tol": 1e-10,
    "solver.max_iter": 20000,
    "extension.g": None,
    "output.dir": "runs",
    "output.format": "csv",
    "run.workers": 1,
    "run.bitwise": True,
    "debug.matrices": False,
}


def flatten(table: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """Nested TOML tables to ``a.b`` keys. Lists are leaves."""
    out: dict[str, Any] = {}
    for key, value in table.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def parse_epsilon(value) -> float:
    """Accept 0.125, "0.125" or "1/8"."""
    if isinstance(value, bool):
        raise ConfigurationError(f"epsilon must be a number, got {value!r}")
    try:
        eps = float(Fraction(value)) if isinstance(value, str) else float(value)
    except (ValueError, ZeroDivisionError, TypeError):
        raise ConfigurationError(f"cannot read epsilon {value!r}") from None
    if not (math.isfinite(eps) and eps > 0):
        raise ConfigurationError(f"epsilon must be positive and finite, got {value!r}")
    return eps


def check_halving(epsilons) -> None:
    for a, b in zip(epsilons[:-1], epsilons[1:]):
        if not math.isclose(a, 2.0 * b, rel_tol=1e-9):
            raise ConfigurationError(f"epsilon sequence must halve at every step; got {a:g} then {b:g}")


@dataclass(frozen=True)
class ExperimentConfig:
    problem_id: str = DEFAULTS["problem.id"]
    domain_kind: str = DEFAULTS["domain.kind"]
    domain_params: dict = field(default_factory=dict)
    bounds: tuple = (-0.5, 0.5, -0.5, 0.5)
    nx: int = 64
    ny: int = 64
    T: float = 0.5
    steps: int = 64
    epsilons: tuple = (0.125, 0.0625)
    floor: float = 1e-8
    quadrature_order: int = 4
    solver: SolverOptions = field(default_factory=SolverOptions)
    g_mode: str | None = None
    output_dir: Path = Path("runs")
    output_format: str = "csv"
    workers: int = 1
    bitwise: bool = True
    debug_matrices: bool = False
    source: str = "<defaults>"

    # -- builders ---------------------------------------------------------

    def problem(self) -> ProblemSpec:
        spec = get_problem(self.problem_id)
        return spec.with_modes(g=self.g_mode) if self.g_mode else spec

    def domain(self) -> ImplicitDomain:
        p = self.domain_params
        centre = (p["cx"], p["cy"])
        if self.domain_kind == "circle":
            return make_circle(centre, p["radius"], p["vertices"])
        return make_flower(p["r0"], p["amplitude"], p["frequency"], centre, p["vertices"])

    def grid(self) -> StructuredGrid:
        x0, x1, y0, y1 = self.bounds
        return StructuredGrid(x0, x1, y0, y1, self.nx, self.ny)

    def timegrid(self) -> TimeGrid:
        return TimeGrid(self.T, self.steps)

    def phase_field(self, domain: ImplicitDomain, epsilon: float) -> PhaseField:
        return PhaseField(domain, epsilon, self.floor)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> list[str]:
        """Raise on hard errors; return warnings (also logged)."""
        warnings = []
        domain = self.domain()
        x0, x1, y0, y1 = self.bounds
        lo = domain.boundary.min(axis=0)
        hi = domain.boundary.max(axis=0)
        h = min((x1 - x0) / self.nx, (y1 - y0) / self.ny)
        for eps in self.epsilons:
            if eps > domain.inradius:
                raise ConfigurationError(
                    f"epsilon {eps:g} exceeds the domain inradius {domain.inradius:g}")
            if eps > domain.min_curvature_radius / 2:
                warnings.append(f"epsilon {eps:g} exceeds half the smallest curvature radius "
                                f"({domain.min_curvature_radius / 2:.4g}); normals may cross inside the band")
            if h > eps / 4:
                warnings.append(f"grid spacing {h:.4g} does not resolve epsilon {eps:g} (want h <= eps/4)")
            if lo[0] - eps < x0 or lo[1] - eps < y0 or hi[0] + eps > x1 or hi[1] + eps > y1:
                warnings.append(f"band of width {eps:g} around the domain leaves the grid")
        for w in warnings:
            log.warning(w)
        return warnings


def _require(flat, key, kind):
    value = flat[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{key} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{key} must be a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigurationError(f"{key} must be finite")
        return float(value)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key} must be true or false, got {value!r}")
        return value
    if not isinstance(value, str):
        raise ConfigurationError(f"{key} must be a string, got {value!r}")
    return value


def from_mapping(raw: Mapping[str, Any], source: str = "<mapping>", env: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Build and check a config from a (possibly nested) mapping of keys."""
    flat = flatten(raw)
    unknown = sorted(set(flat) - set(DEFAULTS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    merged = dict(DEFAULTS)
    merged.update(flat)
    if merged["grid.ny"] is None:
        merged["grid.ny"] = merged["grid.nx"]

    kind = _require(merged, "domain.kind", str)
    if kind not in ("circle", "flower"):
        raise ConfigurationError(f"domain.kind must be 'circle' or 'flower', got {kind!r}")
    params = {k: _require(merged, f"domain.{k}", float) for k in ("cx", "cy", "radius", "r0", "amplitude")}
    params["frequency"] = _require(merged, "domain.frequency", int)
    params["vertices"] = _require(merged, "domain.vertices", int)
    if params["vertices"] < 16:
        raise ConfigurationError("domain.vertices must be at least 16")

    bounds = tuple(_require(merged, f"grid.{k}", float) for k in ("x0", "x1", "y0", "y1"))
    if not (bounds[0] < bounds[1] and bounds[2] < bounds[3]):
        raise ConfigurationError(f"grid bounds are empty: {bounds}")
    nx, ny = _require(merged, "grid.nx", int), _require(merged, "grid.ny", int)
    if nx < 1 or ny < 1:
        raise ConfigurationError("grid.nx and grid.ny must be positive")

    eps_raw = merged["sweep.epsilons"]
    if not isinstance(eps_raw, (list, tuple)) or not eps_raw:
        raise ConfigurationError("sweep.epsilons must be a non-empty list")
    epsilons = tuple(parse_epsilon(e) for e in eps_raw)
    check_halving(epsilons)

    order = _require(merged, "quadrature.order", int)
    if not 1 <= order <= 10:
        raise ConfigurationError(f"quadrature.order must lie in 1..10, got {order}")
    prec = _require(merged, "solver.preconditioner", str)
    if prec not in PRECONDITIONERS:
        raise ConfigurationError(f"solver.preconditioner must be one of {PRECONDITIONERS}")
    solver = SolverOptions(_require(merged, "solver.tol", float), _require(merged, "solver.max_iter", int), prec)

    g_mode = merged["extension.g"]
    if g_mode is not None:
        try:
            g_mode = ExtensionMode(g_mode).value
        except ValueError:
            raise ConfigurationError(f"extension.g must be one of {[m.value for m in ExtensionMode]}") from None

    fmt = _require(merged, "output.format", str)
    if fmt not in OUTPUT_FORMATS:
        raise ConfigurationError(f"output.format must be one of {OUTPUT_FORMATS}, got {fmt!r}")
    env = os.environ if env is None else env
    out_dir = Path(env.get(OUTPUT_ENV) or _require(merged, "output.dir", str))

    workers = _require(merged, "run.workers", int)
    if workers < 1:
        raise ConfigurationError("run.workers must be at least 1")
    floor = _require(merged, "phase.floor", float)
    if not 0 <= floor < 1:
        raise ConfigurationError("phase.floor must lie in [0, 1)")

    cfg = ExperimentConfig(
        problem_id=_require(merged, "problem.id", str),
        domain_kind=kind,
        domain_params=params,
        bounds=bounds,
        nx=nx,
        ny=ny,
        T=_require(merged, "time.T", float),
        steps=_require(merged, "time.steps", int),
        epsilons=epsilons,
        floor=floor,
        quadrature_order=order,
        solver=solver,
        g_mode=g_mode,
        output_dir=out_dir,
        output_format=fmt,
        workers=workers,
        bitwise=_require(merged, "run.bitwise", bool),
        debug_matrices=_require(merged, "debug.matrices", bool),
        source=source,
    )
    cfg.problem()
    cfg.grid()
    cfg.timegrid()
    return cfg


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("diffdomain.presets").iterdir() if p.name.endswith(".toml"))


def load_config(path_or_preset: str | os.PathLike, env: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Read a TOML file, or a shipped preset by name (e.g. ``quick_table1_circle``)."""
    path = Path(path_or_preset)
    if path.is_file():
        text = path.read_bytes()
        source = str(path)
    else:
        name = str(path_or_preset)
        res = resources.files("diffdomain.presets") / f"{name}.toml"
        if not res.is_file():
            raise ConfigurationError(f"no config file or preset named {name!r}; presets: {', '.join(preset_names())}")
        text = res.read_bytes()
        source = f"preset:{name}"
    try:
        raw = tomllib.loads(text.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    return from_mapping(raw, source, env)
