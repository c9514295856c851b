"""Problem data (A, f, g, u0) and its extension from D to the covering rectangle."""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import ConfigurationError
from .geometry import ClosestPoint, ImplicitDomain, PhaseField

PI2 = math.pi**2


class ExtensionMode(str, enum.Enum):
    ANALYTIC_GLOBAL = "analytic_global"
    CLOSEST_POINT_CONSTANT = "closest_point_constant"
    ZERO_OUTSIDE_BAND = "zero_outside_band"


FIELDS = ("f", "u0", "A", "g")

DEFAULT_MODES = {
    "f": ExtensionMode.ANALYTIC_GLOBAL,
    "u0": ExtensionMode.ANALYTIC_GLOBAL,
    "A": ExtensionMode.ANALYTIC_GLOBAL,
    "g": ExtensionMode.CLOSEST_POINT_CONSTANT,
}


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Data of u_t = div(A grad u) + f in D, A grad u . n = g on the boundary.

    ``neumann(t, px, py, nx, ny)`` receives a boundary point and its outward
    normal. ``exact`` and ``exact_gradient`` are optional and only needed for
    error measurement. When set, ``time_factor`` promises
    ``source(t, .) == time_factor(t) * source(0, .)`` and the same for
    ``neumann``; load assembly then caches the spatial part.
    """

    name: str
    diffusion: Callable
    source: Callable
    neumann: Callable
    initial: Callable
    kappa: float
    exact: Optional[Callable] = None
    exact_gradient: Optional[Callable] = None
    modes: Mapping[str, ExtensionMode] = field(default_factory=lambda: dict(DEFAULT_MODES))
    time_factor: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        modes = dict(DEFAULT_MODES)
        for key, value in dict(self.modes).items():
            if key not in FIELDS:
                raise ConfigurationError(f"unknown field {key!r} in extension modes")
            modes[key] = ExtensionMode(value)
        for key in ("f", "u0", "A"):
            if modes[key] is ExtensionMode.ZERO_OUTSIDE_BAND:
                raise ConfigurationError(f"mode zero_outside_band applies to boundary data only, not {key!r}")
        object.__setattr__(self, "modes", modes)
        if not 0 < self.kappa <= 1:
            raise ConfigurationError(f"kappa must lie in (0, 1], got {self.kappa}")

    def with_modes(self, **modes) -> "ProblemSpec":
        merged = dict(self.modes)
        merged.update(modes)
        return dataclasses.replace(self, modes=merged)

    def without_time_factor(self) -> "ProblemSpec":
        return dataclasses.replace(self, time_factor=None)

    @property
    def has_exact(self) -> bool:
        return self.exact is not None and self.exact_gradient is not None


def _broadcast(value, like) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), np.shape(like)).copy()


# -- built-in problems ----------------------------------------------------


def _decay(t: float) -> float:
    return math.exp(-PI2 * t)


def _example1() -> ProblemSpec:
    def a(x):
        return x * x + 2 * x

    def b(y):
        return y * y - 2 * y

    def exact(t, x, y):
        return np.exp(-PI2 * t) * a(x) * b(y)

    def grad(t, x, y):
        e = np.exp(-PI2 * t)
        return e * (2 * x + 2) * b(y), e * a(x) * (2 * y - 2)

    def source(t, x, y):
        ax, by = a(x), b(y)
        return -np.exp(-PI2 * t) * (PI2 * ax * by + 6 * ax + 6 * by)

    def neumann(t, px, py, nx, ny):
        gx, gy = grad(t, px, py)
        return 3.0 * (gx * nx + gy * ny)

    return ProblemSpec(
        "example1",
        diffusion=lambda x, y: _broadcast(3.0, x),
        source=source,
        neumann=neumann,
        initial=lambda x, y: exact(0.0, x, y),
        kappa=1.0 / 3.0,
        exact=exact,
        exact_gradient=grad,
        time_factor=_decay,
    )


def _example2() -> ProblemSpec:
    def a(x):
        return 2 * x * x - 4 * x

    def b(y):
        return 2 * y * y - 4 * y

    def diffusion(x, y):
        return x * x + y * y + 3.0

    def exact(t, x, y):
        return np.exp(-PI2 * t) * a(x) * b(y)

    def grad(t, x, y):
        e = np.exp(-PI2 * t)
        return e * (4 * x - 4) * b(y), e * a(x) * (4 * y - 4)

    def source(t, x, y):
        ax, by = a(x), b(y)
        coef = diffusion(x, y)
        return -np.exp(-PI2 * t) * (
            PI2 * ax * by
            + (4 * coef + 2 * x * (4 * x - 4)) * by
            + (4 * coef + 2 * y * (4 * y - 4)) * ax
        )

    def neumann(t, px, py, nx, ny):
        gx, gy = grad(t, px, py)
        return diffusion(px, py) * (gx * nx + gy * ny)

    return ProblemSpec(
        "example2",
        diffusion=diffusion,
        source=source,
        neumann=neumann,
        initial=lambda x, y: exact(0.0, x, y),
        kappa=0.25,
        exact=exact,
        exact_gradient=grad,
        time_factor=_decay,
    )


def constant_problem(f: float = 0.0, g: float = 0.0, u0: float = 0.0, A: float = 1.0,
                     name: str = "constant", modes: Mapping[str, str] | None = None) -> ProblemSpec:
    """Spatially constant data. With f = g = 0 the exact solution is u0 for all time."""
    exact = grad = None
    if f == 0.0 and g == 0.0:
        def exact(t, x, y):
            return _broadcast(u0, x)

        def grad(t, x, y):
            return np.zeros(np.shape(x)), np.zeros(np.shape(x))

    return ProblemSpec(
        name,
        diffusion=lambda x, y: _broadcast(A, x),
        source=lambda t, x, y: _broadcast(f, x),
        neumann=lambda t, px, py, nx, ny: _broadcast(g, px),
        initial=lambda x, y: _broadcast(u0, x),
        kappa=min(A, 1.0 / A),
        exact=exact,
        exact_gradient=grad,
        modes=dict(modes or {}),
        time_factor=lambda t: 1.0,
    )


CATALOG: dict[str, Callable[[], ProblemSpec]] = {
    "example1": _example1,
    "example2": _example2,
    "zero": lambda: constant_problem(name="zero"),
}


def get_problem(problem_id: str) -> ProblemSpec:
    try:
        return CATALOG[problem_id]()
    except KeyError:
        raise ConfigurationError(f"unknown problem id {problem_id!r}; known: {sorted(CATALOG)}") from None


# -- extension operators ----------------------------------------------------


def boundary_values(spec: ProblemSpec, t: float, x, cp: ClosestPoint, epsilon: float) -> np.ndarray:
    """Extended Neumann data from a precomputed closest-point query at ``x``."""
    pts = np.asarray(x, dtype=float)
    mode = spec.modes["g"]
    nx, ny = cp.normal[..., 0], cp.normal[..., 1]
    if mode is ExtensionMode.ANALYTIC_GLOBAL:
        return _broadcast(spec.neumann(t, pts[..., 0], pts[..., 1], nx, ny), nx)
    g = _broadcast(spec.neumann(t, cp.point[..., 0], cp.point[..., 1], nx, ny), nx)
    if mode is ExtensionMode.ZERO_OUTSIDE_BAND:
        g[np.abs(cp.distance) >= epsilon] = 0.0
    return g


def extend_boundary_data(spec: ProblemSpec, pf: PhaseField, t: float, x) -> np.ndarray:
    """g~(t, x): constant along normals, and zero off the band unless the mode says otherwise."""
    cp = pf.domain.closest_point(x)
    return boundary_values(spec, t, x, cp, pf.epsilon)


def extend_field(spec: ProblemSpec, domain: ImplicitDomain, field_id: str, t: float, x) -> np.ndarray:
    if field_id not in ("f", "u0", "A"):
        raise ConfigurationError(f"extend_field handles 'f', 'u0', 'A'; got {field_id!r}")
    pts = np.asarray(x, dtype=float)
    mode = spec.modes[field_id]

    def evaluate(p):
        if field_id == "f":
            return spec.source(t, p[..., 0], p[..., 1])
        if field_id == "u0":
            return spec.initial(p[..., 0], p[..., 1])
        return spec.diffusion(p[..., 0], p[..., 1])

    if mode is ExtensionMode.ANALYTIC_GLOBAL:
        return _broadcast(evaluate(pts), pts[..., 0])
    cp = domain.closest_point(pts)
    outside = cp.distance > 0
    src = np.where(outside[..., None], cp.point, pts)
    return _broadcast(evaluate(src), pts[..., 0])


def validate_problem(spec: ProblemSpec, pf: PhaseField, samples: int = 4096, seed: int = 0) -> None:
    """Check the ellipticity bounds on D_eps and, with an exact solution, Neumann compatibility."""
    dom = pf.domain
    lo = dom.boundary.min(axis=0) - pf.epsilon
    hi = dom.boundary.max(axis=0) + pf.epsilon
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(samples, 2))
    pts = pts[dom.signed_distance(pts) < pf.epsilon]
    coef = extend_field(spec, dom, "A", 0.0, pts)
    if coef.size and (coef.min() < spec.kappa or coef.max() > 1.0 / spec.kappa):
        raise ConfigurationError(
            f"diffusion coefficient range [{coef.min():.4g}, {coef.max():.4g}] "
            f"violates kappa bounds [{spec.kappa:.4g}, {1 / spec.kappa:.4g}] on D_eps"
        )
    if spec.has_exact:
        verts = dom.boundary[:-1:max(1, dom.num_segments // 256)]
        cp = dom.closest_point(verts)
        gx, gy = spec.exact_gradient(0.0, cp.point[:, 0], cp.point[:, 1])
        coef = spec.diffusion(cp.point[:, 0], cp.point[:, 1])
        flux = coef * (gx * cp.normal[:, 0] + gy * cp.normal[:, 1])
        g = spec.neumann(0.0, cp.point[:, 0], cp.point[:, 1], cp.normal[:, 0], cp.normal[:, 1])
        if np.max(np.abs(flux - g)) > 1e-10:
            raise ConfigurationError(f"Neumann data of {spec.name!r} is inconsistent with its exact solution")
