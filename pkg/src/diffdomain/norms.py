"""Weighted L2 / H1 errors on D and convergence-rate tables."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .fem import CELL_EXTERIOR, CELL_INTERIOR, CHUNK_CELLS, CellQuadrature, QuadratureRule, StructuredGrid
from .geometry import PhaseField


@dataclass
class ErrorReport:
    epsilon: float
    l2_error: float
    h1_error: float
    quadrature_points: int = 0
    seconds: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.l2_error) and math.isfinite(self.h1_error)):
            raise ValueError("error norms must be finite")


@dataclass
class SweepResult:
    reports: list[ErrorReport] = field(default_factory=list)

    @property
    def epsilons(self) -> list[float]:
        return [r.epsilon for r in self.reports]

    @property
    def l2_rates(self) -> list[float]:
        return convergence_rates([r.l2_error for r in self.reports])

    @property
    def h1_rates(self) -> list[float]:
        return convergence_rates([r.h1_error for r in self.reports])


def convergence_rates(errors: Sequence[float]) -> list[float]:
    """log2(e_k / e_{k+1}); NaN marks an undefined rate (non-positive entry)."""
    if len(errors) < 2:
        raise ValueError("need at least two errors to form a rate")
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else math.nan)
    return out


def _cells_in_domain(cq: CellQuadrature) -> np.ndarray:
    """Cells that may contain points of D."""
    return np.flatnonzero(cq.cell_class != CELL_EXTERIOR)


def _error_integrals(grid: StructuredGrid, cq: CellQuadrature, u_h: np.ndarray,
                     exact: Callable, exact_gradient: Callable | None, t: float):
    """Sums of omega (u_h - u)^2 and omega |grad(u_h - u)|^2 over quadrature points in D."""
    u_h = np.asarray(u_h, dtype=float)
    if u_h.shape != (grid.num_nodes,):
        raise ValueError(f"u_h must have {grid.num_nodes} entries, got shape {u_h.shape}")
    rule = cq.rule
    wq = rule.weights * grid.cell_area
    gx_ref = rule.basis_gradient[:, :, 0].T / grid.hx
    gy_ref = rule.basis_gradient[:, :, 1].T / grid.hy
    cells = _cells_in_domain(cq)
    l2_parts, h1_parts = [], []
    npts = 0
    for lo in range(0, len(cells), CHUNK_CELLS):
        c = cells[lo:lo + CHUNK_CELLS]
        X, Y = cq.coordinates(c)
        interior = cq.cell_class[c] == CELL_INTERIOR
        w = np.where(interior[:, None], 1.0, 0.0) * np.ones_like(X)
        tr = np.flatnonzero(~interior)
        if tr.size:
            pos = np.searchsorted(cq.transition, c[tr])
            inside = cq.distance[pos] < 0
            w[tr] = np.where(inside, cq.omega[pos], 0.0)
        w *= wq
        npts += int(np.count_nonzero(w))
        U = u_h[grid.cells[c]]
        diff = U @ rule.basis.T - exact(t, X, Y)
        l2_parts.append(np.sum(w * diff * diff, axis=1))
        if exact_gradient is not None:
            ex, ey = exact_gradient(t, X, Y)
            dx = U @ gx_ref - ex
            dy = U @ gy_ref - ey
            h1_parts.append(np.sum(w * (dx * dx + dy * dy), axis=1))
    l2 = float(np.sum(np.concatenate(l2_parts))) if l2_parts else 0.0
    semi = float(np.sum(np.concatenate(h1_parts))) if h1_parts else 0.0
    return l2, semi, npts


def _quad(grid, pf, rule, cq) -> CellQuadrature:
    return cq if cq is not None else CellQuadrature(grid, pf, rule)


def weighted_l2_error(grid: StructuredGrid, pf: PhaseField, u_h, exact: Callable | None, t: float,
                      rule: QuadratureRule | None = None, cq: CellQuadrature | None = None) -> float:
    """sqrt of the integral over D of omega (u_h - u)^2, omega never floored."""
    if exact is None:
        raise ConfigurationError("weighted L2 error needs an exact solution")
    l2, _, _ = _error_integrals(grid, _quad(grid, pf, rule, cq), u_h, exact, None, t)
    return math.sqrt(l2)


def weighted_h1_error(grid: StructuredGrid, pf: PhaseField, u_h, exact: Callable | None,
                      exact_gradient: Callable | None, t: float, rule: QuadratureRule | None = None,
                      cq: CellQuadrature | None = None) -> float:
    """Full weighted H1 norm of u_h - u on D."""
    if exact is None or exact_gradient is None:
        raise ConfigurationError("weighted H1 error needs an exact solution and its gradient")
    l2, semi, _ = _error_integrals(grid, _quad(grid, pf, rule, cq), u_h, exact, exact_gradient, t)
    return math.sqrt(l2 + semi)


def weighted_errors(grid: StructuredGrid, cq: CellQuadrature, u_h, exact, exact_gradient, t: float):
    """(l2, h1, points) in one pass."""
    l2, semi, npts = _error_integrals(grid, cq, u_h, exact, exact_gradient, t)
    return math.sqrt(l2), math.sqrt(l2 + semi), npts
