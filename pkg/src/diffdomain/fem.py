"""Weighted Q1 finite elements on a uniform rectangular grid.

Cells are classified once per phase field. Cells whose every point sits
deeper than the tanh saturation distance get constant weights (1 inside,
the floor outside) and skip the distance query altogether; since the
cut-offs are where the profile rounds to its limit, the fast path changes
nothing but run time.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss

from .errors import ConfigurationError
from .extension import ExtensionMode, ProblemSpec, boundary_values, extend_field
from .geometry import ClosestPoint, PhaseField, profile_slope, profile_weight, saturation_distance

log = logging.getLogger(__name__)

CHUNK_CELLS = 8192
# weight level below which exterior quadrature points are dropped from the load
NEGLIGIBLE_WEIGHT = 1e-20

CELL_INTERIOR = 0
CELL_TRANSITION = 1
CELL_EXTERIOR = 2


@dataclass(frozen=True)
class StructuredGrid:
    x0: float = -0.5
    x1: float = 0.5
    y0: float = -0.5
    y1: float = 0.5
    nx: int = 64
    ny: int = 64

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigurationError(f"grid needs at least 2 cells per axis, got {self.nx}x{self.ny}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ConfigurationError("grid bounds must satisfy x1 > x0 and y1 > y0")

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / self.nx

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / self.ny

    @property
    def num_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def num_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def node_coordinates(self) -> np.ndarray:
        """(num_nodes, 2), x index fastest."""
        xs = self.x0 + self.hx * np.arange(self.nx + 1)
        ys = self.y0 + self.hy * np.arange(self.ny + 1)
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    @cached_property
    def cells(self) -> np.ndarray:
        """Corner node ids per cell, local order (0,0), (1,0), (1,1), (0,1)."""
        ci, cj = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        n0 = (cj * (self.nx + 1) + ci).ravel()
        return np.stack([n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1], axis=1)

    def cell_origins(self, cells=None) -> np.ndarray:
        idx = np.arange(self.num_cells) if cells is None else np.asarray(cells)
        i = idx % self.nx
        j = idx // self.nx
        return np.stack([self.x0 + self.hx * i, self.y0 + self.hy * j], axis=1)

    def nearest_node(self, point) -> int:
        i = int(round((point[0] - self.x0) / self.hx))
        j = int(round((point[1] - self.y0) / self.hy))
        i = min(max(i, 0), self.nx)
        j = min(max(j, 0), self.ny)
        return j * (self.nx + 1) + i


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Legendre rule on the reference cell [0,1]^2 with Q1 basis tables."""

    order: int = 4
    points: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.order <= 12:
            raise ConfigurationError(f"quadrature order must be in [1, 12], got {self.order}")
        g, w = leggauss(self.order)
        g = 0.5 * (g + 1.0)
        w = 0.5 * w
        qx, qy = np.meshgrid(g, g, indexing="xy")
        object.__setattr__(self, "points", np.stack([qx.ravel(), qy.ravel()], axis=1))
        object.__setattr__(self, "weights", np.outer(w, w).ravel())

    @property
    def size(self) -> int:
        return len(self.weights)

    @cached_property
    def basis(self) -> np.ndarray:
        """(nq, 4) shape-function values."""
        x, y = self.points[:, 0], self.points[:, 1]
        return np.stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y], axis=1)

    @cached_property
    def basis_gradient(self) -> np.ndarray:
        """(nq, 4, 2) reference gradients."""
        x, y = self.points[:, 0], self.points[:, 1]
        gx = np.stack([-(1 - y), 1 - y, y, -y], axis=1)
        gy = np.stack([-(1 - x), -x, x, 1 - x], axis=1)
        return np.stack([gx, gy], axis=2)

    def mass_table(self) -> np.ndarray:
        """(nq, 16): phi_a * phi_b per point."""
        b = self.basis
        return (b[:, :, None] * b[:, None, :]).reshape(self.size, 16)

    def stiffness_table(self, hx: float, hy: float) -> np.ndarray:
        """(nq, 16): grad phi_a . grad phi_b per point on an hx-by-hy cell."""
        gx = self.basis_gradient[:, :, 0] / hx
        gy = self.basis_gradient[:, :, 1] / hy
        return (gx[:, :, None] * gx[:, None, :] + gy[:, :, None] * gy[:, None, :]).reshape(self.size, 16)


def _chunks(n: int, size: int):
    return [(lo, min(lo + size, n)) for lo in range(0, n, size)]


def _map_chunks(fn, n: int, workers: int, bitwise: bool):
    """Apply ``fn(lo, hi)`` over cell ranges and return results in ascending order.

    With ``bitwise`` the ranges have a fixed size, so results cannot depend
    on the worker count.
    """
    size = CHUNK_CELLS if bitwise else max(CHUNK_CELLS, -(-n // max(workers, 1)))
    ranges = _chunks(n, size)
    if workers <= 1 or len(ranges) == 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))


class CellQuadrature:
    """Phase-field data at the quadrature points of a grid, computed once.

    Attributes of the transition cells (``self.transition``, shape (nt,)) are
    stored per point: coordinates, signed distance, weight, slope and the
    closest boundary point with its normal.
    """

    def __init__(self, grid: StructuredGrid, pf: PhaseField, rule: QuadratureRule | None = None,
                 workers: int = 1, bitwise: bool = True):
        self.grid = grid
        self.pf = pf
        self.rule = rule or QuadratureRule()
        self.workers = workers
        self.bitwise = bitwise

        eps = pf.epsilon
        half_diag = 0.5 * np.hypot(grid.hx, grid.hy)
        centres = grid.cell_origins() + 0.5 * np.array([grid.hx, grid.hy])
        d_c = pf.domain.signed_distance(centres)
        cls = np.full(grid.num_cells, CELL_TRANSITION, dtype=np.int8)
        cls[d_c + half_diag <= -pf.interior_saturation] = CELL_INTERIOR
        cls[d_c - half_diag >= saturation_distance(eps, NEGLIGIBLE_WEIGHT)] = CELL_EXTERIOR
        self.cell_class = cls
        self.transition = np.flatnonzero(cls == CELL_TRANSITION)

        X, Y = self.coordinates(self.transition)
        pts = np.stack([X, Y], axis=-1)
        cp = pf.domain.closest_point(pts)
        self.X, self.Y = X, Y
        self.closest: ClosestPoint = cp
        self.distance = cp.distance
        self.omega = profile_weight(cp.distance, eps)
        self.slope = profile_slope(cp.distance, eps)
        log.debug("cell classes: %d interior, %d transition, %d exterior",
                  np.sum(cls == CELL_INTERIOR), len(self.transition), np.sum(cls == CELL_EXTERIOR))

    def coordinates(self, cells):
        org = self.grid.cell_origins(cells)
        q = self.rule.points
        X = org[:, 0:1] + self.grid.hx * q[None, :, 0]
        Y = org[:, 1:2] + self.grid.hy * q[None, :, 1]
        return X, Y

    def weights(self, lo: int, hi: int, floored: bool = True) -> np.ndarray:
        """(hi-lo, nq) phase weights for a contiguous cell range."""
        cls = self.cell_class[lo:hi]
        floor = self.pf.floor if floored else 0.0
        w = np.where((cls == CELL_INTERIOR)[:, None], 1.0, floor).repeat(self.rule.size, axis=1)
        w = np.ascontiguousarray(w, dtype=float)
        tr = np.flatnonzero(cls == CELL_TRANSITION)
        if tr.size:
            pos = np.searchsorted(self.transition, lo + tr)
            om = self.omega[pos]
            w[tr] = np.maximum(om, floor) if floored else om
        return w


def _csr_pattern(grid: StructuredGrid):
    """CSR structure of the Q1 matrix and the slot of every (cell, a, b) entry."""
    conn = grid.cells
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    n = grid.num_nodes
    key = rows.astype(np.int64) * n + cols
    uniq, slot = np.unique(key, return_inverse=True)
    r = (uniq // n).astype(np.int32)
    c = (uniq % n).astype(np.int32)
    indptr = np.zeros(n + 1, dtype=np.int32)
    np.cumsum(np.bincount(r, minlength=n), out=indptr[1:])
    return indptr, c, slot.reshape(-1, 16)


_PATTERNS: dict = {}


def csr_pattern(grid: StructuredGrid):
    key = (grid.nx, grid.ny)
    if key not in _PATTERNS:
        _PATTERNS.clear()
        _PATTERNS[key] = _csr_pattern(grid)
    return _PATTERNS[key]


def _assemble(grid: StructuredGrid, local_fn, workers: int, bitwise: bool) -> sp.csr_matrix:
    indptr, indices, slot = csr_pattern(grid)
    parts = _map_chunks(local_fn, grid.num_cells, workers, bitwise)
    vals = np.concatenate(parts).ravel()
    data = np.bincount(slot.ravel(), weights=vals, minlength=len(indices))
    return sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(grid.num_nodes, grid.num_nodes))


def _quadrature(grid, pf, rule, cq, workers, bitwise) -> CellQuadrature:
    if cq is not None:
        return cq
    return CellQuadrature(grid, pf, rule, workers=workers, bitwise=bitwise)


def assemble_weighted_mass(grid: StructuredGrid, pf: PhaseField, rule: QuadratureRule | None = None, *,
                           cq: CellQuadrature | None = None, workers: int = 1, bitwise: bool = True) -> sp.csr_matrix:
    """M_ij = sum over cells and points of w |cell| max(omega, floor) phi_i phi_j."""
    cq = _quadrature(grid, pf, rule, cq, workers, bitwise)
    table = cq.rule.mass_table() * grid.cell_area
    qw = cq.rule.weights

    def local(lo, hi):
        return (cq.weights(lo, hi) * qw) @ table

    return _assemble(grid, local, workers, bitwise)


def assemble_weighted_stiffness(grid: StructuredGrid, pf: PhaseField, spec: ProblemSpec,
                                rule: QuadratureRule | None = None, t: float = 0.0, *,
                                cq: CellQuadrature | None = None, workers: int = 1,
                                bitwise: bool = True) -> sp.csr_matrix:
    """K_ij = sum over cells and points of w |cell| A max(omega, floor) grad phi_i . grad phi_j.

    ``t`` is accepted for interface stability; A does not depend on time.
    """
    cq = _quadrature(grid, pf, rule, cq, workers, bitwise)
    table = cq.rule.stiffness_table(grid.hx, grid.hy) * grid.cell_area
    qw = cq.rule.weights

    def local(lo, hi):
        X, Y = cq.coordinates(np.arange(lo, hi))
        coef = extend_field(spec, pf.domain, "A", t, np.stack([X, Y], axis=-1))
        return (cq.weights(lo, hi) * coef * qw) @ table

    return _assemble(grid, local, workers, bitwise)


class LoadAssembler:
    """Per-step load vector F(t) with all time-independent factors cached.

    F_i = sum w |cell| (f~ omega + g~ |grad omega|) phi_i. The source term
    runs over every cell that is not deep exterior; the boundary term only
    over points where the extended g can be non-zero.
    """

    def __init__(self, cq: CellQuadrature, spec: ProblemSpec):
        self.cq = cq
        self.spec = spec
        grid, rule, pf = cq.grid, cq.rule, cq.pf
        self.n = grid.num_nodes
        wq = rule.weights * grid.cell_area

        active = np.flatnonzero(cq.cell_class != CELL_EXTERIOR)
        self.f_cells = active
        self.f_nodes = grid.cells[active]
        full = np.concatenate([cq.weights(lo, hi, floored=False) for lo, hi in _chunks(grid.num_cells, CHUNK_CELLS)])
        self.f_weight = full[active] * wq
        self.f_X, self.f_Y = cq.coordinates(active)
        if spec.modes["f"] is ExtensionMode.CLOSEST_POINT_CONSTANT:
            pts = np.stack([self.f_X, self.f_Y], axis=-1)
            self.f_pts = extend_points(pf, pts)
        else:
            self.f_pts = None

        slope = cq.slope
        keep = slope >= NEGLIGIBLE_WEIGHT
        if spec.modes["g"] is ExtensionMode.ZERO_OUTSIDE_BAND:
            keep &= np.abs(cq.distance) < pf.epsilon
        tc, tq = np.nonzero(keep)
        self.g_nodes = grid.cells[cq.transition[tc]]
        self.g_basis = rule.basis[tq]
        self.g_weight = (wq[tq] * slope[tc, tq])
        cp = cq.closest
        self.g_cp = ClosestPoint(cp.point[tc, tq], cp.normal[tc, tq], cp.distance[tc, tq], cp.ambiguous[tc, tq])
        self.g_x = np.stack([cq.X[tc, tq], cq.Y[tc, tq]], axis=-1)
        self.basis = rule.basis
        self._cached = None
        if spec.time_factor is not None:
            scale = spec.time_factor(0.0)
            if scale == 0.0:
                raise ConfigurationError("time_factor(0) must be non-zero")
            self._cached = (self.source_part(0.0) + self.boundary_part(0.0)) / scale

    def source_part(self, t: float) -> np.ndarray:
        if self.f_pts is not None:
            fv = self.spec.source(t, self.f_pts[..., 0], self.f_pts[..., 1])
        else:
            fv = self.spec.source(t, self.f_X, self.f_Y)
        local = (np.broadcast_to(fv, self.f_weight.shape) * self.f_weight) @ self.basis
        return np.bincount(self.f_nodes.ravel(), weights=local.ravel(), minlength=self.n)

    def boundary_part(self, t: float) -> np.ndarray:
        if self.g_weight.size == 0:
            return np.zeros(self.n)
        g = boundary_values(self.spec, t, self.g_x, self.g_cp, self.cq.pf.epsilon)
        local = (g * self.g_weight)[:, None] * self.g_basis
        return np.bincount(self.g_nodes.ravel(), weights=local.ravel(), minlength=self.n)

    def __call__(self, t: float) -> np.ndarray:
        if self._cached is not None:
            return self.spec.time_factor(t) * self._cached
        return self.source_part(t) + self.boundary_part(t)


def extend_points(pf: PhaseField, pts: np.ndarray) -> np.ndarray:
    """Replace points outside D by their closest boundary point."""
    cp = pf.domain.closest_point(pts)
    return np.where((cp.distance > 0)[..., None], cp.point, pts)


def assemble_load(grid: StructuredGrid, pf: PhaseField, spec: ProblemSpec,
                  rule: QuadratureRule | None = None, t: float = 0.0, *,
                  cq: CellQuadrature | None = None, workers: int = 1, bitwise: bool = True) -> np.ndarray:
    cq = _quadrature(grid, pf, rule, cq, workers, bitwise)
    return LoadAssembler(cq, spec)(t)


def write_coordinate_text(matrix: sp.spmatrix, path) -> None:
    """Debug export: one ``row col value`` line per stored entry."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")


def interpolate(grid: StructuredGrid, u: np.ndarray, pts) -> np.ndarray:
    """Evaluate the Q1 function with nodal values ``u`` at arbitrary points inside the grid."""
    pts = np.asarray(pts, dtype=float)
    sx = (pts[..., 0] - grid.x0) / grid.hx
    sy = (pts[..., 1] - grid.y0) / grid.hy
    i = np.clip(np.floor(sx).astype(np.int64), 0, grid.nx - 1)
    j = np.clip(np.floor(sy).astype(np.int64), 0, grid.ny - 1)
    fx = sx - i
    fy = sy - j
    n0 = j * (grid.nx + 1) + i
    return ((1 - fx) * (1 - fy) * u[n0] + fx * (1 - fy) * u[n0 + 1]
            + fx * fy * u[n0 + grid.nx + 2] + (1 - fx) * fy * u[n0 + grid.nx + 1])
