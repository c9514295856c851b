"""Implicit domains via signed distance, and the tanh phase-field weight.

Points are numpy arrays whose last axis has length 2; every query is
vectorized over the leading axes. Sign convention: negative inside.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit

from . import kernels
from .errors import ConfigurationError

DEFAULT_FLOWER_VERTICES = 4096
DEFAULT_CIRCLE_VERTICES = 4096
# KD-tree neighbours whose two adjacent segments are searched exactly.
_CANDIDATE_VERTICES = 8


class DomainKind(str, enum.Enum):
    CIRCLE = "circle"
    FLOWER = "flower"
    POLYLINE = "polyline"


class BandLabel(enum.IntEnum):
    DEEP_INTERIOR = 0
    BAND = 1
    DEEP_EXTERIOR = 2


@dataclass(frozen=True)
class ClosestPoint:
    point: np.ndarray
    normal: np.ndarray
    distance: np.ndarray
    ambiguous: np.ndarray


def _as_points(x) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.shape[-1] != 2:
        raise ValueError(f"points must have a trailing axis of length 2, got shape {pts.shape}")
    return pts


def _polygon_area(verts: np.ndarray) -> float:
    x, y = verts[:-1, 0], verts[:-1, 1]
    xn, yn = verts[1:, 0], verts[1:, 1]
    return 0.5 * float(np.sum(x * yn - xn * y))


@dataclass(frozen=True, eq=False)
class ImplicitDomain:
    """A bounded planar domain D known through its signed distance.

    ``boundary`` is a closed, counter-clockwise polyline (last vertex repeats
    the first). Circles answer queries analytically; the other kinds search
    the polyline.
    """

    kind: DomainKind
    params: Mapping[str, Any]
    boundary: np.ndarray
    outward_normals: bool = True
    _seg_normals: np.ndarray = field(init=False, repr=False)
    _vert_normals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.ascontiguousarray(self.boundary, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) < 4:
            raise ConfigurationError("boundary polyline needs at least 3 distinct vertices")
        diam = float(np.ptp(verts, axis=0).max())
        if np.linalg.norm(verts[0] - verts[-1]) > 1e-12 * diam:
            verts = np.vstack([verts, verts[:1]])
        verts[-1] = verts[0]
        if _polygon_area(verts) < 0:
            verts = np.ascontiguousarray(verts[::-1])
        verts.setflags(write=False)
        object.__setattr__(self, "boundary", verts)

        e = np.diff(verts, axis=0)
        seg_n = np.stack([e[:, 1], -e[:, 0]], axis=1)
        seg_n /= np.linalg.norm(seg_n, axis=1, keepdims=True)
        vert_n = seg_n + np.roll(seg_n, 1, axis=0)
        vert_n /= np.linalg.norm(vert_n, axis=1, keepdims=True)
        object.__setattr__(self, "_seg_normals", seg_n)
        object.__setattr__(self, "_vert_normals", vert_n)

    @property
    def num_segments(self) -> int:
        return len(self.boundary) - 1

    @cached_property
    def diameter(self) -> float:
        from scipy.spatial.distance import pdist

        v = self.boundary[:-1]
        step = max(1, len(v) // 512)
        return float(pdist(v[::step]).max())

    @cached_property
    def _tree(self) -> cKDTree:
        return cKDTree(self.boundary[:-1])

    @cached_property
    def inradius(self) -> float:
        """Distance from the boundary of the deepest interior point (approximate for polylines)."""
        if self.kind is DomainKind.CIRCLE:
            return float(self.params["radius"])
        if self.kind is DomainKind.FLOWER:
            return float(self.params["r0"] - self.params["amplitude"])
        lo, hi = self.boundary.min(axis=0), self.boundary.max(axis=0)
        g = np.stack(np.meshgrid(np.linspace(lo[0], hi[0], 129), np.linspace(lo[1], hi[1], 129)), axis=-1)
        return float(max(0.0, -self.signed_distance(g.reshape(-1, 2)).min()))

    @cached_property
    def min_curvature_radius(self) -> float:
        if self.kind is DomainKind.CIRCLE:
            return float(self.params["radius"])
        if self.kind is DomainKind.FLOWER:
            r0, a, k = self.params["r0"], self.params["amplitude"], self.params["frequency"]
            th = np.linspace(0.0, 2 * np.pi, 200001)
            r = r0 - a * np.sin(k * th)
            dr = -a * k * np.cos(k * th)
            d2r = a * k * k * np.sin(k * th)
            kappa = np.abs(r**2 + 2 * dr**2 - r * d2r) / (r**2 + dr**2) ** 1.5
            return float(1.0 / kappa.max())
        # circumradius of consecutive vertex triples
        a = self.boundary[:-1]
        b = np.roll(a, -1, axis=0)
        c = np.roll(a, -2, axis=0)
        ab = np.linalg.norm(b - a, axis=1)
        bc = np.linalg.norm(c - b, axis=1)
        ca = np.linalg.norm(a - c, axis=1)
        cross = np.abs((b - a)[:, 0] * (c - a)[:, 1] - (b - a)[:, 1] * (c - a)[:, 0])
        with np.errstate(divide="ignore"):
            rad = np.where(cross > 0, ab * bc * ca / (2 * cross), np.inf)
        return float(rad.min())

    # -- queries -------------------------------------------------------

    def contains(self, x) -> np.ndarray:
        """Implicit inside test (strict)."""
        pts = _as_points(x)
        if self.kind is DomainKind.CIRCLE:
            c = np.asarray(self.params["center"], dtype=float)
            return np.sum((pts - c) ** 2, axis=-1) < self.params["radius"] ** 2
        if self.kind is DomainKind.FLOWER:
            c = np.asarray(self.params["center"], dtype=float)
            rel = pts - c
            th = np.arctan2(rel[..., 1], rel[..., 0])
            rb = self.params["r0"] - self.params["amplitude"] * np.sin(self.params["frequency"] * th)
            return np.sum(rel**2, axis=-1) < rb**2
        return _crossing_inside(pts, self.boundary)

    def signed_distance(self, x) -> np.ndarray:
        pts = _as_points(x)
        if self.kind is DomainKind.CIRCLE:
            c = np.asarray(self.params["center"], dtype=float)
            return np.hypot(pts[..., 0] - c[0], pts[..., 1] - c[1]) - self.params["radius"]
        dist = self._polyline_query(pts)[2]
        return np.where(self.contains(pts), -dist, dist)

    def closest_point(self, x) -> ClosestPoint:
        pts = _as_points(x)
        if self.kind is DomainKind.CIRCLE:
            return self._circle_closest(pts)
        seg, t, dist, tie = self._polyline_query(pts)
        a = self.boundary[seg]
        e = self.boundary[seg + 1] - a
        p = a + t[..., None] * e
        n = self._seg_normals[seg].copy()
        at_start = t <= 0.0
        at_end = t >= 1.0
        n[at_start] = self._vert_normals[seg[at_start]]
        n[at_end] = self._vert_normals[(seg[at_end] + 1) % self.num_segments]
        # Off a vertex the distance gradient is radial from that vertex; the
        # averaged normal only fixes its orientation (and serves on the vertex itself).
        corner = at_start | at_end
        if np.any(corner):
            rel = pts[corner] - p[corner]
            r = np.hypot(rel[..., 0], rel[..., 1])
            off = r > 1e-12 * self.diameter
            radial = rel[off] / r[off][..., None]
            flip = np.sum(radial * n[corner][off], axis=-1) < 0
            radial[flip] *= -1.0
            sub = n[corner]
            sub[off] = radial
            n[corner] = sub
        inside = self.contains(pts)
        return ClosestPoint(p, n, np.where(inside, -dist, dist), tie)

    def _circle_closest(self, pts: np.ndarray) -> ClosestPoint:
        c = np.asarray(self.params["center"], dtype=float)
        radius = self.params["radius"]
        rel = pts - c
        r = np.hypot(rel[..., 0], rel[..., 1])
        centre = r == 0.0
        safe = np.where(centre, 1.0, r)
        n = rel / safe[..., None]
        # the centre is the medial axis: parameter angle 0 wins
        n[centre] = (1.0, 0.0)
        return ClosestPoint(c + radius * n, n, r - radius, centre)

    def _polyline_query(self, pts: np.ndarray):
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, 2)
        m = len(flat)
        nseg = self.num_segments
        seg = np.empty(m, dtype=np.int64)
        t = np.empty(m)
        dist = np.empty(m)
        tie = np.empty(m, dtype=np.uint8)
        k = min(_CANDIDATE_VERTICES, nseg)
        chunk = 1 << 18
        for lo in range(0, m, chunk):
            sl = slice(lo, min(lo + chunk, m))
            px = np.ascontiguousarray(flat[sl, 0])
            py = np.ascontiguousarray(flat[sl, 1])
            _, idx = self._tree.query(flat[sl], k=k)
            idx = np.asarray(idx, dtype=np.int64).reshape(len(px), k)
            cand = np.concatenate([(idx - 1) % nseg, idx], axis=1)
            cand = np.ascontiguousarray(np.sort(cand, axis=1))
            kernels.nearest_segment(
                px, py, self.boundary, cand, seg[sl], t[sl], dist[sl], tie[sl],
                1e-12, (1e-9 * self.diameter) ** 2,
            )
        return seg.reshape(shape), t.reshape(shape), dist.reshape(shape), tie.reshape(shape).astype(bool)


def _crossing_inside(pts: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Even-odd ray casting along +x."""
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, 2)
    inside = np.zeros(len(flat), dtype=bool)
    a = verts[:-1]
    b = verts[1:]
    for lo in range(0, len(flat), 4096):
        p = flat[lo:lo + 4096]
        px, py = p[:, 0:1], p[:, 1:2]
        straddle = (a[None, :, 1] > py) != (b[None, :, 1] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[None, :, 0] + (py - a[None, :, 1]) * (b[None, :, 0] - a[None, :, 0]) / (b[None, :, 1] - a[None, :, 1])
        hits = straddle & (px < xint)
        inside[lo:lo + 4096] = (np.count_nonzero(hits, axis=1) % 2) == 1
    return inside.reshape(shape)


# -- constructors -------------------------------------------------------


def make_circle(center=(0.0, 0.0), radius: float = 0.25, vertices: int = DEFAULT_CIRCLE_VERTICES) -> ImplicitDomain:
    if not radius > 0:
        raise ConfigurationError(f"circle radius must be positive, got {radius}")
    c = np.asarray(center, dtype=float)
    th = 2 * np.pi * np.arange(vertices) / vertices
    verts = c + radius * np.stack([np.cos(th), np.sin(th)], axis=1)
    return ImplicitDomain(DomainKind.CIRCLE, {"center": tuple(c), "radius": float(radius)}, verts)


def make_flower(r0: float = 0.175, amplitude: float = 0.03, frequency: int = 4,
                center=(0.0, 0.0), vertices: int = DEFAULT_FLOWER_VERTICES) -> ImplicitDomain:
    """Star-shaped domain ``r < r0 - amplitude * sin(frequency * theta)``."""
    if not (r0 > amplitude >= 0):
        raise ConfigurationError(f"flower needs r0 > amplitude >= 0, got r0={r0}, amplitude={amplitude}")
    if int(frequency) != frequency or frequency < 1:
        raise ConfigurationError(f"flower frequency must be a positive integer, got {frequency}")
    if vertices < 16:
        raise ConfigurationError("flower polyline needs at least 16 vertices")
    c = np.asarray(center, dtype=float)
    th = 2 * np.pi * np.arange(vertices) / vertices
    r = r0 - amplitude * np.sin(frequency * th)
    verts = c + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    params = {"r0": float(r0), "amplitude": float(amplitude), "frequency": int(frequency),
              "center": tuple(c), "vertices": int(vertices)}
    return ImplicitDomain(DomainKind.FLOWER, params, verts)


def make_polyline(points) -> ImplicitDomain:
    verts = np.asarray(points, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2:
        raise ConfigurationError("polyline points must be an (n, 2) array")
    if abs(_polygon_area(np.vstack([verts, verts[:1]]))) == 0.0:
        raise ConfigurationError("polyline encloses no area")
    return ImplicitDomain(DomainKind.POLYLINE, {"points": len(verts)}, verts)


def signed_distance(domain: ImplicitDomain, x) -> np.ndarray:
    return domain.signed_distance(x)


def closest_point(domain: ImplicitDomain, x) -> ClosestPoint:
    return domain.closest_point(x)


# -- phase field --------------------------------------------------------


def profile_weight(d, epsilon: float) -> np.ndarray:
    """(1 + tanh(-3 d / eps)) / 2, evaluated without cancellation."""
    return expit(-6.0 * np.asarray(d, dtype=float) / epsilon)


def profile_slope(d, epsilon: float) -> np.ndarray:
    """|d omega / d s| = (3 / (2 eps)) sech^2(3 d / eps)."""
    z = np.exp(-6.0 * np.abs(np.asarray(d, dtype=float)) / epsilon)
    return (6.0 / epsilon) * z / (1.0 + z) ** 2


def saturation_distance(epsilon: float, level: float) -> float:
    """Distance beyond which the exterior weight drops below ``level``."""
    return epsilon * math.log(1.0 / level - 1.0) / 6.0


# tanh(s) == 1.0 exactly in binary64 for s >= this value
_TANH_ONE = 19.1


@dataclass(frozen=True, eq=False)
class PhaseField:
    domain: ImplicitDomain
    epsilon: float
    floor: float = 1e-8

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if not self.floor >= 0:
            raise ConfigurationError(f"floor must be non-negative, got {self.floor}")

    @property
    def interior_saturation(self) -> float:
        """For d <= -this, the weight rounds to exactly 1.0."""
        return _TANH_ONE * self.epsilon / 3.0

    def weight(self, x) -> np.ndarray:
        return profile_weight(self.domain.signed_distance(x), self.epsilon)

    def floored_weight(self, x) -> np.ndarray:
        return np.maximum(self.weight(x), self.floor)

    def gradient(self, x):
        """Analytic gradient of the weight: ``-n(p(x)) * |grad omega|``."""
        cp = self.domain.closest_point(x)
        mag = profile_slope(cp.distance, self.epsilon)
        return -cp.normal * mag[..., None], mag

    def classify(self, x) -> np.ndarray:
        return classify_distance(self.domain.signed_distance(x), self.epsilon)


def classify_distance(d, epsilon: float) -> np.ndarray:
    d = np.asarray(d)
    out = np.full(d.shape, BandLabel.BAND, dtype=np.int8)
    out[d <= -epsilon] = BandLabel.DEEP_INTERIOR
    out[d >= epsilon] = BandLabel.DEEP_EXTERIOR
    return out


def phase_weight(pf: PhaseField, x) -> np.ndarray:
    return pf.weight(x)


def phase_weight_gradient(pf: PhaseField, x):
    return pf.gradient(x)


def classify_band(pf: PhaseField, x) -> np.ndarray:
    return pf.classify(x)
