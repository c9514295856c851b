"""Brute-force reference computations used to cross-check the solver."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import ConfigurationError, NonFiniteSample
from .geometry import PhaseField, profile_weight
from .timestep import TimeGrid

DENSE_LIMIT = 5000
_SHARD = 1_000_000


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    samples: int
    seed: int

    def within(self, reference: float, sigmas: float = 3.0) -> bool:
        return abs(self.value - reference) <= sigmas * self.stderr


def mc_weighted_integral(integrand: Callable[[np.ndarray], np.ndarray], region, pf: PhaseField | None = None,
                         samples: int = 10**6, seed: int = 0, inside_only: bool = False) -> McEstimate:
    """Uniform Monte-Carlo estimate of the integral of ``integrand * omega`` over a rectangle.

    ``region`` is ``(x0, x1, y0, y1)``. Without ``pf`` the weight is 1. With
    ``inside_only`` samples outside D contribute zero. Shards draw from
    seeds spawned off ``seed``, so the estimate is reproducible.
    """
    if samples < 10**4:
        raise ConfigurationError("Monte-Carlo estimates need at least 1e4 samples")
    x0, x1, y0, y1 = map(float, region)
    area = (x1 - x0) * (y1 - y0)
    shards = -(-samples // _SHARD)
    seqs = np.random.SeedSequence(seed).spawn(shards)
    total = 0.0
    total_sq = 0.0
    done = 0
    for k, ss in enumerate(seqs):
        m = min(_SHARD, samples - done)
        rng = np.random.default_rng(ss)
        pts = np.column_stack([rng.uniform(x0, x1, m), rng.uniform(y0, y1, m)])
        vals = np.asarray(integrand(pts), dtype=float)
        if pf is not None:
            d = pf.domain.signed_distance(pts)
            w = profile_weight(d, pf.epsilon)
            if inside_only:
                w = w * (d < 0)
            vals = vals * w
        bad = ~np.isfinite(vals)
        if bad.any():
            p = pts[np.argmax(bad)]
            raise NonFiniteSample(f"integrand is not finite at {tuple(p)}", tuple(p))
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += m
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
    return McEstimate(mean * area, area * math.sqrt(var / samples), samples, seed)


def fd_gradient_check(field: Callable[[np.ndarray], np.ndarray], gradient: Callable[[np.ndarray], np.ndarray],
                      points, step: float) -> float:
    """Largest relative gap between ``gradient`` and central differences of ``field``."""
    if not step > 0:
        raise ConfigurationError("finite-difference step must be positive")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ex = np.array([step, 0.0])
    ey = np.array([0.0, step])
    fd = np.stack([(field(pts + ex) - field(pts - ex)) / (2 * step),
                   (field(pts + ey) - field(pts - ey)) / (2 * step)], axis=-1)
    an = np.asarray(gradient(pts), dtype=float).reshape(fd.shape)
    scale = np.maximum(np.linalg.norm(an, axis=-1), np.finfo(float).tiny)
    return float(np.max(np.linalg.norm(fd - an, axis=-1) / scale))


def dense_reference_solve(M, K, loads: Callable[[float], np.ndarray] | Sequence[np.ndarray],
                          timegrid: TimeGrid, u0) -> np.ndarray:
    """BE start + BDF2 with dense Cholesky solves; returns the state at T.

    ``loads`` is either a callable of time or a sequence holding F(t_1)...F(t_N).
    """
    M = M.toarray() if sp.issparse(M) else np.atleast_2d(np.asarray(M, dtype=float))
    K = K.toarray() if sp.issparse(K) else np.atleast_2d(np.asarray(K, dtype=float))
    n = M.shape[0]
    if n > DENSE_LIMIT:
        raise ConfigurationError(f"dense reference limited to {DENSE_LIMIT} unknowns, got {n}")
    dt = timegrid.dt

    def F(k):
        return np.asarray(loads(timegrid.time(k)) if callable(loads) else loads[k - 1], dtype=float)

    be = sla.cho_factor(M / dt + K)
    bdf = sla.cho_factor(1.5 / dt * M + K)
    u_prev = np.array(u0, dtype=float).reshape(n)
    u = sla.cho_solve(be, M @ u_prev / dt + F(1))
    for k in range(2, timegrid.num_steps + 1):
        u, u_prev = sla.cho_solve(bdf, M @ (4 * u - u_prev) / (2 * dt) + F(k)), u
    return u


def disk_monomial_integral(p: int, q: int, radius: float) -> float:
    """Integral of x^p y^q over the disk of given radius centred at the origin."""
    if p % 2 or q % 2:
        return 0.0
    angular = 2.0 * math.exp(math.lgamma((p + 1) / 2) + math.lgamma((q + 1) / 2) - math.lgamma((p + q + 2) / 2))
    return radius ** (p + q + 2) / (p + q + 2) * angular
