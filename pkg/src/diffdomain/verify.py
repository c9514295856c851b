"""Self-checks against independent oracles, run by ``diffdomain verify``."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import kernels
from .extension import constant_problem, get_problem
from .fem import (CellQuadrature, LoadAssembler, StructuredGrid, assemble_weighted_mass,
                  assemble_weighted_stiffness, interpolate)
from .geometry import PhaseField, make_circle, make_flower
from .norms import weighted_errors
from .oracle import dense_reference_solve, fd_gradient_check, mc_weighted_integral
from .solver import SolverOptions
from .timestep import TimeGrid, initialize, integrate


@dataclass
class CheckResult:
    name: str
    measured: float
    limit: float
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} measured={self.measured:.4g}  limit={self.limit:.4g}  {self.detail}"


def _band_points(domain, hi, n, seed, lo=0.0):
    """``n`` uniform samples of the shell lo < |d| < hi."""
    rng = np.random.default_rng(seed)
    pts = np.empty((0, 2))
    while len(pts) < n:
        cand = rng.uniform(-0.5, 0.5, size=(8 * n, 2))
        d = np.abs(domain.signed_distance(cand))
        pts = np.concatenate([pts, cand[(d > lo) & (d < hi)]])
    return pts[:n]


def eikonal_deviation(domain, n: int = 1000, seed: int = 0, step: float = 1e-7) -> float:
    """Largest | |grad d| - 1 | by central differences, 0.01 < |d| < 0.1, ties dropped."""
    pts = _band_points(domain, 0.1, n, seed, lo=0.01)
    pts = pts[~domain.closest_point(pts).ambiguous]
    ex, ey = np.array([step, 0.0]), np.array([0.0, step])
    gx = (domain.signed_distance(pts + ex) - domain.signed_distance(pts - ex)) / (2 * step)
    gy = (domain.signed_distance(pts + ey) - domain.signed_distance(pts - ey)) / (2 * step)
    return float(np.max(np.abs(np.hypot(gx, gy) - 1)))


def check_eikonal() -> CheckResult:
    dev = eikonal_deviation(make_flower())
    return CheckResult("eikonal |grad d| = 1", dev, 1e-2, dev <= 1e-2, "flower polyline, 1000 points")


def check_phase_gradient() -> CheckResult:
    pf = PhaseField(make_circle(), 1 / 32)
    pts = _band_points(pf.domain, pf.epsilon, 1000, 1)
    err = fd_gradient_check(pf.weight, lambda p: pf.gradient(p)[0], pts, 1e-7)
    return CheckResult("phase gradient vs FD", err, 1e-5, err <= 1e-5, "circle, eps=1/32")


def _total_load(spec, n, eps):
    pf = PhaseField(make_circle(), eps)
    cq = CellQuadrature(StructuredGrid(nx=n, ny=n), pf)
    return float(LoadAssembler(cq, spec)(0.0).sum())


def check_volume() -> CheckResult:
    eps, R = 1 / 32, 0.25
    exact = math.pi * R * R + math.pi**3 * eps**2 / 108
    got = _total_load(constant_problem(f=1.0, name="unit source"), 256, eps)
    err = abs(got - exact)
    return CheckResult("volume integral of omega", err, 1e-6, err <= 1e-6,
                       f"got {got:.10f}, closed form {exact:.10f}")


def check_coarea() -> CheckResult:
    spec = constant_problem(g=1.0, name="unit flux", modes={"g": "analytic_global"})
    got = _total_load(spec, 256, 1 / 32)
    err = abs(got - math.pi / 2)
    return CheckResult("co-area perimeter", err, 2e-3, err <= 2e-3, f"got {got:.8f}, pi/2 = {math.pi / 2:.8f}")


def scalar_decay_error(steps: int) -> float:
    """Error at t=1 of BE+BDF2 on u' = -u, u(0) = 1."""
    one = sp.csr_matrix(np.ones((1, 1)))
    sol = integrate(one, one, lambda t: np.zeros(1), np.ones(1), TimeGrid(1.0, steps),
                    SolverOptions(tol=1e-14))
    return abs(sol.final[0] - math.exp(-1.0))


def temporal_rate(steps=(32, 64, 128, 256, 512)) -> float:
    errs = [scalar_decay_error(n) for n in steps]
    slope = np.polyfit(np.log([1.0 / n for n in steps]), np.log(errs), 1)[0]
    return float(slope)


def check_temporal_order() -> CheckResult:
    rate = temporal_rate()
    return CheckResult("BDF2 temporal order", rate, 0.1, abs(rate - 2.0) <= 0.1, "target 2.0 +- 0.1")


def dense_oracle_gap(n: int = 8, epsilon: float = 1 / 8, steps: int = 16) -> float:
    spec = get_problem("example1")
    grid = StructuredGrid(nx=n, ny=n)
    pf = PhaseField(make_circle(), epsilon)
    cq = CellQuadrature(grid, pf)
    M = assemble_weighted_mass(grid, pf, cq=cq)
    K = assemble_weighted_stiffness(grid, pf, spec, cq=cq)
    load = LoadAssembler(cq, spec)
    u0 = initialize(grid, spec, pf)
    tg = TimeGrid(0.5, steps)
    sparse = integrate(M, K, load, u0, tg, SolverOptions(tol=1e-14)).final
    dense = dense_reference_solve(M, K, load, tg, u0)
    return float(np.linalg.norm(sparse - dense) / np.linalg.norm(dense))


def check_dense_oracle() -> CheckResult:
    gap = dense_oracle_gap()
    return CheckResult("sparse vs dense transient", gap, 1e-8, gap <= 1e-8, "8x8 grid")


def mc_norm_zscore(samples: int = 10**6, seed: int = 0) -> tuple[float, float, float]:
    """(quadrature L2^2, MC estimate, z-score) for a perturbed field on a 32x32 grid."""
    spec = get_problem("example1")
    grid = StructuredGrid(nx=32, ny=32)
    pf = PhaseField(make_circle(), 1 / 16)
    xy = grid.node_coordinates()
    t = 0.1
    u = spec.exact(t, xy[:, 0], xy[:, 1]) + 0.05 * np.random.default_rng(seed).standard_normal(len(xy))
    l2, _, _ = weighted_errors(grid, CellQuadrature(grid, pf), u, spec.exact, None, t)
    est = mc_weighted_integral(lambda p: (interpolate(grid, u, p) - spec.exact(t, p[:, 0], p[:, 1]))**2,
                               (grid.x0, grid.x1, grid.y0, grid.y1), pf, samples, seed, inside_only=True)
    return l2 * l2, est.value, (l2 * l2 - est.value) / est.stderr


def check_monte_carlo(samples: int = 10**6) -> CheckResult:
    q, mc, z = mc_norm_zscore(samples)
    return CheckResult("weighted L2 vs Monte-Carlo", abs(z), 3.0, abs(z) <= 3.0,
                       f"quadrature {q:.6e}, MC {mc:.6e} ({samples:.0e} samples)")


def check_backends() -> CheckResult:
    ref = kernels.load_backend("python")
    mine = kernels.load_backend(kernels.BACKEND)
    n = 40
    A = sp.diags([-1, 2.5, -1], [-1, 0, 1], shape=(n * n, n * n)) + sp.diags([-0.5, -0.5], [-n, n], shape=(n * n, n * n))
    A = sp.csr_matrix(A)
    b = np.random.default_rng(3).standard_normal(n * n)
    out = []
    for mod in (ref, mine):
        x = np.zeros(n * n)
        a, bt = np.zeros(500), np.zeros(500)
        mod.pcg_csr(A.indptr.astype(np.int32), A.indices.astype(np.int32), A.data, b, x, 1 / A.diagonal(),
                    1e-12, 500, a, bt)
        out.append(x)
    gap = float(np.linalg.norm(out[0] - out[1]) / np.linalg.norm(out[0]))
    return CheckResult("compiled vs python kernels", gap, 1e-10, gap <= 1e-10, f"active backend: {kernels.BACKEND}")


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "eikonal": check_eikonal,
    "phase-gradient": check_phase_gradient,
    "volume": check_volume,
    "coarea": check_coarea,
    "temporal-order": check_temporal_order,
    "dense-oracle": check_dense_oracle,
    "monte-carlo": check_monte_carlo,
    "backends": check_backends,
}


def run_checks(names=None) -> list[CheckResult]:
    results = []
    for name in names or CHECKS:
        tic = time.perf_counter()
        res = CHECKS[name]()
        res.seconds = time.perf_counter() - tic
        results.append(res)
    return results
