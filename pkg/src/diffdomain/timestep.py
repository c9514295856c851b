"""BDF2 time stepping of M u' + K u = F(t), started with one backward-Euler step."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, SolverFailure
from .extension import ProblemSpec, extend_field
from .fem import (CellQuadrature, LoadAssembler, QuadratureRule, StructuredGrid,
                  assemble_weighted_mass, assemble_weighted_stiffness)
from .geometry import PhaseField
from .solver import SolverOptions, SpdSolver

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    num_steps: int

    def __post_init__(self):
        if self.num_steps < 2:
            raise ConfigurationError(f"need at least 2 time steps, got {self.num_steps}")
        if not self.T > 0:
            raise ConfigurationError(f"final time must be positive, got {self.T}")

    @property
    def dt(self) -> float:
        return self.T / self.num_steps

    def time(self, n: int) -> float:
        return n * self.T / self.num_steps


@dataclass
class TransientSolution:
    grid: StructuredGrid
    times: list[float]
    snapshots: list[np.ndarray]
    iterations: list[int] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


def initialize(grid: StructuredGrid, spec: ProblemSpec, pf: PhaseField) -> np.ndarray:
    """Nodal interpolant of the extended initial value."""
    return extend_field(spec, pf.domain, "u0", 0.0, grid.node_coordinates())


def _solve(solver: SpdSolver, rhs, guess):
    res = solver.solve(rhs, guess)
    return res.x, res.iterations


def step_be(M, K, u_n, F_next, dt: float, options: SolverOptions | None = None, solver: SpdSolver | None = None):
    """One backward-Euler step: (M/dt + K) u = M u_n / dt + F."""
    solver = solver or SpdSolver(M / dt + K, options)
    return _solve(solver, M @ u_n / dt + F_next, u_n)[0]


def step_bdf2(M, K, u_n, u_prev, F_next, dt: float, options: SolverOptions | None = None,
              solver: SpdSolver | None = None):
    """One BDF2 step: (3M/(2dt) + K) u = M (4 u_n - u_prev) / (2 dt) + F."""
    solver = solver or SpdSolver(1.5 / dt * M + K, options)
    return _solve(solver, M @ (4.0 * u_n - u_prev) / (2.0 * dt) + F_next, 2.0 * u_n - u_prev)[0]


def integrate(M: sp.spmatrix, K: sp.spmatrix, load: Callable[[float], np.ndarray], u0: np.ndarray,
              timegrid: TimeGrid, options: SolverOptions | None = None,
              snapshot_times: Sequence[float] = ()) -> TransientSolution:
    """Run the BE + BDF2 recursion on assembled matrices."""
    options = options or SolverOptions()
    dt = timegrid.dt
    N = timegrid.num_steps
    want = {min(N, max(0, int(round(t / dt)))) for t in snapshot_times} | {N}
    times: list[float] = []
    snaps: list[np.ndarray] = []
    iters: list[int] = []
    if 0 in want:
        times.append(0.0)
        snaps.append(np.array(u0, dtype=float))

    t0 = time.perf_counter()
    be = SpdSolver((M / dt + K).tocsr(), options)
    bdf = SpdSolver((1.5 / dt * M + K).tocsr(), options)
    setup = time.perf_counter() - t0

    u_prev = np.array(u0, dtype=float)
    t_load = 0.0
    t_solve = 0.0
    for n in range(1, N + 1):
        tn = timegrid.time(n)
        tic = time.perf_counter()
        F = load(tn)
        t_load += time.perf_counter() - tic
        tic = time.perf_counter()
        try:
            if n == 1:
                u, it = _solve(be, M @ u_prev / dt + F, u_prev)
            else:
                u, it = _solve(bdf, M @ (4.0 * u_cur - u_prev) / (2.0 * dt) + F, 2.0 * u_cur - u_prev)
        except SolverFailure as exc:
            exc.step = n
            exc.args = (f"step {n}: {exc.args[0]}",)
            raise
        t_solve += time.perf_counter() - tic
        iters.append(it)
        if n > 1:
            u_prev = u_cur
        u_cur = u
        if n in want:
            times.append(tn)
            snaps.append(u.copy())
    log.info("time loop: %d steps, %d CG iterations, load %.1fs, solve %.1fs",
             N, sum(iters), t_load, t_solve)
    return TransientSolution(None, times, snaps, iters,
                             {"solver_setup": setup, "load": t_load, "solve": t_solve})


def run_transient(grid: StructuredGrid, pf: PhaseField, spec: ProblemSpec, timegrid: TimeGrid,
                  options: SolverOptions | None = None, snapshot_times: Sequence[float] = (),
                  rule: QuadratureRule | None = None, cq: CellQuadrature | None = None,
                  workers: int = 1, bitwise: bool = True) -> TransientSolution:
    """Assemble M, K once and integrate the weighted system to ``timegrid.T``."""
    tic = time.perf_counter()
    cq = cq or CellQuadrature(grid, pf, rule, workers=workers, bitwise=bitwise)
    M = assemble_weighted_mass(grid, pf, cq=cq, workers=workers, bitwise=bitwise)
    K = assemble_weighted_stiffness(grid, pf, spec, cq=cq, workers=workers, bitwise=bitwise)
    load = LoadAssembler(cq, spec)
    t_asm = time.perf_counter() - tic
    sol = integrate(M, K, load, initialize(grid, spec, pf), timegrid, options, snapshot_times)
    sol.grid = grid
    sol.timings["assembly"] = t_asm
    return sol
