"""Time the compiled kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--n 256] [--repeat 5]

Inputs are the weighted FEM system of the circle at epsilon = 1/16 and a
batch of closest-point queries on the flower polyline. Prints one row per
kernel with the best-of-``repeat`` wall time of each backend.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from diffdomain import kernels
from diffdomain.extension import get_problem
from diffdomain.fem import CellQuadrature, StructuredGrid, assemble_weighted_mass, assemble_weighted_stiffness
from diffdomain.geometry import PhaseField, make_circle, make_flower


def fem_system(n):
    grid = StructuredGrid(nx=n, ny=n)
    pf = PhaseField(make_circle(), 1 / 16)
    cq = CellQuadrature(grid, pf)
    M = assemble_weighted_mass(grid, pf, cq=cq)
    K = assemble_weighted_stiffness(grid, pf, get_problem("example1"), cq=cq)
    A = (M * (1.5 * n) + K).tocsr()
    A.sort_indices()
    return A


def segment_queries(count, seed=0):
    flower = make_flower()
    verts = np.ascontiguousarray(flower.boundary)
    if not np.array_equal(verts[0], verts[-1]):
        verts = np.ascontiguousarray(np.vstack([verts, verts[:1]]))
    nseg = len(verts) - 1
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.3, 0.3, (count, 2))
    theta = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * np.pi)
    base = (theta / (2 * np.pi) * nseg).astype(np.int64)
    cand = np.ascontiguousarray(np.sort((base[:, None] + np.arange(-8, 8)) % nseg, axis=1))
    return np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1]), verts, cand


def cases(A, queries):
    ip, ix, data = A.indptr.astype(np.int32), A.indices.astype(np.int32), A.data
    n = A.shape[0]
    x = np.random.default_rng(1).standard_normal(n)
    b = A @ np.ones(n)
    dinv = 1.0 / A.diagonal()
    px, py, verts, cand = queries
    m = len(px)

    def matvec(mod):
        out = np.empty(n)
        return lambda: mod.csr_matvec(ip, ix, data, x, out)

    def pcg(mod):
        def run():
            a, bt = np.zeros(5000), np.zeros(5000)
            mod.pcg_csr(ip, ix, data, b, np.zeros(n), dinv, 1e-10, 5000, a, bt)
        return run

    def segments(mod):
        seg, t, d = np.empty(m, dtype=np.int64), np.empty(m), np.empty(m)
        tie = np.empty(m, dtype=np.uint8)
        return lambda: mod.nearest_segment(px, py, verts, cand, seg, t, d, tie, 1e-12, 1e-20)

    return {"csr_matvec": matvec, "pcg_csr (jacobi)": pcg, "nearest_segment": segments}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=256, help="grid cells per side")
    ap.add_argument("--queries", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    try:
        compiled = kernels.load_backend("compiled")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1
    python = kernels.load_backend("python")
    A = fem_system(args.n)
    table = cases(A, segment_queries(args.queries))
    print(f"system: {A.shape[0]} unknowns, {A.nnz} nonzeros; {args.queries} segment queries")
    print(f"{'kernel':<18} {'python [s]':>11} {'compiled [s]':>13} {'speedup':>8}")
    for name, make in table.items():
        tp = min(timeit.repeat(make(python), number=1, repeat=args.repeat))
        tc = min(timeit.repeat(make(compiled), number=1, repeat=args.repeat))
        print(f"{name:<18} {tp:11.4f} {tc:13.4f} {tp / tc:8.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
