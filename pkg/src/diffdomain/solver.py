"""Conjugate gradients for the symmetric positive definite systems of the scheme."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigvalsh_tridiagonal

from . import kernels
from .errors import ConfigurationError, NumericalBreakdown, SolverFailure

PRECONDITIONERS = ("none", "jacobi", "amg")


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 20000
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigurationError(f"preconditioner must be one of {PRECONDITIONERS}, got {self.preconditioner!r}")
        if not self.tol > 0:
            raise ConfigurationError("solver tolerance must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float
    alphas: np.ndarray
    betas: np.ndarray

    def ritz_values(self) -> np.ndarray:
        return ritz_values(self.alphas, self.betas)


def ritz_values(alphas: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Eigenvalues of the Lanczos matrix implied by the CG coefficients.

    These approximate the spectrum of the preconditioned operator; all of them
    are positive when the operator is positive definite.
    """
    k = len(alphas)
    if k == 0:
        return np.zeros(0)
    inv = 1.0 / alphas
    diag = inv.copy()
    diag[1:] += betas[: k - 1] * inv[:-1]
    off = np.sqrt(np.abs(betas[: k - 1])) * inv[:-1]
    return eigvalsh_tridiagonal(diag, off)


def _pcg_operator(A: sp.csr_matrix, b, x, apply_prec: Callable, tol, maxiter, alphas, betas):
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0, 0
    r = b - A @ x
    rnorm = float(np.linalg.norm(r))
    if rnorm <= tol * bnorm:
        return 0, rnorm / bnorm, 0
    z = apply_prec(r)
    p = z.copy()
    rz = float(r @ z)
    it, status = 0, 1
    while it < maxiter:
        q = A @ p
        pq = float(p @ q)
        if not np.isfinite(pq) or pq <= 0.0:
            status = 2
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        rnorm = float(np.linalg.norm(r))
        alphas[it] = alpha
        it += 1
        if not np.isfinite(rnorm):
            status = 2
            break
        if rnorm <= tol * bnorm:
            status = 0
            break
        z = apply_prec(r)
        rz_new = float(r @ z)
        betas[it - 1] = rz_new / rz
        rz = rz_new
        p = z + betas[it - 1] * p
    return it, rnorm / bnorm, status


class SpdSolver:
    """Reusable CG solver bound to one matrix; preconditioner setup is done once."""

    def __init__(self, matrix: sp.spmatrix, options: SolverOptions | None = None):
        self.options = options or SolverOptions()
        A = sp.csr_matrix(matrix)
        A.sort_indices()
        self.A = A
        self._indptr = A.indptr.astype(np.int32, copy=False)
        self._indices = A.indices.astype(np.int32, copy=False)
        self._data = np.ascontiguousarray(A.data, dtype=float)
        kind = self.options.preconditioner
        if kind == "jacobi":
            d = A.diagonal()
            if np.any(d <= 0) or not np.all(np.isfinite(d)):
                raise NumericalBreakdown("matrix diagonal is not positive; Jacobi preconditioning impossible")
            self._dinv = 1.0 / d
        else:
            self._dinv = np.ones(A.shape[0])
        self._amg = None
        if kind == "amg":
            import pyamg

            self._amg = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric").aspreconditioner()

    def solve(self, b: np.ndarray, x0: np.ndarray | None = None) -> SolveResult:
        opts = self.options
        b = np.ascontiguousarray(b, dtype=float)
        if not np.all(np.isfinite(b)):
            raise NumericalBreakdown("right-hand side contains NaN or Inf")
        x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
        alphas = np.zeros(opts.max_iter)
        betas = np.zeros(opts.max_iter)
        if self._amg is not None:
            it, res, status = _pcg_operator(self.A, b, x, self._amg, opts.tol, opts.max_iter, alphas, betas)
        else:
            it, res, status = kernels.pcg_csr(self._indptr, self._indices, self._data, b, x, self._dinv,
                                              opts.tol, opts.max_iter, alphas, betas)
        if status == 2:
            raise NumericalBreakdown(f"CG breakdown after {it} iterations (residual {res:.3e})", res, it)
        if status == 1:
            raise SolverFailure(f"CG did not reach tol {opts.tol:g} in {opts.max_iter} iterations "
                                f"(residual {res:.3e})", res, it)
        return SolveResult(x, it, res, alphas[:it].copy(), betas[: max(it - 1, 0)].copy())


def solve_spd(matrix, b, tol: float = 1e-10, max_iter: int = 20000, preconditioner: str = "jacobi",
              x0=None) -> tuple[np.ndarray, int]:
    """Solve A x = b for SPD A; returns ``(x, iterations)``."""
    res = SpdSolver(matrix, SolverOptions(tol, max_iter, preconditioner)).solve(np.asarray(b, dtype=float), x0)
    return res.x, res.iterations
