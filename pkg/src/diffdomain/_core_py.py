"""Pure-numpy twins of the routines in ``_core.pyx``.

Used when the extension module is not built. Signatures and in-place
semantics match the compiled versions exactly.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def csr_matvec(indptr, indices, data, x, out):
    n = len(indptr) - 1
    out[:] = sp.csr_matrix((data, indices, indptr), shape=(n, len(x))) @ x


def pcg_csr(indptr, indices, data, b, x, dinv, tol, maxiter, alphas, betas):
    n = len(b)
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    bnorm = float(np.sqrt(b @ b))
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0, 0
    r = b - A @ x
    rnorm = float(np.sqrt(r @ r))
    if rnorm <= tol * bnorm:
        return 0, rnorm / bnorm, 0
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    it = 0
    status = 1
    while it < maxiter:
        q = A @ p
        pq = float(p @ q)
        if not np.isfinite(pq) or pq <= 0.0:
            status = 2
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        rnorm = float(np.sqrt(r @ r))
        alphas[it] = alpha
        it += 1
        if not np.isfinite(rnorm):
            status = 2
            break
        if rnorm <= tol * bnorm:
            status = 0
            break
        z = dinv * r
        rz_new = float(r @ z)
        beta = rz_new / rz
        betas[it - 1] = beta
        rz = rz_new
        p = z + beta * p
    return it, rnorm / bnorm, status


def nearest_segment(px, py, verts, cand, seg_out, t_out, dist_out, tie_out, rtol, point_tol2):
    a = verts[cand]
    e = verts[cand + 1] - a
    w = np.stack([px, py], axis=-1)[:, None, :] - a
    ll = np.einsum("ijk,ijk->ij", e, e)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(ll > 0.0, np.einsum("ijk,ijk->ij", w, e) / ll, 0.0)
    t = np.clip(t, 0.0, 1.0)
    c = a + t[..., None] * e
    diff = np.stack([px, py], axis=-1)[:, None, :] - c
    dd = np.einsum("ijk,ijk->ij", diff, diff)

    best_d = dd.min(axis=1)
    near = dd <= (best_d * (1.0 + rtol))[:, None]
    # lowest segment index among the near-minimal candidates
    masked = np.where(near, cand, np.iinfo(np.int64).max)
    j = masked.argmin(axis=1)
    rows = np.arange(len(px))
    seg_out[:] = cand[rows, j]
    t_out[:] = t[rows, j]
    dist_out[:] = np.sqrt(dd[rows, j])
    sep = c - c[rows, j][:, None, :]
    far = np.einsum("ijk,ijk->ij", sep, sep) > point_tol2
    tie_out[:] = np.any(near & far, axis=1)
