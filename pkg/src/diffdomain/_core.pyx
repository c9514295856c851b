# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: CSR matvec, Jacobi-preconditioned CG, nearest polyline segment.

The pure-numpy twins live in ``_core_py``; both must return identical results
up to floating-point reduction order.
"""
from libc.math cimport sqrt, isfinite

import numpy as np


def csr_matvec(const int[::1] indptr, const int[::1] indices,
               const double[::1] data, const double[::1] x, double[::1] out):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        out[i] = acc


cdef inline double _dot(const double[::1] a, const double[::1] b, Py_ssize_t n) nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def pcg_csr(const int[::1] indptr, const int[::1] indices, const double[::1] data,
            const double[::1] b, double[::1] x, const double[::1] dinv,
            double tol, int maxiter, double[::1] alphas, double[::1] betas):
    """Preconditioned CG in place on ``x``.

    ``dinv`` holds the inverse diagonal; pass an all-ones array for plain CG.
    Returns ``(iterations, relative_residual, status)`` with status 0 converged,
    1 iteration cap reached, 2 breakdown (non-finite value or non-positive curvature).
    """
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i, k
    cdef int it = 0
    cdef int status = 1
    cdef double acc, bnorm, rnorm, rz, rz_new, pq, alpha, beta
    cdef double[::1] r = np.empty(n)
    cdef double[::1] z = np.empty(n)
    cdef double[::1] p = np.empty(n)
    cdef double[::1] q = np.empty(n)

    bnorm = sqrt(_dot(b, b, n))
    if bnorm == 0.0:
        x[:] = 0.0
        return 0, 0.0, 0

    with nogil:
        for i in range(n):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                acc += data[k] * x[indices[k]]
            r[i] = b[i] - acc
        rnorm = sqrt(_dot(r, r, n))
        if rnorm <= tol * bnorm:
            status = 0
        for i in range(n):
            z[i] = dinv[i] * r[i]
            p[i] = z[i]
        rz = _dot(r, z, n)

        while status != 0 and it < maxiter:
            pq = 0.0
            for i in range(n):
                acc = 0.0
                for k in range(indptr[i], indptr[i + 1]):
                    acc += data[k] * p[indices[k]]
                q[i] = acc
                pq += p[i] * acc
            if not isfinite(pq) or pq <= 0.0:
                status = 2
                break
            alpha = rz / pq
            rnorm = 0.0
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * q[i]
                rnorm += r[i] * r[i]
            rnorm = sqrt(rnorm)
            alphas[it] = alpha
            it += 1
            if not isfinite(rnorm):
                status = 2
                break
            if rnorm <= tol * bnorm:
                status = 0
                break
            rz_new = 0.0
            for i in range(n):
                z[i] = dinv[i] * r[i]
                rz_new += r[i] * z[i]
            beta = rz_new / rz
            betas[it - 1] = beta
            rz = rz_new
            for i in range(n):
                p[i] = z[i] + beta * p[i]

    return it, rnorm / bnorm, status


def nearest_segment(const double[::1] px, const double[::1] py,
                    const double[:, ::1] verts, const long[:, ::1] cand,
                    long[::1] seg_out, double[::1] t_out, double[::1] dist_out,
                    unsigned char[::1] tie_out, double rtol, double point_tol2):
    """Closest point on candidate segments ``verts[s] -> verts[s + 1]``.

    Squared distances within ``rtol`` count as equal; equal distances resolve
    to the lowest segment index. ``tie_out`` marks points whose minimizers are
    boundary points further apart than ``sqrt(point_tol2)``.
    """
    cdef Py_ssize_t npts = px.shape[0]
    cdef Py_ssize_t ncand = cand.shape[1]
    cdef Py_ssize_t i, j
    cdef long s, best_s
    cdef double ax, ay, ex, ey, wx, wy, ll, t, cx, cy, dd, best_d, best_t, slack
    cdef double bx, by
    cdef unsigned char tie

    with nogil:
        for i in range(npts):
            best_d = 1e300
            best_s = -1
            best_t = 0.0
            bx = 0.0
            by = 0.0
            tie = 0
            for j in range(ncand):
                s = cand[i, j]
                ax = verts[s, 0]
                ay = verts[s, 1]
                ex = verts[s + 1, 0] - ax
                ey = verts[s + 1, 1] - ay
                wx = px[i] - ax
                wy = py[i] - ay
                ll = ex * ex + ey * ey
                t = (wx * ex + wy * ey) / ll if ll > 0.0 else 0.0
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                cx = ax + t * ex
                cy = ay + t * ey
                dd = (px[i] - cx) * (px[i] - cx) + (py[i] - cy) * (py[i] - cy)
                slack = rtol * best_d
                if dd < best_d - slack:
                    tie = 0
                    best_d = dd
                    best_s = s
                    best_t = t
                    bx = cx
                    by = cy
                elif dd <= best_d + slack:
                    if (cx - bx) * (cx - bx) + (cy - by) * (cy - by) > point_tol2:
                        tie = 1
                    if s < best_s:
                        best_s = s
                        best_t = t
                        bx = cx
                        by = cy
            seg_out[i] = best_s
            t_out[i] = best_t
            dist_out[i] = sqrt(best_d)
            tie_out[i] = tie
