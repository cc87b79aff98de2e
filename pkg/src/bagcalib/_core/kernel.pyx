# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loop of bagged calibration.

For each bag iteration: gather the selected score columns, form the weighted
cross-product matrix, factor it by Cholesky with diagonal pivoting, and
produce the closed-form g-weights.  Rank-deficient iterations are only
flagged; the caller decides how to handle them.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND_NAME = "compiled"


def bag_gweights(cnp.float64_t[:, ::1] scores,
                 cnp.float64_t[::1] d,
                 cnp.float64_t[::1] qk,
                 cnp.float64_t[::1] totals,
                 cnp.int64_t[:, ::1] comp_sets,
                 intercept_total,
                 double pivot_tol):
    """g-weights for every bag iteration.

    Returns ``(g, flags)`` where ``g`` is (B, n) with NaN rows for flagged
    iterations and ``flags`` is (B,) uint8 marking rank-deficient systems.
    """
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t B = comp_sets.shape[0]
    cdef Py_ssize_t c = comp_sets.shape[1]
    cdef bint with_icpt = intercept_total is not None
    cdef double icpt_total = float(intercept_total) if with_icpt else 0.0
    cdef Py_ssize_t p = c + 1 if with_icpt else c

    g_arr = np.full((B, n), np.nan)
    flags_arr = np.zeros(B, dtype=np.uint8)
    z_arr = np.empty((n, p))
    a_arr = np.empty((p, p))
    lo_arr = np.empty((p, p))
    u_arr = np.empty(p)
    y_arr = np.empty(p)
    x_arr = np.empty(p)
    rd_arr = np.empty(p)
    wk_arr = np.empty(n)
    perm_arr = np.empty(p, dtype=np.intp)

    cdef cnp.float64_t[:, ::1] g = g_arr
    cdef cnp.uint8_t[::1] flags = flags_arr
    cdef cnp.float64_t[:, ::1] z = z_arr
    cdef cnp.float64_t[:, ::1] a = a_arr
    cdef cnp.float64_t[:, ::1] lo = lo_arr
    cdef cnp.float64_t[::1] u = u_arr
    cdef cnp.float64_t[::1] y = y_arr
    cdef cnp.float64_t[::1] x = x_arr
    cdef cnp.float64_t[::1] rd = rd_arr
    cdef cnp.float64_t[::1] wk = wk_arr
    cdef Py_ssize_t[::1] perm = perm_arr

    cdef Py_ssize_t b, i, j, k, s, best, rank, pswap
    cdef double acc, tol_abs, maxdiag, pivot, tmp

    for k in range(n):
        wk[k] = d[k] * qk[k]

    with nogil:
        for b in range(B):
            # Gather the selected columns, intercept last.
            for k in range(n):
                for j in range(c):
                    z[k, j] = scores[k, comp_sets[b, j]]
                if with_icpt:
                    z[k, c] = 1.0
            # A = Z' diag(d*qk) Z and the calibration gap u = t - Z' d.
            for i in range(p):
                for j in range(i + 1):
                    acc = 0.0
                    for k in range(n):
                        acc += wk[k] * z[k, i] * z[k, j]
                    a[i, j] = acc
                    a[j, i] = acc
                acc = 0.0
                for k in range(n):
                    acc += d[k] * z[k, i]
                if i < c:
                    u[i] = totals[comp_sets[b, i]] - acc
                else:
                    u[i] = icpt_total - acc
            # Cholesky with diagonal pivoting (virtual permutation in `perm`).
            maxdiag = 0.0
            for i in range(p):
                perm[i] = i
                rd[i] = a[i, i]
                if rd[i] > maxdiag:
                    maxdiag = rd[i]
            tol_abs = pivot_tol * maxdiag
            rank = p
            for j in range(p):
                best = j
                for i in range(j + 1, p):
                    if rd[i] > rd[best]:
                        best = i
                if rd[best] <= tol_abs or rd[best] <= 0.0:
                    rank = j
                    break
                if best != j:
                    pswap = perm[j]; perm[j] = perm[best]; perm[best] = pswap
                    tmp = rd[j]; rd[j] = rd[best]; rd[best] = tmp
                    for s in range(j):
                        tmp = lo[j, s]; lo[j, s] = lo[best, s]; lo[best, s] = tmp
                pivot = sqrt(rd[j])
                lo[j, j] = pivot
                for i in range(j + 1, p):
                    acc = a[perm[i], perm[j]]
                    for s in range(j):
                        acc -= lo[i, s] * lo[j, s]
                    lo[i, j] = acc / pivot
                    rd[i] -= lo[i, j] * lo[i, j]
            if rank < p:
                flags[b] = 1
                continue
            # Solve L y = P'u, then L' y = y, then scatter back through P.
            for i in range(p):
                acc = u[perm[i]]
                for s in range(i):
                    acc -= lo[i, s] * y[s]
                y[i] = acc / lo[i, i]
            for i in range(p - 1, -1, -1):
                acc = y[i]
                for s in range(i + 1, p):
                    acc -= lo[s, i] * y[s]
                y[i] = acc / lo[i, i]
            for i in range(p):
                x[perm[i]] = y[i]
            for k in range(n):
                acc = 0.0
                for j in range(p):
                    acc += z[k, j] * x[j]
                g[b, k] = 1.0 + qk[k] * acc

    return g_arr, flags_arr
