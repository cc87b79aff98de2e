"""Pure-NumPy twin of the compiled bag-calibration kernel.

Same contract as ``kernel.bag_gweights``: batched over iterations with
stacked linear algebra.  Used when the extension is not built, or when
``BAGCALIB_BACKEND=python`` forces it.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def bag_gweights(scores, d, qk, totals, comp_sets, intercept_total, pivot_tol):
    """g-weights for every bag iteration.

    Returns ``(g, flags)`` where ``g`` is (B, n) with NaN rows for flagged
    iterations and ``flags`` is (B,) uint8 marking rank-deficient systems.
    """
    scores = np.asarray(scores, dtype=float)
    d = np.asarray(d, dtype=float)
    qk = np.asarray(qk, dtype=float)
    totals = np.asarray(totals, dtype=float)
    comp_sets = np.asarray(comp_sets, dtype=np.int64)
    n = scores.shape[0]
    n_iter = comp_sets.shape[0]

    zb = np.moveaxis(scores[:, comp_sets], 1, 0)  # (B, n, c)
    tb = totals[comp_sets]
    if intercept_total is not None:
        zb = np.concatenate([zb, np.ones((n_iter, n, 1))], axis=2)
        tb = np.concatenate([tb, np.full((n_iter, 1), float(intercept_total))], axis=1)

    t_mat = np.einsum("bni,n,bnj->bij", zb, d * qk, zb, optimize=True)
    gap = tb - np.einsum("bni,n->bi", zb, d)

    max_diag = np.diagonal(t_mat, axis1=1, axis2=2).max(axis=1)
    try:
        chol = np.linalg.cholesky(t_mat)
        pivots = np.diagonal(chol, axis1=1, axis2=2) ** 2
        ok = pivots.min(axis=1) > pivot_tol * max_diag
    except np.linalg.LinAlgError:
        # At least one iteration is not positive definite; rank-test them all.
        eigvals = np.linalg.eigvalsh(t_mat)
        ok = eigvals[:, 0] > pivot_tol * np.maximum(eigvals[:, -1], 0.0)

    g = np.full((n_iter, n), np.nan)
    if ok.any():
        x = np.linalg.solve(t_mat[ok], gap[ok][..., None])[..., 0]
        g[ok] = 1.0 + qk[None, :] * np.einsum("bni,bi->bn", zb[ok], x)
    return g, (~ok).astype(np.uint8)
