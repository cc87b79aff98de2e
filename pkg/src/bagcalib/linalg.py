"""Dense linear-algebra primitives used by the calibration machinery.

Column standardization, weighted covariance, symmetric eigendecomposition
and least-squares residuals.  Everything here is survey-agnostic; the
variance convention is the population one (divisor ``N``), which keeps the
eigenvalues of a standardized data matrix summing to the number of columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateWeights,
    DimensionMismatch,
    NoConvergence,
    NotSymmetric,
    ZeroVarianceColumn,
)

# Relative threshold below which a column standard deviation counts as zero.
_SD_TOL = 1e-12
# Absolute asymmetry tolerated by sym_eigen before it refuses the input.
_SYM_TOL = 1e-10
# Negative eigenvalues of covariance matrices above this are rounding noise.
_EIG_CLAMP = -1e-8


@dataclass(frozen=True)
class DataMatrix:
    """N x q data matrix plus the standardization metadata of its columns.

    ``col_means`` and ``col_sds`` are always in original units (divisor N),
    whether or not ``values`` has been standardized with them.
    """

    values: np.ndarray
    column_names: tuple[str, ...]
    standardized: bool
    col_means: np.ndarray
    col_sds: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "col_means", np.asarray(self.col_means, dtype=float))
        object.__setattr__(self, "col_sds", np.asarray(self.col_sds, dtype=float))
        n, q = values.shape
        if len(self.column_names) != q:
            raise DimensionMismatch(
                f"{len(self.column_names)} column names for {q} columns"
            )
        if self.col_means.shape != (q,) or self.col_sds.shape != (q,):
            raise DimensionMismatch("standardization metadata must have length q")
        if np.any(self.col_sds <= 0):
            raise ZeroVarianceColumn(int(np.argmin(self.col_sds)))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SymEigen:
    """Eigenpairs of a symmetric matrix, eigenvalues sorted descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)


def standardize_columns(raw, names=None) -> DataMatrix:
    """Center and scale each column to mean 0 and variance 1 (divisor N).

    Parameters
    ----------
    raw : (N, q) array_like
        Data in original units, one row per unit.
    names : sequence of str, optional
        Column identifiers; defaults to ``x1..xq``.

    Raises
    ------
    ZeroVarianceColumn
        If any column is constant.
    DimensionMismatch
        If ``names`` does not match the number of columns or N < 2.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise DimensionMismatch("expected a 2-d array")
    n, q = raw.shape
    if n < 2:
        raise DimensionMismatch("standardization needs at least two rows")
    if names is None:
        names = tuple(f"x{j + 1}" for j in range(q))
    elif len(names) != q:
        raise DimensionMismatch(f"{len(names)} names for {q} columns")

    means = raw.mean(axis=0)
    sds = raw.std(axis=0)  # divisor N
    bad = np.flatnonzero(sds <= _SD_TOL * np.maximum(1.0, np.abs(means)))
    if bad.size:
        j = int(bad[0])
        raise ZeroVarianceColumn(j, str(names[j]))
    values = (raw - means) / sds
    return DataMatrix(values, tuple(str(c) for c in names), True, means, sds)


def weighted_covariance(data, weights) -> np.ndarray:
    """Weighted covariance matrix with divisor ``sum(weights)``.

    With unit weights this is the population covariance (divisor N).
    ``data`` may be a DataMatrix or a plain (N, q) array.

    Raises
    ------
    DegenerateWeights
        If fewer than two weights are strictly positive, or any is negative.
    """
    x = data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.shape != (x.shape[0],):
        raise DimensionMismatch("weights length must match the number of rows")
    if np.any(w < 0):
        raise DegenerateWeights("negative weights")
    if np.count_nonzero(w > 0) < 2:
        raise DegenerateWeights("need at least two positive weights")
    wsum = w.sum()
    mean = w @ x / wsum
    centered = x - mean
    cov = (centered * w[:, None]).T @ centered / wsum
    return (cov + cov.T) / 2.0


def sym_eigen(a) -> SymEigen:
    """Eigendecomposition of a symmetric matrix.

    Eigenvalues are returned in descending order; each eigenvector is signed
    so its largest-magnitude entry is positive (ties broken by lowest index),
    which makes the output deterministic.  Eigenvalues in (-1e-8, 0) are
    clamped to zero: they arise as rounding noise in the near-singular tails
    of covariance matrices.

    Raises
    ------
    NotSymmetric
        If ``max |A - A^T|`` exceeds 1e-10.
    NoConvergence
        If the underlying LAPACK solver fails.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch("expected a square matrix")
    asym = np.abs(a - a.T).max() if a.size else 0.0
    if asym > _SYM_TOL:
        raise NotSymmetric(f"max |A - A^T| = {asym:.3e} exceeds {_SYM_TOL:.0e}")
    sym = (a + a.T) / 2.0
    try:
        vals, vecs = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NoConvergence(f"eigensolver failed: {exc}") from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    vals[(vals > _EIG_CLAMP) & (vals < 0.0)] = 0.0
    # Deterministic sign: argmax of |v| returns the lowest index on ties.
    lead = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[lead, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return SymEigen(vals, vecs * signs)


def regress_residuals(targets, predictors) -> np.ndarray:
    """Least-squares residuals of ``targets`` on ``predictors``.

    An intercept column is always prepended internally, so the residuals are
    centered and orthogonal to the predictor columns even for uncentered
    inputs.  Rank-deficient systems use the minimum-norm solution.
    """
    y = np.asarray(targets, dtype=float)
    x = np.asarray(predictors, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim == 1:
        x = x[:, None]
    if y.shape[0] != x.shape[0]:
        raise DimensionMismatch(
            f"targets have {y.shape[0]} rows, predictors {x.shape[0]}"
        )
    if x.shape[1] >= x.shape[0]:
        raise DimensionMismatch("need fewer predictors than rows")
    design = np.hstack([np.ones((x.shape[0], 1)), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ coef
