"""Principal-component models of auxiliary data.

Models can be fitted on a full population or estimated from a sample with
design weights.  A residual variant regresses out a handful of important
variables first, so those can later be calibrated exactly while the
remaining variation is still captured by orthogonal components.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, OutOfRange, ZeroVarianceColumn
from .linalg import DataMatrix, regress_residuals, sym_eigen, weighted_covariance

POPULATION = "population"
DESIGN_WEIGHTED_SAMPLE = "design_weighted_sample"


@dataclass(frozen=True)
class PcaModel:
    """Orthonormal loadings and descending eigenvalues of a covariance matrix.

    ``col_means``/``col_sds`` carry the standardization applied before the
    eigenproblem, so scores can be computed from original-unit rows.
    """

    loadings: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray
    col_means: np.ndarray = field(repr=False)
    col_sds: np.ndarray = field(repr=False)
    source: str = POPULATION

    @property
    def n_components(self) -> int:
        return self.eigenvalues.shape[0]


def fit_pca(x: DataMatrix) -> PcaModel:
    """Fit a population PCA model on a standardized data matrix."""
    if not x.standardized:
        raise DimensionMismatch("fit_pca expects a standardized DataMatrix")
    if x.n_rows < 2:
        raise DimensionMismatch("need at least two rows")
    cov = weighted_covariance(x, np.ones(x.n_rows))
    eig = sym_eigen(cov)
    return PcaModel(eig.eigenvectors, eig.eigenvalues, x.col_means, x.col_sds, POPULATION)


def fit_pca_from_sample(rows, design_weights, col_means=None, col_sds=None) -> PcaModel:
    """Estimate a PCA model from sampled rows in original units.

    The covariance of the standardized rows is estimated with the design
    weights.  When standardization metadata is not supplied, design-weighted
    sample means and standard deviations are used, mirroring the
    design-weighted covariance estimate.
    """
    rows = np.asarray(rows, dtype=float)
    w = np.asarray(design_weights, dtype=float)
    if rows.ndim != 2:
        raise DimensionMismatch("expected a 2-d array of sample rows")
    if w.shape != (rows.shape[0],):
        raise DimensionMismatch("one design weight per sampled row")
    if (col_means is None) != (col_sds is None):
        raise DimensionMismatch("provide both col_means and col_sds or neither")
    if col_means is None:
        cov_raw = weighted_covariance(rows, w)
        col_means = w @ rows / w.sum()
        col_sds = np.sqrt(np.diag(cov_raw))
        bad = np.flatnonzero(col_sds <= 1e-12 * np.maximum(1.0, np.abs(col_means)))
        if bad.size:
            raise ZeroVarianceColumn(int(bad[0]))
    col_means = np.asarray(col_means, dtype=float)
    col_sds = np.asarray(col_sds, dtype=float)
    std_rows = (rows - col_means) / col_sds
    eig = sym_eigen(weighted_covariance(std_rows, w))
    return PcaModel(eig.eigenvectors, eig.eigenvalues, col_means, col_sds, DESIGN_WEIGHTED_SAMPLE)


def identity_model(x: DataMatrix) -> PcaModel:
    """Trivial model whose components are the standardized variables themselves.

    Lets the bagging driver draw raw variables instead of components while
    sharing one code path.
    """
    q = x.n_cols
    return PcaModel(np.eye(q), np.ones(q), x.col_means, x.col_sds, POPULATION)


def scores(model: PcaModel, x_rows) -> np.ndarray:
    """Component scores of original-unit rows under a fitted model."""
    rows = np.asarray(x_rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != model.n_components:
        raise DimensionMismatch(
            f"rows have {rows.shape[1]} columns, model has {model.n_components}"
        )
    return ((rows - model.col_means) / model.col_sds) @ model.loadings


def explained_variance(model: PcaModel, c: int) -> float:
    """Fraction of total variance carried by the first ``c`` components."""
    q = model.n_components
    if not 1 <= c <= q:
        raise OutOfRange(f"c must be in [1, {q}], got {c}")
    total = float(model.eigenvalues.sum())
    if total <= 0:
        raise OutOfRange("model has no variance")
    return float(model.eigenvalues[:c].sum()) / total


def component_totals(model: PcaModel, x_totals=None, population_size=None) -> np.ndarray:
    """Population totals of the component scores.

    For a population-source model the scores are centered by construction and
    the totals are exactly zero.  For a sample-estimated model the totals are
    obtained by rotating the standardized totals of the auxiliary variables,
    which must be supplied along with the population size.
    """
    if x_totals is None:
        if model.source != POPULATION:
            raise DimensionMismatch(
                "sample-estimated models need the auxiliary totals and population size"
            )
        return np.zeros(model.n_components)
    t_x = np.asarray(x_totals, dtype=float)
    if t_x.shape != (model.n_components,):
        raise DimensionMismatch("one total per auxiliary variable")
    if population_size is None:
        raise DimensionMismatch("population_size required with explicit totals")
    std_totals = (t_x - population_size * model.col_means) / model.col_sds
    return model.loadings.T @ std_totals


@dataclass(frozen=True)
class ResidualPca:
    """PCA of the auxiliary variables left after removing the important ones."""

    important: np.ndarray = field(repr=False)  # N x c1, standardized units
    model: PcaModel
    residuals: np.ndarray = field(repr=False)  # N x (q - c1)
    important_indices: tuple[int, ...]
    remaining_indices: tuple[int, ...]


def residual_pca(x: DataMatrix, important) -> ResidualPca:
    """Split a standardized matrix into important columns and residual components.

    The remaining columns are regressed (with intercept) on the important
    ones; a PCA model is fitted to the residuals.  Residual components are
    orthogonal to the span of the important columns, so calibrating on both
    never creates redundant constraints.
    """
    if not x.standardized:
        raise DimensionMismatch("residual_pca expects a standardized DataMatrix")
    q = x.n_cols
    important = tuple(int(j) for j in important)
    if not important or len(set(important)) != len(important):
        raise OutOfRange("important indices must be nonempty and distinct")
    if any(j < 0 or j >= q for j in important):
        raise OutOfRange(f"important indices must lie in [0, {q})")
    if len(important) >= q:
        raise OutOfRange("at least one column must remain outside the important set")
    remaining = tuple(j for j in range(q) if j not in important)
    resid = regress_residuals(x.values[:, remaining], x.values[:, important])
    eig = sym_eigen(weighted_covariance(resid, np.ones(x.n_rows)))
    model = PcaModel(
        eig.eigenvectors,
        eig.eigenvalues,
        np.zeros(len(remaining)),  # residuals are already centered
        np.ones(len(remaining)),
        POPULATION,
    )
    return ResidualPca(x.values[:, important], model, resid, important, remaining)
