"""Chi-square (linear) calibration.

Adjusts design weights ``d_k`` into ``w_k = d_k * g_k`` so that weighted
sample totals of the calibration variables match known population totals,
minimizing the chi-square distance ``sum (w_k - d_k)^2 / (q_k d_k)``.  The
solution is closed form:

    g_k = 1 + q_k * z_k' T^{-1} (t - t_hat),
    T = sum_S d_k q_k z_k z_k',   t_hat = sum_S d_k z_k.

Rank-deficient systems either raise or fall back to the minimum-norm
(pseudo-inverse) solution, controlled by ``CalibrationSpec.singularity_policy``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DimensionMismatch, OutOfRange, SingularSystem, ZeroMean

CHI_SQUARED = "chi_squared"
POLICY_ERROR = "error"
POLICY_PSEUDO_INVERSE = "pseudo_inverse"


@dataclass(frozen=True)
class CalibrationSpec:
    """Distance and numerical policy of one calibration problem."""

    distance: str = CHI_SQUARED
    unit_distance_weights: np.ndarray | None = None  # q_k, default all ones
    include_intercept: bool = True
    singularity_policy: str = POLICY_ERROR
    pivot_tolerance: float = 1e-10

    def __post_init__(self):
        if self.distance != CHI_SQUARED:
            raise OutOfRange(f"unsupported distance {self.distance!r}")
        if self.singularity_policy not in (POLICY_ERROR, POLICY_PSEUDO_INVERSE):
            raise OutOfRange(f"unknown singularity policy {self.singularity_policy!r}")
        if self.unit_distance_weights is not None:
            qk = np.asarray(self.unit_distance_weights, dtype=float)
            if np.any(qk <= 0):
                raise OutOfRange("unit distance weights must be strictly positive")
            object.__setattr__(self, "unit_distance_weights", qk)

    def resolve_qk(self, n: int) -> np.ndarray:
        if self.unit_distance_weights is None:
            return np.ones(n)
        if self.unit_distance_weights.shape != (n,):
            raise DimensionMismatch("one unit distance weight per sampled unit")
        return self.unit_distance_weights


@dataclass(frozen=True)
class WeightSystem:
    """Design weights, g-coefficients and final weights for one sample."""

    unit_ids: np.ndarray
    design_weights: np.ndarray
    g: np.ndarray
    w: np.ndarray
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        n = self.design_weights.shape[0]
        for name in ("unit_ids", "g", "w"):
            if getattr(self, name).shape[0] != n:
                raise DimensionMismatch(f"{name} length differs from design weights")
        if np.abs(self.w - self.design_weights * self.g).max() > 1e-12 * max(
            1.0, np.abs(self.w).max()
        ):
            raise DimensionMismatch("w must equal design_weights * g")

    @property
    def n(self) -> int:
        return int(self.design_weights.shape[0])


def solve_symmetric(t: np.ndarray, rhs: np.ndarray, pivot_tolerance: float):
    """Solve ``t @ x = rhs`` for symmetric PSD ``t`` with rank detection.

    Returns ``(x, rank_deficient)``.  Eigenvalues below ``pivot_tolerance``
    times the largest are dropped, which makes the rank-deficient solution
    the minimum-norm one.  Shared by every calibration path so that weights
    and model-assisted algebra use the same generalized inverse.
    """
    vals, vecs = np.linalg.eigh(t)
    cutoff = pivot_tolerance * max(vals[-1], 0.0)
    keep = vals > max(cutoff, 0.0)
    rank_deficient = bool(np.count_nonzero(keep) < t.shape[0])
    proj = vecs[:, keep].T @ rhs
    x = vecs[:, keep] @ (proj / vals[keep])
    return x, rank_deficient


def _with_intercept(z: np.ndarray, totals: np.ndarray, spec: CalibrationSpec,
                    population_size: float | None):
    if not spec.include_intercept:
        return z, totals
    if population_size is None:
        raise DimensionMismatch("population_size is required when include_intercept is set")
    ones = np.ones((z.shape[0], 1))
    return np.hstack([z, ones]), np.append(totals, float(population_size))


def chi2_calibrate(z_sample, design_weights, totals, spec: CalibrationSpec | None = None,
                   *, population_size: float | None = None, unit_ids=None,
                   provenance: dict[str, Any] | None = None) -> WeightSystem:
    """Closed-form chi-square calibration of one sample.

    Parameters
    ----------
    z_sample : (n, p) array_like
        Calibration-variable values of the sampled units.  When the spec asks
        for an intercept, the constant column is appended here; do not pass
        one yourself.
    design_weights : (n,) array_like
        Inverse inclusion probabilities.
    totals : (p,) array_like
        Known population totals of the calibration variables.
    population_size : float, required with an intercept
        Total of the constant variable.

    Raises
    ------
    SingularSystem
        If the weighted cross-product matrix is rank deficient beyond the
        pivot tolerance and the policy is ``error``.
    """
    spec = spec if spec is not None else CalibrationSpec()
    z = np.asarray(z_sample, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    d = np.asarray(design_weights, dtype=float)
    totals = np.atleast_1d(np.asarray(totals, dtype=float))
    n = z.shape[0]
    if d.shape != (n,):
        raise DimensionMismatch("one design weight per sampled row")
    if totals.shape != (z.shape[1],):
        raise DimensionMismatch("one total per calibration variable")
    qk = spec.resolve_qk(n)
    z_full, totals_full = _with_intercept(z, totals, spec, population_size)

    t_mat = (z_full * (d * qk)[:, None]).T @ z_full
    gap = totals_full - d @ z_full
    x, rank_deficient = solve_symmetric(t_mat, gap, spec.pivot_tolerance)
    if rank_deficient and spec.singularity_policy == POLICY_ERROR:
        raise SingularSystem(
            f"calibration system is rank deficient ({z_full.shape[1]} variables, {n} units)"
        )
    g = 1.0 + qk * (z_full @ x)
    ids = np.arange(n) if unit_ids is None else np.asarray(unit_ids)
    prov: dict[str, Any] = {"estimator_kind": "chi2_calibration"}
    if provenance:
        prov.update(provenance)
    prov["rank_deficient"] = rank_deficient
    return WeightSystem(ids, d, g, d * g, prov)


def calibration_residual(z_sample, w, totals) -> float:
    """Largest relative violation of the calibration equation.

    Per coordinate: ``|sum w_k z_kj - total_j| / max(1, |total_j|)``.
    """
    z = np.asarray(z_sample, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    w = np.asarray(w, dtype=float)
    totals = np.atleast_1d(np.asarray(totals, dtype=float))
    if w.shape != (z.shape[0],) or totals.shape != (z.shape[1],):
        raise DimensionMismatch("inconsistent calibration residual inputs")
    achieved = w @ z
    return float(np.max(np.abs(achieved - totals) / np.maximum(1.0, np.abs(totals))))


def weight_cv(g) -> float:
    """Coefficient of variation of the g-weights: sd (divisor n-1) over mean."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise DimensionMismatch("need a vector of at least two g-weights")
    mean = g.mean()
    if mean == 0.0:
        raise ZeroMean("g-weights have zero mean")
    return float(g.std(ddof=1) / mean)
