"""Bagged calibration on random subsets of principal components.

Each iteration draws a fixed-size component subset (probabilities driven by
the eigenvalues), calibrates the design weights on those components plus a
constant, and the final weights are the average of the per-iteration weight
systems.  Averaging keeps the weights close to the design weights while the
rotating constraint sets spread the calibration effort over the whole
component spectrum.

Variants: exact calibration on a few important variables (their span is
removed by regression, the rest enters through residual components), and a
model-assisted rewriting of the estimator used as an algebraic cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import _core
from .calibration import (
    POLICY_ERROR,
    POLICY_PSEUDO_INVERSE,
    CalibrationSpec,
    WeightSystem,
    solve_symmetric,
)
from .errors import AllIterationsFailed, DimensionMismatch, OutOfRange
from .linalg import DataMatrix
from .pca import PcaModel, component_totals, residual_pca, scores
from .rng import SCHEME, stream
from .sampling import (
    SYSTEMATIC,
    ObservedDesign,
    SamplingDesign,
    component_inclusion_probs,
    sample_components,
)


@dataclass(frozen=True)
class BaggingConfig:
    """Parameters of one bagged-calibration run.

    ``c`` defaults to ``round(sqrt(n))`` and ``alpha`` to 1/2, reasonable
    all-purpose choices; both should be tuned to the data when it matters.
    """

    B: int = 500
    c: int | None = None
    alpha: float = 0.5
    seed: int = 0
    exact_vars: tuple[int, ...] = ()
    retain_iterations: bool = False
    sampler: str = SYSTEMATIC

    def __post_init__(self):
        if self.B < 1:
            raise OutOfRange("B must be at least 1")
        if self.alpha < 0:
            raise OutOfRange("alpha must be nonnegative")
        object.__setattr__(self, "exact_vars", tuple(int(j) for j in self.exact_vars))

    def resolve_c(self, n: int) -> int:
        return self.c if self.c is not None else max(1, round(math.sqrt(n)))


@dataclass(frozen=True)
class IterationRecord:
    """One bag iteration: which columns were calibrated on, and the outcome."""

    index: int
    components: np.ndarray
    g: np.ndarray | None = field(repr=False, default=None)
    rank_deficient: bool = False
    dropped: bool = False


@dataclass(frozen=True)
class BaggingResult:
    """Averaged weights plus the per-iteration context needed to audit them."""

    weights: WeightSystem
    iterations: list[IterationRecord] | None
    include_intercept: bool
    population_size: float
    pivot_tolerance: float
    unit_distance_weights: np.ndarray | None = field(repr=False, default=None)

    # Convenience passthroughs.
    @property
    def g(self) -> np.ndarray:
        return self.weights.g

    @property
    def w(self) -> np.ndarray:
        return self.weights.w


def _default_spec(spec: CalibrationSpec | None) -> CalibrationSpec:
    # Inside a bag, one singular draw must not kill the other B-1, so the
    # default policy is the minimum-norm fallback rather than an error.
    if spec is None:
        return CalibrationSpec(singularity_policy=POLICY_PSEUDO_INVERSE)
    return spec


def _iteration_matrix(score_mat, comp_idx, include_intercept):
    z = score_mat[:, comp_idx]
    if include_intercept:
        z = np.hstack([z, np.ones((z.shape[0], 1))])
    return z


def _pinv_gweights(score_mat, comp_idx, d, qk, totals, population_size, spec):
    """Minimum-norm g-weights for one rank-deficient iteration."""
    z = _iteration_matrix(score_mat, comp_idx, spec.include_intercept)
    t_vec = totals[comp_idx]
    if spec.include_intercept:
        t_vec = np.append(t_vec, population_size)
    t_mat = (z * (d * qk)[:, None]).T @ z
    x, _ = solve_symmetric(t_mat, t_vec - d @ z, spec.pivot_tolerance)
    return 1.0 + qk * (z @ x)


def _aggregate(score_mat, comp_sets, design, cfg, spec, totals, population_size,
               estimator_kind, calibrated_exactly_on=()):
    """Run the kernel over all iterations and average the surviving weights."""
    d = design.sample_design_weights
    n = d.shape[0]
    qk = spec.resolve_qk(n)
    icpt_total = float(population_size) if spec.include_intercept else None
    g_iter, flags = _core.bag_gweights(
        np.ascontiguousarray(score_mat), d, qk, totals,
        np.ascontiguousarray(comp_sets, dtype=np.int64),
        icpt_total, spec.pivot_tolerance,
    )

    records: list[IterationRecord] = []
    n_iter = comp_sets.shape[0]
    kept = np.ones(n_iter, dtype=bool)
    for b in range(n_iter):
        if flags[b]:
            if spec.singularity_policy == POLICY_ERROR:
                kept[b] = False
                records.append(IterationRecord(b + 1, comp_sets[b], None, True, True))
                continue
            g_iter[b] = _pinv_gweights(
                score_mat, comp_sets[b], d, qk, totals, population_size, spec
            )
            records.append(IterationRecord(b + 1, comp_sets[b], g_iter[b], True, False))
        else:
            records.append(IterationRecord(b + 1, comp_sets[b], g_iter[b], False, False))
    if not kept.any():
        raise AllIterationsFailed(
            f"all {n_iter} iterations were singular under the error policy"
        )

    g_hat = g_iter[kept].mean(axis=0)
    provenance: dict[str, Any] = {
        "estimator_kind": estimator_kind,
        "B": int(n_iter),
        "B_effective": int(kept.sum()),
        "c": int(comp_sets.shape[1]),
        "alpha": cfg.alpha,
        "seed": cfg.seed,
        "sampler": cfg.sampler,
        "singular_iterations": int(flags.sum()),
        "rank_deficient": bool(flags.any()),
        "calibrated_exactly_on": list(calibrated_exactly_on),
        "backend": _core.BACKEND,
        "rng_scheme": SCHEME,
    }
    ws = WeightSystem(design.sample_indices.copy(), d, g_hat, d * g_hat, provenance)
    return BaggingResult(
        ws,
        records if cfg.retain_iterations else None,
        spec.include_intercept,
        float(population_size),
        spec.pivot_tolerance,
        qk,
    )


def run_bagging(model: PcaModel, sample_aux, design: SamplingDesign | ObservedDesign,
                cfg: BaggingConfig, spec: CalibrationSpec | None = None,
                totals=None) -> BaggingResult:
    """Bagged calibration of one sample on the components of ``model``.

    Parameters
    ----------
    model : PcaModel
        Component basis; eigenvalues drive the selection probabilities.
    sample_aux : (n, q) array_like
        Auxiliary rows of the sampled units, original units, in the order of
        ``design.sample_indices``.
    totals : (q,) array_like, optional
        Population totals of the component scores.  Defaults to the exact
        zero vector for population-source models (scores are centered).
    """
    spec = _default_spec(spec)
    sample_aux = np.asarray(sample_aux, dtype=float)
    if sample_aux.shape[0] != design.sample_size:
        raise DimensionMismatch("one auxiliary row per sampled unit")
    n = design.sample_size
    c = cfg.resolve_c(n)
    z_s = scores(model, sample_aux)
    totals = component_totals(model) if totals is None else np.asarray(totals, dtype=float)
    if totals.shape != (model.n_components,):
        raise DimensionMismatch("one total per component")

    sel = component_inclusion_probs(model.eigenvalues, cfg.alpha, c, cfg.sampler)
    comp_sets = np.empty((cfg.B, c), dtype=np.int64)
    for b in range(cfg.B):
        comp_sets[b] = sample_components(sel, stream(cfg.seed, "bag", b + 1))
    return _aggregate(
        z_s, comp_sets, design, cfg, spec, totals, design.population_size,
        "bagged_component_calibration",
    )


def run_bagging_exact(x: DataMatrix, important, design: SamplingDesign, cfg: BaggingConfig,
                      spec: CalibrationSpec | None = None) -> BaggingResult:
    """Bagged calibration that is exact on a few important variables.

    Every iteration calibrates on all important variables plus ``c - c1``
    residual components, so the averaged weights reproduce each important
    variable's total exactly while the remaining variation is still covered.
    Requires the full population matrix, standardized.  ``important`` may be
    None, in which case ``cfg.exact_vars`` is used.
    """
    spec = _default_spec(spec)
    if important is None:
        important = cfg.exact_vars
    important = tuple(int(j) for j in important)
    c1 = len(important)
    n = design.sample_size
    c = cfg.resolve_c(n)
    if not c1 < c < x.n_cols:
        raise OutOfRange(
            f"need len(important)={c1} < c={c} < q={x.n_cols}"
        )
    if design.population_size != x.n_rows:
        raise DimensionMismatch("design and data matrix disagree on N")

    rp = residual_pca(x, important)
    sample_rows = design.sample_indices
    imp_s = rp.important[sample_rows]
    res_scores_s = scores(rp.model, rp.residuals[sample_rows])
    combined = np.hstack([imp_s, res_scores_s])
    # Standardized important columns and centered residual components both
    # have population total zero.
    totals = np.zeros(combined.shape[1])

    sel = component_inclusion_probs(rp.model.eigenvalues, cfg.alpha, c - c1, cfg.sampler)
    comp_sets = np.empty((cfg.B, c), dtype=np.int64)
    comp_sets[:, :c1] = np.arange(c1)
    for b in range(cfg.B):
        comp_sets[b, c1:] = c1 + sample_components(sel, stream(cfg.seed, "bag", b + 1))
    names = [x.column_names[j] for j in important]
    return _aggregate(
        combined, comp_sets, design, cfg, spec, totals, design.population_size,
        "bagged_component_calibration_exact", calibrated_exactly_on=names,
    )


def bp_total(ws: WeightSystem, y_sample) -> float:
    """Estimated population total of a response under a weight system."""
    y = np.asarray(y_sample, dtype=float)
    if y.shape != (ws.n,):
        raise DimensionMismatch("one response value per sampled unit")
    return float(ws.w @ y)


def model_assisted_decomposition(result: BaggingResult, population_scores,
                                 design: SamplingDesign, y_sample):
    """Rewrite the bagged estimator as prediction plus weighted residual.

    Per retained iteration, regression coefficients of the response on the
    selected columns give unit-level predictions; their average ``m_hat``
    yields the identity

        total = sum_U m_hat + sum_S d * (y - m_hat),

    which must agree with ``bp_total`` up to solver rounding.  Returns
    ``(m_hat, total)`` with one prediction per population unit.
    """
    if result.iterations is None:
        raise DimensionMismatch("run with retain_iterations=True to decompose")
    pop_scores = np.asarray(population_scores, dtype=float)
    if pop_scores.shape[0] != design.population_size:
        raise DimensionMismatch("one score row per population unit")
    y = np.asarray(y_sample, dtype=float)
    d = design.sample_design_weights
    if y.shape != d.shape:
        raise DimensionMismatch("one response value per sampled unit")
    sample_scores = pop_scores[design.sample_indices]
    qk = result.unit_distance_weights
    if qk is None:
        qk = np.ones(d.shape[0])

    m_sum = np.zeros(design.population_size)
    n_kept = 0
    for rec in result.iterations:
        if rec.dropped:
            continue
        z_s = _iteration_matrix(sample_scores, rec.components, result.include_intercept)
        z_pop = _iteration_matrix(pop_scores, rec.components, result.include_intercept)
        t_mat = (z_s * (d * qk)[:, None]).T @ z_s
        rhs = z_s.T @ (d * qk * y)
        coef, _ = solve_symmetric(t_mat, rhs, result.pivot_tolerance)
        m_sum += z_pop @ coef
        n_kept += 1
    if n_kept == 0:
        raise AllIterationsFailed("no retained iteration survived")
    m_hat = m_sum / n_kept
    total = float(m_hat.sum() + d @ (y - m_hat[design.sample_indices]))
    return m_hat, total
