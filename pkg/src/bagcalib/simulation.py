"""Monte Carlo harness comparing calibration estimators on synthetic populations.

The generator builds a household-survey-like population: a factor model
drives 64 binary and 23 continuous auxiliary variables (including dummy
blocks that sum to one, the usual source of near-singular calibration), and
responses are linear in the principal-component scores plus noise, so their
variance decomposition over components is controlled exactly.

``run_study`` replays the standard comparison: repeated simple random
samples, five estimators per sample (full calibration, first-components
calibration, bagging on raw variables, bagged component calibration,
Horvitz-Thompson), and the four relative metrics plus g-weight dispersion
summaries.  ``sweep`` repeats the study along a grid of ``c`` or ``alpha``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np

from .bagging import BaggingConfig, run_bagging
from .calibration import (
    POLICY_PSEUDO_INVERSE,
    CalibrationSpec,
    chi2_calibrate,
    weight_cv,
)
from .errors import (
    DimensionMismatch,
    InfeasibleSpec,
    InsufficientRuns,
    OutOfRange,
    ZeroTotal,
)
from .linalg import DataMatrix, standardize_columns
from .pca import PcaModel, fit_pca, identity_model, scores
from .rng import derive_seed, stream
from .sampling import SYSTEMATIC, srswor

HT = "HT"
CAL = "CAL"
PCA = "PCA"
BAG = "BAG"
BAG_PCA = "BAG+PCA"
KINDS = (HT, CAL, PCA, BAG, BAG_PCA)


# ---------------------------------------------------------------------------
# Populations


@dataclass(frozen=True)
class Population:
    """A finite population: auxiliary matrix, responses, and their totals."""

    aux: DataMatrix
    responses: dict[str, np.ndarray]
    true_totals: dict[str, float]
    achieved_r2: dict[str, dict[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        for name, y in self.responses.items():
            if y.shape != (self.aux.n_rows,):
                raise DimensionMismatch(f"response {name!r} length differs from N")

    @property
    def size(self) -> int:
        return self.aux.n_rows

    @cached_property
    def standardized(self) -> DataMatrix:
        return standardize_columns(self.aux.values, self.aux.column_names)

    @cached_property
    def model(self) -> PcaModel:
        return fit_pca(self.standardized)

    @cached_property
    def component_scores(self) -> np.ndarray:
        return scores(self.model, self.aux.values)

    def response_names(self) -> tuple[str, ...]:
        return tuple(self.responses)


def make_population(aux_values, column_names, responses: dict[str, np.ndarray],
                    achieved_r2=None) -> Population:
    """Assemble a population, validating columns and computing true totals."""
    std = standardize_columns(aux_values, column_names)  # rejects constant columns
    aux = DataMatrix(np.asarray(aux_values, dtype=float), std.column_names, False,
                     std.col_means, std.col_sds)
    responses = {name: np.asarray(y, dtype=float) for name, y in responses.items()}
    totals = {name: float(y.sum()) for name, y in responses.items()}
    return Population(aux, responses, totals, achieved_r2 or {})


@dataclass(frozen=True)
class ResponseRecipe:
    """How one synthetic response loads on the component spectrum.

    The shares are variance fractions: ``lead_share`` on components
    ``1..lead_span``, ``mid_share`` on ``lead_span+1..mid_span``, the rest is
    unit noise.  An optional heavy right tail contaminates a small fraction
    of units with lognormal shocks.
    """

    name: str
    lead_share: float
    mid_share: float
    noise_share: float
    lead_span: int = 10
    mid_span: int = 55
    location: float = 1.0
    tail_prob: float = 0.0
    tail_scale: float = 0.0
    r2_full_band: tuple[float, float] | None = None
    r2_first_band: tuple[float, float] | None = None


def default_recipes() -> tuple[ResponseRecipe, ...]:
    return (
        ResponseRecipe(
            "y_linear", lead_share=0.23, mid_share=0.44, noise_share=0.33,
            r2_full_band=(0.57, 0.77), r2_first_band=(0.13, 0.33),
        ),
        ResponseRecipe(
            "y_tail", lead_share=0.20, mid_share=0.35, noise_share=0.45,
            tail_prob=0.03, tail_scale=8.0,
        ),
        ResponseRecipe("y_weak", lead_share=0.07, mid_share=0.21, noise_share=0.72),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of the synthetic population."""

    population_size: int = 425
    q_binary: int = 64
    q_continuous: int = 23
    n_factors: int = 16
    dummy_blocks: tuple[int, ...] = (6, 5, 4, 4, 3, 3)
    r2_components: int = 10
    recipes: tuple[ResponseRecipe, ...] = field(default_factory=default_recipes)
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 10:
            raise OutOfRange("population must have at least 10 units")
        if sum(self.dummy_blocks) > self.q_binary:
            raise OutOfRange("dummy blocks exceed the binary column budget")
        for r in self.recipes:
            total = r.lead_share + r.mid_share + r.noise_share
            if not np.isclose(total, 1.0, atol=1e-9):
                raise InfeasibleSpec(f"recipe {r.name!r}: shares sum to {total}, not 1")
            if r.lead_share > 0 and not 1 <= r.lead_span <= self.q:
                raise InfeasibleSpec(f"recipe {r.name!r}: empty leading block")
            if r.mid_share > 0 and not r.lead_span < r.mid_span <= self.q:
                raise InfeasibleSpec(f"recipe {r.name!r}: empty mid block")
            for band in (r.r2_full_band, r.r2_first_band):
                if band is not None and not (0 <= band[0] <= band[1] <= 1):
                    raise InfeasibleSpec(f"recipe {r.name!r}: invalid band {band}")

    @property
    def q(self) -> int:
        return self.q_binary + self.q_continuous


def _latent_columns(rng, factors, strengths, count):
    """Unit-variance latents: shared factor part plus idiosyncratic noise."""
    n, r = factors.shape
    load = rng.standard_normal((count, r)) * strengths
    uniq = rng.uniform(0.35, 0.75, size=count)  # fraction of unique variance
    common = load / np.linalg.norm(load, axis=1, keepdims=True) * np.sqrt(1 - uniq)[:, None]
    return factors @ common.T + rng.standard_normal((n, count)) * np.sqrt(uniq)


def generate_population(spec: SyntheticSpec | None = None) -> Population:
    """Draw a synthetic population and report the realized R-squared values.

    Raises
    ------
    InfeasibleSpec
        If a recipe declares R-squared bands and the realized values land
        outside them (the message reports what was achieved).
    """
    spec = spec if spec is not None else SyntheticSpec()
    rng = stream(spec.seed, "population")
    n = spec.population_size
    factors = rng.standard_normal((n, spec.n_factors))
    strengths = (1.0 + np.arange(spec.n_factors)) ** -0.55

    columns: list[np.ndarray] = []
    names: list[str] = []
    # Dummy blocks: mutually exclusive categories of one latent variable.
    # Each block sums to one, reproducing the exact collinearity that makes
    # full calibration rank deficient in real survey data.
    for b, n_cat in enumerate(spec.dummy_blocks):
        latent = _latent_columns(rng, factors, strengths, 1)[:, 0]
        shares = rng.uniform(0.5, 3.0, size=n_cat)
        edges = np.quantile(latent, np.cumsum(shares)[:-1] / shares.sum())
        cat = np.searchsorted(edges, latent, side="left")
        for k in range(n_cat):
            columns.append((cat == k).astype(float))
            names.append(f"x_b{b + 1}c{k + 1}")
    # Free-standing binary indicators; a handful are rare (a few percent
    # prevalence), which is what destabilizes calibration on raw dummies.
    n_free = spec.q_binary - sum(spec.dummy_blocks)
    n_rare = min(8, n_free)
    latents = _latent_columns(rng, factors, strengths, n_free)
    cuts = np.concatenate([
        rng.uniform(0.955, 0.985, size=n_rare),
        rng.uniform(0.10, 0.90, size=n_free - n_rare),
    ])
    for j in range(n_free):
        thresh = np.quantile(latents[:, j], cuts[j])
        columns.append((latents[:, j] > thresh).astype(float))
        names.append(f"x_d{j + 1}")
    # Continuous columns, a few right-skewed like monetary amounts.
    latents = _latent_columns(rng, factors, strengths, spec.q_continuous)
    n_skew = min(5, spec.q_continuous)
    for j in range(spec.q_continuous):
        col = latents[:, j]
        if j < n_skew:
            col = np.expm1(0.6 * col)
        columns.append(col)
        names.append(f"x_c{j + 1}")

    aux = np.column_stack(columns)
    std = standardize_columns(aux, names)
    model = fit_pca(std)
    z = std.values @ model.loadings
    lam = model.eigenvalues

    responses: dict[str, np.ndarray] = {}
    achieved: dict[str, dict[str, float]] = {}
    for recipe in spec.recipes:
        beta = np.zeros(spec.q)
        lead = slice(0, recipe.lead_span)
        mid = slice(recipe.lead_span, recipe.mid_span)
        if recipe.lead_share > 0:
            beta[lead] = np.sqrt(recipe.lead_share / lam[lead].sum())
        if recipe.mid_share > 0:
            beta[mid] = np.sqrt(recipe.mid_share / lam[mid].sum())
        signal = z @ beta
        y = recipe.location + signal + rng.standard_normal(n) * np.sqrt(recipe.noise_share)
        if recipe.tail_prob > 0:
            hit = rng.random(n) < recipe.tail_prob
            y = y.copy()
            y[hit] += recipe.tail_scale * rng.lognormal(0.0, 1.0, int(hit.sum()))
        var_y = float(np.var(y))
        r2_full = 1.0 - float(np.var(y - signal)) / var_y
        first = z[:, : spec.r2_components] @ beta[: spec.r2_components]
        r2_first = float(np.var(first)) / var_y
        achieved[recipe.name] = {
            "full_model": r2_full,
            "first_components": r2_first,
            "n_components": spec.r2_components,
        }
        for band, value, label in (
            (recipe.r2_full_band, r2_full, "full-model"),
            (recipe.r2_first_band, r2_first, "first-components"),
        ):
            if band is not None and not band[0] <= value <= band[1]:
                raise InfeasibleSpec(
                    f"recipe {recipe.name!r}: achieved {label} R^2 {value:.4f} "
                    f"outside band [{band[0]}, {band[1]}]"
                )
        responses[recipe.name] = y

    return make_population(aux, names, responses, achieved)


# ---------------------------------------------------------------------------
# Metrics


def _check_runs(estimates) -> np.ndarray:
    est = np.asarray(estimates, dtype=float)
    if est.ndim != 1 or est.size < 2:
        raise InsufficientRuns("need at least two simulation runs")
    return est


def _check_total(t: float) -> float:
    if t == 0:
        raise ZeroTotal("relative metrics need a nonzero true total")
    return float(t)


def metric_rb(estimates, t) -> float:
    """Monte Carlo relative bias: (mean - t) / t."""
    est, t = _check_runs(estimates), _check_total(t)
    return float((est.mean() - t) / t)


def metric_rsd(estimates, t) -> float:
    """Monte Carlo relative standard deviation: sd (divisor I-1) / t."""
    est, t = _check_runs(estimates), _check_total(t)
    return float(est.std(ddof=1) / t)


def metric_rrmse(estimates, t) -> float:
    """Relative root mean square error with divisor I-1."""
    est, t = _check_runs(estimates), _check_total(t)
    return float(np.sqrt(np.sum((est - t) ** 2) / (est.size - 1)) / t)


def metric_varrht(estimates, ht_estimates) -> float:
    """Monte Carlo variance relative to the Horvitz-Thompson variance."""
    est = _check_runs(estimates)
    ht = _check_runs(ht_estimates)
    if est.size != ht.size:
        raise DimensionMismatch("both estimate vectors need one value per run")
    if np.array_equal(est, ht):
        return 1.0
    return float(est.var(ddof=1) / ht.var(ddof=1))


# ---------------------------------------------------------------------------
# Study driver


@dataclass(frozen=True)
class EstimatorConfig:
    """One estimator in a study; unset parameters fall back to study defaults."""

    kind: str
    label: str | None = None
    c: int | None = None
    alpha: float | None = None
    B: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise OutOfRange(f"unknown estimator kind {self.kind!r}")

    @property
    def name(self) -> str:
        return self.label if self.label is not None else self.kind


def default_estimators() -> tuple[EstimatorConfig, ...]:
    return tuple(EstimatorConfig(kind) for kind in (CAL, PCA, BAG, BAG_PCA, HT))


@dataclass(frozen=True)
class MetricRow:
    rb: float
    rsd: float
    rrmse: float
    varrht: float


@dataclass(frozen=True)
class CvSummary:
    min: float
    q1: float
    median: float
    mean: float
    q3: float
    max: float


@dataclass(frozen=True)
class GRangeSummary:
    """Dispersion of the g-weights across runs."""

    mean_min: float   # mean over runs of the per-run minimum
    mean_max: float   # mean over runs of the per-run maximum
    min: float        # extreme over all runs
    max: float
    mean_abs_dev: float  # mean over runs of mean |g - 1|


@dataclass(frozen=True)
class SimulationReport:
    """Per-estimator metrics, g-weight dispersion, and run metadata."""

    metrics: dict[str, dict[str, MetricRow]]
    cv_summary: dict[str, CvSummary]
    g_range: dict[str, GRangeSummary]
    meta: dict[str, Any]
    estimates: dict[str, dict[str, np.ndarray]] | None = None


def _summaries(values: np.ndarray) -> CvSummary:
    qs = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
    return CvSummary(float(qs[0]), float(qs[1]), float(qs[2]),
                     float(values.mean()), float(qs[3]), float(qs[4]))


def _estimator_weights(est: EstimatorConfig, pop: Population, design, run_index: int,
                       study) -> tuple[np.ndarray, bool, int]:
    """g-weights of one estimator on one sample; returns (g, rank_flag, n_singular)."""
    rows = design.sample_indices
    d = design.sample_design_weights
    n_pop = pop.size
    if est.kind == HT:
        return np.ones(rows.size), False, 0
    c = est.c if est.c is not None else study["c"]
    if est.kind == CAL:
        # Full calibration is expected to be rank deficient in high dimension;
        # it always runs under the minimum-norm policy so the failure shows up
        # in the metrics instead of aborting the study.
        spec = CalibrationSpec(singularity_policy=POLICY_PSEUDO_INVERSE)
        ws = chi2_calibrate(pop.standardized.values[rows], d,
                            np.zeros(pop.aux.n_cols), spec, population_size=n_pop)
        return ws.g, ws.provenance["rank_deficient"], 0
    if est.kind == PCA:
        spec = CalibrationSpec(singularity_policy=study["policy"])
        ws = chi2_calibrate(pop.component_scores[rows][:, :c], d, np.zeros(c),
                            spec, population_size=n_pop)
        return ws.g, ws.provenance["rank_deficient"], 0
    spec = CalibrationSpec(singularity_policy=study["policy"])
    if est.kind == BAG:
        cfg = BaggingConfig(
            B=est.B if est.B is not None else study["B"], c=c, alpha=0.0,
            seed=derive_seed(study["seed"], "bag-aux", run_index),
            sampler=study["sampler"],
        )
        res = run_bagging(identity_model(pop.standardized), pop.aux.values[rows],
                          design, cfg, spec)
    else:  # BAG+PCA
        cfg = BaggingConfig(
            B=est.B if est.B is not None else study["B"], c=c,
            alpha=est.alpha if est.alpha is not None else study["alpha"],
            seed=derive_seed(study["seed"], "bag-pca", run_index),
            sampler=study["sampler"],
        )
        res = run_bagging(pop.model, pop.aux.values[rows], design, cfg, spec)
    prov = res.weights.provenance
    return res.g, prov["rank_deficient"], prov["singular_iterations"]


def run_study(pop: Population, n: int, estimators=None, runs: int = 1000,
              seed: int = 0, *, B: int = 100, c: int | None = None,
              alpha: float = 0.5, singularity_policy: str = POLICY_PSEUDO_INVERSE,
              sampler: str = SYSTEMATIC, threads: int = 1,
              keep_estimates: bool = False) -> SimulationReport:
    """Monte Carlo comparison of estimators under repeated SRSWOR samples.

    ``c`` defaults to ``round(sqrt(n))``.  The Horvitz-Thompson estimates are
    always computed internally, so variance ratios are available even when HT
    is not in the estimator list.  Runs are independent given the seed; with
    ``threads > 1`` they execute concurrently with identical results.
    """
    if runs < 2:
        raise InsufficientRuns("need at least two runs")
    if not 0 < n <= pop.size:
        raise OutOfRange(f"sample size must be in (0, {pop.size}]")
    estimators = tuple(estimators) if estimators is not None else default_estimators()
    labels = [e.name for e in estimators]
    if len(set(labels)) != len(labels):
        raise OutOfRange("estimator labels must be distinct")
    study = {
        "B": B, "c": int(c) if c is not None else max(1, round(float(np.sqrt(n)))),
        "alpha": alpha, "policy": singularity_policy, "sampler": sampler,
        "seed": seed,
    }
    resp_names = pop.response_names()
    y_matrix = np.column_stack([pop.responses[r] for r in resp_names])
    # Fill the population caches before any worker threads share them.
    pop.standardized, pop.model, pop.component_scores  # noqa: B018

    def one_run(i: int):
        design = srswor(pop.size, n, stream(seed, "design", i))
        d = design.sample_design_weights
        y_rows = y_matrix[design.sample_indices]
        ht_totals = d @ y_rows
        out = {}
        for est in estimators:
            g, rank_flag, n_singular = _estimator_weights(est, pop, design, i, study)
            w = d * g
            out[est.name] = {
                "totals": w @ y_rows,
                "cv": weight_cv(g),
                "min_g": float(g.min()),
                "max_g": float(g.max()),
                "abs_dev": float(np.abs(g - 1.0).mean()),
                "rank_flag": bool(rank_flag),
                "singular": int(n_singular),
            }
        return ht_totals, out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one_run, range(runs)))
    else:
        results = [one_run(i) for i in range(runs)]

    ht_est = np.vstack([r[0] for r in results])  # runs x responses
    metrics: dict[str, dict[str, MetricRow]] = {}
    cv_summary: dict[str, CvSummary] = {}
    g_range: dict[str, GRangeSummary] = {}
    estimates: dict[str, dict[str, np.ndarray]] = {}
    diag: dict[str, dict[str, int]] = {}
    for est in estimators:
        label = est.name
        totals = np.vstack([r[1][label]["totals"] for r in results])
        cvs = np.array([r[1][label]["cv"] for r in results])
        mins = np.array([r[1][label]["min_g"] for r in results])
        maxs = np.array([r[1][label]["max_g"] for r in results])
        devs = np.array([r[1][label]["abs_dev"] for r in results])
        metrics[label] = {}
        for j, resp in enumerate(resp_names):
            t = pop.true_totals[resp]
            metrics[label][resp] = MetricRow(
                metric_rb(totals[:, j], t),
                metric_rsd(totals[:, j], t),
                metric_rrmse(totals[:, j], t),
                metric_varrht(totals[:, j], ht_est[:, j]),
            )
        cv_summary[label] = _summaries(cvs)
        g_range[label] = GRangeSummary(
            float(mins.mean()), float(maxs.mean()),
            float(mins.min()), float(maxs.max()), float(devs.mean()),
        )
        diag[label] = {
            "rank_deficient_runs": int(sum(r[1][label]["rank_flag"] for r in results)),
            "singular_iterations": int(sum(r[1][label]["singular"] for r in results)),
        }
        if keep_estimates:
            estimates[label] = {resp: totals[:, j] for j, resp in enumerate(resp_names)}

    meta: dict[str, Any] = {
        "runs": runs, "n": n, "N": pop.size, "q": pop.aux.n_cols,
        "seed": seed, "B": B, "c": study["c"], "alpha": alpha,
        "sampler": sampler, "singularity_policy": singularity_policy,
        "estimators": {
            e.name: {"kind": e.kind, "c": e.c, "alpha": e.alpha, "B": e.B}
            for e in estimators
        },
        "diagnostics": diag,
    }
    return SimulationReport(metrics, cv_summary, g_range, meta,
                            estimates if keep_estimates else None)


# ---------------------------------------------------------------------------
# Parameter sweeps


@dataclass(frozen=True)
class SweepRow:
    value: float
    rb: float
    rsd: float
    rrmse: float
    varrht: float
    cv_mean: float
    mean_min_g: float
    mean_max_g: float
    min_g: float
    max_g: float
    mean_abs_dev: float

    @property
    def mean_spread(self) -> float:
        """Average width of the g-weight range across runs."""
        return self.mean_max_g - self.mean_min_g


@dataclass(frozen=True)
class SweepResult:
    axis: str
    response: str
    rows: tuple[SweepRow, ...]
    meta: dict[str, Any]


def sweep(pop: Population, n: int, axis: str, grid, runs: int = 1000, seed: int = 0,
          *, B: int = 100, c: int | None = None, alpha: float = 0.5,
          response: str | None = None, sampler: str = SYSTEMATIC,
          threads: int = 1) -> SweepResult:
    """Re-run the bagged estimator along a grid of ``c`` or ``alpha``.

    Every grid value reuses the same seed, so the same samples are drawn and
    the comparison across values is paired.
    """
    if axis not in ("c", "alpha"):
        raise OutOfRange("axis must be 'c' or 'alpha'")
    grid = list(grid)
    if not grid:
        raise OutOfRange("grid must be nonempty")
    response = response if response is not None else pop.response_names()[0]
    if response not in pop.responses:
        raise OutOfRange(f"unknown response {response!r}")

    rows = []
    for value in grid:
        if axis == "c":
            cfg = EstimatorConfig(BAG_PCA, c=int(value), alpha=alpha, B=B)
        else:
            cfg = EstimatorConfig(BAG_PCA, c=c, alpha=float(value), B=B)
        report = run_study(pop, n, [cfg], runs, seed, B=B, c=c, alpha=alpha,
                           sampler=sampler, threads=threads)
        row = report.metrics[BAG_PCA][response]
        rng_sum = report.g_range[BAG_PCA]
        rows.append(SweepRow(
            float(value), row.rb, row.rsd, row.rrmse, row.varrht,
            report.cv_summary[BAG_PCA].mean,
            rng_sum.mean_min, rng_sum.mean_max, rng_sum.min, rng_sum.max,
            rng_sum.mean_abs_dev,
        ))
    meta = {"axis": axis, "grid": [float(v) for v in grid], "runs": runs,
            "seed": seed, "n": n, "B": B, "c": c, "alpha": alpha,
            "response": response, "sampler": sampler}
    return SweepResult(axis, response, tuple(rows), meta)
