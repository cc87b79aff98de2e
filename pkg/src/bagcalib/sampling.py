"""Sampling designs for units and for principal components.

Units are drawn by simple random sampling without replacement.  Component
subsets are drawn without replacement with fixed size ``c`` and unequal
inclusion probabilities proportional to ``eigenvalue ** alpha``.  The default
component sampler is randomized-order systematic sampling, which hits the
target first-order inclusion probabilities exactly; a rejective
conditional-Poisson (maximum-entropy) sampler is available as an option.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InfeasibleSize, OutOfRange

SYSTEMATIC = "systematic_random_order"
REJECTIVE = "rejective_poisson"

# Working probabilities within this distance of 0/1 are treated as certain
# exclusions/inclusions by the samplers.
_PROB_EPS = 1e-12


@dataclass(frozen=True)
class SamplingDesign:
    """A realized unit sample with its inclusion probabilities."""

    population_size: int
    sample_indices: np.ndarray
    inclusion_probs: np.ndarray
    design_weights: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.sample_indices, dtype=np.intp)
        object.__setattr__(self, "sample_indices", idx)
        object.__setattr__(self, "inclusion_probs", np.asarray(self.inclusion_probs, dtype=float))
        object.__setattr__(self, "design_weights", np.asarray(self.design_weights, dtype=float))
        if self.inclusion_probs.shape != (self.population_size,):
            raise DimensionMismatch("one inclusion probability per population unit")
        if self.design_weights.shape != (self.population_size,):
            raise DimensionMismatch("one design weight per population unit")

    @property
    def sample_size(self) -> int:
        return int(self.sample_indices.shape[0])

    @property
    def sample_design_weights(self) -> np.ndarray:
        """Design weights of the sampled units, in sample order."""
        return self.design_weights[self.sample_indices]


@dataclass(frozen=True)
class ObservedDesign:
    """Design information when only the sampled units' probabilities are known.

    Stands in for :class:`SamplingDesign` in sample-only workflows; exposes
    the same sample-level accessors.
    """

    population_size: int
    sample_inclusion_probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.sample_inclusion_probs, dtype=float)
        object.__setattr__(self, "sample_inclusion_probs", probs)
        if np.any(probs <= 0) or np.any(probs > 1):
            raise OutOfRange("inclusion probabilities must lie in (0, 1]")

    @property
    def sample_size(self) -> int:
        return int(self.sample_inclusion_probs.shape[0])

    @property
    def sample_indices(self) -> np.ndarray:
        return np.arange(self.sample_size)

    @property
    def sample_design_weights(self) -> np.ndarray:
        return 1.0 / self.sample_inclusion_probs


@dataclass(frozen=True)
class ComponentSelection:
    """Per-component inclusion probabilities for fixed-size subset draws."""

    alpha: float
    c: int
    probs: np.ndarray = field(repr=False)
    sampler: str = SYSTEMATIC
    # Cache for the rejective sampler's working probabilities; filled on the
    # first draw, deterministic given probs.
    _working: dict = field(default_factory=dict, repr=False, compare=False)


def component_inclusion_probs(eigenvalues, alpha: float, c: int,
                              sampler: str = SYSTEMATIC) -> ComponentSelection:
    """Inclusion probabilities proportional to ``eigenvalue ** alpha``.

    Probabilities sum to ``c``.  Any probability exceeding 1 is capped at 1
    and the remaining budget is redistributed proportionally over the
    uncapped components, iterating until all fit.  ``alpha = 0`` gives equal
    probabilities ``c / q`` for every component (0**0 counts as 1);
    components with a zero eigenvalue are never selected when ``alpha > 0``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise DimensionMismatch("eigenvalues must be a nonempty vector")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise OutOfRange("eigenvalues must be finite and nonnegative")
    if alpha < 0:
        raise OutOfRange("alpha must be nonnegative")
    if sampler not in (SYSTEMATIC, REJECTIVE):
        raise OutOfRange(f"unknown sampler {sampler!r}")
    q = lam.size
    eligible = q if alpha == 0 else int(np.count_nonzero(lam > 0))
    if not 1 <= c <= eligible:
        raise InfeasibleSize(f"c must be in [1, {eligible}], got {c}")

    if alpha == 0:
        probs = np.full(q, c / q)
    else:
        size = lam.astype(float) ** alpha
        probs = np.zeros(q)
        free = size > 0
        budget = float(c)
        while True:
            scaled = budget * size[free] / size[free].sum()
            over = scaled > 1.0
            if not over.any():
                probs[free] = scaled
                break
            over_idx = np.flatnonzero(free)[over]
            probs[over_idx] = 1.0
            free[over_idx] = False
            budget = float(c - np.count_nonzero(probs == 1.0))
    return ComponentSelection(float(alpha), int(c), probs, sampler)


def sample_components(sel: ComponentSelection, rng: np.random.Generator) -> np.ndarray:
    """Draw a fixed-size component subset, returned as sorted indices."""
    if sel.sampler == SYSTEMATIC:
        chosen = _systematic_random_order(sel.probs, sel.c, rng)
    else:
        chosen = _rejective_poisson(sel, rng)
    return np.sort(chosen)


def _systematic_random_order(probs: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic sampling on cumulated probabilities in random order.

    Randomizing the order makes the joint distribution exchangeable while
    keeping the first-order inclusion probabilities exact and the size fixed.
    """
    order = rng.permutation(probs.size)
    cum = np.cumsum(probs[order])
    cum *= c / cum[-1]  # absorb rounding so the final boundary is exactly c
    points = rng.random() + np.arange(c)
    idx = np.searchsorted(cum, points, side="right")
    return order[np.minimum(idx, probs.size - 1)]


def _rejective_poisson(sel: ComponentSelection, rng: np.random.Generator) -> np.ndarray:
    """Rejective conditional-Poisson (maximum-entropy) sampling.

    Units with probability 1 are always included; the rest are drawn by
    Poisson sampling with Newton-adjusted working probabilities, rejecting
    draws until the size is exactly right.
    """
    probs, c = sel.probs, sel.c
    certain = np.flatnonzero(probs >= 1.0 - _PROB_EPS)
    random_part = np.flatnonzero((probs > _PROB_EPS) & (probs < 1.0 - _PROB_EPS))
    c_rest = c - certain.size
    if c_rest == 0:
        return certain
    if c_rest == random_part.size:
        return np.concatenate([certain, random_part])
    if "probs" not in sel._working:
        sel._working["probs"] = _working_probs(probs[random_part], c_rest)
    work = sel._working["probs"]
    while True:
        keep = rng.random(random_part.size) < work
        if int(keep.sum()) == c_rest:
            return np.concatenate([certain, random_part[keep]])


def _working_probs(target: np.ndarray, c: int, max_iter: int = 100, tol: float = 1e-12) -> np.ndarray:
    """Fixed-point adjustment so the size-conditioned design matches ``target``."""
    work = target.copy()
    for _ in range(max_iter):
        attained = _conditional_poisson_probs(work, c)
        delta = target - attained
        if np.abs(delta).max() < tol:
            break
        work = np.clip(work + delta, 1e-10, 1.0 - 1e-10)
    return work


def _conditional_poisson_probs(p: np.ndarray, c: int) -> np.ndarray:
    """First-order inclusion probabilities of Poisson sampling given size ``c``.

    Uses elementary symmetric polynomials of the odds: the inclusion
    probability of item j is ``odds_j * e_{c-1}(odds without j) / e_c(odds)``.
    """
    odds = p / (1.0 - p)
    scale = odds.max()
    odds = odds / scale  # guard against overflow in the polynomials
    e_all = _elementary_symmetric(odds, c)
    incl = np.empty(p.size)
    for j in range(p.size):
        e_wo = _elementary_symmetric(np.delete(odds, j), c - 1)
        incl[j] = odds[j] * e_wo[c - 1] / e_all[c]
    return incl


def _elementary_symmetric(x: np.ndarray, k: int) -> np.ndarray:
    """Elementary symmetric polynomials e_0..e_k of the entries of ``x``."""
    e = np.zeros(k + 1)
    e[0] = 1.0
    for xi in x:
        e[1:] = e[1:] + xi * e[:-1]
    return e


def srswor(population_size: int, n: int, rng: np.random.Generator) -> SamplingDesign:
    """Simple random sample without replacement, uniform over size-n subsets."""
    if not 0 < n <= population_size:
        raise OutOfRange(f"n must be in (0, {population_size}], got {n}")
    indices = np.sort(rng.choice(population_size, size=n, replace=False))
    probs = np.full(population_size, n / population_size)
    return SamplingDesign(population_size, indices, probs, 1.0 / probs)
