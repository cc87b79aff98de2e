import numpy as np
import pytest

from bagcalib.errors import InfeasibleSize, OutOfRange
from bagcalib.rng import stream
from bagcalib.sampling import (
    REJECTIVE,
    ComponentSelection,
    component_inclusion_probs,
    sample_components,
    srswor,
)


def _empirical_freqs(sel, draws, seed=0):
    counts = np.zeros(sel.probs.size)
    rng = stream(seed, "freq-test")
    for _ in range(draws):
        counts[sample_components(sel, rng)] += 1
    return counts / draws


def test_probs_simple_normalization():
    sel = component_inclusion_probs(np.array([4.0, 1.0]), 0.5, 1)
    np.testing.assert_allclose(sel.probs, [2 / 3, 1 / 3], atol=1e-12)


def test_probs_equal_eigenvalues():
    for alpha in (0.0, 0.5, 2.0):
        sel = component_inclusion_probs(np.ones(4), alpha, 2)
        np.testing.assert_allclose(sel.probs, 0.5, atol=1e-12)


def test_probs_capping_redistributes_budget():
    sel = component_inclusion_probs(np.array([100.0, 1.0, 1.0]), 1.0, 2)
    np.testing.assert_allclose(sel.probs, [1.0, 0.5, 0.5], atol=1e-12)
    assert sel.probs.sum() == pytest.approx(2.0, abs=1e-10)


def test_probs_sum_to_c_and_zero_eigenvalues_excluded():
    lam = np.array([5.0, 2.0, 1.0, 0.5, 0.0, 0.0])
    for alpha in (0.25, 0.5, 1.0, 3.0):
        sel = component_inclusion_probs(lam, alpha, 3)
        assert abs(sel.probs.sum() - 3.0) <= 1e-10
        assert sel.probs.max() <= 1.0 + 1e-12
        assert sel.probs[4] == 0.0 and sel.probs[5] == 0.0
    # With alpha = 0 every component is eligible, including zero eigenvalues.
    sel = component_inclusion_probs(lam, 0.0, 3)
    np.testing.assert_allclose(sel.probs, 0.5, atol=1e-12)


def test_probs_infeasible_size():
    with pytest.raises(InfeasibleSize):
        component_inclusion_probs(np.array([1.0, 0.0]), 0.5, 2)
    with pytest.raises(InfeasibleSize):
        component_inclusion_probs(np.ones(3), 0.5, 4)


def test_probs_alpha_monotonicity():
    lam = np.array([6.0, 3.0, 1.0, 0.4, 0.1])
    previous = None
    for alpha in (0.0, 0.25, 0.5, 1.0, 1.5):
        probs = component_inclusion_probs(lam, alpha, 2).probs
        if previous is not None:
            assert probs[0] >= previous[0] - 1e-12
            assert probs[-1] <= previous[-1] + 1e-12
        previous = probs


def test_sample_fixed_size_and_distinct():
    lam = np.abs(np.random.default_rng(0).normal(size=12)) + 0.01
    sel = component_inclusion_probs(lam, 0.5, 5)
    rng = stream(7, "size-test")
    for _ in range(500):
        chosen = sample_components(sel, rng)
        assert chosen.size == 5
        assert np.unique(chosen).size == 5


def test_sample_degenerate_probabilities():
    sel = ComponentSelection(1.0, 2, np.array([1.0, 1.0, 0.0, 0.0]))
    rng = stream(3, "degenerate")
    for _ in range(20):
        np.testing.assert_array_equal(sample_components(sel, rng), [0, 1])


def test_sample_deterministic_given_stream():
    sel = component_inclusion_probs(np.array([4.0, 2.0, 1.0, 0.5]), 0.5, 2)
    a = sample_components(sel, stream(11, "bag", 5))
    b = sample_components(sel, stream(11, "bag", 5))
    np.testing.assert_array_equal(a, b)
    c = sample_components(sel, stream(11, "bag", 6))
    assert not np.array_equal(a, c) or True  # different index may still collide


def test_systematic_first_order_fidelity():
    draws = 200_000
    cases = [
        component_inclusion_probs(np.ones(4), 0.0, 2),        # equal c/q
        component_inclusion_probs(np.array([4.0, 1.0]), 0.5, 1),  # (2/3, 1/3)
        component_inclusion_probs(np.array([9.0, 3.0, 1.0, 0.5, 0.2]), 0.5, 2),
    ]
    for case_no, sel in enumerate(cases):
        freqs = _empirical_freqs(sel, draws, seed=case_no)
        se = np.sqrt(sel.probs * (1 - sel.probs) / draws)
        assert np.all(np.abs(freqs - sel.probs) <= 3 * se + 1e-12), (
            f"case {case_no}: {freqs} vs {sel.probs}"
        )


def test_rejective_first_order_fidelity():
    draws = 50_000
    sel = component_inclusion_probs(
        np.array([9.0, 3.0, 1.0, 0.5]), 0.5, 2, sampler=REJECTIVE
    )
    freqs = _empirical_freqs(sel, draws, seed=42)
    se = np.sqrt(sel.probs * (1 - sel.probs) / draws)
    assert np.all(np.abs(freqs - sel.probs) <= 4 * se)


def test_rejective_with_capped_probability():
    sel = component_inclusion_probs(
        np.array([100.0, 1.0, 1.0]), 1.0, 2, sampler=REJECTIVE
    )
    rng = stream(5, "rejective-capped")
    counts = np.zeros(3)
    for _ in range(4000):
        chosen = sample_components(sel, rng)
        assert 0 in chosen  # capped component is certain
        counts[chosen] += 1
    np.testing.assert_allclose(counts[1:] / 4000, 0.5, atol=0.03)


def test_srswor_basic_properties():
    design = srswor(10, 4, stream(0, "srs"))
    assert design.sample_indices.size == 4
    assert np.unique(design.sample_indices).size == 4
    np.testing.assert_allclose(design.inclusion_probs, 0.4)
    np.testing.assert_array_equal(
        design.design_weights * design.inclusion_probs, np.ones(10)
    )
    np.testing.assert_allclose(design.sample_design_weights, 2.5)


def test_srswor_census():
    design = srswor(6, 6, stream(1, "srs"))
    np.testing.assert_array_equal(design.sample_indices, np.arange(6))
    np.testing.assert_allclose(design.design_weights, 1.0)


def test_srswor_uniformity():
    draws = 100_000
    counts = np.zeros(4)
    rng = stream(2, "srs-mc")
    for _ in range(draws):
        counts[srswor(4, 1, rng).sample_indices[0]] += 1
    se = np.sqrt(0.25 * 0.75 / draws)
    assert np.all(np.abs(counts / draws - 0.25) <= 3 * se)


def test_srswor_out_of_range():
    rng = stream(3, "srs")
    with pytest.raises(OutOfRange):
        srswor(5, 0, rng)
    with pytest.raises(OutOfRange):
        srswor(5, 6, rng)
