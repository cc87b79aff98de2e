import numpy as np
import pytest

from bagcalib.bagging import (
    BaggingConfig,
    bp_total,
    model_assisted_decomposition,
    run_bagging,
    run_bagging_exact,
)
from bagcalib.calibration import (
    POLICY_ERROR,
    CalibrationSpec,
    calibration_residual,
    chi2_calibrate,
)
from bagcalib.errors import AllIterationsFailed, OutOfRange
from bagcalib.linalg import standardize_columns
from bagcalib.pca import fit_pca, scores
from bagcalib.rng import stream
from bagcalib.sampling import SamplingDesign, srswor


def _population(rng, n_pop=60, q=8):
    raw = rng.normal(size=(n_pop, q)) @ (np.eye(q) + 0.4 * rng.normal(size=(q, q)))
    raw += rng.uniform(-2, 2, size=q)
    std = standardize_columns(raw)
    return raw, std, fit_pca(std)


def test_census_gives_unit_g():
    rng = np.random.default_rng(0)
    raw, std, model = _population(rng, n_pop=25, q=5)
    design = SamplingDesign(25, np.arange(25), np.ones(25), np.ones(25))
    res = run_bagging(raw, None, design, BaggingConfig(B=20, c=3, seed=4)) \
        if False else run_bagging(model, raw, design, BaggingConfig(B=20, c=3, seed=4))
    np.testing.assert_allclose(res.g, 1.0, atol=1e-10)
    np.testing.assert_allclose(res.w, 1.0, atol=1e-10)


def test_all_components_single_iteration_equals_full_calibration():
    # With c = q every component is certain, so one iteration calibrates on
    # the full component basis, which spans the original standardized
    # variables: the weights must match full calibration on those.
    rng = np.random.default_rng(1)
    for trial in range(20):
        raw, std, model = _population(np.random.default_rng(100 + trial), n_pop=40, q=6)
        design = srswor(40, 20, stream(trial, "design"))
        cfg = BaggingConfig(B=1, c=6, alpha=0.5, seed=trial)
        res = run_bagging(model, raw[design.sample_indices], design, cfg)
        ws = chi2_calibrate(
            std.values[design.sample_indices], design.sample_design_weights,
            np.zeros(6), CalibrationSpec(), population_size=40,
        )
        np.testing.assert_allclose(res.g, ws.g, atol=1e-8)


def test_deterministic_across_runs():
    rng = np.random.default_rng(2)
    raw, std, model = _population(rng)
    design = srswor(60, 30, stream(9, "design"))
    cfg = BaggingConfig(B=50, c=3, seed=123)
    g1 = run_bagging(model, raw[design.sample_indices], design, cfg).g
    g2 = run_bagging(model, raw[design.sample_indices], design, cfg).g
    np.testing.assert_array_equal(g1, g2)


def test_default_c_is_sqrt_n():
    assert BaggingConfig().resolve_c(85) == 9
    assert BaggingConfig(c=10).resolve_c(85) == 10
    assert BaggingConfig().resolve_c(100) == 10


def test_bp_total_matches_iteration_average():
    rng = np.random.default_rng(3)
    raw, std, model = _population(rng, n_pop=50, q=6)
    y = raw @ rng.normal(size=6) + rng.normal(size=50)
    design = srswor(50, 20, stream(5, "design"))
    cfg = BaggingConfig(B=40, c=3, seed=7, retain_iterations=True)
    res = run_bagging(model, raw[design.sample_indices], design, cfg)
    y_s = y[design.sample_indices]
    d = design.sample_design_weights
    per_iter = [d * rec.g @ y_s for rec in res.iterations if not rec.dropped]
    total = bp_total(res.weights, y_s)
    assert total == pytest.approx(np.mean(per_iter), rel=1e-10)
    # Degenerate responses.
    assert bp_total(res.weights, np.zeros(20)) == 0.0
    ht = d @ y_s
    uncal = res.weights.__class__(res.weights.unit_ids, d, np.ones(20), d)
    assert bp_total(uncal, y_s) == pytest.approx(ht, rel=1e-12)


def test_model_assisted_identity():
    rng = np.random.default_rng(4)
    for trial in range(20):
        trial_rng = np.random.default_rng(500 + trial)
        raw, std, model = _population(trial_rng, n_pop=200, q=12)
        y = raw @ trial_rng.normal(size=12) * 0.3 + trial_rng.normal(size=200)
        design = srswor(200, 40, stream(trial, "design"))
        cfg = BaggingConfig(B=25, c=4, seed=trial, retain_iterations=True)
        res = run_bagging(model, raw[design.sample_indices], design, cfg)
        y_s = y[design.sample_indices]
        pop_scores = scores(model, raw)
        m_hat, total = model_assisted_decomposition(res, pop_scores, design, y_s)
        direct = bp_total(res.weights, y_s)
        assert total == pytest.approx(direct, rel=1e-8)
        assert m_hat.shape == (200,)


def test_model_assisted_zero_residual_response():
    # Response exactly linear in the always-selected components: predictions
    # absorb everything and the weighted correction vanishes.
    rng = np.random.default_rng(15)
    raw, std, model = _population(rng, n_pop=40, q=5)
    pop_scores = scores(model, raw)
    y = pop_scores @ rng.normal(size=5) + 3.0
    design = srswor(40, 20, stream(30, "design"))
    cfg = BaggingConfig(B=1, c=5, seed=0, retain_iterations=True)
    res = run_bagging(model, raw[design.sample_indices], design, cfg)
    m_hat, total = model_assisted_decomposition(res, pop_scores, design,
                                                y[design.sample_indices])
    correction = total - m_hat.sum()
    assert abs(correction) <= 1e-8 * max(1.0, abs(total))
    assert total == pytest.approx(y.sum(), rel=1e-8)


def test_model_assisted_census_recovers_true_total():
    rng = np.random.default_rng(5)
    raw, std, model = _population(rng, n_pop=30, q=5)
    y = raw @ rng.normal(size=5) + 2.0
    design = SamplingDesign(30, np.arange(30), np.ones(30), np.ones(30))
    cfg = BaggingConfig(B=10, c=2, seed=1, retain_iterations=True)
    res = run_bagging(model, raw, design, cfg)
    _, total = model_assisted_decomposition(res, scores(model, raw), design, y)
    assert total == pytest.approx(y.sum(), rel=1e-8)


def test_exact_mode_reproduces_important_totals():
    rng = np.random.default_rng(6)
    raw, std, model = _population(rng, n_pop=80, q=10)
    important = (0, 3)
    design = srswor(80, 30, stream(2, "design"))
    cfg = BaggingConfig(B=30, c=5, seed=11)
    res = run_bagging_exact(std, important, design, cfg)
    sample_std = std.values[design.sample_indices]
    for j in important:
        achieved = res.w @ sample_std[:, j]
        assert abs(achieved - 0.0) <= 1e-8  # standardized totals are zero
    # Intercept constraint holds as well.
    assert res.w.sum() == pytest.approx(80.0, rel=1e-8)
    # A generic non-important variable is not matched exactly.
    others = [j for j in range(10) if j not in important]
    gaps = [abs(res.w @ sample_std[:, j]) for j in others]
    assert max(gaps) > 1e-6


def test_exact_mode_iteration_blocks_are_orthogonal():
    rng = np.random.default_rng(7)
    raw, std, model = _population(rng, n_pop=70, q=9)
    from bagcalib.pca import residual_pca
    rp = residual_pca(std, [0, 1])
    comp_scores = rp.residuals @ rp.model.loadings
    gram = rp.important.T @ comp_scores
    scale = np.linalg.norm(rp.important, axis=0)[:, None] * np.maximum(
        np.linalg.norm(comp_scores, axis=0)[None, :], 1e-12
    )
    assert np.abs(gram / np.maximum(scale, 1e-12)).max() <= 1e-6


def test_exact_mode_spanning_importants_matches_full_calibration():
    # When the important variables span the whole column space (the other
    # columns are linear combinations of them), every residual component is
    # degenerate and each iteration effectively calibrates on that span, so
    # the result matches full calibration under the minimum-norm policy.
    rng = np.random.default_rng(8)
    base = rng.normal(size=(50, 4))
    raw = np.column_stack([base, base @ rng.normal(size=4), base @ rng.normal(size=4)])
    std = standardize_columns(raw)
    design = srswor(50, 25, stream(3, "design"))
    res = run_bagging_exact(std, (0, 1, 2, 3), design,
                            BaggingConfig(B=5, c=5, alpha=0.0, seed=2),
                            CalibrationSpec(singularity_policy="pseudo_inverse"))
    ws = chi2_calibrate(std.values[design.sample_indices],
                        design.sample_design_weights, np.zeros(6),
                        CalibrationSpec(singularity_policy="pseudo_inverse"),
                        population_size=50)
    np.testing.assert_allclose(res.g, ws.g, atol=1e-8)


def test_exact_mode_validates_sizes():
    rng = np.random.default_rng(9)
    raw, std, model = _population(rng, n_pop=30, q=6)
    design = srswor(30, 15, stream(4, "design"))
    with pytest.raises(OutOfRange):
        run_bagging_exact(std, (0, 1, 2), design, BaggingConfig(B=5, c=3, seed=0))
    with pytest.raises(OutOfRange):
        run_bagging_exact(std, (0,), design, BaggingConfig(B=5, c=6, seed=0))


def test_singular_iterations_dropped_under_error_policy():
    rng = np.random.default_rng(10)
    col = rng.normal(size=30)
    raw = np.column_stack([col, col, rng.normal(size=30)])  # exact duplicate pair
    std = standardize_columns(raw)
    model = fit_pca(std)
    design = srswor(30, 10, stream(6, "design"))
    # Draws of size 2 from three components; the zero-eigenvalue component
    # has probability 0 under alpha > 0, so iterations stay nonsingular.
    cfg = BaggingConfig(B=10, c=2, alpha=0.5, seed=3, retain_iterations=True)
    res = run_bagging(model, raw[design.sample_indices], design, cfg,
                      CalibrationSpec(singularity_policy=POLICY_ERROR))
    assert res.weights.provenance["B_effective"] == 10

    # With alpha = 0 the degenerate component can be drawn; under the error
    # policy those iterations are dropped but the bag survives.
    cfg0 = BaggingConfig(B=40, c=2, alpha=0.0, seed=3, retain_iterations=True)
    res0 = run_bagging(model, raw[design.sample_indices], design, cfg0,
                       CalibrationSpec(singularity_policy=POLICY_ERROR))
    prov = res0.weights.provenance
    assert prov["singular_iterations"] > 0
    assert prov["B_effective"] == 40 - prov["singular_iterations"]
    dropped = [rec for rec in res0.iterations if rec.dropped]
    assert len(dropped) == prov["singular_iterations"]
    assert not np.isnan(res0.g).any()


def test_singular_iterations_pseudo_inverse_default():
    rng = np.random.default_rng(11)
    col = rng.normal(size=30)
    raw = np.column_stack([col, col, rng.normal(size=30)])
    std = standardize_columns(raw)
    model = fit_pca(std)
    design = srswor(30, 10, stream(7, "design"))
    cfg = BaggingConfig(B=40, c=2, alpha=0.0, seed=3)
    res = run_bagging(model, raw[design.sample_indices], design, cfg)
    prov = res.weights.provenance
    assert prov["singular_iterations"] > 0
    assert prov["B_effective"] == 40  # every iteration kept via minimum norm
    assert not np.isnan(res.g).any()


def test_all_iterations_failed():
    rng = np.random.default_rng(12)
    col = rng.normal(size=20)
    raw = np.column_stack([col, col])
    std = standardize_columns(raw)
    model = fit_pca(std)
    design = srswor(20, 8, stream(8, "design"))
    cfg = BaggingConfig(B=5, c=2, alpha=0.0, seed=1)
    with pytest.raises(AllIterationsFailed):
        run_bagging(model, raw[design.sample_indices], design, cfg,
                    CalibrationSpec(singularity_policy=POLICY_ERROR))


def test_final_weights_nearly_calibrated_on_frequent_components():
    # Sanity: averaged weights still reduce the component calibration gaps
    # relative to the raw design weights.
    rng = np.random.default_rng(14)
    raw, std, model = _population(rng, n_pop=90, q=10)
    design = srswor(90, 30, stream(21, "design"))
    d = design.sample_design_weights
    cfg = BaggingConfig(B=200, c=4, seed=5)
    res = run_bagging(model, raw[design.sample_indices], design, cfg)
    z_s = scores(model, raw[design.sample_indices])
    before = calibration_residual(z_s, d, np.zeros(10))
    after = calibration_residual(z_s, res.w, np.zeros(10))
    assert after < before
