import numpy as np
import pytest

from bagcalib.calibration import (
    POLICY_PSEUDO_INVERSE,
    CalibrationSpec,
    calibration_residual,
    chi2_calibrate,
    weight_cv,
)
from bagcalib.errors import (
    DimensionMismatch,
    OutOfRange,
    SingularSystem,
    ZeroMean,
)


def kkt_oracle(z, d, totals, qk=None):
    """Solve the constrained minimization through its full KKT system.

    Minimize sum (w_k - d_k)^2 / (q_k d_k) subject to Z'w = t.  Stationarity
    gives 2 (w - d) / (q d) = Z lam; assembling the (n+p) system and solving
    it directly is independent of the closed-form route.
    """
    n, p = z.shape
    qk = np.ones(n) if qk is None else qk
    top = np.hstack([np.diag(2.0 / (qk * d)), z])
    bottom = np.hstack([z.T, np.zeros((p, p))])
    rhs = np.concatenate([2.0 / qk, totals])
    solution = np.linalg.solve(np.vstack([top, bottom]), rhs)
    return solution[:n]


def random_instance(rng, n=20, p=4):
    z = rng.normal(size=(n, p))
    d = rng.uniform(1.5, 4.0, size=n)
    totals = rng.normal(size=p) * n
    return z, d, totals


def test_single_constant_variable_closed_form():
    # One calibration variable identically 1 with total N: g = N / sum(d).
    ws = chi2_calibrate(
        np.ones((2, 1)), np.array([2.0, 3.0]), np.array([10.0]),
        CalibrationSpec(include_intercept=False),
    )
    np.testing.assert_allclose(ws.g, [2.0, 2.0], atol=1e-12)
    np.testing.assert_allclose(ws.w, [4.0, 6.0], atol=1e-12)
    assert ws.w.sum() == pytest.approx(10.0, abs=1e-12)


def test_census_weights_are_unchanged():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(12, 3))
    d = np.ones(12)
    totals = z.sum(axis=0)
    ws = chi2_calibrate(z, d, totals, population_size=12)
    np.testing.assert_allclose(ws.g, 1.0, atol=1e-10)


def test_matches_kkt_oracle():
    rng = np.random.default_rng(1)
    spec = CalibrationSpec(include_intercept=False)
    for _ in range(10):
        z, d, totals = random_instance(rng)
        ws = chi2_calibrate(z, d, totals, spec)
        w_oracle = kkt_oracle(z, d, totals)
        np.testing.assert_allclose(ws.w, w_oracle, atol=1e-8 * max(1, np.abs(w_oracle).max()))


def test_matches_kkt_oracle_with_intercept_and_qk():
    rng = np.random.default_rng(2)
    n = 15
    qk = rng.uniform(0.5, 2.0, size=n)
    spec = CalibrationSpec(unit_distance_weights=qk)
    z, d, totals = random_instance(rng, n=n, p=3)
    ws = chi2_calibrate(z, d, totals, spec, population_size=40.0)
    z_full = np.hstack([z, np.ones((n, 1))])
    w_oracle = kkt_oracle(z_full, d, np.append(totals, 40.0), qk)
    np.testing.assert_allclose(ws.w, w_oracle, atol=1e-8 * max(1, np.abs(w_oracle).max()))


def test_calibration_equation_satisfied():
    rng = np.random.default_rng(3)
    for _ in range(5):
        z, d, totals = random_instance(rng, n=25, p=5)
        ws = chi2_calibrate(z, d, totals, population_size=60.0)
        z_full = np.hstack([z, np.ones((25, 1))])
        assert calibration_residual(z_full, ws.w, np.append(totals, 60.0)) <= 1e-8


def test_optimality_kkt_conditions():
    # The gradient (w - d) / (q d) must lie in the span of the constraints.
    rng = np.random.default_rng(4)
    z, d, totals = random_instance(rng, n=30, p=4)
    ws = chi2_calibrate(z, d, totals, CalibrationSpec(include_intercept=False))
    grad = (ws.w - d) / d
    proj = z @ np.linalg.lstsq(z, grad, rcond=None)[0]
    assert np.abs(grad - proj).max() <= 1e-8


def test_span_invariance():
    rng = np.random.default_rng(5)
    z, d, totals = random_instance(rng, n=20, p=4)
    m = rng.normal(size=(4, 4)) + 4 * np.eye(4)
    spec = CalibrationSpec(include_intercept=False)
    g_base = chi2_calibrate(z, d, totals, spec).g
    g_rotated = chi2_calibrate(z @ m, d, totals @ m, spec).g
    np.testing.assert_allclose(g_rotated, g_base, atol=1e-8)


def test_identity_at_feasibility():
    rng = np.random.default_rng(6)
    z = rng.normal(size=(10, 2))
    d = rng.uniform(1, 3, size=10)
    totals = d @ z  # the design weights already satisfy the equation
    ws = chi2_calibrate(z, d, totals, CalibrationSpec(include_intercept=False))
    np.testing.assert_allclose(ws.g, 1.0, atol=1e-10)


def test_singular_system_policies():
    rng = np.random.default_rng(7)
    col = rng.normal(size=8)
    z = np.column_stack([col, col])  # exactly collinear
    d = np.ones(8)
    totals = np.array([col.sum(), col.sum()])
    with pytest.raises(SingularSystem):
        chi2_calibrate(z, d, totals, CalibrationSpec(include_intercept=False))
    spec = CalibrationSpec(include_intercept=False,
                           singularity_policy=POLICY_PSEUDO_INVERSE)
    ws = chi2_calibrate(z, d, totals, spec)
    assert ws.provenance["rank_deficient"]
    # The achievable constraints are still met by the minimum-norm solution.
    assert calibration_residual(z, ws.w, totals) <= 1e-8


def test_pseudo_inverse_more_columns_than_rows():
    rng = np.random.default_rng(8)
    z = rng.normal(size=(6, 9))
    d = np.ones(6)
    totals = z.sum(axis=0)  # feasible: census totals
    spec = CalibrationSpec(include_intercept=False,
                           singularity_policy=POLICY_PSEUDO_INVERSE)
    ws = chi2_calibrate(z, d, totals, spec)
    assert ws.provenance["rank_deficient"]
    assert calibration_residual(z, ws.w, totals) <= 1e-8


def test_negative_weights_allowed():
    # Linear calibration can push weights negative; they must pass through.
    z = np.array([[1.0], [1.0]])
    d = np.array([1.0, 1.0])
    ws = chi2_calibrate(z, d, np.array([-3.0]),
                        CalibrationSpec(include_intercept=False))
    assert ws.w.min() < 0


def test_intercept_requires_population_size():
    with pytest.raises(DimensionMismatch):
        chi2_calibrate(np.ones((3, 1)), np.ones(3), np.array([3.0]))


def test_residual_examples():
    assert calibration_residual(np.ones((2, 1)), np.array([4.0, 6.0]),
                                np.array([10.0])) == 0.0
    z = np.array([[1.0, 0.0], [0.0, 1.0]])
    # Coordinate violations are 1/1 and 2/4; the max is reported.
    r = calibration_residual(z, np.array([2.0, 2.0]), np.array([1.0, 4.0]))
    assert r == pytest.approx(1.0)


def test_weight_cv():
    assert weight_cv(np.ones(3)) == 0.0
    assert weight_cv(np.array([1.0, 3.0])) == pytest.approx(np.sqrt(2) / 2)
    with pytest.raises(ZeroMean):
        weight_cv(np.array([-1.0, 1.0]))
    with pytest.raises(DimensionMismatch):
        weight_cv(np.array([1.0]))


def test_spec_validation():
    with pytest.raises(OutOfRange):
        CalibrationSpec(distance="raking")
    with pytest.raises(OutOfRange):
        CalibrationSpec(singularity_policy="ignore")
    with pytest.raises(OutOfRange):
        CalibrationSpec(unit_distance_weights=np.array([1.0, 0.0]))
