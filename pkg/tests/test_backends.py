import numpy as np
import pytest

from bagcalib._core import BACKEND, pykernel
from bagcalib.calibration import CalibrationSpec, chi2_calibrate

try:
    from bagcalib._core import kernel
except ImportError:
    kernel = None

needs_compiled = pytest.mark.skipif(kernel is None, reason="extension not built")


def _problem(rng, n=40, q=12, B=25, c=4, collinear=False):
    scores = rng.normal(size=(n, q))
    if collinear:
        scores[:, 1] = scores[:, 0]  # any draw containing both is singular
    d = rng.uniform(1.0, 5.0, size=n)
    qk = np.ones(n)
    totals = rng.normal(size=q) * 3.0
    comp_sets = np.stack([
        rng.choice(q, size=c, replace=False) for _ in range(B)
    ]).astype(np.int64)
    return scores, d, qk, totals, comp_sets


def test_python_kernel_matches_single_shot_calibration():
    rng = np.random.default_rng(0)
    scores, d, qk, totals, comp_sets = _problem(rng)
    g, flags = pykernel.bag_gweights(scores, d, qk, totals, comp_sets, 100.0, 1e-10)
    assert not flags.any()
    spec = CalibrationSpec()
    for b in range(comp_sets.shape[0]):
        idx = comp_sets[b]
        ws = chi2_calibrate(scores[:, idx], d, totals[idx], spec, population_size=100.0)
        np.testing.assert_allclose(g[b], ws.g, atol=1e-10)


@needs_compiled
def test_compiled_kernel_matches_python_kernel():
    rng = np.random.default_rng(1)
    for kwargs in ({}, {"n": 85, "q": 87, "B": 50, "c": 10}):
        scores, d, qk, totals, comp_sets = _problem(rng, **kwargs)
        g_py, f_py = pykernel.bag_gweights(scores, d, qk, totals, comp_sets, 425.0, 1e-10)
        g_cy, f_cy = kernel.bag_gweights(scores, d, qk, totals, comp_sets, 425.0, 1e-10)
        np.testing.assert_array_equal(f_py, f_cy)
        np.testing.assert_allclose(g_cy, g_py, atol=1e-9)


@needs_compiled
def test_compiled_kernel_flags_singular_iterations():
    rng = np.random.default_rng(2)
    scores, d, qk, totals, comp_sets = _problem(rng, collinear=True)
    comp_sets[0, :2] = (0, 1)  # force one singular draw
    g_cy, f_cy = kernel.bag_gweights(scores, d, qk, totals, comp_sets, 100.0, 1e-10)
    g_py, f_py = pykernel.bag_gweights(scores, d, qk, totals, comp_sets, 100.0, 1e-10)
    assert f_cy[0] == 1 and f_py[0] == 1
    assert np.isnan(g_cy[0]).all() and np.isnan(g_py[0]).all()
    ok = f_cy == 0
    np.testing.assert_array_equal(f_py, f_cy)
    np.testing.assert_allclose(g_cy[ok], g_py[ok], atol=1e-9)


@needs_compiled
def test_compiled_kernel_without_intercept():
    rng = np.random.default_rng(3)
    scores, d, qk, totals, comp_sets = _problem(rng, B=10)
    g_py, _ = pykernel.bag_gweights(scores, d, qk, totals, comp_sets, None, 1e-10)
    g_cy, _ = kernel.bag_gweights(scores, d, qk, totals, comp_sets, None, 1e-10)
    np.testing.assert_allclose(g_cy, g_py, atol=1e-9)


@needs_compiled
def test_compiled_kernel_with_unit_distance_weights():
    rng = np.random.default_rng(4)
    scores, d, _, totals, comp_sets = _problem(rng, B=10)
    qk = rng.uniform(0.5, 2.0, size=scores.shape[0])
    g_py, _ = pykernel.bag_gweights(scores, d, qk, totals, comp_sets, 80.0, 1e-10)
    g_cy, _ = kernel.bag_gweights(scores, d, qk, totals, comp_sets, 80.0, 1e-10)
    np.testing.assert_allclose(g_cy, g_py, atol=1e-9)


def test_backend_reports_name():
    assert BACKEND in ("compiled", "python")
