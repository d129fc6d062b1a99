import inspect
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from fracsobolev import experiments as ex
from fracsobolev.estimators import ObservationCoefficients, expected_error, observe, sample_noise
from fracsobolev.selection import (
    GOLDEN_TOL,
    LambdaGrid,
    SelectionError,
    critical_point_residual,
    gcv_function,
    gcv_lambda,
    golden_section,
    lcurve_lambda,
    lcurve_points,
    oracle_lambda,
)
from fracsobolev.spectrum import TrueFunction, build_spectrum, build_true_function, explicit_spectrum

ONE = explicit_spectrum([1.0])
ONE_TF = TrueFunction(np.array([1.0]))


def test_grid_validation():
    with pytest.raises(ValueError):
        LambdaGrid(1.0, 0.1)
    with pytest.raises(ValueError):
        LambdaGrid(0.0, 1.0)
    with pytest.raises(ValueError):
        LambdaGrid(1e-3, 1.0, 2)
    pts = LambdaGrid(1e-4, 1e2, 61).points
    assert np.all(np.diff(pts) > 0) and pts[0] == pytest.approx(1e-4) and pts[-1] == pytest.approx(1e2)


def test_golden_section_quadratic():
    x, fx, it = golden_section(lambda u: (u - 0.3) ** 2, -1.0, 2.0, tol=1e-8, maxiter=200)
    assert x == pytest.approx(0.3, abs=1e-8) and it > 0


@pytest.mark.parametrize("sigma", [1e-1, 1e-2, 1e-3, 3e-2, 7e-4])
def test_single_mode_oracle(sigma):
    res = oracle_lambda(ONE, ONE_TF, sigma, 0.0, LambdaGrid())
    assert not res.at_boundary
    assert abs(math.log(res.lambda_star) - math.log(sigma**2)) <= GOLDEN_TOL
    e = expected_error(ONE, ONE_TF, sigma, 0.0, res.lambda_star)
    assert e == pytest.approx(sigma**2 / (1 + sigma**2), rel=1e-6)


def test_oracle_scale_covariance():
    g = LambdaGrid()
    l1 = oracle_lambda(ONE, ONE_TF, 0.0123, 0.0, g).lambda_star
    l2 = oracle_lambda(ONE, ONE_TF, 0.0246, 0.0, g).lambda_star
    assert l2 / l1 == pytest.approx(4.0, rel=3e-3)


def test_oracle_boundary_flag_for_huge_noise():
    res = oracle_lambda(ONE, ONE_TF, 1e6, 0.0, LambdaGrid(1e-6, 1e2, 41))
    assert res.at_boundary and res.lambda_star == pytest.approx(1e2)


def test_oracle_without_noise_is_least_squares():
    res = oracle_lambda(ONE, ONE_TF, 0.0, 0.0, LambdaGrid())
    assert res.lambda_star == 0.0 and res.at_boundary
    with pytest.raises(ValueError):
        oracle_lambda(ONE, ONE_TF, -1.0, 0.0, LambdaGrid())


def test_oracle_optimal_over_grid(exp_spectrum, smooth_truth):
    g = LambdaGrid()
    for s in (0.0, 1.0, 2.5):
        res = oracle_lambda(exp_spectrum, smooth_truth, 1e-4, s, g)
        best = expected_error(exp_spectrum, smooth_truth, 1e-4, s, res.lambda_star)
        assert best <= np.min(res.criterion_values) * (1 + 1e-12)
        assert g.lo <= res.lambda_star <= g.hi


def test_critical_point_single_mode():
    for sigma in (1e-1, 1e-2, 1e-3):
        assert abs(critical_point_residual(ONE, ONE_TF, sigma, 0.0, sigma**2)) <= 1e-12
    for lam in (1e-8, 1e-2, 3.0):
        assert critical_point_residual(ONE, ONE_TF, 0.0, 0.0, lam) == lam


def test_critical_point_brackets_oracle(exp_spectrum, smooth_truth):
    g = LambdaGrid()
    for s, sigma in ((0.0, 1e-3), (1.0, 1e-5), (2.0, 1e-2)):
        res = oracle_lambda(exp_spectrum, smooth_truth, sigma, s, g)
        f = lambda u: critical_point_residual(exp_spectrum, smooth_truth, sigma, s, math.exp(u))
        u = math.log(res.lambda_star)
        assert f(u - 0.2) < 0 < f(u + 0.2)
        root = math.exp(brentq(f, u - 0.2, u + 0.2, xtol=1e-12))
        assert abs(math.log(root / res.lambda_star)) <= GOLDEN_TOL


def test_critical_point_consistency(exp_spectrum, smooth_truth):
    g = LambdaGrid()
    for s in (0.0, 0.5, 1.0, 2.0, 3.0):
        for sigma in np.logspace(-7, -1, 7):
            res = oracle_lambda(exp_spectrum, smooth_truth, sigma, s, g)
            assert not res.at_boundary
            r = critical_point_residual(exp_spectrum, smooth_truth, sigma, s, res.lambda_star)
            assert abs(r) <= GOLDEN_TOL * res.lambda_star


def test_critical_point_validation():
    with pytest.raises(ValueError):
        critical_point_residual(ONE, ONE_TF, 0.1, 0.0, 0.0)
    with pytest.raises(ValueError):
        critical_point_residual(ONE, TrueFunction(np.array([1.0]), np.array([0.1])), 0.1, 0.0, 1.0)
    with pytest.raises(ValueError):
        critical_point_residual(ONE, TrueFunction(np.array([0.0])), 0.1, 0.0, 1.0)


def test_selectors_never_see_sigma_or_truth():
    for fn in (lcurve_lambda, gcv_lambda):
        params = set(inspect.signature(fn).parameters)
        assert not params & {"sigma", "true_function", "noise"}


def test_lcurve_zero_data_is_degenerate():
    spec = build_spectrum("exp", 1.0, 10)
    obs = ObservationCoefficients(np.zeros(10), 0.0)
    with pytest.raises(SelectionError):
        lcurve_lambda(spec, obs, 1.0, LambdaGrid())


def test_lcurve_residual_matches_definition():
    spec = build_spectrum("exp", 1.0, 12)
    tf = build_true_function(spec, 1.0, seed=1)
    obs = observe(spec, tf, sample_noise(0.01, 12, seed=2))
    lam = np.array([1e-6, 1e-3])
    resid, sol = lcurve_points(spec, obs, 1.0, lam)
    for L, r, n in zip(lam, resid, sol):
        a = spec.eigenvalues * obs.b / (spec.eigenvalues**2 + L)
        assert r**2 == pytest.approx(np.sum((spec.eigenvalues * a - obs.b) ** 2 / spec.eigenvalues), rel=1e-12)
        assert n**2 == pytest.approx(np.sum(a**2 / spec.eigenvalues), rel=1e-12)
    _, l2 = lcurve_points(spec, obs, 1.0, lam, solution_norm="l2")
    assert np.all(l2 > 0)
    with pytest.raises(ValueError):
        lcurve_points(spec, obs, 1.0, lam, solution_norm="h1")


def test_lcurve_boundary_flag():
    spec = build_spectrum("exp", 1.0, 12)
    tf = build_true_function(spec, 1.0, seed=1)
    obs = observe(spec, tf, sample_noise(0.01, 12, seed=2))
    res = lcurve_lambda(spec, obs, 1.0, LambdaGrid())
    k = int(np.flatnonzero(res.grid == res.lambda_star)[0])
    assert res.at_boundary == (k in (1, len(res.grid) - 2))
    narrow = lcurve_lambda(spec, obs, 1.0, LambdaGrid(1e-30, 1e-28, 5))
    assert narrow.lambda_star in narrow.grid


def _fredholm_instance(practical_setup, s, sigma):
    # canonical seeded instance: master seed 0, replicate 0, the sigma grid cell nearest sigma
    config, _, spec, tf = practical_setup
    scale = ex.noise_scale(config, spec, tf)
    j = int(np.argmin(np.abs(np.log(config.sigmas / sigma))))
    noise = sample_noise(sigma * scale, spec.N, ex.derive_seed(config.master_seed, "noise", 0, j))
    return spec, tf, noise, sigma * scale


def test_lcurve_close_to_oracle_on_fredholm(practical_setup):
    spec, tf, noise, sig = _fredholm_instance(practical_setup, 1.0, 1e-2)
    g = LambdaGrid()
    lc = lcurve_lambda(spec, observe(spec, tf, noise), 1.0, g)
    orc = oracle_lambda(spec, tf, sig, 1.0, g)
    assert abs(math.log10(lc.lambda_star / orc.lambda_star)) <= 2


def test_gcv_close_to_lcurve_on_fredholm(practical_setup):
    spec, tf, noise, _ = _fredholm_instance(practical_setup, 1.0, 1e-2)
    g = LambdaGrid()
    obs = observe(spec, tf, noise)
    lc = lcurve_lambda(spec, obs, 1.0, g)
    gc = gcv_lambda(spec, obs, 1.0, g)
    assert abs(math.log10(gc.lambda_star / lc.lambda_star)) <= 2


def test_gcv_large_lambda_tail():
    spec = build_spectrum("exp", 1.0, 8)
    obs = observe(spec, build_true_function(spec, 1.0, seed=1), sample_noise(0.1, 8, seed=1))
    G, _ = gcv_function(spec, obs, 1.0, [1e12])
    assert G[0] == pytest.approx(np.sum(obs.b**2 / spec.eigenvalues) / 8**2, rel=1e-9)


def test_gcv_single_mode_undefined():
    obs = ObservationCoefficients(np.array([0.7]), 0.0)
    G, _ = gcv_function(ONE, obs, 0.0, [1e-3, 1.0, 1e3])
    np.testing.assert_allclose(G, 0.49, rtol=1e-12)
    with pytest.raises(SelectionError):
        gcv_lambda(ONE, obs, 0.0, LambdaGrid())


def test_gcv_flags_underflow():
    spec = explicit_spectrum([1.0, 0.5, 0.25])
    obs = ObservationCoefficients(np.array([1.0, 0.4, 0.3]), 0.0)
    res = gcv_lambda(spec, obs, 0.0, LambdaGrid(1e-300, 1e2, 61))
    assert res.diagnostics["underflow_points"] > 0
    assert res.lambda_star > 1e-150
