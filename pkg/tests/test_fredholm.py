import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracsobolev.fredholm import (
    AnalyticEigensystem,
    analytic_eigensystem,
    build_mesh,
    build_problem,
    greens_kernel,
    project_to_spectral,
    reconstruct,
)


def test_kernel_examples():
    assert greens_kernel(0.0, 0.5) == 0.0
    assert greens_kernel(1.0, 0.3) == pytest.approx(0.0, abs=1e-16)
    expected = -math.sin(1.0) ** 2 / (2 * math.sin(2.0))
    assert greens_kernel(0.5, 0.5) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(-0.38935, abs=1e-5)


def test_kernel_is_green_function():
    # u(x) = int K(x, y) f(y) dy solves u'' + 4u = f with u(0) = u(1) = 0; f = 1
    y = (np.arange(20000) + 0.5) / 20000
    x = np.array([0.2, 0.5, 0.8])
    u = greens_kernel(x[:, None], y[None, :]).mean(axis=1)
    exact = (1 - np.cos(2 * x) - (1 - np.cos(2.0)) * np.sin(2 * x) / np.sin(2.0)) / 4
    np.testing.assert_allclose(u, exact, rtol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_kernel_symmetric(x, y):
    assert greens_kernel(x, y) == greens_kernel(y, x)


def test_kernel_continuous_on_diagonal():
    x = 0.37
    assert greens_kernel(x, x + 1e-9) == pytest.approx(greens_kernel(x, x - 1e-9), abs=1e-8)


def test_kernel_domain():
    with pytest.raises(ValueError):
        greens_kernel(-0.1, 0.5)
    with pytest.raises(ValueError):
        greens_kernel(0.5, 1.2)


@pytest.mark.parametrize("rule", ["midpoint", "trapezoid"])
def test_mesh(rule):
    mesh = build_mesh(50, rule)
    assert abs(mesh.weights.sum() - 1) < 1e-12
    assert np.all(np.diff(mesh.points) > 0)
    assert mesh.points[0] >= 0 and mesh.points[-1] <= 1


def test_mesh_validation():
    with pytest.raises(ValueError):
        build_mesh(1)
    with pytest.raises(ValueError):
        build_mesh(10, "gauss")


def test_two_point_problem_psd():
    prob = build_problem(2)
    assert prob.normal_matrix.shape == (2, 2)
    assert np.allclose(prob.normal_matrix, prob.normal_matrix.T)
    assert np.all(prob.eigenvalues >= 0)
    assert prob.min_raw_eigenvalue >= -1e-10 * prob.eigenvalues[0]


def test_problem_invariants(fredholm500):
    prob = fredholm500
    assert prob.asymmetry < 1e-12
    assert prob.min_raw_eigenvalue > -1e-10 * prob.eigenvalues[0]
    assert np.all(np.diff(prob.eigenvalues) <= 0)
    assert np.all(prob.eigenvalues >= prob.rank_threshold * prob.eigenvalues[0])
    K = prob.kernel_matrix
    assert np.array_equal(K, K.T)
    psi, w = prob.eigenvectors, prob.mesh.weights
    gram = psi.T @ (w[:, None] * psi)
    assert np.max(np.abs(gram - np.eye(prob.rank_cutoff))) < 1e-8
    meta = prob.metadata()
    assert meta["quadrature_rule"] == "midpoint" and meta["M"] == 500


def test_numerical_eigenvalues_match_squared_green_operator(fredholm500):
    # the Green's operator has eigenvalues 1/(4 - n^2 pi^2); its square is the normal operator
    n = np.arange(1, 11)
    target = 1.0 / (4 - n**2 * math.pi**2) ** 2
    rel = np.abs(fredholm500.eigenvalues[:10] / target - 1)
    assert rel.max() < 1e-3


def test_numerical_eigenfunctions_are_sines(fredholm500):
    x = fredholm500.mesh.points
    for n in range(1, 6):
        err = np.max(np.abs(fredholm500.eigenvectors[:, n - 1] - AnalyticEigensystem.eigenfunction(n, x)))
        assert err < 1e-4


def test_rank_cutoff_drops_small_modes():
    prob = build_problem(200, tau=1e-6)
    assert prob.rank_cutoff < 200
    assert prob.eigenvalues[-1] >= 1e-6 * prob.eigenvalues[0]
    with pytest.raises(ValueError):
        build_problem(50, tau=0.0)
    with pytest.raises(ValueError):
        build_problem(50, tau=1.0)


def test_analytic_eigensystem():
    sys1 = analytic_eigensystem(1)
    assert sys1.eigenvalues[0] == pytest.approx(2 / (4 - math.pi**2) ** 2, rel=1e-15)
    sys2 = analytic_eigensystem(2)
    assert sys2.eigenvalues[1] == pytest.approx(2 / (4 - 4 * math.pi**2) ** 2, rel=1e-15)
    assert sys2.eigenvalues[1] == pytest.approx(1.5889e-3, rel=1e-4)
    assert analytic_eigensystem(10).eigenvalues[9] == pytest.approx(2 / (4 - 100 * math.pi**2) ** 2, rel=1e-15)
    assert AnalyticEigensystem.eigenfunction(1, 0.5) == pytest.approx(math.sqrt(2))
    assert np.all(np.diff(analytic_eigensystem(50).eigenvalues) < 0)
    x = (np.arange(100000) + 0.5) / 100000
    assert np.mean(AnalyticEigensystem.eigenfunction(3, x) ** 2) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        analytic_eigensystem(0)


def test_projection_examples(fredholm500):
    prob = fredholm500
    e1 = project_to_spectral(prob, prob.eigenvectors[:, 0])
    np.testing.assert_allclose(e1[:5], [1, 0, 0, 0, 0], atol=1e-12)
    assert np.all(project_to_spectral(prob, np.zeros(500)) == 0)
    x = prob.mesh.points
    c = project_to_spectral(prob, math.sqrt(2) * np.sin(2 * math.pi * x))
    assert abs(c[1] - 1) < 1e-6
    assert np.max(np.abs(np.delete(c, 1))) < 1e-6
    # sin(2 pi x) itself has norm 1/sqrt(2)
    c = project_to_spectral(prob, np.sin(2 * math.pi * x))
    assert c[1] == pytest.approx(1 / math.sqrt(2), abs=1e-6)


def test_round_trip(fredholm500):
    rng = np.random.default_rng(0)
    c = rng.standard_normal(fredholm500.rank_cutoff)
    back = project_to_spectral(fredholm500, reconstruct(fredholm500, c))
    assert np.max(np.abs(back - c)) < 1e-8


def test_projection_shape_checks(fredholm500):
    with pytest.raises(ValueError):
        project_to_spectral(fredholm500, np.zeros(10))
    with pytest.raises(ValueError):
        reconstruct(fredholm500, np.zeros(3))


def test_spectrum_export(fredholm500):
    spec = fredholm500.spectrum
    assert spec.family == "explicit"
    assert spec.N == fredholm500.rank_cutoff
    assert np.array_equal(spec.eigenvalues, fredholm500.eigenvalues)
