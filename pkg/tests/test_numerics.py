import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adaptkit.errors import (
    DegenerateData,
    DimensionMismatch,
    Infeasible,
    NonConvergenceWarning,
    NonFiniteInput,
    NonPositiveGamma,
    NotSymmetric,
    SingularSystem,
)
from adaptkit.numerics import (
    QpProblem,
    _kliep_project,
    as_matrix,
    covariance_reg,
    kliep_optimize,
    median_heuristic,
    psd_power,
    qp_objective,
    rbf_kernel,
    ridge_normal_eq,
    ridge_objective,
    solve_kmm_qp,
)
from oracles import central_diff_grad, kliep_oracle, kmm_qp_enumerate, two_pass_covariance


def random_psd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + 0.1 * np.eye(n)


# data matrix checks ---------------------------------------------------------

def test_as_matrix_rejects_nan_and_empty():
    with pytest.raises(NonFiniteInput):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(DimensionMismatch):
        as_matrix(np.zeros((0, 2)))


# rbf kernel -----------------------------------------------------------------

def test_rbf_self_kernel_unit_diagonal():
    A = np.random.default_rng(0).normal(size=(6, 3))
    K = rbf_kernel(A, A, 0.7)
    assert np.all(np.diag(K) == 1.0)
    assert np.abs(K - K.T).max() == 0.0


def test_rbf_distance_one():
    K = rbf_kernel([[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]], 1.0)
    assert K[0, 1] == pytest.approx(math.exp(-1), abs=1e-15)


def test_rbf_small_gamma_limit():
    A = np.random.default_rng(1).random((5, 2))
    assert rbf_kernel(A, A, 1e-12).min() >= 1 - 1e-6


def test_rbf_errors():
    with pytest.raises(NonPositiveGamma):
        rbf_kernel([[0.0]], [[1.0]], 0.0)
    with pytest.raises(DimensionMismatch):
        rbf_kernel(np.zeros((2, 2)), np.zeros((2, 3)), 1.0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 2), elements=st.floats(-10, 10)), st.floats(1e-3, 10))
def test_rbf_entries_in_unit_interval(A, gamma):
    K = rbf_kernel(A, A, gamma)
    assert np.all(K >= 0) and np.all(K <= 1)
    assert np.array_equal(K, K.T)


# median heuristic -------------------------------------------------------------

def test_median_heuristic_two_points():
    assert median_heuristic([[0.0, 0.0], [2.0, 0.0]]) == 0.125


def test_median_heuristic_degenerate():
    with pytest.raises(DegenerateData):
        median_heuristic(np.ones((4, 2)))


def test_median_heuristic_matches_all_pairs():
    X = np.random.default_rng(7).standard_normal((100, 2))
    dists = [math.dist(X[i], X[j]) for i in range(100) for j in range(i + 1, 100)]
    m = float(np.median(dists))
    assert median_heuristic(X) == pytest.approx(1.0 / (2 * m * m), rel=1e-12)


def test_median_heuristic_subsample_is_seeded():
    X = np.random.default_rng(2).normal(size=(1500, 2))
    assert median_heuristic(X, seed=3) == median_heuristic(X, seed=3)


# covariance / matrix powers ---------------------------------------------------

def test_covariance_hand_value():
    assert covariance_reg([[1.0], [3.0]], 0.0).tolist() == [[2.0]]


def test_covariance_regularizer_adds_identity():
    X = np.random.default_rng(0).normal(size=(10, 3))
    np.testing.assert_allclose(covariance_reg(X, 5.0) - covariance_reg(X, 0.0), 5 * np.eye(3), atol=1e-12)


def test_covariance_two_pass_oracle():
    X = np.random.default_rng(4).normal(size=(50, 3))
    np.testing.assert_allclose(covariance_reg(X, 0.0), two_pass_covariance(X), atol=1e-10)


def test_psd_power_identity_and_scalar():
    for e in (0.5, -0.5):
        np.testing.assert_allclose(psd_power(np.eye(3), e), np.eye(3), atol=1e-15)
    assert psd_power([[4.0]], 0.5)[0, 0] == pytest.approx(2.0)
    assert psd_power([[4.0]], -0.5)[0, 0] == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(5))
def test_psd_power_square_root_property(seed):
    C = random_psd(np.random.default_rng(seed), 4)
    M = psd_power(C, 0.5)
    assert np.linalg.norm(M @ M - C) <= 1e-8 * np.linalg.norm(C)
    W = psd_power(C, -0.5)
    np.testing.assert_allclose(W @ C @ W, np.eye(4), atol=1e-6)


def test_psd_power_whitening_ill_conditioned():
    rng = np.random.default_rng(9)
    Q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    C = Q @ np.diag([1.0, 1e-2, 1e-5, 1e-8]) @ Q.T
    C = 0.5 * (C + C.T)
    W = psd_power(C, -0.5)
    np.testing.assert_allclose(W @ C @ W, np.eye(4), atol=1e-6)


def test_psd_power_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        psd_power([[1.0, 0.5], [0.0, 1.0]], 0.5)


# ridge ---------------------------------------------------------------------

def test_ridge_exact_line():
    beta = ridge_normal_eq([[1.0], [2.0], [3.0]], [2.0, 4.0, 6.0], 0.0)
    np.testing.assert_allclose(beta, [2.0, 0.0], atol=1e-10)


def test_ridge_prior_dominates():
    X = np.random.default_rng(0).normal(size=(20, 1))
    beta = ridge_normal_eq(X, X[:, 0] * 3, 1e8, prior=[5.0, 1.0])
    np.testing.assert_allclose(beta, [5.0, 1.0], atol=1e-3)


@pytest.mark.parametrize("seed", range(3))
def test_ridge_stationary_point(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 2))
    y = rng.normal(size=30)
    beta = ridge_normal_eq(X, y, 0.1)
    _, g = ridge_objective(beta, X, y, 0.1)
    assert np.linalg.norm(g) <= 1e-8
    fd = central_diff_grad(lambda b: ridge_objective(b, X, y, 0.1)[0], beta)
    assert np.linalg.norm(fd) <= 1e-6


def test_ridge_singular_without_penalty():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularSystem):
        ridge_normal_eq(X, [1.0, 2.0, 3.0], 0.0)


# KMM QP ---------------------------------------------------------------------

def test_kmm_qp_symmetric_center(backend):
    res = solve_kmm_qp(QpProblem(np.eye(2), np.array([1.0, 1.0]), 2.0, 0.1))
    np.testing.assert_allclose(res.w, [1.0, 1.0], atol=1e-6)


def test_kmm_qp_infeasible():
    with pytest.raises(Infeasible):
        solve_kmm_qp(QpProblem(np.eye(10), np.ones(10), 0.5, 0.1))


def test_kmm_qp_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        solve_kmm_qp(QpProblem(np.array([[1.0, 0.2], [0.0, 1.0]]), np.ones(2), 2.0, 0.1))


@pytest.mark.parametrize("seed", range(12))
def test_kmm_qp_matches_active_set_oracle(backend, seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(2, 6))
    A = rng.normal(size=(n, 2))
    K = rbf_kernel(A, A, float(rng.uniform(0.2, 2.0)))
    kappa = rng.uniform(0.0, 3.0, n) * n
    B = float(rng.uniform(1.5, 6.0))
    eps = float(rng.uniform(0.05, 0.6))
    res = solve_kmm_qp(QpProblem(K, kappa, B, eps))
    f_star, _ = kmm_qp_enumerate(K, kappa, B, eps)
    assert abs(res.objective - f_star) <= 1e-6 * (1 + abs(f_star))
    assert res.w.min() >= -1e-12 and res.w.max() <= B + 1e-12
    assert abs(res.w.sum() - n) <= n * eps + 1e-6


def test_kmm_qp_nonconvergence_returns_feasible(backend):
    rng = np.random.default_rng(5)
    A = rng.normal(size=(30, 2))
    K = rbf_kernel(A, A, 0.5)
    kappa = rng.random(30) * 30
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = solve_kmm_qp(QpProblem(K, kappa, 5.0, 0.2), max_iter=3)
    assert not res.converged
    assert any(issubclass(w.category, NonConvergenceWarning) for w in caught)
    assert res.w.min() >= 0 and res.w.max() <= 5.0
    assert abs(res.w.sum() - 30) <= 30 * 0.2 + 1e-6


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 15), st.floats(1.0, 20.0), st.floats(0.0, 0.9))
def test_kmm_qp_always_feasible(seed, n, B, eps):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, 2))
    K = rbf_kernel(A, A, 1.0)
    kappa = rng.random(n) * n
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        res = solve_kmm_qp(QpProblem(K, kappa, B, eps), max_iter=500)
    assert res.w.min() >= 0 and res.w.max() <= B
    assert abs(res.w.sum() - n) <= n * eps + 1e-6
    assert res.objective <= qp_objective(K, kappa, np.clip(np.ones(n), 0, B)) + 1e-9


# KLIEP -----------------------------------------------------------------------

def test_kliep_single_center():
    res = kliep_optimize(np.array([[0.3], [0.9], [0.1]]), np.array([0.5]))
    np.testing.assert_allclose(res.alpha, [2.0], rtol=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_kliep_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    Xt = rng.normal(size=(8, 1))
    Xs = rng.normal(0.5, 1.0, size=(12, 1))
    C = Xt[:3]
    A = rbf_kernel(Xt, C, 0.5)
    b = rbf_kernel(Xs, C, 0.5).mean(axis=0)
    res = kliep_optimize(A, b)
    f_star, _ = kliep_oracle(A, b)
    assert res.objective >= f_star - 1e-4
    assert abs(b @ res.alpha - 1) <= 1e-6
    assert res.alpha.min() >= 0


def test_kliep_identical_samples_mean_weight():
    X = np.random.default_rng(2).normal(size=(20, 2))
    C = X[:5]
    res = kliep_optimize(rbf_kernel(X, C, 0.5), rbf_kernel(X, C, 0.5).mean(axis=0))
    w = rbf_kernel(X, C, 0.5) @ res.alpha
    assert abs(w.mean() - 1) <= 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_kliep_history_monotone(seed):
    rng = np.random.default_rng(seed)
    Xt = rng.normal(size=(40, 2))
    Xs = rng.normal(0.3, 1.2, size=(50, 2))
    C = Xt[:15]
    res = kliep_optimize(rbf_kernel(Xt, C, 1.0), rbf_kernel(Xs, C, 1.0).mean(axis=0))
    assert np.all(np.diff(res.history) >= 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_kliep_projection_constraints(seed, m):
    rng = np.random.default_rng(seed)
    v = rng.normal(scale=3.0, size=m)
    b = rng.uniform(0.01, 1.0, size=m)
    a = _kliep_project(v, b)
    assert a.min() >= 0
    assert abs(b @ a - 1) <= 1e-9
    # no random feasible point is closer to v
    for _ in range(20):
        z = rng.random(m) * (rng.random(m) < 0.7)
        if z @ b > 0:
            z /= z @ b
            assert np.linalg.norm(v - a) <= np.linalg.norm(v - z) + 1e-12
