import numpy as np
import pytest

from adaptkit.core import AdapterSpec, fit, predict, save_model
from adaptkit.errors import DimensionMismatch, SeparableWithoutPenalty, SingularSystem
from adaptkit.estimators import logistic_fit, logistic_objective
from adaptkit.numerics import ridge_normal_eq, ridge_objective
from adaptkit.parameter_adapt import (
    SourcePrior,
    load_prior,
    regular_transfer_lc,
    regular_transfer_lr,
    source_prior,
)
from helpers import toy_input
from oracles import central_diff_grad

GRID = [0.01, 0.1, 1, 10, 100, 1e4]


def shifted_slope(seed, n=40):
    rng = np.random.default_rng(seed)
    Xs = rng.normal(size=(200, 2))
    ys = Xs @ [1.0, -2.0] + 0.5 + 0.1 * rng.normal(size=200)
    Xt = rng.normal(size=(n, 2))
    yt = Xt @ [1.5, -1.0] + 0.2 + 0.1 * rng.normal(size=n)
    return Xs, ys, Xt, yt


def shifted_classes(seed, n=60):
    rng = np.random.default_rng(seed)
    Xs = rng.normal(size=(200, 2))
    ys = (Xs @ [1.0, 1.0] + 0.8 * rng.normal(size=200) > 0).astype(int)
    Xt = rng.normal(size=(n, 2))
    yt = (Xt @ [1.0, -0.5] + 0.8 * rng.normal(size=n) > 0.3).astype(int)
    return Xs, ys, Xt, yt


def test_lr_lambda_zero_is_plain_fit():
    Xs, ys, Xt, yt = shifted_slope(0)
    prior = source_prior(Xs, ys, "regression")
    np.testing.assert_allclose(regular_transfer_lr(Xt, yt, prior, 0.0).beta,
                               ridge_normal_eq(Xt, yt, 0.0), atol=1e-8)


def test_lr_huge_lambda_returns_prior():
    Xs, ys, Xt, yt = shifted_slope(1)
    prior = source_prior(Xs, ys, "regression")
    np.testing.assert_allclose(regular_transfer_lr(Xt, yt, prior, 1e8).beta, prior.beta_src, atol=1e-3)


def test_lr_stationary_at_mid_lambda():
    Xs, ys, Xt, yt = shifted_slope(2)
    prior = source_prior(Xs, ys, "regression")
    beta = regular_transfer_lr(Xt, yt, prior, 1.0).beta
    _, g = ridge_objective(beta, Xt, yt, 1.0, prior.beta_src)
    assert np.linalg.norm(g) <= 1e-8
    fd = central_diff_grad(lambda b: ridge_objective(b, Xt, yt, 1.0, prior.beta_src)[0], beta)
    assert np.linalg.norm(fd) <= 1e-5


def test_lr_underdetermined_with_penalty():
    Xs, ys, _, _ = shifted_slope(3)
    rng = np.random.default_rng(0)
    Xt = rng.normal(size=(3, 5))
    prior = SourcePrior(rng.normal(size=6), "regression")
    beta = regular_transfer_lr(Xt, rng.normal(size=3), prior, 0.5).beta
    assert np.all(np.isfinite(beta))
    with pytest.raises(SingularSystem):
        regular_transfer_lr(Xt, rng.normal(size=3), prior, 0.0)


def test_lc_lambda_zero_matches_plain_logistic():
    Xs, ys, Xt, yt = shifted_classes(0)
    prior = source_prior(Xs, ys, "classification")
    np.testing.assert_allclose(regular_transfer_lc(Xt, yt, prior, 0.0).beta,
                               logistic_fit(Xt, yt, 0.0).beta, atol=1e-8)


def test_lc_huge_lambda_returns_prior():
    Xs, ys, Xt, yt = shifted_classes(1)
    prior = source_prior(Xs, ys, "classification")
    np.testing.assert_allclose(regular_transfer_lc(Xt, yt, prior, 1e8).beta, prior.beta_src, atol=1e-3)


def test_lc_separable_with_penalty_is_finite():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1])
    prior = SourcePrior([0.5, 0.0], "binary-classification")
    beta = regular_transfer_lc(X, y, prior, 0.5).beta
    assert np.all(np.isfinite(beta)) and np.linalg.norm(beta) < 100
    with pytest.raises(SeparableWithoutPenalty):
        regular_transfer_lc(X, y, prior, 0.0)


def test_lc_gradient_at_solution():
    Xs, ys, Xt, yt = shifted_classes(2)
    prior = source_prior(Xs, ys, "classification")
    beta = regular_transfer_lc(Xt, yt, prior, 1.0).beta
    _, g = logistic_objective(beta, Xt, yt, 1.0, prior.beta_src)
    assert np.linalg.norm(g) <= 1e-8 * 2


@pytest.mark.parametrize("seed", range(5))
def test_distance_to_prior_nonincreasing(seed):
    Xs, ys, Xt, yt = shifted_slope(seed)
    prior = source_prior(Xs, ys, "regression")
    dist = [np.linalg.norm(regular_transfer_lr(Xt, yt, prior, lam).beta - prior.beta_src) for lam in GRID]
    assert all(b <= a + 1e-12 for a, b in zip(dist, dist[1:]))
    Xs, ys, Xt, yt = shifted_classes(seed)
    prior = source_prior(Xs, ys, "classification")
    dist = [np.linalg.norm(regular_transfer_lc(Xt, yt, prior, lam).beta - prior.beta_src) for lam in GRID]
    assert all(b <= a + 1e-9 for a, b in zip(dist, dist[1:]))


def test_prior_dimension_checked():
    with pytest.raises(DimensionMismatch):
        regular_transfer_lr(np.zeros((3, 2)), np.zeros(3), SourcePrior([1.0, 2.0], "regression"), 1.0)
    with pytest.raises(ValueError):
        regular_transfer_lr(np.zeros((3, 1)), np.zeros(3), SourcePrior([1.0, 2.0], "binary-classification"), 1.0)


def test_adapter_uses_injected_prior():
    d = toy_input("regression", seed=3)
    m = fit(AdapterSpec("RegularTransferLR", hyperparams={"lam": 1e8, "beta_src": [1.0, 2.0, 3.0]}), d)
    np.testing.assert_allclose(m.state["beta"], [1.0, 2.0, 3.0], atol=1e-3)


def test_prior_from_model_file(tmp_path):
    d = toy_input("regression", seed=4)
    base = fit(AdapterSpec("NoAdapt", estimator="ridge", estimator_params={"lam": 1e-6}), d)
    path = tmp_path / "source.json"
    save_model(base, path)
    prior = load_prior(path, "regression")
    np.testing.assert_array_equal(prior.beta_src, base.estimator.model_.beta)
    m = fit(AdapterSpec("RegularTransferLR", hyperparams={"prior_path": str(path), "lam": 1.0}), d)
    assert np.all(np.isfinite(predict(m, d.Xt)))
