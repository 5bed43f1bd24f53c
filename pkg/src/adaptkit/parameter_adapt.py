"""Parameter-based adaptation: refit a linear or logistic model on target
data with a quadratic penalty pulling it toward source coefficients."""

from dataclasses import dataclass

import numpy as np

from adaptkit.errors import DimensionMismatch
from adaptkit.estimators import _split_beta, logistic_fit, ridge_fit
from adaptkit.numerics import as_matrix, ridge_normal_eq

TASKS = ("regression", "binary-classification")


@dataclass(frozen=True)
class SourcePrior:
    """Source coefficients with the intercept last."""

    beta_src: np.ndarray
    task: str

    def __post_init__(self):
        beta = np.asarray(self.beta_src, dtype=np.float64).ravel()
        if self.task not in TASKS:
            raise ValueError(f"prior task must be one of {TASKS}, got {self.task!r}")
        if not np.all(np.isfinite(beta)):
            raise ValueError("prior coefficients must be finite")
        object.__setattr__(self, "beta_src", beta)

    @property
    def n_features(self):
        return len(self.beta_src) - 1

    @classmethod
    def from_model(cls, model):
        task = "regression" if model.task == "regression" else "binary-classification"
        return cls(beta_src=model.beta, task=task)


def _check_prior(prior, X, task):
    if prior.task != task:
        raise ValueError(f"expected a {task} prior, got {prior.task}")
    if prior.n_features != X.shape[1]:
        raise DimensionMismatch(
            f"prior has {prior.n_features} coefficients (+ intercept) for {X.shape[1]} features",
            expected=X.shape[1], got=prior.n_features,
        )


def source_prior(Xs, ys, task, lam=1e-6):
    """Fit the source model that seeds the transfer penalty."""
    if task == "regression":
        return SourcePrior.from_model(ridge_fit(Xs, ys, lam))
    return SourcePrior.from_model(logistic_fit(Xs, ys, lam))


def regular_transfer_lr(Xt, yt, prior, lam):
    """Minimize ``||X b - y||^2 + lam ||b - beta_src||^2`` (intercept included)."""
    Xt = as_matrix(Xt, "Xt")
    _check_prior(prior, Xt, "regression")
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    return _split_beta(ridge_normal_eq(Xt, yt, lam, prior=prior.beta_src), "regression")


def regular_transfer_lc(Xt, yt, prior, lam):
    """Penalized logistic fit toward ``beta_src``; labels must be 0/1."""
    Xt = as_matrix(Xt, "Xt")
    _check_prior(prior, Xt, "binary-classification")
    yt = np.asarray(yt).ravel()
    if lam == 0 and len(np.unique(yt)) < 2:
        raise ValueError("an unpenalized fit needs both classes in yt")
    return logistic_fit(Xt, yt, lam, prior=prior.beta_src)


# adapters -----------------------------------------------------------------

def load_prior(path, task):
    """Read source coefficients from a saved model file.

    Accepts a model whose estimator is a built-in ridge/logistic (for
    example a ``NoAdapt`` fit on source data) or a regular-transfer model.
    """
    from adaptkit.core import load_model

    model = load_model(path)
    if "beta" in model.state:
        beta = np.asarray(model.state["beta"], dtype=np.float64)
    elif getattr(model.estimator, "model_", None) is not None and hasattr(model.estimator.model_, "beta"):
        if getattr(model.estimator, "degree", 1) != 1:
            raise ValueError("prior model must be linear in the raw features")
        beta = model.estimator.model_.beta
    else:
        raise ValueError(f"model file {path} holds no linear coefficients")
    return SourcePrior(beta, task)


def _prior_from_hp(hp, data, task):
    if hp.get("beta_src") is not None:
        return SourcePrior(np.asarray(hp["beta_src"], dtype=np.float64), task)
    if hp.get("prior_path"):
        return load_prior(hp["prior_path"], task)
    return source_prior(data.Xs, data.ys, "regression" if task == "regression" else "classification",
                        hp["source_lam"])


def fit_regular_lr(data, estimator, hp, seed):
    prior = _prior_from_hp(hp, data, "regression")
    Xt_l, yt_l = data.labeled_target()
    model = regular_transfer_lr(Xt_l, yt_l, prior, hp["lam"])
    return {"beta_src": prior.beta_src, "beta": model.beta}, None, []


def fit_regular_lc(data, estimator, hp, seed):
    if data.ys.max() > 1:
        raise ValueError("RegularTransferLC is binary: labels must be 0 or 1")
    prior = _prior_from_hp(hp, data, "binary-classification")
    Xt_l, yt_l = data.labeled_target()
    model = regular_transfer_lc(Xt_l, yt_l, prior, hp["lam"])
    warns = [] if model.converged else ["NonConvergence: Newton iterations hit their cap"]
    return {"beta_src": prior.beta_src, "beta": model.beta}, None, warns


def _linear_from_state(model):
    return _split_beta(np.asarray(model.state["beta"], dtype=np.float64).ravel(), model.task)


def predict_regular_lr(model, X):
    return _linear_from_state(model).decision_function(X)


def predict_regular_lc(model, X):
    return (_linear_from_state(model).decision_function(X) >= 0.0).astype(np.int64)
