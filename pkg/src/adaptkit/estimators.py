"""Base learners wrapped by every adapter: ridge, logistic and stumps.

The functional layer (``ridge_fit``, ``logistic_fit``, ``stump_fit`` ...)
returns plain fitted models. The estimator classes (:class:`Ridge`,
:class:`Logistic`, :class:`DecisionStump`) share the small interface the
adapters rely on::

    est.fit(X, y, sample_weight=None) -> est
    est.predict(X) -> ndarray
    est.to_dict() / estimator_from_dict(d)

Any user object with ``fit(X, y, sample_weight=...)`` and ``predict(X)``
can be passed to the adapters as well; only serialization needs the
built-ins.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from adaptkit import kernels
from adaptkit.errors import AllWeightsZero, DimensionMismatch, SeparableWithoutPenalty
from adaptkit.numerics import _with_bias, as_matrix, ridge_normal_eq

NEWTON_MAX_ITER = 100
NEWTON_MAX_HALVINGS = 50
DIVERGENCE_NORM = 1e6


@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    intercept: float
    task: str = "regression"
    converged: bool = True

    @property
    def beta(self):
        """Coefficients with the intercept appended."""
        return np.append(self.coef, self.intercept)

    def decision_function(self, X):
        X = as_matrix(X)
        if X.shape[1] != self.coef.shape[0]:
            raise DimensionMismatch(
                f"model expects {self.coef.shape[0]} features, got {X.shape[1]}",
                expected=int(self.coef.shape[0]), got=int(X.shape[1]),
            )
        return X @ self.coef + self.intercept


def _split_beta(beta, task, converged=True):
    beta = np.asarray(beta, dtype=np.float64)
    return LinearModel(coef=beta[:-1].copy(), intercept=float(beta[-1]), task=task, converged=converged)


def ridge_fit(X, y, lam=1.0, sample_weight=None, prior=None):
    return _split_beta(ridge_normal_eq(X, y, lam, prior=prior, sample_weight=sample_weight), "regression")


def ridge_predict(model, X):
    return model.decision_function(X)


def logistic_objective(beta, X, y, lam, prior=None, sample_weight=None):
    """Weighted negative log-likelihood plus ``lam * ||beta - prior||^2``.

    Returns ``(value, gradient)``; ``beta`` has the intercept last.
    """
    Xb = _with_bias(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    s = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    prior = np.zeros(Xb.shape[1]) if prior is None else np.asarray(prior, dtype=np.float64)
    z = Xb @ beta
    delta = beta - prior
    f = s @ (np.logaddexp(0.0, z) - y * z) + lam * delta @ delta
    g = Xb.T @ (s * (expit(z) - y)) + 2.0 * lam * delta
    return f, g


def logistic_fit(X, y, lam=1.0, sample_weight=None, prior=None):
    """Penalized logistic regression by damped Newton iterations (IRLS).

    Labels must be 0/1. Stops when the gradient norm drops below
    ``1e-8 * max(1, 2 * lam)`` or the Newton step underflows; at the
    iteration cap the model is returned with ``converged=False``. With
    ``lam == 0`` on linearly separable data (coefficient norm past 1e6, or
    a final iterate that separates every row) SeparableWithoutPenalty is
    raised since no finite maximizer exists.
    """
    X = as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) != X.shape[0]:
        raise DimensionMismatch(f"y has {len(y)} entries for {X.shape[0]} rows")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic labels must be 0 or 1")
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    s = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    Xb = _with_bias(X)
    p = Xb.shape[1]
    prior = np.zeros(p) if prior is None else np.asarray(prior, dtype=np.float64).ravel()
    if prior.shape != (p,):
        raise DimensionMismatch(f"prior must have {p} entries (intercept last), got {prior.shape}")

    beta = prior.copy() if lam > 0 else np.zeros(p)
    f, g = logistic_objective(beta, X, y, lam, prior, s)
    tol = 1e-8 * max(1.0, 2.0 * lam)
    converged = False
    for _ in range(NEWTON_MAX_ITER):
        if np.linalg.norm(g) <= tol:
            converged = True
            break
        mu = expit(Xb @ beta)
        H = Xb.T @ ((s * mu * (1.0 - mu))[:, None] * Xb) + 2.0 * lam * np.eye(p)
        try:
            direction = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            direction = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        g_norm = np.linalg.norm(g)
        for _ in range(NEWTON_MAX_HALVINGS):
            cand = beta - t * direction
            f_cand, g_cand = logistic_objective(cand, X, y, lam, prior, s)
            if f_cand <= f:
                break
            # near the optimum the decrease drops below rounding in f;
            # accept a step that still shrinks the gradient
            if f_cand <= f + 1e-13 * abs(f) and np.linalg.norm(g_cand) < g_norm:
                break
            t *= 0.5
        else:
            converged = True  # no descent left at machine precision
            break
        step = np.linalg.norm(cand - beta)
        beta, f, g = cand, f_cand, g_cand
        if lam == 0 and np.linalg.norm(beta) > DIVERGENCE_NORM:
            raise SeparableWithoutPenalty(
                "Newton iterates diverge: the data look separable and lambda is 0",
                norm=float(np.linalg.norm(beta)),
            )
        if step <= 1e-15 * (1.0 + np.linalg.norm(beta)):
            converged = True
            break
    else:
        converged = np.linalg.norm(g) <= tol
    if lam == 0:
        margin = (2.0 * y - 1.0) * (Xb @ beta)
        if np.all(margin[s > 0] > 0):
            # a strictly separating beta means the likelihood has no finite
            # maximizer; Newton only stopped because the gradient underflowed
            raise SeparableWithoutPenalty(
                "training data are linearly separable and lambda is 0",
                norm=float(np.linalg.norm(beta)),
            )
    return _split_beta(beta, "classification", converged)


def logistic_proba(model, X):
    """Two-column class probabilities ``[P(y=0), P(y=1)]``."""
    p1 = expit(model.decision_function(X))
    return np.column_stack([1.0 - p1, p1])


def logistic_predict(model, X):
    return (logistic_proba(model, X)[:, 1] >= 0.5).astype(np.int64)


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    left: float
    right: float
    task: str = "classification"
    n_features: int = 1

    def predict(self, X):
        X = as_matrix(X)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"stump expects {self.n_features} features, got {X.shape[1]}",
                expected=self.n_features, got=int(X.shape[1]),
            )
        out = np.where(X[:, self.feature] <= self.threshold, self.left, self.right)
        if self.task == "classification":
            return out.astype(np.int64)
        return out.astype(np.float64)


def stump_fit(X, y, sample_weight=None, task=None):
    """Depth-one tree minimizing weighted 0/1 error or weighted squared error.

    Thresholds are midpoints between consecutive distinct feature values;
    ties go to the lowest feature index, then the lowest threshold.
    """
    X = as_matrix(X)
    y = np.asarray(y).ravel()
    if len(y) != X.shape[0]:
        raise DimensionMismatch(f"y has {len(y)} entries for {X.shape[0]} rows")
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("sample weights must be nonnegative")
    if not w.sum() > 0:
        raise AllWeightsZero("stump needs at least one positive sample weight")
    if task is None:
        task = "classification" if y.dtype.kind in "iub" else "regression"
    regression = task == "regression"
    if not regression:
        y = y.astype(np.int64)
        if y.min() < 0:
            raise ValueError("class labels must be integers 0..K-1")
    feature, threshold, left, right, _, _ = kernels.stump_search(X, y, w, regression)
    return Stump(int(feature), float(threshold), left, right, task, X.shape[1])


def stump_predict(stump, X):
    return stump.predict(X)


def poly_features(X, degree):
    """Column-wise powers ``[X, X**2, ..., X**degree]`` (no cross terms)."""
    X = as_matrix(X)
    if degree <= 1:
        return X
    return np.hstack([X ** k for k in range(1, degree + 1)])


class Ridge:
    """Ridge regression with an optional elementwise polynomial expansion."""

    name = "ridge"
    task = "regression"

    def __init__(self, lam=1.0, degree=1):
        self.lam = float(lam)
        self.degree = int(degree)

    def get_params(self):
        return {"lam": self.lam, "degree": self.degree}

    def fit(self, X, y, sample_weight=None, prior=None):
        self.model_ = ridge_fit(poly_features(X, self.degree), y, self.lam, sample_weight, prior)
        self.n_features_ = as_matrix(X).shape[1]
        return self

    def predict(self, X):
        _check_features(self, X)
        return ridge_predict(self.model_, poly_features(X, self.degree))

    def to_dict(self):
        return {"name": self.name, "params": self.get_params(), "n_features": self.n_features_,
                "coef": self.model_.coef.tolist(), "intercept": self.model_.intercept}

    @classmethod
    def from_dict(cls, d):
        est = cls(**d["params"])
        est.n_features_ = int(d["n_features"])
        est.model_ = LinearModel(np.asarray(d["coef"], dtype=np.float64), float(d["intercept"]), "regression")
        return est


class Logistic:
    """Binary logistic regression (labels 0/1) with an L2 penalty."""

    name = "logistic"
    task = "classification"

    def __init__(self, lam=0.01):
        self.lam = float(lam)

    def get_params(self):
        return {"lam": self.lam}

    def fit(self, X, y, sample_weight=None, prior=None):
        self.model_ = logistic_fit(X, y, self.lam, sample_weight, prior)
        self.n_features_ = as_matrix(X).shape[1]
        return self

    def predict(self, X):
        _check_features(self, X)
        return logistic_predict(self.model_, X)

    def predict_proba(self, X):
        _check_features(self, X)
        return logistic_proba(self.model_, X)

    def to_dict(self):
        return {"name": self.name, "params": self.get_params(), "n_features": self.n_features_,
                "coef": self.model_.coef.tolist(), "intercept": self.model_.intercept}

    @classmethod
    def from_dict(cls, d):
        est = cls(**d["params"])
        est.n_features_ = int(d["n_features"])
        est.model_ = LinearModel(np.asarray(d["coef"], dtype=np.float64), float(d["intercept"]), "classification")
        return est


class DecisionStump:
    """Weighted decision stump; ``task=None`` infers it from the label dtype."""

    name = "stump"

    def __init__(self, task=None):
        self.task = task

    def get_params(self):
        return {"task": self.task}

    def fit(self, X, y, sample_weight=None):
        self.model_ = stump_fit(X, y, sample_weight, self.task)
        self.n_features_ = self.model_.n_features
        return self

    def predict(self, X):
        return self.model_.predict(X)

    def to_dict(self):
        m = self.model_
        return {"name": self.name, "params": self.get_params(), "n_features": m.n_features,
                "feature": m.feature, "threshold": m.threshold, "left": m.left,
                "right": m.right, "task": m.task}

    @classmethod
    def from_dict(cls, d):
        est = cls(**d["params"])
        est.model_ = Stump(int(d["feature"]), float(d["threshold"]), d["left"], d["right"],
                           d["task"], int(d["n_features"]))
        est.n_features_ = est.model_.n_features
        return est


def _check_features(est, X):
    X = as_matrix(X)
    if X.shape[1] != est.n_features_:
        raise DimensionMismatch(
            f"estimator was fitted on {est.n_features_} features, got {X.shape[1]}",
            expected=est.n_features_, got=int(X.shape[1]),
        )


ESTIMATORS = {"ridge": Ridge, "logistic": Logistic, "stump": DecisionStump}


def make_estimator(name, **params):
    try:
        cls = ESTIMATORS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None
    return cls(**params)


def clone(est):
    return type(est)(**est.get_params())


def estimator_from_dict(d):
    return ESTIMATORS[d["name"]].from_dict(d)
