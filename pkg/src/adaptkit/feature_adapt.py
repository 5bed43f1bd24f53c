"""Feature-based adaptation: FE augmentation, CORAL alignment and mSDA."""

from dataclasses import dataclass

import numpy as np

from adaptkit.numerics import as_matrix, covariance_reg, psd_power

MSDA_RIDGE = 1e-8


def fe_augment(X, role):
    """Map rows to ``[general | source | target]`` blocks of width d each.

    Source rows become ``(x, x, 0)`` and target rows ``(x, 0, x)``.
    """
    X = as_matrix(X)
    zeros = np.zeros_like(X)
    if role == "source":
        return np.hstack([X, X, zeros])
    if role == "target":
        return np.hstack([X, zeros, X])
    raise ValueError(f"role must be 'source' or 'target', got {role!r}")


@dataclass(frozen=True)
class CoralTransform:
    M: np.ndarray
    lam: float
    source_mean: np.ndarray
    target_mean: np.ndarray


def coral_fit(Xs, Xt, lam=1.0):
    """Whitening/recoloring matrix ``Cs^-1/2 Ct^1/2`` plus both domain means."""
    Xs = as_matrix(Xs, "Xs", min_rows=2)
    Xt = as_matrix(Xt, "Xt", min_rows=2)
    Cs = covariance_reg(Xs, lam)
    Ct = covariance_reg(Xt, lam)
    M = psd_power(Cs, -0.5) @ psd_power(Ct, 0.5)
    return CoralTransform(M=M, lam=float(lam), source_mean=Xs.mean(axis=0), target_mean=Xt.mean(axis=0))


def coral_transform(t, X):
    X = as_matrix(X)
    return (X - t.source_mean) @ t.M + t.target_mean


def msda_layer(X, p):
    """Closed-form marginalized denoising map for one layer.

    Returns the ``(d+1) x d`` matrix ``M`` such that ``[X, 1] @ M`` is the
    expected reconstruction of ``X`` from feature-dropout corrupted inputs
    (each feature zeroed with probability ``p``, bias never corrupted).
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"corruption probability must lie in [0, 1), got {p}")
    X = as_matrix(X)
    d = X.shape[1]
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    q = np.append(np.full(d, 1.0 - p), 1.0)
    S = Xb.T @ Xb
    Q = S * np.outer(q, q)
    np.fill_diagonal(Q, q * np.diag(S))
    P = (S * q[None, :])[:d]
    # W (Q + r I) = P  <=>  (Q + r I) W' = P'  (Q symmetric)
    W = np.linalg.solve(Q + MSDA_RIDGE * np.eye(d + 1), P.T)
    return W


@dataclass(frozen=True)
class MsdaModel:
    layers: tuple
    p: float

    @property
    def n_layers(self):
        return len(self.layers)


def msda_fit(Xs, Xt, p=0.5, n_layers=3):
    """Stack ``n_layers`` denoising layers on the row-union of Xs and Xt."""
    if n_layers < 1:
        raise ValueError("n_layers must be at least 1")
    H = np.vstack([as_matrix(Xs, "Xs"), as_matrix(Xt, "Xt")])
    layers = []
    for _ in range(n_layers):
        M = msda_layer(H, p)
        layers.append(M)
        H = _msda_apply(M, H)
    return MsdaModel(layers=tuple(layers), p=float(p))


def _msda_apply(M, H):
    return np.tanh(np.hstack([H, np.ones((H.shape[0], 1))]) @ M)


def msda_transform(m, X):
    H = as_matrix(X)
    for M in m.layers:
        H = _msda_apply(M, H)
    return H


# adapters -----------------------------------------------------------------

def fit_fe(data, estimator, hp, seed):
    Xt_l, yt_l = data.labeled_target()
    Z = np.vstack([fe_augment(data.Xs, "source"), fe_augment(Xt_l, "target")])
    y = np.concatenate([data.ys, yt_l])
    estimator.fit(Z, y)
    return {}, estimator, []


def predict_fe(model, X):
    return model.estimator.predict(fe_augment(X, "target"))


def fit_coral(data, estimator, hp, seed):
    t = coral_fit(data.Xs, data.Xt, hp["lam"])
    estimator.fit(coral_transform(t, data.Xs), data.ys)
    state = {"M": t.M, "lam": t.lam, "source_mean": t.source_mean, "target_mean": t.target_mean}
    return state, estimator, []


def coral_from_state(state):
    return CoralTransform(
        M=np.asarray(state["M"], dtype=np.float64), lam=float(state["lam"]),
        source_mean=np.asarray(state["source_mean"], dtype=np.float64),
        target_mean=np.asarray(state["target_mean"], dtype=np.float64),
    )


def predict_coral(model, X):
    # target rows are predicted in their native space
    return model.estimator.predict(X)


def fit_msda(data, estimator, hp, seed):
    m = msda_fit(data.Xs, data.Xt, hp["p"], hp["n_layers"])
    estimator.fit(msda_transform(m, data.Xs), data.ys)
    return {"layers": list(m.layers), "p": m.p}, estimator, []


def msda_from_state(state):
    return MsdaModel(
        layers=tuple(np.asarray(M, dtype=np.float64) for M in state["layers"]), p=float(state["p"])
    )


def predict_msda(model, X):
    return model.estimator.predict(msda_transform(msda_from_state(model.state), X))
