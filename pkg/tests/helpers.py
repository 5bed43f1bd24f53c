"""Small fixtures shared by several test modules."""

import numpy as np

from adaptkit.core import AdaptInput

SUPERVISED = {"FE", "TrAdaBoost", "TrAdaBoostR2", "TwoStageTrAdaBoostR2",
              "RegularTransferLR", "RegularTransferLC"}


def toy_input(task, seed=0, n_s=40, n_t=30, n_labeled=10, d=2):
    rng = np.random.default_rng(seed)
    Xs = rng.normal(size=(n_s, d))
    Xt = rng.normal(0.4, 1.1, size=(n_t, d))
    if task == "regression":
        coef = np.arange(1, d + 1, dtype=float)
        ys = Xs @ coef + 0.1 * rng.normal(size=n_s)
        yt = Xt @ coef + 0.3 + 0.1 * rng.normal(size=n_t)
    else:
        ys = (Xs[:, 0] + 0.3 * rng.normal(size=n_s) > 0).astype(np.int64)
        yt = (Xt[:, 0] + 0.3 * rng.normal(size=n_t) > 0.2).astype(float)
    yt = yt.astype(float)
    yt[n_labeled:] = np.nan
    return AdaptInput(Xs, ys, Xt, yt, task=task)


def all_method_cases():
    from adaptkit.methods import METHODS

    return [(name, task) for name, m in METHODS.items() for task in m.tasks]


class RecordingRidge:
    """User-supplied estimator (no get_params) that records its training shape."""

    def __init__(self):
        self.shapes = []

    def fit(self, X, y, sample_weight=None):
        X = np.asarray(X)
        self.shapes.append(X.shape)
        Xb = np.hstack([X, np.ones((X.shape[0], 1))])
        self.coef_ = np.linalg.lstsq(Xb, y, rcond=None)[0]
        return self

    def predict(self, X):
        X = np.asarray(X)
        return np.hstack([X, np.ones((X.shape[0], 1))]) @ self.coef_
