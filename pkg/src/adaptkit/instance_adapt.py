"""Instance-based adaptation: KMM and KLIEP importance weights, and the
TrAdaBoost family of transfer boosting algorithms."""

import math
from dataclasses import dataclass, field

import numpy as np

from adaptkit import kernels
from adaptkit.errors import EmptyEnsemble, TooFewTargets
from adaptkit.estimators import DecisionStump, Ridge, clone
from adaptkit.numerics import (
    QpProblem,
    as_matrix,
    kliep_optimize,
    median_heuristic,
    rbf_kernel,
    solve_kmm_qp,
)

EPS_FLOOR = 1e-10
RESIDUAL_RTOL = 1e-12


# importance weighting -------------------------------------------------------

def kmm_default_eps(n_s):
    return (math.sqrt(n_s) - 1.0) / math.sqrt(n_s)


def kmm_fit(Xs, Xt, gamma=None, B=1000.0, eps=None, seed=0, max_iter=10000, tol=1e-9):
    """Kernel mean matching weights for the source rows.

    Returns ``(weights, info)`` where ``info`` carries the bandwidth used and
    the solver's convergence flag. ``gamma`` defaults to the median
    heuristic on the stacked source and target rows.
    """
    Xs = as_matrix(Xs, "Xs")
    Xt = as_matrix(Xt, "Xt")
    n_s, n_t = Xs.shape[0], Xt.shape[0]
    if gamma is None:
        gamma = median_heuristic(np.vstack([Xs, Xt]), seed=seed)
    if eps is None:
        eps = kmm_default_eps(n_s)
    K = rbf_kernel(Xs, Xs, gamma)
    kappa = (n_s / n_t) * rbf_kernel(Xs, Xt, gamma).sum(axis=1)
    res = solve_kmm_qp(
        QpProblem(K=K, kappa=kappa, B=B, eps=eps),
        rng=np.random.default_rng(seed), max_iter=max_iter, tol=tol,
    )
    return res.w, {"gamma": float(gamma), "B": float(B), "eps": float(eps),
                   "converged": res.converged, "n_iter": res.n_iter, "objective": res.objective}


@dataclass(frozen=True)
class KliepSelection:
    candidate_gammas: tuple
    chosen_gamma: float
    cv_scores: tuple
    n_centers: int
    centers: np.ndarray = field(repr=False, default=None)
    alpha: np.ndarray = field(repr=False, default=None)
    converged: bool = True


def kliep_fit(Xs, Xt, gammas=None, n_centers=100, cv_folds=5, seed=0):
    """KLIEP density-ratio weights with likelihood cross-validation.

    Kernel centers are a seeded subsample of the target rows; each candidate
    bandwidth is scored by the mean held-out log ratio over ``cv_folds``
    target folds and the best one (smallest on ties) is refit on all
    targets. Returns ``(weights, selection)``.
    """
    Xs = as_matrix(Xs, "Xs")
    Xt = as_matrix(Xt, "Xt")
    n_t = Xt.shape[0]
    if n_t < cv_folds:
        raise TooFewTargets(f"KLIEP needs at least {cv_folds} target rows, got {n_t}",
                            n_target=n_t, cv_folds=cv_folds)
    if gammas is None:
        g = median_heuristic(np.vstack([Xs, Xt]), seed=seed)
        gammas = (0.1 * g, g, 10.0 * g)
    gammas = tuple(sorted(float(g) for g in gammas))
    rng = np.random.default_rng(seed)
    m = min(int(n_centers), n_t)
    centers = Xt[np.sort(rng.choice(n_t, m, replace=False))]
    folds = np.array_split(rng.permutation(n_t), cv_folds)

    scores = []
    converged = True
    for gamma in gammas:
        A = rbf_kernel(Xt, centers, gamma)
        b = rbf_kernel(Xs, centers, gamma).mean(axis=0)
        fold_scores = []
        for held in folds:
            train = np.setdiff1d(np.arange(n_t), held)
            res = kliep_optimize(A[train], b)
            converged &= res.converged
            fold_scores.append(np.mean(np.log(np.maximum(A[held] @ res.alpha, 1e-300))))
        scores.append(float(np.mean(fold_scores)))
    best = 0
    for k in range(1, len(gammas)):
        if scores[k] > scores[best]:
            best = k
    gamma = gammas[best]
    Ksc = rbf_kernel(Xs, centers, gamma)
    res = kliep_optimize(rbf_kernel(Xt, centers, gamma), Ksc.mean(axis=0))
    converged &= res.converged
    weights = Ksc @ res.alpha
    sel = KliepSelection(
        candidate_gammas=gammas, chosen_gamma=gamma, cv_scores=tuple(scores),
        n_centers=m, centers=centers, alpha=res.alpha, converged=converged,
    )
    return weights, sel


# boosting ----------------------------------------------------------------

@dataclass
class BoostEnsemble:
    """Fitted boosting members with their per-iteration betas.

    Only members from ``first_voter`` on take part in prediction.
    ``weight_history`` holds the normalized weight vector after every
    completed iteration (in-memory diagnostics only).
    """

    members: list
    betas: np.ndarray
    n_iters: int
    kind: str
    first_voter: int = 0
    stop_reason: str = None
    weight_history: list = field(default_factory=list, repr=False)

    @property
    def vote_weights(self):
        return np.log(1.0 / np.asarray(self.betas[self.first_voter:], dtype=np.float64))


def source_beta(n_s, n_iters):
    """Fixed source down-weighting factor ``1 / (1 + sqrt(2 ln n_s / N))``."""
    return 1.0 / (1.0 + math.sqrt(2.0 * math.log(n_s) / n_iters))


def _late_half(n_members):
    # iterations ceil(N/2)..N, 1-based
    return math.ceil(n_members / 2) - 1


def _stack(Xs, ys, Xt, yt):
    return np.vstack([Xs, Xt]), np.concatenate([ys, yt])


def _fallback_member(estimator, X, y, n_s, loss_fn):
    """Refit with all weight on the labeled targets (used when the very first
    boosting round is no better than chance on them)."""
    p = np.zeros(len(y))
    p[n_s:] = 1.0 / (len(y) - n_s)
    h = clone(estimator).fit(X, y, sample_weight=p)
    loss = loss_fn(h.predict(X), y)
    eps = min(max(float(loss[n_s:].mean()), EPS_FLOOR), 0.5)
    return h, eps / (1.0 - eps)


def tradaboost_fit(Xs, ys, Xt, yt, n_iters=20, estimator=None):
    """Binary TrAdaBoost on source rows plus labeled target rows.

    Each round fits the weak learner on all rows with the current weights;
    the error is measured on target rows only. Misclassified source rows
    are multiplied by the fixed factor :func:`source_beta`, misclassified
    target rows by ``1 / beta_t``, and the weights renormalized. A round
    with zero target error is kept and ends training; a round with error
    at least 1/2 is discarded and ends training.
    """
    Xs, Xt = as_matrix(Xs, "Xs"), as_matrix(Xt, "Xt")
    ys = np.asarray(ys).astype(np.int64)
    yt = np.asarray(yt).astype(np.int64)
    if np.setdiff1d(np.concatenate([ys, yt]), [0, 1]).size:
        raise ValueError("TrAdaBoost is binary: labels must be 0 or 1")
    if len(yt) < 1:
        raise ValueError("TrAdaBoost needs at least one labeled target row")
    estimator = DecisionStump(task="classification") if estimator is None else estimator
    n_s = Xs.shape[0]
    X, y = _stack(Xs, ys, Xt, yt)
    b_src = source_beta(n_s, n_iters)
    w = np.full(len(y), 1.0 / len(y))
    members, betas, history = [], [], []
    stop = None

    def miss(pred, truth):
        return (pred != truth).astype(np.float64)

    for _ in range(n_iters):
        h = clone(estimator).fit(X, y, sample_weight=w)
        loss = miss(h.predict(X), y)
        pt = w[n_s:]
        eps = float(pt @ loss[n_s:] / pt.sum())
        if eps >= 0.5:
            stop = "target_error_at_least_half"
            if not members:
                h, beta = _fallback_member(estimator, X, y, n_s, miss)
                members.append(h)
                betas.append(beta)
            break
        beta_t = max(eps, EPS_FLOOR) / (1.0 - max(eps, EPS_FLOOR))
        members.append(h)
        betas.append(beta_t)
        if eps == 0.0:
            stop = "zero_target_error"
            break
        w = w.copy()
        w[:n_s] *= b_src ** loss[:n_s]
        w[n_s:] *= beta_t ** (-loss[n_s:])
        w /= w.sum()
        history.append(w)
    return BoostEnsemble(
        members=members, betas=np.asarray(betas), n_iters=n_iters, kind="classification-vote",
        first_voter=_late_half(len(members)), stop_reason=stop, weight_history=history,
    )


def tradaboost_predict(ens, X):
    """Weighted vote of the late-half members with weights ``ln(1/beta_t)``.

    Predicts 1 iff ``prod beta_t^-h_t >= prod beta_t^-1/2``; falls back to a
    plain majority when every vote weight is zero.
    """
    if not ens.members:
        raise EmptyEnsemble("ensemble has no members")
    voters = ens.members[ens.first_voter:]
    signs = np.stack([2.0 * np.asarray(h.predict(X), dtype=np.float64) - 1.0 for h in voters], axis=1)
    weights = ens.vote_weights
    if not np.any(weights > 0):
        weights = np.ones(len(voters))
    return (signs @ weights >= 0.0).astype(np.int64)


def _abs_residuals(pred, truth):
    return np.abs(np.asarray(pred, dtype=np.float64) - truth)


def _degenerate(D, y):
    # residuals at rounding level count as a perfect fit
    return D <= RESIDUAL_RTOL * max(1.0, float(np.abs(y).max()))


def tradaboostr2_fit(Xs, ys, Xt, yt, n_iters=20, estimator=None):
    """Regression TrAdaBoost (linear loss).

    Losses are absolute residuals divided by the largest one over all rows;
    the round error is the weighted mean loss on the labeled targets.
    Target rows are multiplied by ``beta_t ** -loss`` and source rows by
    ``source_beta ** loss``.
    """
    Xs, Xt = as_matrix(Xs, "Xs"), as_matrix(Xt, "Xt")
    ys = np.asarray(ys, dtype=np.float64)
    yt = np.asarray(yt, dtype=np.float64)
    if len(yt) < 1:
        raise ValueError("TrAdaBoostR2 needs at least one labeled target row")
    estimator = Ridge(lam=1e-3) if estimator is None else estimator
    n_s = Xs.shape[0]
    X, y = _stack(Xs, ys, Xt, yt)
    b_src = source_beta(n_s, n_iters)
    w = np.full(len(y), 1.0 / len(y))
    members, betas, history = [], [], []
    stop = None

    def linear_loss(pred, truth):
        r = _abs_residuals(pred, truth)
        D = r.max()
        return np.zeros_like(r) if _degenerate(D, truth) else r / D

    for _ in range(n_iters):
        h = clone(estimator).fit(X, y, sample_weight=w)
        r = _abs_residuals(h.predict(X), y)
        D = r.max()
        if _degenerate(D, y):
            members.append(h)
            betas.append(EPS_FLOOR / (1.0 - EPS_FLOOR))
            stop = "degenerate_residuals"
            break
        loss = r / D
        pt = w[n_s:]
        eps = float(pt @ loss[n_s:] / pt.sum())
        if eps >= 0.5:
            stop = "target_error_at_least_half"
            if not members:
                h, beta = _fallback_member(estimator, X, y, n_s, linear_loss)
                members.append(h)
                betas.append(beta)
            break
        beta_t = max(eps, EPS_FLOOR) / (1.0 - max(eps, EPS_FLOOR))
        members.append(h)
        betas.append(beta_t)
        if eps == 0.0:
            stop = "zero_target_error"
            break
        w = w.copy()
        w[:n_s] *= b_src ** loss[:n_s]
        w[n_s:] *= beta_t ** (-loss[n_s:])
        w /= w.sum()
        history.append(w)
    return BoostEnsemble(
        members=members, betas=np.asarray(betas), n_iters=n_iters,
        kind="regression-weighted-median", first_voter=_late_half(len(members)),
        stop_reason=stop, weight_history=history,
    )


def weighted_median_predict(ens, X):
    """Weighted median of the voting members' outputs (weights ``ln(1/beta_t)``)."""
    if not ens.members:
        raise EmptyEnsemble("ensemble has no members")
    voters = ens.members[ens.first_voter:]
    P = np.stack([np.asarray(h.predict(X), dtype=np.float64) for h in voters], axis=1)
    weights = ens.vote_weights
    if not np.any(weights > 0):
        weights = np.ones(len(voters))
    return kernels.weighted_median(P, weights)


def target_fraction_schedule(n_s, n_t, step, n_steps):
    """Total target weight required at outer step ``step`` (0-based)."""
    base = n_t / (n_s + n_t)
    if n_steps <= 1:
        return base
    return base + (step / (n_steps - 1)) * (1.0 - base)


def _target_fraction(w, n_s):
    return w[n_s:].sum() / w.sum()


def rescale_source(w, loss, n_s, goal, tol=1e-12):
    """Multiply source weights by ``beta ** loss`` with ``beta`` in (0, 1]
    chosen by bisection on ``log(beta)`` so the target share of the total
    weight equals ``goal``. A goal of 1 zeroes the source weights."""
    w = np.asarray(w, dtype=np.float64).copy()
    T = w[n_s:].sum()
    if goal >= 1.0:
        w[:n_s] = 0.0
        return w / w.sum()
    src = w[:n_s]
    # zero losses would leave part of the source mass unscalable
    ell = np.maximum(np.asarray(loss[:n_s], dtype=np.float64), 1e-12)

    def frac(u):
        return T / (T + src @ np.exp(u * ell))

    lo, hi = -1.0, 0.0
    assert frac(0.0) <= goal + tol, "target share must grow along the schedule"
    while frac(lo) < goal:
        lo *= 2.0
        assert lo > -1e300, "bisection bracket diverged"
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if frac(mid) < goal:
            hi = mid
        else:
            lo = mid
        if abs(frac(mid) - goal) <= tol or hi - lo <= 1e-15 * abs(mid):
            break
    u = 0.5 * (lo + hi)
    w[:n_s] = src * np.exp(u * ell)
    return w / w.sum()


def adaboost_r2_frozen(X, y, w, n_s, n_iters=20, estimator=None):
    """AdaBoost.R2 that only updates target weights; source weights and the
    total target share stay fixed. Prediction uses every member."""
    estimator = Ridge(lam=1e-3) if estimator is None else estimator
    w = np.asarray(w, dtype=np.float64).copy()
    t_mass = w[n_s:].sum()
    members, betas = [], []
    stop = None
    for _ in range(n_iters):
        h = clone(estimator).fit(X, y, sample_weight=w / w.sum())
        r = _abs_residuals(h.predict(X), y)
        D = r.max()
        if _degenerate(D, y):
            members.append(h)
            betas.append(EPS_FLOOR / (1.0 - EPS_FLOOR))
            stop = "degenerate_residuals"
            break
        loss = r / D
        pt = w[n_s:]
        eps = float(pt @ loss[n_s:] / pt.sum())
        if eps >= 0.5:
            stop = "target_error_at_least_half"
            if not members:
                members.append(h)
                betas.append(1.0)
            break
        beta_t = max(eps, EPS_FLOOR) / (1.0 - max(eps, EPS_FLOOR))
        members.append(h)
        betas.append(beta_t)
        if eps == 0.0:
            stop = "zero_target_error"
            break
        wt = w[n_s:] * beta_t ** (1.0 - loss[n_s:])
        w[n_s:] = wt * (t_mass / wt.sum())
    return BoostEnsemble(members=members, betas=np.asarray(betas), n_iters=n_iters,
                         kind="regression-weighted-median", first_voter=0, stop_reason=stop)


@dataclass
class TwoStageResult:
    ensemble: BoostEnsemble
    best_step: int
    cv_errors: list
    fractions: list
    weights: list = field(repr=False, default_factory=list)


def two_stage_tradaboostr2_fit(Xs, ys, Xt, yt, n_steps=10, cv_folds=5, n_iters=20,
                               estimator=None, seed=0):
    """Two-stage TrAdaBoost.R2.

    Outer step ``t`` (0-based) sets the total target weight share to
    ``n_t/n + t/(S-1) * (1 - n_t/n)`` by shrinking source weights, then
    scores an inner frozen-source AdaBoost.R2 by ``cv_folds``-fold cross
    validation on the labeled targets. The step with the lowest CV error
    is refit on all rows.
    """
    Xs, Xt = as_matrix(Xs, "Xs"), as_matrix(Xt, "Xt")
    ys = np.asarray(ys, dtype=np.float64)
    yt = np.asarray(yt, dtype=np.float64)
    n_s, n_t = Xs.shape[0], Xt.shape[0]
    if n_t < cv_folds:
        raise TooFewTargets(f"need at least {cv_folds} labeled targets, got {n_t}",
                            n_target=n_t, cv_folds=cv_folds)
    estimator = Ridge(lam=1e-3) if estimator is None else estimator
    X, y = _stack(Xs, ys, Xt, yt)
    rng = np.random.default_rng(seed)
    folds = np.array_split(rng.permutation(n_t), cv_folds)
    w = np.full(n_s + n_t, 1.0 / (n_s + n_t))
    cv_errors, fractions, weights = [], [], []
    for t in range(n_steps):
        if t > 0:
            h = clone(estimator).fit(X, y, sample_weight=w)
            r = _abs_residuals(h.predict(X), y)
            D = r.max()
            loss = np.zeros_like(r) if _degenerate(D, y) else r / D
            w = rescale_source(w, loss, n_s, target_fraction_schedule(n_s, n_t, t, n_steps))
        fractions.append(float(_target_fraction(w, n_s)))
        weights.append(w.copy())
        sq = 0.0
        for held in folds:
            keep = np.ones(n_s + n_t, dtype=bool)
            keep[n_s + held] = False
            ens = adaboost_r2_frozen(X[keep], y[keep], w[keep], n_s, n_iters, estimator)
            pred = weighted_median_predict(ens, Xt[held])
            sq += float(((pred - yt[held]) ** 2).sum())
        cv_errors.append(sq / n_t)
    best = int(np.argmin(cv_errors))
    ens = adaboost_r2_frozen(X, y, weights[best], n_s, n_iters, estimator)
    return TwoStageResult(ensemble=ens, best_step=best, cv_errors=cv_errors,
                          fractions=fractions, weights=weights)


# adapters -----------------------------------------------------------------

def fit_kmm(data, estimator, hp, seed):
    w, info = kmm_fit(data.Xs, data.Xt, gamma=hp["gamma"], B=hp["B"], eps=hp["eps"],
                      seed=seed, max_iter=hp["max_iter"], tol=hp["tol"])
    estimator.fit(data.Xs, data.ys, sample_weight=w)
    warns = [] if info["converged"] else ["NonConvergence: KMM solver hit its iteration cap"]
    return {"weights": w, "gamma": info["gamma"], "B": info["B"], "eps": info["eps"]}, estimator, warns


def fit_kliep(data, estimator, hp, seed):
    w, sel = kliep_fit(data.Xs, data.Xt, gammas=hp["gammas"], n_centers=hp["n_centers"],
                       cv_folds=hp["cv_folds"], seed=seed)
    estimator.fit(data.Xs, data.ys, sample_weight=w)
    warns = [] if sel.converged else ["NonConvergence: KLIEP optimizer hit its iteration cap"]
    state = {"weights": w, "gamma": sel.chosen_gamma, "candidate_gammas": list(sel.candidate_gammas),
             "cv_scores": list(sel.cv_scores), "alpha": sel.alpha, "centers": sel.centers}
    return state, estimator, warns


def predict_with_estimator(model, X):
    return model.estimator.predict(X)


def _ensemble_state(ens):
    return {"members": list(ens.members), "betas": np.asarray(ens.betas, dtype=np.float64),
            "first_voter": ens.first_voter, "n_iters": ens.n_iters, "kind": ens.kind,
            "stop_reason": ens.stop_reason}


def ensemble_from_state(state):
    return BoostEnsemble(
        members=list(state["members"]), betas=np.asarray(state["betas"], dtype=np.float64).ravel(),
        n_iters=int(state["n_iters"]), kind=state["kind"], first_voter=int(state["first_voter"]),
        stop_reason=state.get("stop_reason"),
    )


def _early_stop_warnings(ens):
    return [f"EarlyStop: {ens.stop_reason} after {len(ens.members)} round(s)"] if ens.stop_reason else []


def fit_tradaboost(data, estimator, hp, seed):
    Xt_l, yt_l = data.labeled_target()
    ens = tradaboost_fit(data.Xs, data.ys, Xt_l, yt_l, hp["n_iters"], estimator)
    return _ensemble_state(ens), None, _early_stop_warnings(ens)


def predict_tradaboost(model, X):
    return tradaboost_predict(ensemble_from_state(model.state), X)


def fit_tradaboostr2(data, estimator, hp, seed):
    Xt_l, yt_l = data.labeled_target()
    ens = tradaboostr2_fit(data.Xs, data.ys, Xt_l, yt_l, hp["n_iters"], estimator)
    return _ensemble_state(ens), None, _early_stop_warnings(ens)


def predict_weighted_median(model, X):
    return weighted_median_predict(ensemble_from_state(model.state), X)


def fit_two_stage(data, estimator, hp, seed):
    Xt_l, yt_l = data.labeled_target()
    res = two_stage_tradaboostr2_fit(data.Xs, data.ys, Xt_l, yt_l, hp["n_steps"], hp["cv_folds"],
                                     hp["n_iters"], estimator, seed)
    state = _ensemble_state(res.ensemble)
    state.update(best_step=res.best_step, cv_errors=res.cv_errors, fractions=res.fractions)
    return state, None, _early_stop_warnings(res.ensemble)
