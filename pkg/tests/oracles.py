"""Independent brute-force oracles shared by the test modules.

None of these call into the code paths they check.
"""

import itertools
import math

import numpy as np


def qp_value(K, kappa, w):
    return 0.5 * w @ K @ w - kappa @ w


def kmm_qp_enumerate(K, kappa, B, eps, feas_tol=1e-9):
    """Exact KMM QP optimum by enumerating every active set.

    Each coordinate is pinned at 0, pinned at B, or free; the sum constraint
    is inactive, at its lower end or at its upper end. The equality-
    constrained subproblem is solved in closed form and primal-infeasible
    candidates are dropped. The minimum over survivors is the optimum.
    """
    n = len(kappa)
    lo, hi = max(n * (1 - eps), 0.0), n * (1 + eps)
    best_f, best_w = math.inf, None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        free = [i for i in range(n) if pattern[i] == 2]
        fixed = np.array([0.0 if p == 0 else B for p in pattern])
        for mode in ("none", "lo", "hi"):
            w = fixed.copy()
            if free:
                F = np.array(free)
                rest = [i for i in range(n) if i not in free]
                c = kappa[F] - (K[np.ix_(F, rest)] @ fixed[rest] if rest else 0.0)
                KFF = K[np.ix_(F, F)]
                if mode == "none":
                    sol = np.linalg.lstsq(KFF, c, rcond=None)[0]
                else:
                    target = (lo if mode == "lo" else hi) - fixed[rest].sum()
                    m = len(F)
                    kkt = np.zeros((m + 1, m + 1))
                    kkt[:m, :m] = KFF
                    kkt[:m, m] = 1.0
                    kkt[m, :m] = 1.0
                    sol = np.linalg.lstsq(kkt, np.append(c, target), rcond=None)[0][:m]
                w[F] = sol
            elif mode != "none":
                continue
            if w.min() < -feas_tol or w.max() > B + feas_tol:
                continue
            if w.sum() < lo - feas_tol or w.sum() > hi + feas_tol:
                continue
            f = qp_value(K, kappa, w)
            if f < best_f:
                best_f, best_w = f, w
    return best_f, best_w


def kmm_qp_grid(K, kappa, B, eps, step=0.001):
    """Grid search at ``step`` resolution over the first n-1 coordinates,
    with the last coordinate minimized exactly on its feasible interval.
    Intended for n <= 3."""
    n = len(kappa)
    lo, hi = max(n * (1 - eps), 0.0), n * (1 + eps)
    axis = np.arange(0.0, B + step / 2, step)
    axis = np.unique(np.append(axis[axis <= B], B))
    grids = np.meshgrid(*([axis] * (n - 1)), indexing="ij")
    W = np.stack([g.ravel() for g in grids], axis=1) if n > 1 else np.zeros((1, 0))
    s = W.sum(axis=1)
    low = np.maximum(0.0, lo - s)
    high = np.minimum(B, hi - s)
    ok = low <= high + 1e-12
    W, low, high = W[ok], low[ok], high[ok]
    knn = K[n - 1, n - 1]
    lin = W @ K[: n - 1, n - 1] - kappa[n - 1]
    last = np.clip(-lin / knn, low, high)
    full = np.hstack([W, last[:, None]])
    vals = 0.5 * np.einsum("ij,jk,ik->i", full, K, full) - full @ kappa
    k = int(np.argmin(vals))
    return float(vals[k]), full[k]


def simplex_grid(m, resolution):
    """All points of the (m-1)-simplex with coordinates in multiples of 1/resolution."""
    pts = []
    for combo in itertools.product(range(resolution + 1), repeat=m - 1):
        if sum(combo) <= resolution:
            pts.append(list(combo) + [resolution - sum(combo)])
    return np.array(pts, dtype=float) / resolution


def kliep_oracle(K_tc, b, resolution=400, zooms=12):
    """Maximize sum(log(K_tc @ alpha)) over {alpha >= 0, b @ alpha = 1} by a
    simplex grid on beta = b * alpha followed by repeated local zoomed grids."""
    m = len(b)
    G = simplex_grid(m, resolution)
    def score(beta):
        alpha = beta / b
        with np.errstate(divide="ignore"):
            return np.log(alpha @ K_tc.T).sum(axis=1)
    vals = score(G)
    center = G[int(np.argmax(vals))]
    best = vals.max()
    width = 2.0 / resolution
    local = simplex_grid(m, 20) - 1.0 / m
    for _ in range(zooms):
        cand = center + width * local
        cand = cand[(cand >= 0).all(axis=1)]
        cand = cand / cand.sum(axis=1, keepdims=True)
        v = score(cand)
        if v.max() > best:
            best = v.max()
            center = cand[int(np.argmax(v))]
        width *= 0.5
    return float(best), center / b


def two_pass_covariance(X):
    n, d = X.shape
    mean = [sum(X[i, j] for i in range(n)) / n for j in range(d)]
    C = np.zeros((d, d))
    for a in range(d):
        for c in range(d):
            C[a, c] = sum((X[i, a] - mean[a]) * (X[i, c] - mean[c]) for i in range(n)) / (n - 1)
    return C


def central_diff_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def weighted_median_scan(values, weights):
    """Smallest value whose cumulative weight (in sorted order) reaches half."""
    pairs = sorted(zip(values, weights), key=lambda p: p[0])
    total = sum(weights)
    acc = 0.0
    for v, w in pairs:
        acc += w
        if acc >= 0.5 * total:
            return v
    return pairs[-1][0]


def best_stump_exhaustive(X, y, w):
    """Minimum weighted 0/1 error over every (feature, midpoint, labels)."""
    n, d = X.shape
    best = math.inf
    for j in range(d):
        vals = sorted(set(X[:, j]))
        for a, b in zip(vals[:-1], vals[1:]):
            thr = (a + b) / 2
            left = X[:, j] <= thr
            for ll in (0, 1):
                for rl in (0, 1):
                    pred = np.where(left, ll, rl)
                    best = min(best, float(w[pred != y].sum()))
    return best


def best_stump_sse_exhaustive(X, y, w):
    """Minimum weighted squared error over every (feature, midpoint) split
    with per-side weighted means."""
    n, d = X.shape
    best = math.inf
    for j in range(d):
        vals = sorted(set(X[:, j]))
        for a, b in zip(vals[:-1], vals[1:]):
            left = X[:, j] <= (a + b) / 2
            err = 0.0
            for side in (left, ~left):
                ws = w[side]
                if ws.sum() > 0:
                    mu = (ws * y[side]).sum() / ws.sum()
                    err += float((ws * (y[side] - mu) ** 2).sum())
            best = min(best, err)
    return best


def box_slab_projection(v, B, lo, hi):
    """Euclidean projection onto {0 <= w <= B, lo <= sum(w) <= hi} from the
    KKT form w = clip(v - tau, 0, B), tau found with scipy's brentq."""
    from scipy.optimize import brentq

    def total(tau):
        return np.clip(v - tau, 0.0, B).sum()

    s = total(0.0)
    if lo <= s <= hi:
        return np.clip(v, 0.0, B)
    goal = lo if s < lo else hi
    a, b = v.min() - B - 1.0, v.max() + 1.0
    tau = brentq(lambda t: total(t) - goal, a, b, xtol=1e-15, rtol=1e-15)
    return np.clip(v - tau, 0.0, B)


def msda_monte_carlo(X, p, draws=10**6, seed=0, chunk=50_000):
    """Estimate E[P] E[Q]^-1 by sampling dropout masks.

    With x the clean row (bias appended) and x~ its corruption,
    P = sum x x~' restricted to feature rows and Q = sum x~ x~'. Returns the
    (d+1) x d matrix whose transpose is E[P] E[Q]^-1.
    """
    rng = np.random.default_rng(seed)
    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    P = np.zeros((d + 1, d + 1))
    Q = np.zeros((d + 1, d + 1))
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        keep = (rng.random((m, n, d)) >= p).astype(float)
        Xc = np.concatenate([X[None] * keep, np.ones((m, n, 1))], axis=2)
        Q += np.einsum("kni,knj->ij", Xc, Xc)
        P += np.einsum("ni,knj->ij", Xb, Xc)
        done += m
    P /= draws
    Q /= draws
    W = P[:d] @ np.linalg.inv(Q)
    return W.T


def product_rule(member_preds, betas):
    """TrAdaBoost output evaluated literally: 1 iff
    prod beta^-h >= prod beta^-1/2 (members x points array of 0/1)."""
    H = np.asarray(member_preds, dtype=float)
    b = np.asarray(betas, dtype=float)[:, None]
    lhs = np.prod(b ** (-H), axis=0)
    rhs = np.prod(b ** -0.5, axis=0)
    return (lhs >= rhs).astype(int)
