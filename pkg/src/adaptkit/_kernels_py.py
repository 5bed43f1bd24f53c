"""Pure-Python/numpy implementations of the hot kernels.

These are the reference semantics for the compiled ``_kernels`` extension;
both modules expose the same four functions with identical signatures.
"""

import numpy as np


def _project_slab(v, lo, hi):
    s = v.sum()
    if s < lo:
        return v + (lo - s) / v.shape[0]
    if s > hi:
        return v - (s - hi) / v.shape[0]
    return v.copy()


def _project_exact(v, upper, lo, hi):
    """Exact Euclidean projection onto box ∩ slab by bisection on a shift."""
    w = np.clip(v, 0.0, upper)
    s = w.sum()
    if lo <= s <= hi:
        return w
    goal = lo if s < lo else hi
    # sum(clip(v - tau)) is nonincreasing in tau
    a = v.min() - upper - 1.0
    b = v.max() + 1.0
    for _ in range(200):
        tau = 0.5 * (a + b)
        if np.clip(v - tau, 0.0, upper).sum() > goal:
            a = tau
        else:
            b = tau
        if b - a <= 1e-15 * (1.0 + abs(tau)):
            break
    w = np.clip(v - 0.5 * (a + b), 0.0, upper)
    # snap the residual onto the free coordinates
    free = (w > 0.0) & (w < upper)
    if free.any():
        w[free] += (goal - w.sum()) / free.sum()
        np.clip(w, 0.0, upper, out=w)
    return w


def project_box_slab(v, upper, lo, hi, max_iter=1000, tol=1e-13):
    """Project ``v`` onto {0 <= w <= upper, lo <= sum(w) <= hi} with Dykstra.

    Sweeps stop once the iterate and both correction terms are stationary
    (the iterate alone can stall while the corrections still move). Falls
    back to the exact shift-bisection projection when that does not happen
    within ``max_iter`` sweeps or the result misses the slab by more than
    ``1e-12 * n``.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    x = v.copy()
    p = np.zeros(n)
    q = np.zeros(n)
    converged = False
    for _ in range(max_iter):
        y = np.clip(x + p, 0.0, upper)
        p_new = x + p - y
        z = _project_slab(y + q, lo, hi)
        q_new = y + q - z
        delta = max(np.abs(z - x).max(), np.abs(p_new - p).max(), np.abs(q_new - q).max())
        x, p, q = z, p_new, q_new
        if delta <= tol * (1.0 + np.abs(x).max()):
            converged = True
            break
    w = np.clip(x, 0.0, upper)
    s = w.sum()
    if not converged or s < lo - 1e-12 * n or s > hi + 1e-12 * n:
        w = _project_exact(v, upper, lo, hi)
    return w


def kmm_pgd(K, kappa, upper, lo, hi, w0, step, max_iter, tol, patience):
    """Accelerated projected gradient for min 0.5 w'Kw - kappa'w on box ∩ slab.

    Returns ``(w_best, f_best, n_iter, converged)``. Every iterate is the
    output of a projection, so ``w_best`` is feasible on all return paths.
    """
    K = np.asarray(K, dtype=np.float64)
    kappa = np.asarray(kappa, dtype=np.float64)
    w = project_box_slab(np.asarray(w0, dtype=np.float64), upper, lo, hi)
    Kw = K @ w
    f = 0.5 * w @ Kw - kappa @ w
    w_best, f_best = w.copy(), f
    y, Ky = w.copy(), Kw.copy()
    t = 1.0
    quiet = 0
    for it in range(1, max_iter + 1):
        w_new = project_box_slab(y - step * (Ky - kappa), upper, lo, hi)
        Kw_new = K @ w_new
        f_new = 0.5 * w_new @ Kw_new - kappa @ w_new
        if f_new < f_best:
            w_best, f_best = w_new.copy(), f_new
        # gradient-based momentum restart
        if (y - w_new) @ (w_new - w) > 0.0:
            t = 1.0
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        # K is linear, so K @ y follows from the two latest products
        y = w_new + mom * (w_new - w)
        Ky = Kw_new + mom * (Kw_new - Kw)
        if abs(f_new - f) <= tol * max(abs(f), 1.0):
            quiet += 1
        else:
            quiet = 0
        w, Kw, f, t = w_new, Kw_new, f_new, t_new
        if quiet >= patience:
            return w_best, f_best, it, True
    return w_best, f_best, max_iter, False


def stump_search(X, y, w, regression):
    """Exhaustive weighted best-split search for a depth-one tree.

    ``y`` holds integer labels 0..K-1 for classification. Returns
    ``(feature, threshold, left, right, error, found)``; ``found`` is False
    when no feature has two distinct values.
    """
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, d = X.shape
    if regression:
        yv = np.asarray(y, dtype=np.float64)
        wy = w * yv
        # sequential sums keep results bit-identical with the compiled kernel
        total_w = np.cumsum(w)[-1]
        total_wy = np.cumsum(wy)[-1]
        total_wyy = np.cumsum(wy * yv)[-1]
        scale = total_wyy + total_w
    else:
        yl = np.asarray(y, dtype=np.int64)
        n_classes = int(yl.max()) + 1
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), yl] = w
        total_w = np.cumsum(w)[-1]
        total_cls = np.cumsum(onehot, axis=0)[-1]
        scale = total_w
    tie = 1e-12 * scale

    errors = []
    for j in range(d):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        valid = xs[:-1] < xs[1:]
        if regression:
            cw = np.cumsum(w[order])[:-1]
            cwy = np.cumsum(wy[order])[:-1]
            rw = total_w - cw
            rwy = total_wy - cwy
            with np.errstate(divide="ignore", invalid="ignore"):
                left_term = np.where(cw > 0, cwy * cwy / cw, 0.0)
                right_term = np.where(rw > 0, rwy * rwy / rw, 0.0)
            err = total_wyy - left_term - right_term
        else:
            cc = np.cumsum(onehot[order], axis=0)[:-1]
            rc = total_cls - cc
            err = (cc.sum(axis=1) - cc.max(axis=1)) + (rc.sum(axis=1) - rc.max(axis=1))
        err = np.where(valid, err, np.inf)
        errors.append((order, xs, err, cw if regression else cc, cwy if regression else rc))

    best_err = min((e[2].min() for e in errors if e[2].size), default=np.inf)
    if not np.isfinite(best_err):
        if regression:
            value = total_wy / total_w
        else:
            value = int(np.argmax(total_cls))
        return 0, 0.0, value, value, float(scale - (0 if regression else total_cls.max())), False

    for j, (order, xs, err, a, b) in enumerate(errors):
        hits = np.nonzero(err <= best_err + tie)[0]
        if hits.size:
            i = int(hits[0])
            break
    threshold = 0.5 * (xs[i] + xs[i + 1])
    if regression:
        lw, lwy = a[i], b[i]
        rw, rwy = total_w - lw, total_wy - lwy
        lv = lwy / lw if lw > 0 else None
        rv = rwy / rw if rw > 0 else None
        if lv is None:
            lv = rv
        if rv is None:
            rv = lv
        left, right = float(lv), float(rv)
    else:
        lc, rc = a[i], b[i]
        left = int(np.argmax(lc)) if lc.sum() > 0 else int(np.argmax(rc))
        right = int(np.argmax(rc)) if rc.sum() > 0 else left
    return j, float(threshold), left, right, float(err[i]), True


def weighted_median(P, weights):
    """Row-wise weighted median of member outputs.

    For each row of ``P`` (points x members) returns the smallest output at
    which the cumulative weight reaches half the total.
    """
    P = np.asarray(P, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    order = np.argsort(P, axis=1, kind="stable")
    sorted_p = np.take_along_axis(P, order, axis=1)
    cum = np.cumsum(weights[order], axis=1)
    half = 0.5 * cum[:, -1:]
    idx = np.argmax(cum >= half, axis=1)
    return sorted_p[np.arange(P.shape[0]), idx]
