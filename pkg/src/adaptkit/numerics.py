"""Numerical building blocks: kernels, covariances, matrix powers, ridge
systems and the two constrained optimizers used by KMM and KLIEP."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.spatial.distance import cdist

from adaptkit import kernels
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

EIG_FLOOR = 1e-12
KMM_RIDGE = 1e-8


def as_matrix(X, name="X", min_rows=1):
    """Return ``X`` as a 2-D float64 array after the DataMatrix checks."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {X.shape}", name=name)
    if X.shape[0] < min_rows or X.shape[1] < 1:
        raise DimensionMismatch(
            f"{name} needs at least {min_rows} row(s) and 1 column, got {X.shape}",
            name=name, shape=list(X.shape),
        )
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput(f"{name} contains NaN or infinite values", name=name)
    return X


def rbf_kernel(A, B, gamma):
    """Gaussian kernel matrix ``exp(-gamma * ||a_i - b_j||^2)``."""
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(
            f"feature counts differ: {A.shape[1]} vs {B.shape[1]}",
            left=A.shape[1], right=B.shape[1],
        )
    if not gamma > 0:
        raise NonPositiveGamma(f"gamma must be positive, got {gamma}", gamma=gamma)
    return np.exp(-gamma * cdist(A, B, "sqeuclidean"))


def median_heuristic(X, seed=0, max_rows=1000):
    """Bandwidth ``1 / (2 m^2)`` with ``m`` the median pairwise distance.

    Rows beyond ``max_rows`` are dropped by a seeded uniform subsample.
    """
    X = as_matrix(X, "X", min_rows=2)
    if X.shape[0] > max_rows:
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(X.shape[0], max_rows, replace=False))]
    i, j = np.triu_indices(X.shape[0], k=1)
    diff = X[i] - X[j]
    dist = np.sqrt((diff * diff).sum(axis=1))
    m = np.median(dist)
    if not m > 0:
        if not dist.max() > 0:
            raise DegenerateData("all pairwise distances are zero")
        # more than half the pairs coincide; fall back to the mean distance
        m = dist.mean()
    return 1.0 / (2.0 * m * m)


def covariance_reg(X, lam=0.0):
    """Sample covariance (denominator n-1) plus ``lam * I``."""
    X = as_matrix(X, "X", min_rows=2)
    centered = X - X.mean(axis=0)
    C = centered.T @ centered / (X.shape[0] - 1)
    return C + lam * np.eye(X.shape[1])


def psd_power(C, exponent):
    """Symmetric matrix power (exponent +1/2 or -1/2) via eigendecomposition.

    Eigenvalues are floored at 1e-12 before powering.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {C.shape}")
    if exponent not in (0.5, -0.5):
        raise ValueError(f"exponent must be 0.5 or -0.5, got {exponent}")
    asym = np.abs(C - C.T).max() if C.size else 0.0
    if asym > 1e-8:
        raise NotSymmetric(f"matrix is not symmetric (max asymmetry {asym:.3g})", asymmetry=float(asym))
    vals, vecs = np.linalg.eigh(0.5 * (C + C.T))
    vals = np.maximum(vals, EIG_FLOOR) ** exponent
    M = (vecs * vals) @ vecs.T
    return 0.5 * (M + M.T)


def _with_bias(X):
    return np.hstack([X, np.ones((X.shape[0], 1))])


def ridge_objective(beta, X, y, lam, prior=None, sample_weight=None):
    """Weighted penalized least squares and its gradient.

    ``beta`` carries the intercept as its last entry; the penalty
    ``lam * ||beta - prior||^2`` includes the intercept.
    """
    Xb = _with_bias(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    s = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    prior = np.zeros(Xb.shape[1]) if prior is None else np.asarray(prior, dtype=np.float64)
    r = Xb @ beta - y
    delta = beta - prior
    f = (s * r) @ r + lam * delta @ delta
    g = 2.0 * Xb.T @ (s * r) + 2.0 * lam * delta
    return f, g


def ridge_normal_eq(X, y, lam, prior=None, sample_weight=None):
    """Solve ``(X'SX + lam I) beta = X'Sy + lam prior`` with an intercept column.

    Returns the coefficient vector of length ``d + 1``, intercept last.
    """
    X = as_matrix(X, "X")
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) != X.shape[0]:
        raise DimensionMismatch(f"y has {len(y)} entries for {X.shape[0]} rows")
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    Xb = _with_bias(X)
    p = Xb.shape[1]
    s = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if s.shape != y.shape or np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("sample weights must be finite, nonnegative and one per row")
    prior = np.zeros(p) if prior is None else np.asarray(prior, dtype=np.float64).ravel()
    if prior.shape != (p,):
        raise DimensionMismatch(f"prior must have {p} entries (intercept last), got {prior.shape}")
    A = Xb.T @ (s[:, None] * Xb) + lam * np.eye(p)
    rhs = Xb.T @ (s * y) + lam * prior
    if lam == 0 and np.linalg.matrix_rank(A) < p:
        raise SingularSystem("Gram matrix is rank-deficient and lambda is 0")
    try:
        return np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc


def power_iteration(K, rng=None, n_iter=200, tol=1e-10):
    """Largest eigenvalue estimate of a symmetric PSD matrix."""
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.standard_normal(K.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        u = K @ v
        norm = np.linalg.norm(u)
        if norm == 0.0:
            return 0.0
        v = u / norm
        lam_new = v @ K @ v
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


@dataclass(frozen=True)
class QpProblem:
    """KMM quadratic program: min 0.5 w'Kw - kappa'w, 0 <= w <= B,
    |sum(w) - n| <= n * eps."""

    K: np.ndarray
    kappa: np.ndarray
    B: float
    eps: float


@dataclass(frozen=True)
class QpResult:
    w: np.ndarray
    objective: float
    n_iter: int
    converged: bool


def qp_objective(K, kappa, w):
    return 0.5 * w @ (K @ w) - kappa @ w


def solve_kmm_qp(problem, rng=None, max_iter=10000, tol=1e-9, patience=10):
    """Solve the KMM QP with accelerated projected gradient.

    The step is ``1/L`` with ``L`` a power-iteration estimate of the largest
    eigenvalue of ``K + 1e-8 I``; each step is projected onto the box and the
    sum slab with Dykstra's algorithm. Stops after ``patience`` consecutive
    iterations with relative objective change below ``tol``. On hitting
    ``max_iter`` the best iterate is returned with ``converged=False`` and a
    :class:`NonConvergenceWarning`.
    """
    K = np.asarray(problem.K, dtype=np.float64)
    kappa = np.asarray(problem.kappa, dtype=np.float64).ravel()
    n = kappa.shape[0]
    if K.shape != (n, n):
        raise DimensionMismatch(f"K must be {n}x{n}, got {K.shape}")
    if np.abs(K - K.T).max() > 1e-8:
        raise NotSymmetric("K is not symmetric")
    B, eps = float(problem.B), float(problem.eps)
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if B * n < n * (1.0 - eps):
        raise Infeasible(
            f"box upper bound {B} cannot reach the sum constraint (need B >= {1.0 - eps})",
            B=B, eps=eps, n=n,
        )
    Kr = K + KMM_RIDGE * np.eye(n)
    L = power_iteration(Kr, rng) * 1.01
    lo = max(n * (1.0 - eps), 0.0)
    hi = n * (1.0 + eps)
    w, _, n_iter, converged = kernels.kmm_pgd(
        Kr, kappa, B, lo, hi, np.ones(n), 1.0 / L, max_iter, tol, patience
    )
    w = np.asarray(w)
    if not converged:
        warnings.warn(
            f"KMM solver stopped after {max_iter} iterations without meeting the "
            "stopping rule; returning the best feasible iterate",
            NonConvergenceWarning, stacklevel=2,
        )
    return QpResult(w=w, objective=float(qp_objective(K, kappa, w)), n_iter=n_iter, converged=converged)


@dataclass(frozen=True)
class KliepResult:
    alpha: np.ndarray
    objective: float
    history: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = True


def kliep_objective(K_tc, alpha):
    return float(np.sum(np.log(np.maximum(K_tc @ alpha, 1e-300))))


def _kliep_project(v, b):
    """Euclidean projection onto {alpha >= 0, b @ alpha = 1}.

    The projection is ``max(v - tau * b, 0)``; sorting the breakpoints
    ``v / b`` gives ``tau`` in closed form. A final rescale removes rounding.
    """
    pos = b > 0
    alpha = np.zeros_like(v)
    vp, bp = v[pos], b[pos]
    order = np.argsort(-(vp / bp), kind="stable")
    r = (vp / bp)[order]
    s1 = np.cumsum(bp[order] * vp[order])
    s2 = np.cumsum(bp[order] ** 2)
    tau = (s1 - 1.0) / s2
    k = int(np.flatnonzero(r > tau)[-1])
    alpha[pos] = np.maximum(vp - tau[k] * bp, 0.0)
    if not np.any(alpha[pos] > 0):
        # numerically empty support: keep the largest ratio
        alpha[np.flatnonzero(pos)[order[0]]] = 1.0
    return alpha / (b @ alpha)


def _kliep_polish(A, b, alpha0):
    """SLSQP refinement of a feasible KLIEP iterate; None if it fails."""

    def negf(a):
        return -np.sum(np.log(np.maximum(A @ a, 1e-300)))

    def negg(a):
        return -(A.T @ (1.0 / np.maximum(A @ a, 1e-300)))

    res = optimize.minimize(
        negf, alpha0, jac=negg, method="SLSQP", bounds=[(0.0, None)] * len(b),
        constraints=[{"type": "eq", "fun": lambda a: b @ a - 1.0, "jac": lambda a: b}],
        options={"ftol": 1e-14, "maxiter": 1000},
    )
    if not res.success or not np.all(np.isfinite(res.x)):
        return None
    return _kliep_project(res.x, b)


def kliep_optimize(K_tc, K_sc_mean, max_iter=5000, tol=1e-12, patience=5, armijo=1e-4, warm=200):
    """Maximize ``sum(log(K_tc @ alpha))`` s.t. ``alpha >= 0``, ``b @ alpha = 1``.

    Projected gradient ascent: the trial step is the Barzilai-Borwein
    length from the last two iterates, shrunk by halving until the Armijo
    condition holds, so every accepted step increases the objective.
    After ``warm`` steps the iterate is polished with SLSQP; the polished
    point is projected back onto the constraint set and kept only if it
    improves the objective, otherwise gradient ascent resumes.
    ``history`` logs the objective after each accepted step (first entry is
    the start point). Stops after ``patience`` consecutive steps with
    relative gain below ``tol``, or when no halving yields an increase.
    """
    A = np.asarray(K_tc, dtype=np.float64)
    b = np.asarray(K_sc_mean, dtype=np.float64).ravel()
    if A.ndim != 2 or A.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"K_tc has shape {A.shape} but K_sc_mean has {b.shape[0]} entries")
    if not np.any(b > 0) or np.any(b < 0):
        raise ValueError("K_sc_mean must be nonnegative with at least one positive entry")
    alpha = np.where(b > 0, 1.0, 0.0)
    alpha /= b @ alpha
    f = kliep_objective(A, alpha)
    g = A.T @ (1.0 / np.maximum(A @ alpha, 1e-300))
    history = [f]
    step = 1.0 / max(np.linalg.norm(g), 1e-300)
    quiet = 0
    converged = False
    it = 0
    polished = False
    for it in range(1, max_iter + 1):
        if it == warm + 1 and not polished:
            polished = True
            cand = _kliep_polish(A, b, alpha)
            if cand is not None:
                f_cand = kliep_objective(A, cand)
                if f_cand > f:
                    alpha, f = cand, f_cand
                    history.append(f)
                    converged = True
                    break
        accepted = False
        t = step
        for _ in range(60):
            cand = _kliep_project(alpha + t * g, b)
            f_cand = kliep_objective(A, cand)
            if f_cand > f and f_cand >= f + armijo * g @ (cand - alpha):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = True
            break
        g_cand = A.T @ (1.0 / np.maximum(A @ cand, 1e-300))
        s_vec, y_vec = cand - alpha, g_cand - g
        gain = f_cand - f
        alpha, f, g = cand, f_cand, g_cand
        history.append(f)
        # ascent on a concave function: -s'y > 0 away from the optimum
        sy = -(s_vec @ y_vec)
        step = (s_vec @ s_vec) / sy if sy > 0 else 2.0 * t
        step = min(max(step, 1e-12), 1e12)
        if gain <= tol * (1.0 + abs(f)):
            quiet += 1
            if quiet >= patience:
                converged = True
                break
        else:
            quiet = 0
    if not converged:
        warnings.warn(
            f"KLIEP optimizer stopped after {max_iter} iterations; returning the best iterate",
            NonConvergenceWarning, stacklevel=2,
        )
    return KliepResult(alpha=alpha, objective=f, history=history, n_iter=it, converged=converged)
