# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


cdef inline double _clip(double v, double upper) nogil:
    if v < 0.0:
        return 0.0
    if v > upper:
        return upper
    return v


cdef void _project_slab(double[::1] v, double lo, double hi) nogil:
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double s = 0.0, shift = 0.0
    for i in range(n):
        s += v[i]
    if s < lo:
        shift = (lo - s) / n
    elif s > hi:
        shift = -(s - hi) / n
    else:
        return
    for i in range(n):
        v[i] += shift


cdef void _project_exact(double[::1] v, double upper, double lo, double hi,
                         double[::1] out) nogil:
    cdef Py_ssize_t i, it, n = v.shape[0], n_free
    cdef double s = 0.0, goal, a, b, tau, vmin = v[0], vmax = v[0]
    for i in range(n):
        out[i] = _clip(v[i], upper)
        s += out[i]
        if v[i] < vmin:
            vmin = v[i]
        if v[i] > vmax:
            vmax = v[i]
    if lo <= s <= hi:
        return
    goal = lo if s < lo else hi
    a = vmin - upper - 1.0
    b = vmax + 1.0
    for it in range(200):
        tau = 0.5 * (a + b)
        s = 0.0
        for i in range(n):
            s += _clip(v[i] - tau, upper)
        if s > goal:
            a = tau
        else:
            b = tau
        if b - a <= 1e-15 * (1.0 + fabs(tau)):
            break
    tau = 0.5 * (a + b)
    s = 0.0
    n_free = 0
    for i in range(n):
        out[i] = _clip(v[i] - tau, upper)
        s += out[i]
        if 0.0 < out[i] < upper:
            n_free += 1
    if n_free > 0:
        for i in range(n):
            if 0.0 < out[i] < upper:
                out[i] = _clip(out[i] + (goal - s) / n_free, upper)


cdef void _project(double[::1] v, double upper, double lo, double hi,
                   double[::1] out, double[::1] x, double[::1] p,
                   double[::1] q, double[::1] yb, int max_iter,
                   double tol) nogil:
    cdef Py_ssize_t i, n = v.shape[0]
    cdef int k
    cdef bint converged = False
    cdef double delta, xmax, yv, s, pn, qn
    for i in range(n):
        x[i] = v[i]
        p[i] = 0.0
        q[i] = 0.0
    for k in range(max_iter):
        delta = 0.0
        for i in range(n):
            yv = _clip(x[i] + p[i], upper)
            pn = x[i] + p[i] - yv
            if fabs(pn - p[i]) > delta:
                delta = fabs(pn - p[i])
            p[i] = pn
            yb[i] = yv
            out[i] = yv + q[i]
        _project_slab(out, lo, hi)
        xmax = 0.0
        for i in range(n):
            qn = yb[i] + q[i] - out[i]
            if fabs(qn - q[i]) > delta:
                delta = fabs(qn - q[i])
            q[i] = qn
            if fabs(out[i] - x[i]) > delta:
                delta = fabs(out[i] - x[i])
            x[i] = out[i]
            if fabs(x[i]) > xmax:
                xmax = fabs(x[i])
        if delta <= tol * (1.0 + xmax):
            converged = True
            break
    s = 0.0
    for i in range(n):
        out[i] = _clip(x[i], upper)
        s += out[i]
    if not converged or s < lo - 1e-12 * n or s > hi + 1e-12 * n:
        _project_exact(v, upper, lo, hi, out)


def project_box_slab(v, double upper, double lo, double hi,
                     int max_iter=1000, double tol=1e-13):
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = vv.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double[::1] x = np.empty(n), p = np.empty(n), q = np.empty(n), yb = np.empty(n)
    with nogil:
        _project(vv, upper, lo, hi, o, x, p, q, yb, max_iter, tol)
    return out


cdef void _matvec(double[:, ::1] K, double[::1] w, double[::1] out) nogil:
    # K is row-major, i.e. K^T in BLAS column-major terms; K symmetric anyway
    cdef int n = <int>w.shape[0], inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char trans = b'T'
    dgemv(&trans, &n, &n, &one, &K[0, 0], &n, &w[0], &inc, &zero, &out[0], &inc)


cdef double _dot(double[::1] a, double[::1] b) nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


def kmm_pgd(K, kappa, double upper, double lo, double hi, w0, double step,
            int max_iter, double tol, int patience):
    cdef double[:, ::1] Km = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[::1] kap = np.ascontiguousarray(kappa, dtype=np.float64)
    cdef Py_ssize_t i, n = kap.shape[0]
    w_arr = project_box_slab(w0, upper, lo, hi)
    best_arr = w_arr.copy()
    cdef double[::1] w = w_arr
    cdef double[::1] best = best_arr
    cdef double[::1] y = w_arr.copy()
    cdef double[::1] wn = np.empty(n)
    cdef double[::1] v = np.empty(n)
    cdef double[::1] Kw = np.empty(n), Kwn = np.empty(n), Ky = np.empty(n)
    cdef double[::1] x = np.empty(n), p = np.empty(n), q = np.empty(n), yb = np.empty(n)
    cdef double f, f_new, f_best, t = 1.0, t_new, restart, mom
    cdef int it, quiet = 0
    cdef bint done = False
    with nogil:
        _matvec(Km, w, Kw)
        f = 0.5 * _dot(w, Kw) - _dot(kap, w)
        for i in range(n):
            Ky[i] = Kw[i]
        f_best = f
        for it in range(1, max_iter + 1):
            for i in range(n):
                v[i] = y[i] - step * (Ky[i] - kap[i])
            _project(v, upper, lo, hi, wn, x, p, q, yb, 1000, 1e-13)
            _matvec(Km, wn, Kwn)
            f_new = 0.5 * _dot(wn, Kwn) - _dot(kap, wn)
            if f_new < f_best:
                f_best = f_new
                for i in range(n):
                    best[i] = wn[i]
            restart = 0.0
            for i in range(n):
                restart += (y[i] - wn[i]) * (wn[i] - w[i])
            if restart > 0.0:
                t = 1.0
            t_new = 0.5 * (1.0 + sqrt(1.0 + 4.0 * t * t))
            mom = (t - 1.0) / t_new
            for i in range(n):
                y[i] = wn[i] + mom * (wn[i] - w[i])
                Ky[i] = Kwn[i] + mom * (Kwn[i] - Kw[i])
                w[i] = wn[i]
                Kw[i] = Kwn[i]
            if fabs(f_new - f) <= tol * (fabs(f) if fabs(f) > 1.0 else 1.0):
                quiet += 1
            else:
                quiet = 0
            f = f_new
            t = t_new
            if quiet >= patience:
                done = True
                break
    if done:
        return best_arr, f_best, it, True
    return best_arr, f_best, max_iter, False


def stump_search(X, y, w, bint regression):
    cdef double[:, ::1] Xm = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = Xm.shape[0], d = Xm.shape[1]
    cdef Py_ssize_t i, j, k, o, n_classes = 1, best_j = -1, best_i = -1
    cdef double total_w = 0.0, total_wy = 0.0, total_wyy = 0.0, scale, tie
    cdef double cw, cwy, rw, rwy, err, lt, rt, best_err = INFINITY
    cdef double cs, cm, rs, rm
    cdef double[::1] yv
    cdef cnp.int64_t[::1] yl
    cdef double[::1] total_cls
    cdef double[::1] cc
    cdef double[:, ::1] errs = np.full((d, n - 1 if n > 1 else 0), INFINITY)
    cdef cnp.intp_t[:, ::1] orders = np.ascontiguousarray(
        np.argsort(np.asarray(Xm), axis=0, kind="stable").T, dtype=np.intp)

    if regression:
        yv = np.ascontiguousarray(y, dtype=np.float64)
        for i in range(n):
            total_w += wv[i]
            total_wy += wv[i] * yv[i]
        for i in range(n):
            total_wyy += (wv[i] * yv[i]) * yv[i]
        scale = total_wyy + total_w
    else:
        yl = np.ascontiguousarray(y, dtype=np.int64)
        for i in range(n):
            if yl[i] + 1 > n_classes:
                n_classes = yl[i] + 1
        total_cls = np.zeros(n_classes)
        cc = np.zeros(n_classes)
        for i in range(n):
            total_w += wv[i]
            total_cls[yl[i]] += wv[i]
        scale = total_w
    tie = 1e-12 * scale

    for j in range(d):
        cw = 0.0
        cwy = 0.0
        if not regression:
            for k in range(n_classes):
                cc[k] = 0.0
        for i in range(n - 1):
            o = orders[j, i]
            if regression:
                cw += wv[o]
                cwy += wv[o] * yv[o]
                if not Xm[o, j] < Xm[orders[j, i + 1], j]:
                    continue
                rw = total_w - cw
                rwy = total_wy - cwy
                lt = cwy * cwy / cw if cw > 0 else 0.0
                rt = rwy * rwy / rw if rw > 0 else 0.0
                err = total_wyy - lt - rt
            else:
                cc[yl[o]] += wv[o]
                if not Xm[o, j] < Xm[orders[j, i + 1], j]:
                    continue
                cs = 0.0
                cm = cc[0]
                rs = 0.0
                rm = total_cls[0] - cc[0]
                for k in range(n_classes):
                    cs += cc[k]
                    rs += total_cls[k] - cc[k]
                    if cc[k] > cm:
                        cm = cc[k]
                    if total_cls[k] - cc[k] > rm:
                        rm = total_cls[k] - cc[k]
                err = (cs - cm) + (rs - rm)
            errs[j, i] = err
            if err < best_err:
                best_err = err

    if best_err == INFINITY:
        if regression:
            value = total_wy / total_w
            return 0, 0.0, value, value, float(scale), False
        value = int(np.argmax(np.asarray(total_cls)))
        return 0, 0.0, value, value, float(scale - np.max(np.asarray(total_cls))), False

    for j in range(d):
        for i in range(n - 1):
            if errs[j, i] <= best_err + tie:
                best_j = j
                best_i = i
                break
        if best_j >= 0:
            break
    j = best_j
    i = best_i
    threshold = 0.5 * (Xm[orders[j, i], j] + Xm[orders[j, i + 1], j])
    if regression:
        cw = 0.0
        cwy = 0.0
        for k in range(i + 1):
            o = orders[j, k]
            cw += wv[o]
            cwy += wv[o] * yv[o]
        rw = total_w - cw
        rwy = total_wy - cwy
        lv = cwy / cw if cw > 0 else None
        rv = rwy / rw if rw > 0 else None
        if lv is None:
            lv = rv
        if rv is None:
            rv = lv
        return int(j), float(threshold), float(lv), float(rv), float(errs[j, i]), True
    lc = np.zeros(n_classes)
    for k in range(i + 1):
        o = orders[j, k]
        lc[yl[o]] += wv[o]
    rc = np.asarray(total_cls) - lc
    left = int(np.argmax(lc)) if lc.sum() > 0 else int(np.argmax(rc))
    right = int(np.argmax(rc)) if rc.sum() > 0 else left
    return int(j), float(threshold), left, right, float(errs[j, i]), True


def weighted_median(P, weights):
    cdef double[:, ::1] Pm = np.ascontiguousarray(P, dtype=np.float64)
    cdef double[::1] wm = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = Pm.shape[0], m = Pm.shape[1], r, k
    cdef cnp.intp_t[:, ::1] order = np.argsort(np.asarray(Pm), axis=1, kind="stable")
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double total, acc
    for r in range(n):
        total = 0.0
        for k in range(m):
            total += wm[order[r, k]]
        acc = 0.0
        o[r] = Pm[r, order[r, m - 1]]
        for k in range(m):
            acc += wm[order[r, k]]
            if acc >= 0.5 * total:
                o[r] = Pm[r, order[r, k]]
                break
    return out
