"""Time the compiled and pure-Python kernel backends side by side.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--json PATH]

Each kernel runs on the same seeded inputs in both backends; outputs are
compared before timing so a speedup never hides a wrong answer.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from adaptkit import _kernels_py
from adaptkit.numerics import rbf_kernel

try:
    from adaptkit import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def cases():
    rng = np.random.default_rng(0)
    n = 400
    v = rng.normal(1.0, 2.0, n)
    A = rng.normal(size=(n, 2))
    K = rbf_kernel(A, A, 0.5)
    kappa = K @ rng.uniform(0.0, 2.0, n)
    step = 1.0 / np.linalg.eigvalsh(K)[-1]
    lo, hi = 0.8 * n, 1.2 * n
    Xs = rng.normal(size=(2000, 5))
    yc = (Xs[:, 0] + 0.3 * rng.normal(size=2000) > 0).astype(np.int64)
    yr = Xs @ rng.normal(size=5)
    ws = rng.uniform(size=2000)
    P = rng.normal(size=(5000, 10))
    pw = rng.uniform(0.1, 2.0, 10)
    return {
        "project_box_slab (n=400)": lambda m: m.project_box_slab(v, 3.0, lo, hi),
        "kmm_pgd (n=400, 300 it)": lambda m: m.kmm_pgd(K, kappa, 3.0, lo, hi, np.ones(n), step,
                                                       300, 0.0, 10**9)[:2],
        "stump_search class (2000x5)": lambda m: m.stump_search(Xs, yc, ws, False),
        "stump_search regr (2000x5)": lambda m: m.stump_search(Xs, yr, ws, True),
        "weighted_median (5000x10)": lambda m: m.weighted_median(P, pw),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.allclose(a, b, rtol=1e-9, atol=1e-9)
    if isinstance(a, float):
        return abs(a - b) <= 1e-9 * max(1.0, abs(a))
    return a == b


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", help="also write the results to this file")
    args = p.parse_args(argv)
    if _kernels_c is None:
        print("compiled extension not built; only the python backend is timed", file=sys.stderr)
    rows = []
    print(f"{'kernel':<30}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, call in cases().items():
        t_py = min(timeit.repeat(lambda: call(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        row = {"kernel": name, "python_ms": t_py, "cython_ms": None, "speedup": None}
        if _kernels_c is not None:
            if not same(call(_kernels_py), call(_kernels_c)):
                raise SystemExit(f"{name}: backends disagree")
            t_c = min(timeit.repeat(lambda: call(_kernels_c), number=1, repeat=args.repeat)) * 1e3
            row.update(cython_ms=t_c, speedup=t_py / t_c)
            print(f"{name:<30}{t_py:>12.3f}{t_c:>12.3f}{t_py / t_c:>9.1f}x")
        else:
            print(f"{name:<30}{t_py:>12.3f}{'-':>12}{'-':>10}")
        rows.append(row)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
