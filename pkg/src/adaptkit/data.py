"""Synthetic covariate-shift datasets and CSV ingestion.

Random streams come from numpy's Philox4x64 counter-based generator. Each
dataset draws from its own stream, keyed by ``(crc32(kind), seed)``, so
runs are reproducible regardless of the order or thread in which datasets
are generated.
"""

import csv
import math
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from adaptkit.core import AdaptInput
from adaptkit.errors import EmptyFile, MissingColumn, SamplingStalled, UnparseableCell

KINDS = ("covshift1d", "rotated_moons", "sample_bias")
MAX_ATTEMPTS = 10**6
MAX_LABEL_CLASSES = 20


def rng_stream(name, seed):
    """Independent Philox generator for dataset ``name`` and ``seed``."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, zlib.crc32(name.encode())])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str
    n_source: int
    n_target: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}; choose from {list(KINDS)}")
        if self.n_source < 2 or self.n_target < 2:
            raise ValueError("n_source and n_target must be at least 2")

    def generate(self):
        p = dict(self.params)
        if self.kind == "covshift1d":
            return gen_covshift_1d(self.n_source, self.n_target, self.seed)
        if self.kind == "rotated_moons":
            return gen_rotated_moons(self.n_source, p.get("angle", 30.0), p.get("noise", 0.1),
                                     self.seed, n_target=self.n_target)
        return gen_sample_bias(self.n_source, self.n_target, p.get("bias", 1.0), self.seed)


def _cubic(x):
    return x**3 - x


def gen_covshift_1d(n_s, n_t, seed):
    """1-D regression under covariate shift: ``y = x^3 - x + noise``.

    Source inputs follow N(0.5, 0.5^2), target inputs N(0, 0.3^2); the
    noise is N(0, 0.1^2) in both domains.
    """
    rng = rng_stream("covshift1d", seed)
    xs = rng.normal(0.5, 0.5, n_s)
    xt = rng.normal(0.0, 0.3, n_t)
    ys = _cubic(xs) + rng.normal(0.0, 0.1, n_s)
    yt = _cubic(xt) + rng.normal(0.0, 0.1, n_t)
    return AdaptInput(xs[:, None], ys, xt[:, None], yt, task="regression")


def _moons(n, noise, rng):
    # first half label 0 (upper arc), second half label 1 (lower arc),
    # centered so that rotations are about the data's center
    n0 = n - n // 2
    n1 = n // 2
    t0 = np.linspace(0.0, math.pi, n0)
    t1 = np.linspace(0.0, math.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([upper, lower]) - np.array([0.5, 0.25])
    X = X + rng.normal(0.0, noise, X.shape)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = rng.permutation(n)
    return X[perm], y[perm]


def rotation(angle_deg):
    a = math.radians(angle_deg)
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


def gen_rotated_moons(n, angle_deg=30.0, noise=0.1, seed=0, n_target=None):
    """Two interleaving half-circles; the target copy is rotated by
    ``angle_deg`` counter-clockwise about the origin (the moons' center)."""
    if not 0.0 <= angle_deg < 180.0:
        raise ValueError(f"angle must lie in [0, 180), got {angle_deg}")
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    rng = rng_stream("rotated_moons", seed)
    n_target = n if n_target is None else n_target
    Xs, ys = _moons(n, noise, rng)
    Xt, yt = _moons(n_target, noise, rng)
    Xt = Xt @ rotation(angle_deg).T
    return AdaptInput(Xs, ys, Xt, yt.astype(np.float64), task="classification")


def _two_gaussians(n, rng):
    y = np.concatenate([np.zeros(n - n // 2, dtype=np.int64), np.ones(n // 2, dtype=np.int64)])
    y = y[rng.permutation(n)]
    means = np.array([[-1.0, 0.0], [1.0, 0.0]])
    return means[y] + rng.normal(0.0, 1.0, (n, 2)), y


def gen_sample_bias(n_s, n_t, bias_strength=1.0, seed=0):
    """Balanced two-Gaussian classification (class means (-1,0), (1,0)).

    The target is an i.i.d. sample of that law. Source rows come from the
    same law through rejection sampling with acceptance probability
    proportional to ``exp(-bias_strength * x1)``, which over-represents
    low-``x1`` rows. Raises SamplingStalled past 10^6 draws.
    """
    if bias_strength < 0:
        raise ValueError("bias strength must be nonnegative")
    rng = rng_stream("sample_bias", seed)
    Xt, yt = _two_gaussians(n_t, rng)
    kept_X, kept_y, attempts = [], [], 0
    n_kept = 0
    batch = max(64, 2 * n_s)
    while n_kept < n_s:
        if attempts >= MAX_ATTEMPTS:
            raise SamplingStalled(
                f"accepted {n_kept} of {n_s} source rows after {attempts} draws",
                attempts=attempts, accepted=n_kept,
            )
        m = min(batch, MAX_ATTEMPTS - attempts)
        X, y = _two_gaussians(m, rng)
        u = rng.random(m)
        attempts += m
        keep = u < _acceptance(X[:, 0], bias_strength)
        kept_X.append(X[keep])
        kept_y.append(y[keep])
        n_kept += int(keep.sum())
    Xs = np.vstack(kept_X)[:n_s]
    ys = np.concatenate(kept_y)[:n_s]
    return AdaptInput(Xs, ys, Xt, yt.astype(np.float64), task="classification")


SHIFT = 4.0


def _acceptance(x1, bias):
    # exp(-bias * x1) rescaled by exp(-bias * SHIFT) and capped at 1: exactly
    # proportional for x1 >= -SHIFT, which holds for virtually every draw
    return np.minimum(1.0, np.exp(-bias * (x1 + SHIFT)))


def mask_target_labels(data, n_labeled, seed=0):
    """Keep ``n_labeled`` target labels (seeded choice, class-stratified when
    possible) and replace the rest by NaN."""
    if data.yt is None:
        raise ValueError("dataset has no target labels to mask")
    n_t = len(data.yt)
    if n_labeled >= n_t:
        return data
    rng = rng_stream("mask", seed)
    keep = _stratified_choice(data.yt, n_labeled, rng) if data.task == "classification" \
        else rng.choice(n_t, n_labeled, replace=False)
    yt = np.full(n_t, np.nan)
    yt[keep] = data.yt[keep]
    return AdaptInput(data.Xs, data.ys, data.Xt, yt if n_labeled > 0 else None, task=data.task)


def _stratified_choice(y, k, rng):
    classes = np.unique(y)
    per = [rng.permutation(np.flatnonzero(y == c)) for c in classes]
    picked = []
    i = 0
    while len(picked) < k:
        for idx in per:
            if i < len(idx) and len(picked) < k:
                picked.append(idx[i])
        i += 1
    return np.sort(np.asarray(picked, dtype=np.int64))


# CSV ------------------------------------------------------------------------

def _parse_float(cell, row, col, name):
    try:
        value = float(cell)
    except ValueError:
        raise UnparseableCell(
            f"cannot parse {cell!r} as a number at row {row}, column {col} ({name})",
            row=row, column=col, column_name=name, cell=cell,
        ) from None
    if not math.isfinite(value):
        raise UnparseableCell(f"non-finite value {cell!r} at row {row}, column {col} ({name})",
                              row=row, column=col, column_name=name, cell=cell)
    return value


def load_csv(path, target_column=None):
    """Read a numeric CSV with a header row.

    Returns ``(X, y)``; ``y`` is None when ``target_column`` is None. An
    empty target cell reads as NaN (unlabeled row). Integer-valued targets
    with at most 20 distinct values come back as int64 labels, anything
    else as float64. Row numbers in errors are 1-based file lines.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyFile(f"{path} is empty", path=str(path))
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise EmptyFile(f"{path} has a header but no data rows", path=str(path))
    t_idx = None
    if target_column is not None:
        if target_column not in header:
            raise MissingColumn(f"column {target_column!r} not found in {path}; header is {header}",
                                column=target_column, header=header)
        t_idx = header.index(target_column)
    feat_idx = [j for j in range(len(header)) if j != t_idx]
    if not feat_idx:
        raise MissingColumn(f"{path} has no feature columns", header=header)
    X = np.empty((len(body), len(feat_idx)))
    y = np.empty(len(body)) if t_idx is not None else None
    for i, r in enumerate(body):
        line = i + 2
        if len(r) != len(header):
            raise UnparseableCell(f"row {line} has {len(r)} cells, header has {len(header)}",
                                  row=line, column=min(len(r), len(header)) + 1)
        for k, j in enumerate(feat_idx):
            X[i, k] = _parse_float(r[j].strip(), line, j + 1, header[j])
        if t_idx is not None:
            cell = r[t_idx].strip()
            y[i] = np.nan if cell == "" else _parse_float(cell, line, t_idx + 1, header[t_idx])
    if y is not None:
        y = _infer_target(y)
    return X, y


def _infer_target(y):
    known = y[np.isfinite(y)]
    if known.size and np.all(known == np.round(known)) and len(np.unique(known)) <= MAX_LABEL_CLASSES \
            and known.min() >= 0:
        if known.size == y.size:
            return y.astype(np.int64)
    return y


def write_csv(path, X, y=None, columns=None, target_column="y"):
    """Write features (and optionally a target) with 17 significant digits;
    NaN targets are written as empty cells."""
    X = np.asarray(X, dtype=np.float64)
    columns = columns or [f"x{j}" for j in range(X.shape[1])]
    header = list(columns) + ([target_column] if y is not None else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(X.shape[0]):
            cells = [_fmt(v) for v in X[i]]
            if y is not None:
                cells.append(_fmt(y[i]))
            fh.write(",".join(cells) + "\n")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return "%.17g" % v


def write_dataset(data, out_dir, labeled_target=True):
    """Write ``source.csv`` and ``target.csv`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    src = os.path.join(out_dir, "source.csv")
    tgt = os.path.join(out_dir, "target.csv")
    write_csv(src, data.Xs, data.ys)
    yt = data.yt if labeled_target else None
    if yt is not None and data.task == "classification":
        yt = np.where(np.isfinite(yt), yt, np.nan)
        yt = [int(v) if np.isfinite(v) else np.nan for v in yt]
    write_csv(tgt, data.Xt, yt)
    return src, tgt


def load_dataset(source_path, target_path, target_column="y", task=None):
    """Build an AdaptInput from a source CSV and a target CSV. The target
    file may omit the label column or leave label cells empty."""
    Xs, ys = load_csv(source_path, target_column)
    with open(target_path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    has_label = target_column in [h.strip() for h in header]
    Xt, yt = load_csv(target_path, target_column if has_label else None)
    if task is None:
        task = "classification" if ys.dtype.kind == "i" else "regression"
    return AdaptInput(Xs, ys, Xt, None if yt is None else np.asarray(yt, dtype=np.float64), task=task)
