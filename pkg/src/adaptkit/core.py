"""Adapter contract shared by every method: inputs, fitted models, metrics
and the JSON model format."""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from adaptkit.errors import (
    CorruptModelFile,
    DimensionMismatch,
    IncompatibleMetric,
    LengthMismatch,
    MissingTargetLabels,
    NonFiniteInput,
)
from adaptkit.numerics import as_matrix

FORMAT_VERSION = 1
METRICS = ("mse", "mae", "accuracy")


def _as_target(y, n, name):
    y = np.asarray(y)
    if y.ndim != 1:
        y = y.ravel()
    if len(y) != n:
        raise DimensionMismatch(f"{name} has {len(y)} entries for {n} rows", name=name)
    return y


@dataclass(frozen=True)
class AdaptInput:
    """Source data ``(Xs, ys)``, target inputs ``Xt`` and optional ``yt``.

    ``yt`` may hold NaN for unlabeled target rows; a target vector with no
    finite entry counts as absent. ``task`` is inferred from the dtype of
    ``ys`` when not given: integer labels mean classification.
    """

    Xs: np.ndarray
    ys: np.ndarray
    Xt: np.ndarray
    yt: np.ndarray = None
    task: str = None

    def __post_init__(self):
        Xs = as_matrix(self.Xs, "Xs")
        Xt = as_matrix(self.Xt, "Xt")
        if Xs.shape[1] != Xt.shape[1]:
            raise DimensionMismatch(
                f"Xs has {Xs.shape[1]} features but Xt has {Xt.shape[1]}",
                source=int(Xs.shape[1]), target=int(Xt.shape[1]),
            )
        ys = _as_target(self.ys, Xs.shape[0], "ys")
        task = self.task
        if task is None:
            task = "classification" if ys.dtype.kind in "iub" else "regression"
        if task not in ("classification", "regression"):
            raise ValueError(f"unknown task {task!r}")
        if ys.dtype.kind == "f" and not np.all(np.isfinite(ys)):
            raise NonFiniteInput("ys contains NaN or infinite values")
        if task == "classification":
            ys = _as_labels(ys, "ys")
        else:
            ys = ys.astype(np.float64)
        yt = self.yt
        if yt is not None:
            yt = _as_target(yt, Xt.shape[0], "yt").astype(np.float64)
            if np.any(np.isinf(yt)):
                raise NonFiniteInput("yt contains infinite values")
            if not np.any(np.isfinite(yt)):
                yt = None
            elif task == "classification":
                known = yt[np.isfinite(yt)]
                if np.any(known != np.round(known)) or known.min() < 0:
                    raise ValueError("yt labels must be integers 0..K-1")
        for name, value in (("Xs", Xs), ("ys", ys), ("Xt", Xt), ("yt", yt), ("task", task)):
            object.__setattr__(self, name, value)

    @property
    def has_target_labels(self):
        return self.yt is not None

    @property
    def n_features(self):
        return self.Xs.shape[1]

    def labeled_target(self):
        """Rows of ``Xt`` with a known label and those labels."""
        if self.yt is None:
            return self.Xt[:0], self.ys[:0]
        mask = np.isfinite(self.yt)
        y = self.yt[mask]
        if self.task == "classification":
            y = y.astype(np.int64)
        return self.Xt[mask], y


def _as_labels(y, name):
    if y.dtype.kind == "f":
        if np.any(y != np.round(y)):
            raise ValueError(f"{name} must hold integer class labels")
        y = y.astype(np.int64)
    y = y.astype(np.int64)
    classes = np.unique(y)
    if classes[0] != 0 or classes[-1] != len(classes) - 1:
        raise ValueError(f"{name} class labels must form the contiguous set 0..K-1, got {classes.tolist()}")
    return y


@dataclass(frozen=True)
class AdapterSpec:
    """Which method to run, its hyperparameters and the base estimator.

    ``estimator`` is a built-in name (``ridge``, ``logistic``, ``stump``),
    an estimator instance, or None for the method's default.
    """

    method: str
    hyperparams: dict = field(default_factory=dict)
    estimator: object = None
    estimator_params: dict = field(default_factory=dict)
    seed: int = 0


@dataclass(frozen=True)
class FittedModel:
    method: str
    hyperparams: dict
    state: dict
    estimator: object
    n_features: int
    task: str
    seed: int = 0
    warnings: tuple = ()
    fit_time_ms: float = field(default=0.0, compare=False)


def fit(spec, data):
    """Run ``spec.method`` on ``data`` and return a :class:`FittedModel`.

    Two-stage methods compute their weights or transform first and then fit
    the base estimator on the adapted source data.
    """
    from adaptkit.methods import get_method, resolve_estimator

    method = get_method(spec.method)
    hp = method.resolve_hyperparams(spec.hyperparams)
    if method.supervision == "SDA" and not data.has_target_labels:
        raise MissingTargetLabels(
            f"{method.name} is a supervised method and needs labeled target data (yt)",
            method=method.name,
        )
    if data.task not in method.tasks:
        raise ValueError(f"{method.name} does not support {data.task} tasks")
    estimator = resolve_estimator(method, spec.estimator, spec.estimator_params, data.task)
    start = time.perf_counter()
    state, fitted, warns = method.fit(data, estimator, hp, spec.seed)
    elapsed = (time.perf_counter() - start) * 1000.0
    return FittedModel(
        method=method.name, hyperparams=hp, state=state, estimator=fitted,
        n_features=data.n_features, task=data.task, seed=spec.seed,
        warnings=tuple(warns), fit_time_ms=elapsed,
    )


def predict(model, X):
    from adaptkit.methods import get_method

    X = as_matrix(X, "X")
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"model was fitted on {model.n_features} features, got {X.shape[1]}",
            expected=model.n_features, got=int(X.shape[1]),
        )
    return get_method(model.method).predict(model, X)


def evaluate(pred, truth, metric, task=None):
    """Mean squared error, mean absolute error or accuracy."""
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if metric not in METRICS:
        raise IncompatibleMetric(f"unknown metric {metric!r}; choose from {list(METRICS)}", metric=metric)
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions for {len(truth)} targets")
    if len(pred) == 0:
        raise LengthMismatch("cannot evaluate an empty prediction vector")
    if metric == "accuracy":
        if task == "regression":
            raise IncompatibleMetric("accuracy needs classification targets", metric=metric, task=task)
        if np.any(truth != np.round(truth)):
            raise IncompatibleMetric("accuracy needs integer class labels", metric=metric)
        return float(np.mean(pred == truth))
    if task == "classification":
        raise IncompatibleMetric(f"{metric} needs regression targets", metric=metric, task=task)
    diff = pred.astype(np.float64) - truth.astype(np.float64)
    if metric == "mse":
        return float(np.mean(diff * diff))
    return float(np.mean(np.abs(diff)))


def _encode(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {k: _encode(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_encode(v) for v in value]
    if hasattr(value, "to_dict"):
        return {"__estimator__": value.to_dict()}
    return value


def _is_numeric_list(value):
    if not isinstance(value, list):
        return False
    return all(
        (isinstance(v, (int, float)) and not isinstance(v, bool)) or _is_numeric_list(v)
        for v in value
    )


def _decode(value, path):
    from adaptkit.estimators import estimator_from_dict

    if isinstance(value, dict):
        if "__estimator__" in value:
            try:
                return estimator_from_dict(value["__estimator__"])
            except (KeyError, TypeError, ValueError) as exc:
                raise CorruptModelFile(f"bad estimator at {path}: {exc}", position=path) from None
        return {k: _decode(v, f"{path}.{k}") for k, v in value.items()}
    if isinstance(value, list):
        if value and _is_numeric_list(value):
            try:
                return np.asarray(value)
            except ValueError:
                raise CorruptModelFile(f"ragged matrix at {path}", position=path) from None
        return [_decode(v, f"{path}[{i}]") for i, v in enumerate(value)]
    return value


def serialize_model(model):
    """Encode a fitted model as a UTF-8 JSON document."""
    doc = {
        "format_version": FORMAT_VERSION,
        "method": model.method,
        "hyperparams": _encode(model.hyperparams),
        "state": _encode(model.state),
        "estimator": _encode(model.estimator),
        "n_features": model.n_features,
        "task": model.task,
        "seed": model.seed,
        "warnings": list(model.warnings),
    }
    return json.dumps(doc, allow_nan=False).encode("utf-8")


def deserialize_model(data):
    """Inverse of :func:`serialize_model`.

    Raises :class:`CorruptModelFile` with ``position`` set to the character
    offset of a JSON syntax error or the path of the first bad field.
    """
    from adaptkit.methods import METHODS

    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptModelFile(f"model file is not UTF-8: {exc}", position=exc.start) from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CorruptModelFile(f"malformed model JSON: {exc.msg}", position=exc.pos) from None
    if not isinstance(doc, dict):
        raise CorruptModelFile("model document must be a JSON object", position="$")
    required = ("format_version", "method", "hyperparams", "state", "estimator", "n_features", "task")
    for key in required:
        if key not in doc:
            raise CorruptModelFile(f"missing field {key!r}", position=key)
    if doc["format_version"] != FORMAT_VERSION:
        raise CorruptModelFile(
            f"unsupported format_version {doc['format_version']!r}", position="format_version"
        )
    if doc["method"] not in METHODS:
        raise CorruptModelFile(f"unknown method {doc['method']!r}", position="method")
    method = METHODS[doc["method"]]
    if not isinstance(doc["state"], dict):
        raise CorruptModelFile("state must be an object", position="state")
    for key in method.state_keys:
        if key not in doc["state"]:
            raise CorruptModelFile(f"state is missing {key!r}", position=f"state.{key}")
    if not isinstance(doc["n_features"], int) or doc["n_features"] < 1:
        raise CorruptModelFile("n_features must be a positive integer", position="n_features")
    if doc["task"] not in ("classification", "regression"):
        raise CorruptModelFile(f"unknown task {doc['task']!r}", position="task")
    estimator = doc["estimator"]
    if estimator is not None:
        if not isinstance(estimator, dict) or "__estimator__" not in estimator:
            raise CorruptModelFile("estimator must be an encoded estimator or null", position="estimator")
        estimator = _decode(estimator, "estimator")
    return FittedModel(
        method=doc["method"],
        hyperparams=doc["hyperparams"],
        state=_decode(doc["state"], "state"),
        estimator=estimator,
        n_features=doc["n_features"],
        task=doc["task"],
        seed=doc.get("seed", 0),
        warnings=tuple(doc.get("warnings", ())),
    )


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))


def load_model(path):
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())
