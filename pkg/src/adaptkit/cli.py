"""``adaptkit`` command line: fit, eval, benchmark and gen-data.

Exit codes: 0 success, 2 bad configuration or flags, 3 data / I/O errors,
4 fit or prediction errors, 5 every benchmark run failed. Every failure
prints one JSON object ``{code, message, context}`` on stderr.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from adaptkit import errors as E
from adaptkit.core import AdapterSpec, evaluate, fit, load_model, predict, save_model
from adaptkit.data import (
    KINDS,
    SyntheticSpec,
    load_csv,
    load_dataset,
    mask_target_labels,
    write_dataset,
)
from adaptkit.methods import get_method

REPORT_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_FIT, EXIT_ALL_FAILED = 0, 2, 3, 4, 5

CONFIG_ERRORS = (E.ConfigError, E.IncompatibleMetric)
DATA_ERRORS = (E.UnparseableCell, E.MissingColumn, E.EmptyFile, E.SamplingStalled,
               E.CorruptModelFile, E.NonFiniteInput, OSError)

RUN_KEYS = {"method", "hyperparams", "estimator", "estimator_params", "dataset", "metric", "seed"}
BENCH_KEYS = {"methods", "estimator", "estimator_params", "datasets", "metric", "seeds"}
METHOD_KEYS = {"method", "hyperparams", "estimator", "estimator_params"}
SYNTH_KEYS = {"name", "kind", "n_source", "n_target", "params", "n_labeled"}
CSV_KEYS = {"name", "source", "target", "test", "target_column", "task"}


class CliError(Exception):
    def __init__(self, exit_code, code, message, **context):
        super().__init__(message)
        self.exit_code = exit_code
        self.code = code
        self.message = message
        self.context = context


def _emit_error(code, message, context=None):
    print(json.dumps({"code": code, "message": message, "context": _jsonable(context or {})}),
          file=sys.stderr)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return str(obj)


def _classify(exc):
    """Map an exception to ``(exit_code, code, message, context)``."""
    if isinstance(exc, CliError):
        return exc.exit_code, exc.code, exc.message, exc.context
    if isinstance(exc, CONFIG_ERRORS):
        return EXIT_CONFIG, exc.code, exc.message, exc.context
    if isinstance(exc, DATA_ERRORS):
        if isinstance(exc, E.AdaptError):
            return EXIT_DATA, exc.code, exc.message, exc.context
        return EXIT_DATA, "IOError", str(exc), {"filename": getattr(exc, "filename", None)}
    if isinstance(exc, E.AdaptError):
        return EXIT_FIT, exc.code, exc.message, exc.context
    return EXIT_FIT, type(exc).__name__, str(exc), {}


# configuration ----------------------------------------------------------------

def _read_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(EXIT_DATA, "IOError", f"cannot read config {path}: {exc.strerror}", path=path)
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, "ConfigError", f"config is not valid JSON: {exc.msg}",
                       position=exc.pos)
    if not isinstance(cfg, dict):
        raise CliError(EXIT_CONFIG, "ConfigError", "config must be a JSON object")
    return cfg


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise E.ConfigError(f"{where} must be a JSON object", key=where)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise E.ConfigError(f"unknown key {unknown[0]!r} in {where}; valid keys: {sorted(allowed)}",
                            key=unknown[0], where=where)


def _require(obj, key, where):
    if key not in obj:
        raise E.ConfigError(f"missing required key {key!r} in {where}", key=key, where=where)
    return obj[key]


def _method_entry(entry, defaults):
    """Normalize a method given as a name or an object, validating its
    hyperparameter keys against the method's schema."""
    if isinstance(entry, str):
        entry = {"method": entry}
    _check_keys(entry, METHOD_KEYS, "method entry")
    method = get_method(_require(entry, "method", "method entry"))
    hp = entry.get("hyperparams", {})
    if not isinstance(hp, dict):
        raise E.ConfigError("hyperparams must be a JSON object", key="hyperparams")
    method.resolve_hyperparams(hp)
    return {
        "method": method.name,
        "hyperparams": hp,
        "estimator": entry.get("estimator", defaults.get("estimator")),
        "estimator_params": entry.get("estimator_params", defaults.get("estimator_params", {})),
    }


def _check_dataset(ds, where="dataset"):
    if not isinstance(ds, dict):
        raise E.ConfigError(f"{where} must be a JSON object", key=where)
    if "kind" in ds:
        _check_keys(ds, SYNTH_KEYS, where)
        if ds["kind"] not in KINDS:
            raise E.ConfigError(f"unknown dataset kind {ds['kind']!r}; choose from {list(KINDS)}", key="kind")
        for k in ("n_source", "n_target"):
            v = _require(ds, k, where)
            if not isinstance(v, int) or v < 2:
                raise E.ConfigError(f"{k} must be an integer >= 2", key=k)
        params = ds.get("params", {})
        allowed = {"covshift1d": set(), "rotated_moons": {"angle", "noise"}, "sample_bias": {"bias"}}
        _check_keys(params, allowed[ds["kind"]], f"{where}.params")
        if ds["kind"] == "rotated_moons" and not 0.0 <= params.get("angle", 30.0) < 180.0:
            raise E.ConfigError("angle must lie in [0, 180)", key="angle")
    else:
        _check_keys(ds, CSV_KEYS, where)
        _require(ds, "source", where)
        _require(ds, "target", where)
    return ds


def _dataset_name(ds):
    return ds.get("name") or ds.get("kind") or ds["source"]


def _check_metric(metric):
    if metric is not None and metric not in ("mse", "mae", "accuracy"):
        raise E.ConfigError(f"unknown metric {metric!r}", key="metric")


def _seed(value, key="seed"):
    if not isinstance(value, int) or isinstance(value, bool) or value < 0 or value >= 2**64:
        raise E.ConfigError(f"{key} must be a nonnegative 64-bit integer", key=key)
    return value


# data -------------------------------------------------------------------------

def _load_data(ds, seed):
    """Return ``(train_input, X_eval, y_eval)`` for a dataset entry.

    Synthetic targets are evaluated on the rows whose labels were withheld
    (all rows when ``n_labeled`` is 0). CSV datasets are evaluated on the
    ``test`` file when given, else on the labeled target rows.
    """
    if "kind" in ds:
        full = SyntheticSpec(ds["kind"], ds["n_source"], ds["n_target"], seed, ds.get("params", {})).generate()
        n_lab = int(ds.get("n_labeled", 0))
        truth = full.yt
        train = mask_target_labels(full, n_lab, seed) if n_lab > 0 else \
            type(full)(full.Xs, full.ys, full.Xt, None, task=full.task)
        held = np.ones(len(truth), dtype=bool) if train.yt is None else ~np.isfinite(train.yt)
        return train, full.Xt[held], truth[held]
    train = load_dataset(ds["source"], ds["target"], ds.get("target_column", "y"), ds.get("task"))
    if ds.get("test"):
        X_eval, y_eval = load_csv(ds["test"], ds.get("target_column", "y"))
    else:
        X_eval, y_eval = train.labeled_target()
    return train, X_eval, np.asarray(y_eval, dtype=np.float64)


def _load_data_checked(ds, seed):
    try:
        return _load_data(ds, seed)
    except E.AdaptError:
        raise
    except ValueError as exc:
        raise CliError(EXIT_DATA, "InvalidData", str(exc), dataset=_dataset_name(ds)) from None


def _default_metric(task):
    return "accuracy" if task == "classification" else "mse"


def _run_one(entry, ds, seed, metric):
    train, X_eval, y_eval = _load_data_checked(ds, seed)
    metric = metric or _default_metric(train.task)
    spec = AdapterSpec(entry["method"], entry["hyperparams"], entry["estimator"],
                       entry["estimator_params"], seed)
    model = fit(spec, train)
    if len(y_eval) == 0:
        raise E.LengthMismatch("no labeled target rows to evaluate on")
    value = evaluate(predict(model, X_eval), y_eval, metric, train.task)
    return model, metric, value


# subcommands --------------------------------------------------------------------

def cmd_fit(args):
    cfg = _read_config(args.config)
    _check_keys(cfg, RUN_KEYS, "config")
    _require(cfg, "method", "config")
    entry = _method_entry({k: cfg[k] for k in METHOD_KEYS if k in cfg}, {})
    ds = _check_dataset(_require(cfg, "dataset", "config"))
    _check_metric(cfg.get("metric"))
    seed = _seed(args.seed if args.seed is not None else cfg.get("seed", 0))
    train, _, _ = _load_data_checked(ds, seed)
    spec = AdapterSpec(entry["method"], entry["hyperparams"], entry["estimator"],
                       entry["estimator_params"], seed)
    model = fit(spec, train)
    try:
        save_model(model, args.out)
    except OSError as exc:
        raise CliError(EXIT_DATA, "IOError", f"cannot write model to {args.out}: {exc.strerror}",
                       path=args.out)
    print(json.dumps({"method": model.method, "train_time_ms": round(model.fit_time_ms, 3),
                      "warnings": list(model.warnings)}))
    return EXIT_OK


def cmd_eval(args):
    _check_metric(args.metric)
    model = load_model(args.model)
    if args.metric == "accuracy" and model.task == "regression":
        raise E.IncompatibleMetric("accuracy needs a classification model", metric=args.metric,
                                   task=model.task)
    if args.metric in ("mse", "mae") and model.task == "classification":
        raise E.IncompatibleMetric(f"{args.metric} needs a regression model", metric=args.metric,
                                   task=model.task)
    X, y = load_csv(args.data, args.target_column)
    y = np.asarray(y, dtype=np.float64)
    keep = np.isfinite(y)
    if not keep.any():
        raise E.LengthMismatch("data file has no labeled rows")
    value = evaluate(predict(model, X[keep]), y[keep], args.metric, model.task)
    print(json.dumps({"metric": args.metric, "value": value, "n": int(keep.sum())}))
    return EXIT_OK


def _bench_task(job):
    entry, ds, seed, metric = job
    record = {"method": entry["method"], "dataset": _dataset_name(ds), "seed": seed,
              "hyperparams": entry["hyperparams"], "estimator": entry["estimator"]}
    try:
        model, used_metric, value = _run_one(entry, ds, seed, metric)
        record.update(status="ok", metric=used_metric, value=value,
                      train_time_ms=model.fit_time_ms, warnings=list(model.warnings),
                      resolved_hyperparams=_jsonable(model.hyperparams))
    except Exception as exc:  # a failed run is data, not a crash
        _, code, message, context = _classify(exc)
        record.update(status="failed", metric=metric, value=None, train_time_ms=None, warnings=[],
                      error={"code": code, "message": message, "context": _jsonable(context)})
    return record


def run_benchmark(cfg, jobs=1):
    """Run the full (method x dataset x seed) grid plus the NoAdapt
    baseline and return the report dictionary."""
    _check_keys(cfg, BENCH_KEYS, "config")
    defaults = {"estimator": cfg.get("estimator"), "estimator_params": cfg.get("estimator_params", {})}
    methods = _require(cfg, "methods", "config")
    if not isinstance(methods, list) or not methods:
        raise E.ConfigError("methods must be a nonempty list", key="methods")
    entries = [_method_entry(m, defaults) for m in methods]
    if not any(e["method"] == "NoAdapt" for e in entries):
        entries.append(_method_entry("NoAdapt", defaults))
    datasets = _require(cfg, "datasets", "config")
    if not isinstance(datasets, list) or not datasets:
        raise E.ConfigError("datasets must be a nonempty list", key="datasets")
    datasets = [_check_dataset(d, f"datasets[{i}]") for i, d in enumerate(datasets)]
    names = [_dataset_name(d) for d in datasets]
    if len(set(names)) != len(names):
        raise E.ConfigError("dataset names must be unique (set 'name')", key="name")
    seeds = _require(cfg, "seeds", "config")
    if not isinstance(seeds, list) or not seeds:
        raise E.ConfigError("seeds must be a nonempty list", key="seeds")
    seeds = [_seed(s, "seeds") for s in seeds]
    metric = cfg.get("metric")
    _check_metric(metric)

    grid = [(e, d, s, metric) for e in entries for d in datasets for s in seeds]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_bench_task, grid))
    else:
        records = [_bench_task(job) for job in grid]
    records.sort(key=lambda r: (r["method"], r["dataset"], r["seed"]))
    return {"format_version": REPORT_VERSION, "records": records, "aggregates": _aggregate(records)}


def _aggregate(records):
    groups = {}
    for r in records:
        groups.setdefault((r["method"], r["dataset"]), []).append(r)
    out = []
    for (method, dataset), rs in sorted(groups.items()):
        vals = [r["value"] for r in rs if r["status"] == "ok"]
        out.append({
            "method": method, "dataset": dataset, "metric": rs[0]["metric"],
            "n_ok": len(vals), "n_failed": len(rs) - len(vals),
            "mean": float(np.mean(vals)) if vals else None,
            "std": float(np.std(vals)) if vals else None,
        })
    return out


def cmd_benchmark(args):
    cfg = _read_config(args.config)
    report = run_benchmark(cfg, jobs=args.jobs)
    try:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        raise CliError(EXIT_DATA, "IOError", f"cannot write report to {args.out}: {exc.strerror}",
                       path=args.out)
    n_ok = sum(r["status"] == "ok" for r in report["records"])
    print(json.dumps({"records": len(report["records"]), "ok": n_ok,
                      "failed": len(report["records"]) - n_ok}))
    if n_ok == 0:
        first = report["records"][0]["error"]
        raise CliError(EXIT_ALL_FAILED, "AllRunsFailed", "every benchmark run failed",
                       first_error=first)
    return EXIT_OK


def cmd_gendata(args):
    n_s = args.n_source if args.n_source is not None else args.n
    n_t = args.n_target if args.n_target is not None else args.n
    if n_s is None or n_t is None:
        raise E.ConfigError("give --n or both --n-source and --n-target", key="n")
    if n_s < 2 or n_t < 2:
        raise E.ConfigError("row counts must be at least 2", key="n")
    params = {}
    if args.kind == "rotated_moons":
        if not 0.0 <= args.angle < 180.0:
            raise E.ConfigError(f"angle must lie in [0, 180), got {args.angle}", key="angle")
        if args.noise < 0:
            raise E.ConfigError("noise must be nonnegative", key="noise")
        params = {"angle": args.angle, "noise": args.noise}
    elif args.kind == "sample_bias":
        if args.bias < 0:
            raise E.ConfigError("bias must be nonnegative", key="bias")
        params = {"bias": args.bias}
    seed = _seed(args.seed)
    data = SyntheticSpec(args.kind, n_s, n_t, seed, params).generate()
    if args.n_labeled is not None:
        data = mask_target_labels(data, args.n_labeled, seed)
    write_dataset(data, args.out, labeled_target=not args.unlabeled)
    print(json.dumps({"out": args.out, "n_source": n_s, "n_target": n_t}))
    return EXIT_OK


# entry point -----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_CONFIG, "UsageError", message, prog=self.prog)


def build_parser():
    p = _Parser(prog="adaptkit", description="Domain adaptation toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    f = sub.add_parser("fit", help="fit one adapter and save the model")
    f.add_argument("--config", required=True)
    f.add_argument("--out", required=True, help="model file to write")
    f.add_argument("--seed", type=int, help="override the config seed")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score a saved model on a labeled CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--metric", required=True)
    e.add_argument("--target-column", default="y")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("benchmark", help="run a method x dataset x seed grid")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True, help="report file to write")
    b.add_argument("--jobs", type=int, default=1, help="worker threads")
    b.set_defaults(func=cmd_benchmark)

    g = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    g.add_argument("--kind", required=True, choices=KINDS)
    g.add_argument("--n", type=int)
    g.add_argument("--n-source", type=int)
    g.add_argument("--n-target", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--angle", type=float, default=30.0)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--bias", type=float, default=1.0)
    g.add_argument("--n-labeled", type=int, help="keep only this many target labels")
    g.add_argument("--unlabeled", action="store_true", help="omit the target label column")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gendata)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 1:
            raise E.ConfigError("--jobs must be at least 1", key="jobs")
        return args.func(args)
    except Exception as exc:
        exit_code, code, message, context = _classify(exc)
        _emit_error(code, message, context)
        return exit_code


if __name__ == "__main__":
    sys.exit(main())
