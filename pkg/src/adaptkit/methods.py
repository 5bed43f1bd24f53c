"""Registry of adaptation methods: supervision kind, supported tasks,
hyperparameter schema, default base estimator and fit/predict hooks."""

import copy
from dataclasses import dataclass, field

from adaptkit import feature_adapt as fa
from adaptkit import instance_adapt as ia
from adaptkit import parameter_adapt as pa
from adaptkit.errors import ConfigError
from adaptkit.estimators import ESTIMATORS, clone, make_estimator

BOTH = ("classification", "regression")
DEFAULT_ESTIMATORS = {
    "regression": ("ridge", {"lam": 1.0}),
    "classification": ("logistic", {"lam": 0.01}),
}


@dataclass(frozen=True)
class Method:
    name: str
    supervision: str  # "UDA", "SDA" or "baseline"
    tasks: tuple
    fit_fn: object = field(repr=False)
    predict_fn: object = field(repr=False)
    defaults: dict = field(default_factory=dict)
    state_keys: tuple = ()
    uses_estimator: bool = True
    default_estimator: dict = field(default_factory=lambda: dict(DEFAULT_ESTIMATORS))

    def resolve_hyperparams(self, hp):
        """Merge ``hp`` into the defaults; unknown keys are a ConfigError."""
        hp = dict(hp or {})
        unknown = sorted(set(hp) - set(self.defaults))
        if unknown:
            raise ConfigError(
                f"unknown hyperparameter {unknown[0]!r} for {self.name}; "
                f"valid keys: {sorted(self.defaults)}",
                key=unknown[0], method=self.name,
            )
        out = dict(self.defaults)
        out.update(hp)
        return out

    def fit(self, data, estimator, hp, seed):
        return self.fit_fn(data, estimator, hp, seed)

    def predict(self, model, X):
        return self.predict_fn(model, X)


def _fit_noadapt(data, estimator, hp, seed):
    estimator.fit(data.Xs, data.ys)
    return {}, estimator, []


_KMM_HP = {"gamma": None, "B": 1000.0, "eps": None, "max_iter": 10000, "tol": 1e-9}
_PRIOR_HP = {"lam": 1.0, "source_lam": 1e-6, "beta_src": None, "prior_path": None}

METHODS = {
    m.name: m
    for m in [
        Method("NoAdapt", "baseline", BOTH, _fit_noadapt, ia.predict_with_estimator),
        Method("FE", "SDA", BOTH, fa.fit_fe, fa.predict_fe),
        Method("CORAL", "UDA", BOTH, fa.fit_coral, fa.predict_coral, {"lam": 1.0},
               ("M", "lam", "source_mean", "target_mean")),
        Method("mSDA", "UDA", BOTH, fa.fit_msda, fa.predict_msda, {"p": 0.5, "n_layers": 3},
               ("layers", "p")),
        Method("KMM", "UDA", BOTH, ia.fit_kmm, ia.predict_with_estimator, _KMM_HP, ("weights",)),
        Method("KLIEP", "UDA", BOTH, ia.fit_kliep, ia.predict_with_estimator,
               {"gammas": None, "n_centers": 100, "cv_folds": 5}, ("weights", "gamma")),
        Method("TrAdaBoost", "SDA", ("classification",), ia.fit_tradaboost, ia.predict_tradaboost,
               {"n_iters": 20}, ("members", "betas", "first_voter", "n_iters", "kind"),
               default_estimator={"classification": ("stump", {"task": "classification"})}),
        Method("TrAdaBoostR2", "SDA", ("regression",), ia.fit_tradaboostr2, ia.predict_weighted_median,
               {"n_iters": 20}, ("members", "betas", "first_voter", "n_iters", "kind"),
               default_estimator={"regression": ("ridge", {"lam": 1e-3})}),
        Method("TwoStageTrAdaBoostR2", "SDA", ("regression",), ia.fit_two_stage,
               ia.predict_weighted_median, {"n_steps": 10, "cv_folds": 5, "n_iters": 20},
               ("members", "betas", "first_voter", "n_iters", "kind"),
               default_estimator={"regression": ("ridge", {"lam": 1e-3})}),
        Method("RegularTransferLR", "SDA", ("regression",), pa.fit_regular_lr, pa.predict_regular_lr,
               _PRIOR_HP, ("beta", "beta_src"), uses_estimator=False),
        Method("RegularTransferLC", "SDA", ("classification",), pa.fit_regular_lc, pa.predict_regular_lc,
               _PRIOR_HP, ("beta", "beta_src"), uses_estimator=False),
    ]
}

ALIASES = {"twostagestradaboostr2": "TwoStageTrAdaBoostR2", "no-adaptation": "NoAdapt",
           "baseline": "NoAdapt"}
ADAPTATION_METHODS = tuple(name for name in METHODS if name != "NoAdapt")


def get_method(name):
    if name in METHODS:
        return METHODS[name]
    key = str(name).lower()
    for canonical in METHODS:
        if canonical.lower() == key:
            return METHODS[canonical]
    if key in ALIASES:
        return METHODS[ALIASES[key]]
    raise ConfigError(f"unknown method {name!r}; choose from {sorted(METHODS)}", key="method", method=name)


def resolve_estimator(method, estimator, params, task):
    """Build the base estimator for ``method``: a fresh copy of a passed
    instance, a built-in looked up by name, or the method's default."""
    if not method.uses_estimator:
        if estimator is not None:
            raise ConfigError(f"{method.name} does not take a base estimator", key="estimator")
        return None
    params = dict(params or {})
    if estimator is None:
        name, defaults = method.default_estimator.get(task, DEFAULT_ESTIMATORS[task])
        params = {**defaults, **params}
        estimator = name
    if isinstance(estimator, str):
        if estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {estimator!r}; choose from {sorted(ESTIMATORS)}",
                              key="estimator")
        cls = ESTIMATORS[estimator]
        if getattr(cls, "task", task) not in (task, None):
            raise ConfigError(f"estimator {estimator!r} cannot handle {task} tasks", key="estimator")
        try:
            return make_estimator(estimator, **params)
        except TypeError:
            raise ConfigError(f"bad parameters {sorted(params)} for estimator {estimator!r}",
                              key="estimator_params") from None
    if params:
        raise ConfigError("estimator_params only apply to named estimators", key="estimator_params")
    if hasattr(estimator, "get_params"):
        return clone(estimator)
    return copy.deepcopy(estimator)
