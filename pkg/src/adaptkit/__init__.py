"""Domain adaptation toolkit: feature, instance and parameter based
adapters behind one fit/predict contract, plus synthetic shift datasets
and a benchmark CLI."""

from adaptkit.core import (
    AdapterSpec,
    AdaptInput,
    FittedModel,
    evaluate,
    fit,
    load_model,
    predict,
    save_model,
)
from adaptkit.errors import AdaptError
from adaptkit.kernels import BACKEND
from adaptkit.methods import METHODS

__version__ = "0.1.0"

__all__ = [
    "AdaptError",
    "AdaptInput",
    "AdapterSpec",
    "BACKEND",
    "FittedModel",
    "METHODS",
    "evaluate",
    "fit",
    "load_model",
    "predict",
    "save_model",
]
