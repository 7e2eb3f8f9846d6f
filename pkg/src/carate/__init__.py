"""Inference on average treatment effects in covariate-adaptive randomized
experiments with many regressors."""

__version__ = "0.1.0"

from .analysis import METHODS, MethodResult, analyze
from .data import Dataset, DataError, build_index, load_dataset, validate
from .estimate import AteResult, DegenerateCombination, estimate_ate
from .olskernel import NotEstimable

__all__ = [
    "__version__",
    "AteResult",
    "DataError",
    "Dataset",
    "DegenerateCombination",
    "METHODS",
    "MethodResult",
    "NotEstimable",
    "analyze",
    "build_index",
    "estimate_ate",
    "load_dataset",
    "validate",
]
