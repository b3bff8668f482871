"""Semi-supervised imputation for covariates with high missing rates."""
from .data import (ColumnSchema, ImputationResult, MissingDataset, PatternIndex,
                   missing_rate, validate)
from .estimator import SemiSupervisedImputer, SSIRegressor
from .impute import (impute_all, impute_continuous_column,
                     impute_continuous_iterative, impute_discrete_column,
                     impute_sssi)
from .kernel import ScaleParams, WeightGraph, build_graph, pair_weight
from .regression import OlsFit, fit_ols, loo_predictions, predict
from .simulation import SimScenario, draw
from .tuning import TauGrid, TuneReport, tune_cv, tune_interchangeable

__version__ = "0.1.0"

__all__ = [
    "ColumnSchema", "ImputationResult", "MissingDataset", "PatternIndex",
    "missing_rate", "validate", "SemiSupervisedImputer", "SSIRegressor",
    "impute_all", "impute_continuous_column", "impute_continuous_iterative",
    "impute_discrete_column", "impute_sssi", "ScaleParams", "WeightGraph",
    "build_graph", "pair_weight", "OlsFit", "fit_ols", "loo_predictions",
    "predict", "SimScenario", "draw", "TauGrid", "TuneReport", "tune_cv",
    "tune_interchangeable",
]
