"""
rerf - Regression-Enhanced Random Forests

A penalized linear fit (Lasso by coordinate descent) followed by a random
forest on its residuals, jointly tuned by cross-validation, together with a
benchmark harness comparing it against plain Lasso and plain random forests
on simulated scenarios and tabular datasets.
"""

__version__ = "0.1.0"

from .dataset import (
    DataMatrix,
    DatasetError,
    FeatureExpansionSpec,
    SplitRule,
    expand_features,
    load_csv,
    split,
)
from .forest import Forest, ForestParams, extract_weights, fit_forest, fit_tree, predict_forest
from .lasso import LassoFit, PenaltyGrid, default_penalty_grid, fit_lasso, lasso_path
from .metrics import rmse
from .model import RerfModel, SelectedParams, fit_rerf, load_model, predict, predict_rerf, save_model
from .tuning import TuningGrid, TuningResult, approximate_search, default_grid, grid_search

__all__ = [
    "__version__",
    "DataMatrix",
    "DatasetError",
    "FeatureExpansionSpec",
    "SplitRule",
    "expand_features",
    "load_csv",
    "split",
    "Forest",
    "ForestParams",
    "extract_weights",
    "fit_forest",
    "fit_tree",
    "predict_forest",
    "LassoFit",
    "PenaltyGrid",
    "default_penalty_grid",
    "fit_lasso",
    "lasso_path",
    "rmse",
    "RerfModel",
    "SelectedParams",
    "fit_rerf",
    "load_model",
    "predict",
    "predict_rerf",
    "save_model",
    "TuningGrid",
    "TuningResult",
    "approximate_search",
    "default_grid",
    "grid_search",
]
