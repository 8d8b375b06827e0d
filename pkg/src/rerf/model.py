"""
Regression-enhanced random forest: Lasso on the expanded predictors, then a
random forest on the Lasso residuals. The prediction is the sum of the
linear part and the forest part.
"""

import json
import logging
import pathlib
from dataclasses import dataclass
from typing import Any, Dict, Optional, Union

import numpy as np

from . import __version__
from .dataset import DataMatrix, FeatureExpansionSpec, expand_features
from .forest import DEFAULT_N_TREES, Forest, ForestParams, fit_forest, forest_from_dict, forest_to_dict, predict_forest
from .lasso import LassoFit, fit_lasso, predict_linear, residuals


logger = logging.getLogger(__name__)

MODEL_FORMAT = 'rerf-model/1'


class ModelFileError(Exception):
    pass


@dataclass(frozen=True)
class SelectedParams:
    """The (lambda, mtry, nodesize) a model was built with; unused parts are None."""
    lambda_: Optional[float] = None
    mtry: Optional[int] = None
    nodesize: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'lambda': self.lambda_, 'mtry': self.mtry, 'nodesize': self.nodesize}

    @classmethod
    def from_dict(cls, source: Dict[str, Any]) -> "SelectedParams":
        return cls(source.get('lambda'), source.get('mtry'), source.get('nodesize'))


@dataclass(frozen=True, eq=False)
class RerfModel:
    expansion: FeatureExpansionSpec
    lasso: LassoFit
    forest: Forest
    tuning: SelectedParams
    forest_on_expanded: bool = False

    def predict(self, points: DataMatrix) -> np.ndarray:
        return predict_rerf(self, points)

    def decompose(self, points: DataMatrix) -> Dict[str, np.ndarray]:
        """Linear and forest parts of the prediction, separately."""
        expanded = expand_features(points, self.expansion)
        forest_points = expanded if self.forest_on_expanded else points
        return {
            'linear': predict_linear(self.lasso, expanded),
            'forest': predict_forest(self.forest, forest_points),
        }


@dataclass(frozen=True, eq=False)
class LassoModel:
    """Plain Lasso on expanded predictors; the benchmark's parametric baseline."""
    expansion: FeatureExpansionSpec
    lasso: LassoFit

    @property
    def tuning(self) -> SelectedParams:
        return SelectedParams(lambda_=self.lasso.lambda_)

    def predict(self, points: DataMatrix) -> np.ndarray:
        return predict_linear(self.lasso, expand_features(points, self.expansion))


def assemble_rerf(
    train: DataMatrix,
    expanded: DataMatrix,
    lasso: LassoFit,
    expansion: FeatureExpansionSpec,
    params: ForestParams,
    forest_on_expanded: bool = False,
    n_jobs: int = 1,
) -> RerfModel:
    """Steps after the Lasso: residuals, then the forest on (X, residuals)."""
    residual = residuals(lasso, expanded)
    forest_input = expanded if forest_on_expanded else train
    forest = fit_forest(forest_input.with_response(residual, name='residual'), params, n_jobs=n_jobs)
    return RerfModel(
        expansion=expansion,
        lasso=lasso,
        forest=forest,
        tuning=SelectedParams(lasso.lambda_, params.mtry, params.nodesize),
        forest_on_expanded=forest_on_expanded,
    )


def fit_rerf(
    train: DataMatrix,
    expansion: FeatureExpansionSpec,
    lambda_: float,
    mtry: int,
    nodesize: int,
    seed: int,
    n_trees: int = DEFAULT_N_TREES,
    forest_on_expanded: bool = False,
    bootstrap: bool = True,
    n_jobs: int = 1,
) -> RerfModel:
    """
    Fit a RERF at fixed tuning parameters.

    The Lasso consumes no randomness, so `seed` goes to the forest unchanged:
    a RERF whose Lasso is the null model grows exactly the trees a plain
    forest with the same seed grows.
    """
    train.require_response()
    expanded = expand_features(train, expansion)
    lasso = fit_lasso(expanded, lambda_)
    params = ForestParams(n_trees=n_trees, mtry=mtry, nodesize=nodesize, seed=seed, bootstrap=bootstrap)
    return assemble_rerf(train, expanded, lasso, expansion, params, forest_on_expanded, n_jobs)


def predict_rerf(model: RerfModel, points: DataMatrix) -> np.ndarray:
    """Linear part on the expanded points plus forest part, elementwise."""
    parts = model.decompose(points)
    return parts['linear'] + parts['forest']


FittedModel = Union[RerfModel, LassoModel, Forest, LassoFit]


def predict(model: FittedModel, points: DataMatrix) -> np.ndarray:
    """Predict with any fitted model of the package."""
    match model:
        case RerfModel():
            return predict_rerf(model, points)
        case LassoModel():
            return model.predict(points)
        case Forest():
            return predict_forest(model, points)
        case LassoFit():
            return predict_linear(model, points)
        case _:
            raise TypeError(f"Unsupported model type: {type(model).__name__}")


# ---------------------------------------------------------------------------
# Model file
# ---------------------------------------------------------------------------

def _lasso_to_dict(fit: LassoFit) -> Dict[str, Any]:
    return {
        'column_names': list(fit.column_names),
        'lambda': fit.lambda_,
        'intercept': fit.intercept,
        'coefficients': fit.coefficients.tolist(),
        'standardized_coefficients': np.asarray(fit.standardized_coefficients).tolist(),
        'centers': np.asarray(fit.centers).tolist(),
        'scales': np.asarray(fit.scales).tolist(),
        'n_iterations': fit.n_iterations,
        'converged': fit.converged,
    }


def _array(values: Any) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    array.setflags(write=False)
    return array


def _lasso_from_dict(source: Dict[str, Any]) -> LassoFit:
    coefficients = _array(source['coefficients'])
    return LassoFit(
        coefficients=coefficients,
        intercept=float(source['intercept']),
        lambda_=float(source['lambda']),
        active_set=tuple(int(j) for j in np.flatnonzero(coefficients != 0.0)),
        n_iterations=int(source['n_iterations']),
        converged=bool(source['converged']),
        column_names=tuple(source['column_names']),
        standardized_coefficients=_array(source['standardized_coefficients']),
        centers=_array(source['centers']),
        scales=_array(source['scales']),
    )


def model_to_dict(model: RerfModel) -> Dict[str, Any]:
    return {
        'format': MODEL_FORMAT,
        'package_version': __version__,
        'expansion': model.expansion.to_dict(),
        'forest_on_expanded': model.forest_on_expanded,
        'tuning': model.tuning.to_dict(),
        'lasso': _lasso_to_dict(model.lasso),
        'forest': forest_to_dict(model.forest),
    }


def model_from_dict(source: Dict[str, Any]) -> RerfModel:
    if source.get('format') != MODEL_FORMAT:
        raise ModelFileError(
            f"Unsupported model format '{source.get('format')}'; expected '{MODEL_FORMAT}'"
        )
    try:
        return RerfModel(
            expansion=FeatureExpansionSpec.from_dict(source['expansion']),
            lasso=_lasso_from_dict(source['lasso']),
            forest=forest_from_dict(source['forest']),
            tuning=SelectedParams.from_dict(source['tuning']),
            forest_on_expanded=bool(source.get('forest_on_expanded', False)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFileError(f"Malformed model file: {e}") from e


def save_model(model: RerfModel, path: Union[str, pathlib.Path]) -> pathlib.Path:
    """Write a self-describing JSON model file. Floats round-trip exactly."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(model_to_dict(model), f)
    except OSError as e:
        raise ModelFileError(f"Failed to write {path}: {e}") from e
    logger.info(f"Saved model to {path}")
    return path


def load_model(path: Union[str, pathlib.Path]) -> RerfModel:
    path = pathlib.Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            source = json.load(f)
    except json.JSONDecodeError as e:
        raise ModelFileError(f"Invalid model file {path}: {e}") from e
    return model_from_dict(source)
