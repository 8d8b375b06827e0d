"""
k-fold cross-validated selection of RERF tuning parameters.

A cell of the tuning grid is one (lambda, mtry, nodesize) triple. Every cell is
scored through the full RERF pipeline: Lasso on the training folds, forest on
its residuals, RMSE on the held-out fold. Folds are shared by all cells of
one search.

Random streams:
    fold assignment         (seed, FOLD_STREAM)
    CV forest, fold f       (seed, CV_STREAM, forest cell, f)
    refit forest            (seed, REFIT_STREAM, forest cell)

The forest cell is the position of (mtry, nodesize) in the mtry x nodesize
product, so cells that differ only in lambda grow their forests from the
same streams, and a plain forest tuned with the same seed grows the very
trees a RERF with a null Lasso grows.
"""

import logging
import pathlib
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .dataset import DataMatrix, FeatureExpansionSpec, expand_features
from .forest import DEFAULT_N_TREES, ForestParams, fit_forest, predict_forest
from .lasso import LassoFit, PenaltyGrid, default_penalty_grid, fit_lasso, lasso_path, predict_linear
from .metrics import rmse
from .model import FittedModel, LassoModel, SelectedParams, assemble_rerf, fit_rerf, predict_rerf
from .utils.error_handler import capture_errors
from .utils.seeding import derive_seed, make_rng


logger = logging.getLogger(__name__)

DEFAULT_K_FOLDS = 5
DEFAULT_CV_N_TREES = 100

FOLD_STREAM = 0
CV_STREAM = 1
REFIT_STREAM = 2

# Grid position: (lambda index, mtry index, nodesize index); -1 where unused
CellKey = Tuple[int, int, int]


class TuningError(ValueError):
    pass


@dataclass(frozen=True)
class SearchMethod:
    EXHAUSTIVE  :str = 'exhaustive'
    APPROXIMATE :str = 'approximate'

    @classmethod
    def values(cls) -> List[str]:
        return [getattr(cls, attr) for attr in cls.__annotations__.keys()]


@dataclass(frozen=True)
class TuningGrid:
    """
    Candidate values for the three tuning parameters.

    Attributes:
        lambdas: Penalty candidates
        mtry_candidates: Columns drawn per node
        nodesize_candidates: Largest unsplit node sizes
        default_mtry: mtry held fixed in the first stage of the approximate search
        default_nodesize: nodesize held fixed in the first stage of the approximate search
    """
    lambdas: PenaltyGrid
    mtry_candidates: Tuple[int, ...]
    nodesize_candidates: Tuple[int, ...]
    default_mtry: Optional[int] = None
    default_nodesize: Optional[int] = 5

    def __post_init__(self) -> None:
        if not isinstance(self.lambdas, PenaltyGrid):
            object.__setattr__(self, 'lambdas', PenaltyGrid(tuple(self.lambdas)))
        for name in ('mtry_candidates', 'nodesize_candidates'):
            values = tuple(int(v) for v in getattr(self, name))
            if not values:
                raise TuningError(f"{name} is empty")
            if any(v < 1 for v in values):
                raise TuningError(f"{name} must hold positive counts, got {values}")
            if len(set(values)) != len(values):
                raise TuningError(f"{name} holds duplicates: {values}")
            object.__setattr__(self, name, values)

    @property
    def n_cells(self) -> int:
        return len(self.lambdas) * self.n_forest_cells

    @property
    def n_forest_cells(self) -> int:
        return len(self.mtry_candidates) * len(self.nodesize_candidates)

    def check_dimension(self, p: int) -> None:
        too_large = [m for m in self.mtry_candidates if m > p]
        if too_large:
            raise TuningError(f"mtry candidates {too_large} exceed the number of columns p={p}")

    def forest_cell(self, mtry_index: int, nodesize_index: int) -> int:
        return mtry_index * len(self.nodesize_candidates) + nodesize_index

    def params(self, key: CellKey) -> SelectedParams:
        li, mi, si = key
        return SelectedParams(
            lambda_=self.lambdas[li] if li >= 0 else None,
            mtry=self.mtry_candidates[mi] if mi >= 0 else None,
            nodesize=self.nodesize_candidates[si] if si >= 0 else None,
        )

    def stage_defaults(self) -> Tuple[int, int]:
        """(mtry index, nodesize index) fixed during the first approximate stage."""
        mi = self.mtry_candidates.index(self.default_mtry) if self.default_mtry in self.mtry_candidates else 0
        si = (self.nodesize_candidates.index(self.default_nodesize)
              if self.default_nodesize in self.nodesize_candidates else 0)
        return mi, si

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lambdas': list(self.lambdas.values),
            'mtry': list(self.mtry_candidates),
            'nodesize': list(self.nodesize_candidates),
            'default_mtry': self.default_mtry,
            'default_nodesize': self.default_nodesize,
        }


def default_mtry(p: int) -> int:
    return max(1, p // 3)


def default_grid(p: int, lambdas: Optional[PenaltyGrid] = None) -> TuningGrid:
    """
    The standard grid for p columns: 100 geometric penalties in [0.001, 100],
    mtry at half, once and twice the default max(1, p // 3), nodesize 1 and 5.
    """
    if p < 1:
        raise TuningError(f"p must be >= 1, got {p}")
    d = default_mtry(p)
    mtry = sorted({max(1, d // 2), d, min(p, 2 * d)})
    return TuningGrid(
        lambdas=lambdas if lambdas is not None else default_penalty_grid(),
        mtry_candidates=tuple(mtry),
        nodesize_candidates=(1, 5),
        default_mtry=d,
        default_nodesize=5,
    )


def kfold_indices(n: int, k: int, seed: int) -> List[np.ndarray]:
    """
    Random partition of 0..n-1 into k validation folds whose sizes differ by
    at most one. Each fold is returned in ascending order.
    """
    if k < 2:
        raise TuningError(f"k must be >= 2, got {k}")
    if k > n:
        raise TuningError(f"Cannot make {k} folds from {n} rows")
    permutation = make_rng(seed, FOLD_STREAM).permutation(n)
    return [np.sort(fold) for fold in np.array_split(permutation, k)]


@dataclass(frozen=True)
class FoldScore:
    lambda_: Optional[float]
    mtry: Optional[int]
    nodesize: Optional[int]
    fold: int
    rmse: float


@dataclass(frozen=True, eq=False)
class TuningResult:
    """
    Outcome of one cross-validated search.

    Attributes:
        selected: The chosen cell
        cv_table: Mean CV RMSE of every evaluated, non-excluded cell, in grid order
        fold_scores: Per-fold RMSE behind cv_table
        fold_count: k
        seed: Search seed
        n_evaluations: CV cell evaluations the search requested
        excluded: Cells with at least one failed fold
        method: 'rerf', 'lasso' or 'rf'
        search: 'exhaustive' or 'approximate'
        model: Refit at `selected` on the full training data, if requested
    """
    selected: SelectedParams
    cv_table: Dict[SelectedParams, float]
    fold_scores: Tuple[FoldScore, ...]
    fold_count: int
    seed: int
    n_evaluations: int
    excluded: Tuple[SelectedParams, ...] = ()
    method: str = 'rerf'
    search: str = SearchMethod.EXHAUSTIVE
    model: Optional[FittedModel] = None

    @property
    def best_cv_rmse(self) -> float:
        return self.cv_table[self.selected]

    def cv_mean_table(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {'lambda': cell.lambda_, 'mtry': cell.mtry, 'nodesize': cell.nodesize, 'rmse': value}
                for cell, value in self.cv_table.items()
            ],
            columns=['lambda', 'mtry', 'nodesize', 'rmse'],
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {'lambda': s.lambda_, 'mtry': s.mtry, 'nodesize': s.nodesize, 'fold': s.fold, 'rmse': s.rmse}
                for s in self.fold_scores
            ],
            columns=['lambda', 'mtry', 'nodesize', 'fold', 'rmse'],
        )

    def to_csv(self, path: Union[str, pathlib.Path]) -> pathlib.Path:
        """Per-fold audit table: lambda, mtry, nodesize, fold, rmse."""
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format='%.17g')
        return path


# ---------------------------------------------------------------------------
# Fold scoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _Fold:
    index: int
    train: DataMatrix
    validation: DataMatrix
    expanded_train: DataMatrix
    expanded_validation: DataMatrix
    path: Optional[Tuple[LassoFit, ...]] = None
    error: Optional[str] = None


def _score_rerf(fold: _Fold, expansion: FeatureExpansionSpec, li: int, params: ForestParams,
                forest_on_expanded: bool) -> float:
    model = assemble_rerf(
        fold.train, fold.expanded_train, fold.path[li], expansion, params, forest_on_expanded,
    )
    return rmse(predict_rerf(model, fold.validation), fold.validation.response)


def _score_forest(fold: _Fold, params: ForestParams) -> float:
    forest = fit_forest(fold.train, params)
    return rmse(predict_forest(forest, fold.validation), fold.validation.response)


def _score_lasso(fold: _Fold, li: int) -> float:
    return rmse(predict_linear(fold.path[li], fold.expanded_validation), fold.validation.response)


def _run_job(label: str, function, *args) -> Tuple[Optional[float], str]:
    with capture_errors(logger, label=label) as captured:
        return function(*args), ''
    return None, captured.message


class _CrossValidator:
    """Scores grid cells fold by fold, caching every cell it has seen."""

    def __init__(
        self,
        method: str,
        train: DataMatrix,
        expansion: FeatureExpansionSpec,
        grid: TuningGrid,
        k: int,
        seed: int,
        cv_n_trees: int,
        forest_on_expanded: bool,
        n_jobs: int,
    ):
        train.require_response()
        if train.n_rows < 2 * k:
            raise TuningError(f"Cross-validation with k={k} needs at least {2 * k} rows, got {train.n_rows}")

        self.method = method
        self.expansion = expansion
        self.grid = grid
        self.k = k
        self.seed = seed
        self.cv_n_trees = cv_n_trees
        self.forest_on_expanded = forest_on_expanded
        self.n_jobs = n_jobs
        self.n_evaluations = 0

        expanded = expand_features(train, expansion)
        if method != 'lasso':
            grid.check_dimension(expanded.n_columns if forest_on_expanded else train.n_columns)

        self.folds: List[_Fold] = []
        everything = np.arange(train.n_rows)
        for f, held_out in enumerate(kfold_indices(train.n_rows, k, seed)):
            kept = np.setdiff1d(everything, held_out, assume_unique=True)
            self.folds.append(self._prepare(f, train.select_rows(kept), train.select_rows(held_out)))

        self._scores: Dict[CellKey, List[Optional[float]]] = {}
        self._errors: Dict[CellKey, str] = {}

    def _prepare(self, index: int, train: DataMatrix, validation: DataMatrix) -> _Fold:
        expanded_train = expand_features(train, self.expansion)
        expanded_validation = expand_features(validation, self.expansion)
        path, error = None, None
        if self.method != 'rf':
            with capture_errors(logger, label=f"fold {index} lasso path") as captured:
                path = tuple(lasso_path(expanded_train, self.grid.lambdas.values))
            if captured.failed:
                error = captured.message
        return _Fold(index, train, validation, expanded_train, expanded_validation, path, error)

    def _forest_params(self, key: CellKey, fold: int) -> ForestParams:
        _, mi, si = key
        cell = self.grid.forest_cell(mi, si)
        return ForestParams(
            n_trees=self.cv_n_trees,
            mtry=self.grid.mtry_candidates[mi],
            nodesize=self.grid.nodesize_candidates[si],
            seed=derive_seed(self.seed, CV_STREAM, cell, fold),
        )

    def _job(self, key: CellKey, fold: _Fold):
        label = f"cell {key} fold {fold.index}"
        match self.method:
            case 'rerf':
                return delayed(_run_job)(label, _score_rerf, fold, self.expansion, key[0],
                                         self._forest_params(key, fold.index), self.forest_on_expanded)
            case 'rf':
                return delayed(_run_job)(label, _score_forest, fold, self._forest_params(key, fold.index))
            case 'lasso':
                return delayed(_run_job)(label, _score_lasso, fold, key[0])
            case _:
                raise TuningError(f"Unknown tuning method '{self.method}'")

    def evaluate(self, keys: Sequence[CellKey]) -> None:
        """Score every cell in `keys` on every fold; cached cells are not refit."""
        self.n_evaluations += len(keys)
        pending = [key for key in dict.fromkeys(keys) if key not in self._scores]
        if not pending:
            return

        jobs, slots = [], []
        for key in pending:
            self._scores[key] = [None] * self.k
            for fold in self.folds:
                if fold.error is not None:
                    self._errors.setdefault(key, fold.error)
                    continue
                jobs.append(self._job(key, fold))
                slots.append((key, fold.index))

        if self.n_jobs == 1:
            outcomes = [function(*args, **kwargs) for function, args, kwargs in jobs]
        else:
            outcomes = Parallel(n_jobs=self.n_jobs)(jobs)

        for (key, f), (score, message) in zip(slots, outcomes):
            if score is None:
                self._errors.setdefault(key, message)
            else:
                self._scores[key][f] = score

        for key in pending:
            if key in self._errors:
                logger.warning(f"Excluding {self.grid.params(key)}: {self._errors[key]}")

    def mean(self, key: CellKey) -> Optional[float]:
        if key in self._errors or key not in self._scores:
            return None
        return float(np.mean(self._scores[key]))

    def best(self, keys: Sequence[CellKey]) -> CellKey:
        """Lowest mean CV RMSE among `keys`; ties go to the earliest in grid order."""
        best_key, best_value = None, np.inf
        for key in sorted(keys):
            value = self.mean(key)
            if value is not None and value < best_value:
                best_key, best_value = key, value
        if best_key is None:
            raise TuningError(f"All {len(keys)} evaluated cells failed cross-validation")
        return best_key

    def result(self, selected: CellKey, search: str, model: Optional[FittedModel]) -> TuningResult:
        evaluated = sorted(key for key in self._scores if key not in self._errors)
        fold_scores = []
        for key in evaluated:
            cell = self.grid.params(key)
            for f, score in enumerate(self._scores[key]):
                fold_scores.append(FoldScore(cell.lambda_, cell.mtry, cell.nodesize, f, score))
        return TuningResult(
            selected=self.grid.params(selected),
            cv_table={self.grid.params(key): self.mean(key) for key in evaluated},
            fold_scores=tuple(fold_scores),
            fold_count=self.k,
            seed=self.seed,
            n_evaluations=self.n_evaluations,
            excluded=tuple(self.grid.params(key) for key in sorted(self._errors)),
            method=self.method,
            search=search,
            model=model,
        )


def _refit_seed(grid: TuningGrid, seed: int, key: CellKey) -> int:
    return derive_seed(seed, REFIT_STREAM, grid.forest_cell(key[1], key[2]))


# ---------------------------------------------------------------------------
# Searches
# ---------------------------------------------------------------------------

def _rerf_validator(train, expansion, grid, k, seed, cv_n_trees, forest_on_expanded, n_jobs):
    return _CrossValidator('rerf', train, expansion, grid, k, seed, cv_n_trees, forest_on_expanded, n_jobs)


def _rerf_result(validator: _CrossValidator, train: DataMatrix, selected: CellKey, search: str,
                 n_trees: int, refit: bool, n_jobs: int) -> TuningResult:
    model = None
    cell = validator.grid.params(selected)
    if refit:
        model = fit_rerf(
            train, validator.expansion, cell.lambda_, cell.mtry, cell.nodesize,
            seed=_refit_seed(validator.grid, validator.seed, selected),
            n_trees=n_trees,
            forest_on_expanded=validator.forest_on_expanded,
            n_jobs=n_jobs,
        )
    result = validator.result(selected, search, model)
    logger.info(
        f"{search.capitalize()} search selected lambda={cell.lambda_:.6g}, mtry={cell.mtry}, "
        f"nodesize={cell.nodesize} (CV RMSE {result.best_cv_rmse:.6g}, "
        f"{result.n_evaluations} evaluations)"
    )
    return result


def grid_search(
    train: DataMatrix,
    expansion: FeatureExpansionSpec,
    grid: TuningGrid,
    k: int = DEFAULT_K_FOLDS,
    seed: int = 0,
    cv_n_trees: int = DEFAULT_CV_N_TREES,
    n_trees: int = DEFAULT_N_TREES,
    forest_on_expanded: bool = False,
    refit: bool = True,
    n_jobs: int = 1,
) -> TuningResult:
    """
    Exhaustive k-fold CV over every (lambda, mtry, nodesize) cell.

    Args:
        train: Training data only; validation rows must never reach here
        expansion: Terms appended before the Lasso
        grid: Candidate values
        k: Number of folds
        seed: Search seed (folds and forests)
        cv_n_trees: Trees per forest during CV
        n_trees: Trees in the refit forest
        forest_on_expanded: Grow forests on the expanded columns
        refit: Refit at the selected cell on all of `train`
        n_jobs: Parallel workers for the (cell, fold) fits

    Raises:
        TuningError: Invalid grid for the data, too few rows, or every cell failed
    """
    validator = _rerf_validator(train, expansion, grid, k, seed, cv_n_trees, forest_on_expanded, n_jobs)
    keys = [
        (li, mi, si)
        for li in range(len(grid.lambdas))
        for mi in range(len(grid.mtry_candidates))
        for si in range(len(grid.nodesize_candidates))
    ]
    logger.info(f"Grid search over {len(keys)} cells with {k} folds")
    validator.evaluate(keys)
    return _rerf_result(validator, train, validator.best(keys), SearchMethod.EXHAUSTIVE, n_trees, refit, n_jobs)


def approximate_search(
    train: DataMatrix,
    expansion: FeatureExpansionSpec,
    grid: TuningGrid,
    k: int = DEFAULT_K_FOLDS,
    seed: int = 0,
    cv_n_trees: int = DEFAULT_CV_N_TREES,
    n_trees: int = DEFAULT_N_TREES,
    forest_on_expanded: bool = False,
    refit: bool = True,
    n_jobs: int = 1,
) -> TuningResult:
    """
    Three-stage coordinate search: lambda at the default (mtry, nodesize),
    then (mtry, nodesize) at that lambda, then lambda again at the chosen
    (mtry, nodesize). Takes the same arguments as `grid_search`.
    """
    validator = _rerf_validator(train, expansion, grid, k, seed, cv_n_trees, forest_on_expanded, n_jobs)
    n_lambdas = len(grid.lambdas)
    mi, si = grid.stage_defaults()

    stage = [(li, mi, si) for li in range(n_lambdas)]
    validator.evaluate(stage)
    li = validator.best(stage)[0]
    logger.info(f"Stage 1 selected lambda={grid.lambdas[li]:.6g}")

    stage = [
        (li, m, s)
        for m in range(len(grid.mtry_candidates))
        for s in range(len(grid.nodesize_candidates))
    ]
    validator.evaluate(stage)
    _, mi, si = validator.best(stage)
    logger.info(f"Stage 2 selected mtry={grid.mtry_candidates[mi]}, nodesize={grid.nodesize_candidates[si]}")

    stage = [(index, mi, si) for index in range(n_lambdas)]
    validator.evaluate(stage)
    selected = validator.best(stage)

    return _rerf_result(validator, train, selected, SearchMethod.APPROXIMATE, n_trees, refit, n_jobs)


def search(
    method: str,
    train: DataMatrix,
    expansion: FeatureExpansionSpec,
    grid: TuningGrid,
    **kwargs: Any,
) -> TuningResult:
    """Dispatch to `grid_search` or `approximate_search` by name."""
    match method:
        case SearchMethod.EXHAUSTIVE:
            return grid_search(train, expansion, grid, **kwargs)
        case SearchMethod.APPROXIMATE:
            return approximate_search(train, expansion, grid, **kwargs)
        case _:
            raise TuningError(f"Invalid search '{method}'. Must be one of: {SearchMethod.values()}")


def tune_lasso(
    train: DataMatrix,
    expansion: FeatureExpansionSpec,
    grid: TuningGrid,
    k: int = DEFAULT_K_FOLDS,
    seed: int = 0,
    refit: bool = True,
) -> TuningResult:
    """Lasso-only CV over the penalty grid, one warm-started path per fold."""
    validator = _CrossValidator('lasso', train, expansion, grid, k, seed, DEFAULT_CV_N_TREES, False, 1)
    keys = [(li, -1, -1) for li in range(len(grid.lambdas))]
    validator.evaluate(keys)
    selected = validator.best(keys)

    model = None
    if refit:
        lambda_ = grid.lambdas[selected[0]]
        model = LassoModel(expansion, fit_lasso(expand_features(train, expansion), lambda_))
    result = validator.result(selected, SearchMethod.EXHAUSTIVE, model)
    logger.info(f"Lasso CV selected lambda={result.selected.lambda_:.6g}")
    return result


def tune_forest(
    train: DataMatrix,
    grid: TuningGrid,
    k: int = DEFAULT_K_FOLDS,
    seed: int = 0,
    cv_n_trees: int = DEFAULT_CV_N_TREES,
    n_trees: int = DEFAULT_N_TREES,
    refit: bool = True,
    n_jobs: int = 1,
) -> TuningResult:
    """Plain random forest CV over every (mtry, nodesize) pair."""
    validator = _CrossValidator('rf', train, FeatureExpansionSpec(), grid, k, seed, cv_n_trees, False, n_jobs)
    keys = [
        (-1, mi, si)
        for mi in range(len(grid.mtry_candidates))
        for si in range(len(grid.nodesize_candidates))
    ]
    validator.evaluate(keys)
    selected = validator.best(keys)

    model = None
    cell = grid.params(selected)
    if refit:
        params = ForestParams(n_trees=n_trees, mtry=cell.mtry, nodesize=cell.nodesize,
                              seed=_refit_seed(grid, seed, selected))
        model = fit_forest(train, params, n_jobs=n_jobs)
    result = validator.result(selected, SearchMethod.EXHAUSTIVE, model)
    logger.info(f"Forest CV selected mtry={cell.mtry}, nodesize={cell.nodesize}")
    return result
