"""
Benchmark runner: Lasso, random forest and RERF compared on simulated
scenarios or on splits of a tabular dataset.

Each (scenario, replicate) pair is one unit of work. Within a unit every
method is tuned by cross-validation on the training partition only, refit at
its selected parameters and scored on the validation partition. Units are
independent and may run in parallel; their records are written in unit order
so reruns produce byte-identical result files.
"""

import logging
import math
import pathlib
import time
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import joblib
import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from . import __version__
from .checkpoint import RunCheckpoint
from .config import ExperimentConfig, ExperimentKind, Method
from .dataset import (
    DataMatrix,
    SplitKind,
    SplitRule,
    exclude_columns,
    expand_features,
    load_csv,
    normalize_concrete_column,
    split_indices,
    with_concrete_ratio,
)
from .metrics import MetricError, rmse
from .model import FittedModel, predict
from .simgen import generate
from .tuning import TuningGrid, TuningResult, search, tune_forest, tune_lasso
from .utils.error_handler import capture_errors
from .utils.seeding import derive_seed, resolve_n_jobs
from .utils.unique_id import experiment_id


logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    'experiment_id', 'scenario', 'method', 'replicate',
    'lambda', 'mtry', 'nodesize', 'cv_rmse', 'rmse', 'n_train', 'n_validation',
]
TIMING_COLUMNS = ['experiment_id', 'scenario', 'method', 'replicate', 'wall_time']
SUMMARY_FILENAME = 'summary.csv'
POINTWISE_DIRNAME = 'pointwise'

DATA_STREAM = 0
SEARCH_STREAM = 1


@dataclass(frozen=True)
class ResultRecord:
    experiment_id: str
    scenario: str
    method: str
    replicate: int
    lambda_: Optional[float]
    mtry: Optional[int]
    nodesize: Optional[int]
    cv_rmse: float
    rmse: float
    n_train: int
    n_validation: int
    wall_time: float = 0.0

    def __post_init__(self) -> None:
        if not self.rmse >= 0.0:
            raise MetricError(f"RMSE must be non-negative, got {self.rmse}")

    @property
    def unit(self) -> Tuple[str, int]:
        return self.scenario, self.replicate

    def to_row(self) -> Dict[str, Any]:
        return {
            'experiment_id': self.experiment_id,
            'scenario': self.scenario,
            'method': self.method,
            'replicate': self.replicate,
            'lambda': self.lambda_,
            'mtry': self.mtry,
            'nodesize': self.nodesize,
            'cv_rmse': self.cv_rmse,
            'rmse': self.rmse,
            'n_train': self.n_train,
            'n_validation': self.n_validation,
        }

    def timing_row(self) -> Dict[str, Any]:
        return {
            'experiment_id': self.experiment_id,
            'scenario': self.scenario,
            'method': self.method,
            'replicate': self.replicate,
            'wall_time': self.wall_time,
        }

    @classmethod
    def from_row(cls, row: Dict[str, Any], wall_time: float = 0.0) -> "ResultRecord":
        def optional(value: Any, cast):
            if value is None or (isinstance(value, float) and math.isnan(value)):
                return None
            return cast(value)

        return cls(
            experiment_id=str(row['experiment_id']),
            scenario=str(row['scenario']),
            method=str(row['method']),
            replicate=int(row['replicate']),
            lambda_=optional(row['lambda'], float),
            mtry=optional(row['mtry'], int),
            nodesize=optional(row['nodesize'], int),
            cv_rmse=float(row['cv_rmse']),
            rmse=float(row['rmse']),
            n_train=int(row['n_train']),
            n_validation=int(row['n_validation']),
            wall_time=wall_time,
        )


@dataclass(frozen=True)
class Unit:
    label_index: int
    label: str
    replicate: int

    @property
    def key(self) -> Tuple[str, int]:
        return self.label, self.replicate


@dataclass
class UnitOutcome:
    unit: Unit
    records: List[ResultRecord] = field(default_factory=list)
    failures: List[Dict[str, Any]] = field(default_factory=list)
    pointwise: Dict[str, pd.DataFrame] = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return not self.failures


def unit_seeds(seed: int, unit: Unit) -> Tuple[int, int]:
    """(data seed, search seed) of a unit. The search seed is shared by every method."""
    return (
        derive_seed(seed, DATA_STREAM, unit.label_index, unit.replicate),
        derive_seed(seed, SEARCH_STREAM, unit.label_index, unit.replicate),
    )


def pointwise_errors(model: FittedModel, validation: DataMatrix, focus_column: str) -> pd.DataFrame:
    """
    One row per validation point: the focus predictor's value and y - y_hat.

    Raises:
        DatasetError: Unknown column or no response
    """
    focus = validation.column(focus_column)
    errors = validation.require_response() - predict(model, validation)
    return pd.DataFrame({focus_column: focus, 'error': errors})


def summarize(records: Sequence[ResultRecord]) -> pd.DataFrame:
    """Median and mean validation RMSE and median selected lambda per (scenario, method)."""
    columns = ['scenario', 'method', 'n', 'median_rmse', 'mean_rmse', 'median_lambda']
    if not records:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame([
        {'scenario': r.scenario, 'method': r.method, 'rmse': r.rmse,
         'lambda': np.nan if r.lambda_ is None else r.lambda_}
        for r in records
    ])
    grouped = frame.groupby(['scenario', 'method'], sort=False)
    summary = grouped.agg(
        n=('rmse', 'size'),
        median_rmse=('rmse', 'median'),
        mean_rmse=('rmse', 'mean'),
        median_lambda=('lambda', 'median'),
    ).reset_index()
    return summary[columns]


# ---------------------------------------------------------------------------
# One unit of work
# ---------------------------------------------------------------------------

def _split_rows(data: DataMatrix, rule: SplitRule, config: ExperimentConfig) -> Tuple[DataMatrix, DataMatrix]:
    source = data
    if rule.column is not None and rule.column not in data.column_names:
        # Split column is a generated term such as a ratio
        source = expand_features(data, config.expansion)
    train_rows, validation_rows = split_indices(source, rule)
    return data.select_rows(train_rows), data.select_rows(validation_rows)


def _unit_data(config: ExperimentConfig, dataset: Optional[DataMatrix], unit: Unit,
               data_seed: int) -> Tuple[DataMatrix, DataMatrix]:
    match config.kind:
        case ExperimentKind.SIMULATION:
            return generate(replace(config.scenario, seed=data_seed))
        case ExperimentKind.DATASET:
            rule = config.splits[unit.label_index]
            if rule.kind == SplitKind.RANDOM_FRACTION:
                rule = replace(rule, seed=data_seed)
            return _split_rows(dataset, rule, config)
    raise ValueError(f"Invalid kind '{config.kind}'")


def tune_method(method: str, train: DataMatrix, config: ExperimentConfig, grid: TuningGrid,
                seed: int, n_jobs: int = 1) -> TuningResult:
    """Tune one method on training data and refit it at the selected parameters."""
    match method:
        case Method.LASSO:
            return tune_lasso(train, config.expansion, grid, k=config.k_folds, seed=seed)
        case Method.RF:
            return tune_forest(train, grid, k=config.k_folds, seed=seed, cv_n_trees=config.cv_n_trees,
                               n_trees=config.n_trees, n_jobs=n_jobs)
        case Method.RERF:
            return search(config.search, train, config.expansion, grid, k=config.k_folds, seed=seed,
                          cv_n_trees=config.cv_n_trees, n_trees=config.n_trees,
                          forest_on_expanded=config.forest_on_expanded, n_jobs=n_jobs)
    raise ValueError(f"Unknown method '{method}'")


def run_unit(config: ExperimentConfig, dataset: Optional[DataMatrix], unit: Unit,
             experiment: str, n_jobs: int = 1) -> UnitOutcome:
    outcome = UnitOutcome(unit)
    data_seed, search_seed = unit_seeds(config.seed, unit)
    label = f"{unit.label} replicate {unit.replicate}"

    with capture_errors(logger, label=label) as captured:
        train, validation = _unit_data(config, dataset, unit, data_seed)
        grid = config.grid(train.n_columns)
    if captured.failed:
        outcome.failures.append({'scenario': unit.label, 'replicate': unit.replicate,
                                 'method': None, 'error': captured.message})
        return outcome

    for method in config.methods:
        with capture_errors(logger, label=f"{label} {method}") as captured:
            started = time.perf_counter()
            result = tune_method(method, train, config, grid, search_seed, n_jobs)
            score = rmse(predict(result.model, validation), validation.response)
            outcome.records.append(ResultRecord(
                experiment_id=experiment,
                scenario=unit.label,
                method=method,
                replicate=unit.replicate,
                lambda_=result.selected.lambda_,
                mtry=result.selected.mtry,
                nodesize=result.selected.nodesize,
                cv_rmse=result.best_cv_rmse,
                rmse=score,
                n_train=train.n_rows,
                n_validation=validation.n_rows,
                wall_time=time.perf_counter() - started,
            ))
            if config.pointwise_column:
                outcome.pointwise[method] = pointwise_errors(result.model, validation, config.pointwise_column)
        if captured.failed:
            outcome.failures.append({'scenario': unit.label, 'replicate': unit.replicate,
                                     'method': method, 'error': captured.message})
    return outcome


# ---------------------------------------------------------------------------
# Experiment
# ---------------------------------------------------------------------------

def package_versions() -> Dict[str, str]:
    return {
        'rerf': __version__,
        'numpy': np.__version__,
        'pandas': pd.__version__,
        'joblib': joblib.__version__,
    }


class Experiment:
    """
    Runs every unit of an ExperimentConfig into a resumable run directory.

    Args:
        config: Validated experiment config
        logger: Logger for progress; defaults to this module's logger
        resume: Keep completed units found in the run directory
        run_dir: Run directory; defaults to <output_dir>/<name>_<experiment id>
    """

    def __init__(
        self,
        config: ExperimentConfig,
        logger: Optional[logging.Logger] = None,
        resume: bool = True,
        run_dir: Union[str, pathlib.Path, None] = None,
    ):
        self.config = config
        self.logger = logger or logging.getLogger(__name__)
        self.resume = resume
        self.experiment_id = experiment_id(config.to_dict())
        self.run_dir = pathlib.Path(run_dir) if run_dir else (
            pathlib.Path(config.output_dir) / f"{config.name}_{self.experiment_id}"
        )
        self.records: List[ResultRecord] = []
        self.failures: List[Dict[str, Any]] = []
        self.checkpoint: Optional[RunCheckpoint] = None

    @property
    def completed(self) -> bool:
        return self.checkpoint is not None and not self.failures

    def units(self) -> List[Unit]:
        return [
            Unit(label_index, label, replicate)
            for label_index, label in enumerate(self.config.labels)
            for replicate in range(self.config.replicates)
        ]

    def load_dataset(self) -> Optional[DataMatrix]:
        if self.config.kind != ExperimentKind.DATASET:
            return None
        if self.config.preset == 'concrete':
            data = with_concrete_ratio(
                load_csv(self.config.csv, self.config.response_column, column_renamer=normalize_concrete_column)
            )
        else:
            data = load_csv(self.config.csv, self.config.response_column)
        if self.config.exclude_columns:
            data = exclude_columns(data, self.config.exclude_columns)
        self.logger.info(f"Loaded {data.n_rows} rows x {data.n_columns} columns from {self.config.csv}")
        return data

    def _completed_units(self, checkpoint: RunCheckpoint) -> Dict[Tuple[str, int], List[ResultRecord]]:
        results = checkpoint.results.read()
        timings = checkpoint.timings.read()
        wall = {
            (str(r['scenario']), str(r['method']), int(r['replicate'])): float(r['wall_time'])
            for r in timings.to_dict('records')
        }
        # Retries append; the latest row of a (scenario, method, replicate) wins
        latest: Dict[Tuple[str, str, int], ResultRecord] = {}
        for row in results.to_dict('records'):
            if str(row['experiment_id']) != self.experiment_id:
                continue
            key = (str(row['scenario']), str(row['method']), int(row['replicate']))
            latest[key] = ResultRecord.from_row(row, wall_time=wall.get(key, 0.0))

        order = {method: index for index, method in enumerate(self.config.methods)}
        by_unit: Dict[Tuple[str, int], List[ResultRecord]] = {}
        for record in latest.values():
            if record.method in order:
                by_unit.setdefault(record.unit, []).append(record)

        return {
            unit: sorted(records, key=lambda r: order[r.method])
            for unit, records in by_unit.items()
            if len(records) == len(order)
        }

    def _outcomes(self, dataset: Optional[DataMatrix], pending: List[Unit], n_jobs: int) -> Iterator[UnitOutcome]:
        if n_jobs == 1 or len(pending) < 2:
            for unit in pending:
                yield run_unit(self.config, dataset, unit, self.experiment_id, n_jobs)
            return
        yield from Parallel(n_jobs=n_jobs, return_as='generator')(
            delayed(run_unit)(self.config, dataset, unit, self.experiment_id, 1) for unit in pending
        )

    def _write_pointwise(self, outcome: UnitOutcome) -> None:
        directory = self.run_dir / POINTWISE_DIRNAME
        directory.mkdir(parents=True, exist_ok=True)
        for method, frame in outcome.pointwise.items():
            name = f"{outcome.unit.label}_r{outcome.unit.replicate}_{method}.csv"
            frame.to_csv(directory / name, index=False, float_format='%.17g')

    def open_checkpoint(self) -> RunCheckpoint:
        """Create (or, without resume, wipe and recreate) the run directory."""
        if self.checkpoint is None:
            self.checkpoint = RunCheckpoint(
                self.run_dir, RESULT_COLUMNS, TIMING_COLUMNS, resume=self.resume, logger=self.logger,
            )
        return self.checkpoint

    def run(self) -> List[ResultRecord]:
        """Run pending units; an exception escaping the run is recorded in the manifest."""
        n_jobs = resolve_n_jobs(self.config.n_jobs)
        checkpoint = self.open_checkpoint()
        checkpoint.logger = self.logger
        units = self.units()

        checkpoint.bind(self.experiment_id, {
            'config': self.config.to_dict(),
            'versions': package_versions(),
            'n_jobs': n_jobs,
            'units': [
                {'scenario': u.label, 'replicate': u.replicate,
                 'data_seed': unit_seeds(self.config.seed, u)[0],
                 'search_seed': unit_seeds(self.config.seed, u)[1]}
                for u in units
            ],
        })

        with checkpoint:
            return self._run_units(checkpoint, units, n_jobs)

    def _run_units(self, checkpoint: RunCheckpoint, units: List[Unit], n_jobs: int) -> List[ResultRecord]:
        dataset = self.load_dataset()
        done = self._completed_units(checkpoint) if self.resume else {}
        if done:
            self.logger.info(f"Resuming: {len(done)} of {len(units)} units already complete")
        pending = [u for u in units if u.key not in done]

        collected: Dict[Tuple[str, int], List[ResultRecord]] = dict(done)
        self.failures = []
        for outcome in self._outcomes(dataset, pending, n_jobs):
            unit = outcome.unit
            collected[unit.key] = outcome.records
            checkpoint.punch_records(
                [r.to_row() for r in outcome.records],
                [r.timing_row() for r in outcome.records],
            )
            if outcome.pointwise:
                self._write_pointwise(outcome)
            for failure in outcome.failures:
                self.failures.append(failure)
                checkpoint.punch_failure(failure)
            if outcome.completed:
                scores = ', '.join(f"{r.method}={r.rmse:.4f}" for r in outcome.records)
                self.logger.info(f"{unit.label} replicate {unit.replicate} done: {scores}")
            else:
                self.logger.error(f"{unit.label} replicate {unit.replicate} failed for "
                                  f"{[f['method'] for f in outcome.failures]}")

        self.records = [r for u in units for r in collected.get(u.key, [])]
        checkpoint.results.rewrite([r.to_row() for r in self.records])
        checkpoint.timings.rewrite([r.timing_row() for r in self.records])
        summarize(self.records).to_csv(self.run_dir / SUMMARY_FILENAME, index=False, float_format='%.17g')
        checkpoint.manifest.context.pop('aborted', None)
        checkpoint.manifest.punch({'completed': not self.failures, 'n_failures': len(self.failures)})
        return self.records


def run_experiment(
    config: ExperimentConfig,
    logger: Optional[logging.Logger] = None,
    resume: bool = True,
    run_dir: Union[str, pathlib.Path, None] = None,
) -> List[ResultRecord]:
    """Run every replicate of `config`; see `Experiment`."""
    return Experiment(config, logger=logger, resume=resume, run_dir=run_dir).run()
