"""
Tests for the benchmark runner.

Tests cover:
- Result records and summaries
- Unit seeds shared across methods
- End-to-end simulation and dataset experiments on tiny grids
- Byte-identical results across reruns, resume and worker counts
- Failure isolation per (unit, method)
- Pointwise error files
- Validation responses never reaching tuning
- Retried rows collapsing to one per (scenario, method, replicate); aborts in the manifest
- The concrete C/W column seen by every method
- Desk-scale study reruns (slow): scenario orderings, intro pointwise errors, concrete extrapolation splits

Usage:
    pytest src/rerf/tests/test_bench.py -v
    pytest src/rerf/tests/test_bench.py -v -m "not slow"
"""

import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from rerf.bench import (
    POINTWISE_DIRNAME,
    RESULT_COLUMNS,
    SUMMARY_FILENAME,
    Experiment,
    ResultRecord,
    Unit,
    run_experiment,
    summarize,
    tune_method,
    unit_seeds,
)
from rerf.checkpoint import FAILURES_FILENAME, MANIFEST_FILENAME, RESULTS_FILENAME, TIMINGS_FILENAME
from rerf.config import ExperimentConfig, ExperimentKind, Method
from rerf.dataset import CONCRETE_RATIO, SplitKind, SplitRule, TrainSide, concrete_split_rules, split, to_csv
from rerf.metrics import MetricError
from rerf.simgen import scenario
from rerf.tuning import SearchMethod
from rerf.utils.seeding import make_rng


def _simulation(tmp_workspace: Path, **overrides) -> ExperimentConfig:
    base = ExperimentConfig(
        name='tiny',
        kind=ExperimentKind.SIMULATION,
        methods=tuple(Method.values()),
        scenario=scenario('LxI', n_train=45, n_validation=20),
        replicates=2,
        k_folds=3,
        seed=5,
        output_dir=str(tmp_workspace / 'runs'),
        search=SearchMethod.APPROXIMATE,
        n_trees=6,
        cv_n_trees=4,
        lambdas=(0.01, 0.1),
        mtry=(1, 2),
        nodesize=(5,),
    )
    return replace(base, **overrides)


def _record(method: str, rmse: float, lambda_=None, scenario_label='LxI', replicate=0) -> ResultRecord:
    return ResultRecord('e', scenario_label, method, replicate, lambda_, None, None, 1.0, rmse, 10, 5)


class TestRecords:

    def test_negative_rmse_rejected(self):
        with pytest.raises(MetricError):
            _record('rf', -1.0)

    def test_row_round_trip_through_text(self):
        record = ResultRecord('e', 'LxI', 'rerf', 3, 0.125, 2, 5, 0.75, 0.5, 40, 10, wall_time=2.0)
        text_row = {key: ('' if value is None else str(value)) for key, value in record.to_row().items()}
        text_row['lambda'] = float(text_row['lambda'])
        assert ResultRecord.from_row(text_row, wall_time=2.0) == record

    def test_missing_parameters_read_back_as_none(self):
        row = _record('rf', 0.5).to_row()
        row['lambda'] = float('nan')
        restored = ResultRecord.from_row(row)
        assert restored.lambda_ is None

    def test_summary(self):
        records = [
            _record('rf', 1.0), _record('rf', 3.0, replicate=1), _record('rf', 2.0, replicate=2),
            _record('lasso', 0.5, lambda_=0.1), _record('lasso', 0.7, lambda_=0.3, replicate=1),
        ]
        summary = summarize(records).set_index('method')
        assert summary.loc['rf', 'median_rmse'] == 2.0
        assert summary.loc['rf', 'mean_rmse'] == 2.0
        assert summary.loc['rf', 'n'] == 3
        assert np.isnan(summary.loc['rf', 'median_lambda'])
        assert summary.loc['lasso', 'median_lambda'] == pytest.approx(0.2)

    def test_empty_summary(self):
        assert summarize([]).empty


class TestUnitSeeds:

    def test_distinct_per_unit(self):
        seeds = {unit_seeds(1, Unit(label_index, 'x', replicate))
                 for label_index in range(3) for replicate in range(4)}
        assert len(seeds) == 12
        data_seed, search_seed = unit_seeds(1, Unit(0, 'x', 0))
        assert data_seed != search_seed
        assert unit_seeds(1, Unit(0, 'x', 0)) == unit_seeds(1, Unit(0, 'renamed', 0))


class TestSimulationExperiment:
    """Small end-to-end runs."""

    def test_outputs(self, tmp_workspace):
        config = _simulation(tmp_workspace)
        experiment = Experiment(config)
        records = experiment.run()

        assert experiment.completed
        assert [(r.replicate, r.method) for r in records] == [
            (0, 'lasso'), (0, 'rf'), (0, 'rerf'), (1, 'lasso'), (1, 'rf'), (1, 'rerf'),
        ]
        root = experiment.run_dir
        assert root.name == f"tiny_{experiment.experiment_id}"

        results = pd.read_csv(root / RESULTS_FILENAME, dtype=str)
        assert list(results.columns) == RESULT_COLUMNS
        assert len(results) == 6
        assert 'wall_time' not in results.columns
        assert len(pd.read_csv(root / TIMINGS_FILENAME)) == 6
        assert (root / SUMMARY_FILENAME).exists()
        assert json.loads((root / FAILURES_FILENAME).read_text(encoding='utf-8')) == []

        manifest = json.loads((root / MANIFEST_FILENAME).read_text(encoding='utf-8'))
        assert manifest['experiment_id'] == experiment.experiment_id
        assert manifest['completed'] is True
        assert len(manifest['units']) == 2

        by_method = {r.method: r for r in records if r.replicate == 0}
        assert by_method['lasso'].mtry is None
        assert by_method['rf'].lambda_ is None
        assert by_method['rerf'].lambda_ in (0.01, 0.1)
        assert all(r.n_train == 45 and r.n_validation == 20 for r in records)

    def test_rerun_and_resume_are_byte_identical(self, tmp_workspace):
        config = _simulation(tmp_workspace)
        first = Experiment(config)
        first.run()
        path = first.run_dir / RESULTS_FILENAME
        original = path.read_bytes()

        resumed = Experiment(config, resume=True)
        resumed.run()
        assert path.read_bytes() == original

        fresh = Experiment(config, resume=False)
        fresh.run()
        assert path.read_bytes() == original

    def test_partial_run_resumes_missing_units(self, tmp_workspace):
        config = _simulation(tmp_workspace)
        full = Experiment(config, run_dir=tmp_workspace / 'full')
        full.run()

        partial = Experiment(config, run_dir=tmp_workspace / 'partial')
        partial.run()
        frame = pd.read_csv(tmp_workspace / 'partial' / RESULTS_FILENAME, dtype=str)
        frame[frame['replicate'] == '0'].to_csv(tmp_workspace / 'partial' / RESULTS_FILENAME, index=False)

        Experiment(config, run_dir=tmp_workspace / 'partial', resume=True).run()
        assert ((tmp_workspace / 'partial' / RESULTS_FILENAME).read_bytes()
                == (tmp_workspace / 'full' / RESULTS_FILENAME).read_bytes())

    def test_retried_rows_are_not_duplicated(self, tmp_workspace):
        config = _simulation(tmp_workspace, replicates=1)
        Experiment(config, run_dir=tmp_workspace / 'clean').run()
        expected = (tmp_workspace / 'clean' / RESULTS_FILENAME).read_bytes()

        # An earlier attempt kept only the lasso row; the retry appended all rows and stopped before the rewrite
        retried = tmp_workspace / 'retried'
        Experiment(config, run_dir=retried).run()
        frame = pd.read_csv(retried / RESULTS_FILENAME, dtype=str)
        pd.concat([frame[frame['method'] == 'lasso'], frame]).to_csv(retried / RESULTS_FILENAME, index=False)

        records = Experiment(config, run_dir=retried, resume=True).run()
        assert [r.method for r in records] == ['lasso', 'rf', 'rerf']
        assert (retried / RESULTS_FILENAME).read_bytes() == expected

    def test_abort_recorded_in_manifest(self, tmp_workspace, monkeypatch):
        config = _simulation(tmp_workspace, replicates=1)
        experiment = Experiment(config, run_dir=tmp_workspace / 'aborted')

        def interrupted(self):
            raise KeyboardInterrupt()

        with monkeypatch.context() as patch:
            patch.setattr(Experiment, 'load_dataset', interrupted)
            with pytest.raises(KeyboardInterrupt):
                experiment.run()
        manifest = json.loads((tmp_workspace / 'aborted' / MANIFEST_FILENAME).read_text(encoding='utf-8'))
        assert manifest['aborted'].startswith('KeyboardInterrupt')

        Experiment(config, run_dir=tmp_workspace / 'aborted', resume=True).run()
        manifest = json.loads((tmp_workspace / 'aborted' / MANIFEST_FILENAME).read_text(encoding='utf-8'))
        assert 'aborted' not in manifest
        assert manifest['completed'] is True

    @pytest.mark.slow
    def test_worker_count_does_not_change_results(self, tmp_workspace):
        serial = Experiment(_simulation(tmp_workspace, n_jobs=1), run_dir=tmp_workspace / 'serial')
        parallel = Experiment(_simulation(tmp_workspace, n_jobs=2), run_dir=tmp_workspace / 'parallel')
        serial.run()
        parallel.run()
        assert ((tmp_workspace / 'serial' / RESULTS_FILENAME).read_bytes()
                == (tmp_workspace / 'parallel' / RESULTS_FILENAME).read_bytes())

    def test_failures_are_isolated(self, tmp_workspace):
        config = _simulation(tmp_workspace, mtry=(50,), replicates=1)
        experiment = Experiment(config)
        records = experiment.run()

        assert not experiment.completed
        assert [r.method for r in records] == ['lasso']
        assert sorted(f['method'] for f in experiment.failures) == ['rerf', 'rf']
        failures = json.loads((experiment.run_dir / FAILURES_FILENAME).read_text(encoding='utf-8'))
        assert len(failures) == 2

    def test_pointwise_errors(self, tmp_workspace):
        config = _simulation(
            tmp_workspace, scenario=scenario('INTRO', n_train=45, n_validation=20),
            methods=(Method.RF, Method.RERF), replicates=1, pointwise_column='z',
        )
        experiment = Experiment(config, run_dir=tmp_workspace / 'intro')
        experiment.run()

        frame = pd.read_csv(tmp_workspace / 'intro' / POINTWISE_DIRNAME / 'INTRO_r0_rerf.csv')
        assert list(frame.columns) == ['z', 'error']
        assert len(frame) == 20


class TestDatasetExperiment:

    def test_threshold_and_random_splits(self, tmp_workspace, mixed_data):
        csv = to_csv(mixed_data, tmp_workspace / 'mixed.csv')
        config = ExperimentConfig(
            name='mixed',
            kind=ExperimentKind.DATASET,
            methods=(Method.LASSO, Method.RERF),
            csv=str(csv),
            response_column='y',
            splits=(
                SplitRule(SplitKind.RANDOM_FRACTION, fraction=0.75, label='R75'),
                SplitRule(SplitKind.FEATURE_THRESHOLD, threshold=0.8, column='u',
                          train_side=TrainSide.BELOW, label='U80'),
            ),
            replicates=2,
            k_folds=3,
            output_dir=str(tmp_workspace / 'runs'),
            n_trees=5,
            cv_n_trees=3,
            lambdas=(0.01, 0.1),
            mtry=(1,),
            nodesize=(5,),
        )
        records = run_experiment(config)

        assert len(records) == 2 * 2 * 2
        for record in records:
            assert record.n_train + record.n_validation == mixed_data.n_rows
        random_sizes = {r.n_train for r in records if r.scenario == 'R75'}
        assert random_sizes == {67}
        threshold = [r for r in records if r.scenario == 'U80']
        assert len({r.n_train for r in threshold}) == 1
        assert threshold[0].n_train == int((mixed_data.column('u') < 0.8).sum())

    def test_concrete_ratio_reaches_every_method(self, tmp_workspace):
        rng = make_rng(17)
        n = 90
        frame = pd.DataFrame({
            'cement': rng.uniform(150.0, 450.0, n),
            'slag': rng.uniform(0.0, 200.0, n),
            'fly_ash': rng.uniform(0.0, 150.0, n),
            'water': rng.uniform(140.0, 230.0, n),
            'superplasticizer': rng.uniform(0.0, 20.0, n),
            'coarse_aggregate': rng.uniform(850.0, 1100.0, n),
            'fine_aggregate': rng.uniform(600.0, 900.0, n),
            'age': rng.integers(1, 365, n).astype(float),
        })
        frame['strength'] = 15.0 * frame['cement'] / frame['water'] + rng.normal(0.0, 1.0, n)
        csv = tmp_workspace / 'concrete.csv'
        frame.to_csv(csv, index=False)

        config = ExperimentConfig(
            name='concrete',
            kind=ExperimentKind.DATASET,
            methods=tuple(Method.values()),
            csv=str(csv),
            preset='concrete',
            response_column='strength',
            splits=(concrete_split_rules()['EXT3'],),
            replicates=1,
            k_folds=3,
            n_trees=4,
            cv_n_trees=3,
            lambdas=(0.01, 0.1),
            nodesize=(5,),
        )
        experiment = Experiment(config, run_dir=tmp_workspace / 'concrete')
        data = experiment.load_dataset()
        assert data.n_columns == 9
        assert data.column_names[-1] == CONCRETE_RATIO

        grid = config.grid(data.n_columns)
        assert grid.mtry_candidates == (1, 3, 6)

        train, _ = split(data, config.splits[0])
        forest = tune_method(Method.RF, train, config, grid, seed=3).model
        assert CONCRETE_RATIO in forest.column_names
        rerf_model = tune_method(Method.RERF, train, config, grid, seed=3).model
        assert CONCRETE_RATIO in rerf_model.forest.column_names

    def test_validation_responses_do_not_affect_tuning(self, tmp_workspace, mixed_data):
        held_out = np.flatnonzero(mixed_data.column('u') >= 0.8)
        shuffled_y = mixed_data.response.copy()
        shuffled_y[held_out] = shuffled_y[held_out[::-1]] + 10.0
        shuffled = mixed_data.with_response(shuffled_y)

        selections = []
        for name, data in (('original', mixed_data), ('shuffled', shuffled)):
            config = ExperimentConfig(
                name=name,
                kind=ExperimentKind.DATASET,
                methods=tuple(Method.values()),
                csv=str(to_csv(data, tmp_workspace / f"{name}.csv")),
                response_column='y',
                splits=(SplitRule(SplitKind.FEATURE_THRESHOLD, threshold=0.8, column='u',
                                  train_side=TrainSide.BELOW, label='U80'),),
                replicates=1,
                k_folds=3,
                n_trees=5,
                cv_n_trees=3,
                lambdas=(0.01, 0.1, 1.0),
                mtry=(1, 2),
                nodesize=(5,),
            )
            records = run_experiment(config, run_dir=tmp_workspace / name)
            selections.append([(r.method, r.lambda_, r.mtry, r.nodesize, r.cv_rmse) for r in records])

        assert len(selections[0]) == 3
        assert selections[0] == selections[1]


STUDY_LAMBDAS = tuple(float(v) for v in np.geomspace(0.001, 100.0, 15))


def _study(tmp_workspace: Path, label: str, **overrides) -> ExperimentConfig:
    settings = dict(
        name=label,
        scenario=scenario(label, n_train=500, n_validation=100),
        replicates=50,
        k_folds=5,
        n_trees=100,
        cv_n_trees=20,
        lambdas=STUDY_LAMBDAS,
        mtry=None,
        nodesize=None,
        n_jobs=-1,
    )
    return _simulation(tmp_workspace, **{**settings, **overrides})


@pytest.mark.slow
class TestStudyReproduction:
    """Desk-scale reruns of the simulation and concrete studies."""

    @pytest.mark.parametrize('label', ['LxI', 'PxI', 'NxI', 'LxE', 'PxE', 'NxE'])
    def test_scenario_ordering(self, tmp_workspace, label):
        medians = summarize(run_experiment(_study(tmp_workspace, label))).set_index('method')['median_rmse']

        assert medians['rerf'] < medians['rf']
        if label.endswith('E'):
            assert medians['rf'] / medians['rerf'] > 1.15
        if label.startswith('L'):
            assert abs(medians['rerf'] - medians['lasso']) <= 0.1 * medians['lasso']

    def test_intro_errors_grow_only_for_the_forest(self, tmp_workspace):
        config = _study(
            tmp_workspace, 'INTRO', scenario=scenario('INTRO', n_train=600, n_validation=300),
            methods=(Method.RF, Method.RERF), replicates=10, pointwise_column='z',
        )
        experiment = Experiment(config)
        experiment.run()

        ratios = {}
        for method in ('rf', 'rerf'):
            frame = pd.concat(
                pd.read_csv(experiment.run_dir / POINTWISE_DIRNAME / f"INTRO_r{replicate}_{method}.csv")
                for replicate in range(config.replicates)
            )
            error = frame['error'].abs()
            ratios[method] = error[frame['z'] > 0.8].mean() / error[frame['z'] <= 0.8].mean()

        assert ratios['rf'] >= 1.5
        assert ratios['rerf'] < 1.5

    @pytest.mark.skipif(not os.environ.get('RERF_CONCRETE_CSV'), reason="RERF_CONCRETE_CSV not set")
    def test_concrete_extrapolation_splits(self, tmp_workspace):
        rules = concrete_split_rules()
        config = ExperimentConfig(
            name='concrete',
            kind=ExperimentKind.DATASET,
            methods=(Method.RF, Method.RERF),
            csv=os.environ['RERF_CONCRETE_CSV'],
            preset='concrete',
            response_column='strength',
            splits=(rules['EXT3'], rules['EXT4']),
            replicates=50,
            k_folds=5,
            seed=1,
            output_dir=str(tmp_workspace / 'runs'),
            search=SearchMethod.APPROXIMATE,
            n_trees=100,
            cv_n_trees=20,
            lambdas=STUDY_LAMBDAS,
            n_jobs=-1,
        )
        medians = summarize(run_experiment(config)).set_index(['scenario', 'method'])['median_rmse']

        for label in ('EXT3', 'EXT4'):
            assert medians[(label, 'rerf')] < medians[(label, 'rf')]


if __name__ == "__main__":
    from .base import run_tests_with_report
    sys.exit(run_tests_with_report(__file__, 'bench'))
