"""
Unit tests for the tabular data layer.

Tests cover:
- DataMatrix validation (shapes, duplicate names, non-finite values)
- CSV loading with row dropping and header normalization
- Feature expansion order and values, including ratio guards
- Standardization of regular and constant columns
- Threshold, band-complement and random-fraction splits
- The concrete cement-to-water column

Usage:
    pytest src/rerf/tests/test_dataset.py -v
"""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from rerf.dataset import (
    CONCRETE_RATIO,
    CONCRETE_SPLIT_SIZES,
    DataMatrix,
    DatasetError,
    FeatureExpansionSpec,
    SplitKind,
    SplitRule,
    TrainSide,
    concrete_split_rules,
    exclude_columns,
    expand_features,
    load_concrete_csv,
    load_csv,
    normalize_concrete_column,
    split,
    split_indices,
    standardize,
    to_csv,
    unstandardize,
    with_concrete_ratio,
)


def _matrix(n: int = 10) -> DataMatrix:
    X = np.column_stack([np.arange(n, dtype=float), np.arange(n, dtype=float) * 2 + 1])
    return DataMatrix(X, ('a', 'b'), np.arange(n, dtype=float) * 10, 'y')


class TestDataMatrix:
    """Construction-time validation."""

    def test_duplicate_names_rejected(self):
        with pytest.raises(DatasetError, match="Duplicate"):
            DataMatrix(np.zeros((2, 2)), ('a', 'a'))

    def test_name_count_must_match_columns(self):
        with pytest.raises(DatasetError):
            DataMatrix(np.zeros((2, 2)), ('a',))

    def test_non_finite_features_rejected(self):
        with pytest.raises(DatasetError, match="non-finite"):
            DataMatrix(np.array([[1.0], [np.nan]]), ('a',))

    def test_response_length_checked(self):
        with pytest.raises(DatasetError, match="Response length"):
            DataMatrix(np.zeros((3, 1)), ('a',), np.zeros(2))

    def test_arrays_are_read_only_copies(self):
        X = np.zeros((2, 1))
        data = DataMatrix(X, ('a',), np.zeros(2))
        X[0, 0] = 5.0
        assert data.features[0, 0] == 0.0
        with pytest.raises(ValueError):
            data.features[0, 0] = 1.0

    def test_require_response(self):
        data = DataMatrix(np.zeros((2, 1)), ('a',))
        with pytest.raises(DatasetError, match="response"):
            data.require_response()

    def test_select_rows_and_columns(self):
        data = _matrix()
        rows = data.select_rows([3, 1])
        assert rows.features[:, 0].tolist() == [3.0, 1.0]
        assert rows.response.tolist() == [30.0, 10.0]
        assert data.select_columns(['b']).column_names == ('b',)

    def test_unknown_column(self):
        with pytest.raises(DatasetError, match="Unknown column 'zz'"):
            _matrix().column('zz')


class TestLoadCsv:
    """CSV loading."""

    def test_drops_incomplete_rows(self, tmp_workspace):
        path = tmp_workspace / 'data.csv'
        path.write_text("a,b,y\n1,2,3\n4,,6\n7,x,9\n10,11,12\n", encoding='utf-8')

        data = load_csv(path, 'y')

        assert data.n_rows == 2
        assert data.n_dropped == 2
        assert data.column_names == ('a', 'b')
        assert data.response.tolist() == [3.0, 12.0]

    def test_missing_response_column(self, tmp_workspace):
        path = tmp_workspace / 'data.csv'
        path.write_text("a,b\n1,2\n", encoding='utf-8')
        with pytest.raises(DatasetError, match="Response column 'y'"):
            load_csv(path, 'y')

    def test_missing_file(self, tmp_workspace):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_workspace / 'nope.csv', 'y')

    def test_no_usable_rows(self, tmp_workspace):
        path = tmp_workspace / 'data.csv'
        path.write_text("a,y\n,1\nx,2\n", encoding='utf-8')
        with pytest.raises(DatasetError, match="No usable rows"):
            load_csv(path, 'y')

    def test_written_file_loads_back_exactly(self, tmp_workspace, linear_data):
        path = to_csv(linear_data, tmp_workspace / 'out' / 'linear.csv')
        loaded = load_csv(path, 'y')
        assert loaded.column_names == linear_data.column_names
        np.testing.assert_array_equal(loaded.features, linear_data.features)
        np.testing.assert_array_equal(loaded.response, linear_data.response)

    def test_concrete_headers_normalized(self):
        headers = {
            'Cement (component 1)(kg in a m^3 mixture)': 'cement',
            'Blast Furnace Slag (component 2)(kg in a m^3 mixture)': 'slag',
            'Fly Ash (component 3)(kg in a m^3 mixture)': 'fly_ash',
            'Water  (component 4)(kg in a m^3 mixture)': 'water',
            'Superplasticizer (component 5)(kg in a m^3 mixture)': 'superplasticizer',
            'Coarse Aggregate  (component 6)(kg in a m^3 mixture)': 'coarse_aggregate',
            'Fine Aggregate (component 7)(kg in a m^3 mixture)': 'fine_aggregate',
            'Age (day)': 'age',
            'Concrete compressive strength(MPa, megapascals) ': 'strength',
            'csMPa': 'strength',
        }
        for header, short in headers.items():
            assert normalize_concrete_column(header) == short


class TestFeatureExpansion:
    """Parametric term generation."""

    def test_order_and_values(self):
        data = _matrix(4)
        spec = FeatureExpansionSpec(
            quadratic_columns=('a',),
            interaction_pairs=(('a', 'b'),),
            custom_ratios=(('a', 'b'),),
        )
        expanded = expand_features(data, spec)

        assert expanded.column_names == ('a', 'b', 'a^2', 'a*b', 'a/b')
        a, b = data.column('a'), data.column('b')
        np.testing.assert_array_equal(expanded.column('a^2'), a * a)
        np.testing.assert_array_equal(expanded.column('a*b'), a * b)
        np.testing.assert_array_equal(expanded.column('a/b'), a / b)
        np.testing.assert_array_equal(expanded.response, data.response)

    def test_empty_spec_is_identity(self):
        data = _matrix()
        assert expand_features(data, FeatureExpansionSpec()) is data

    def test_zero_denominator(self):
        data = _matrix()
        with pytest.raises(DatasetError, match="Zero denominator"):
            expand_features(data, FeatureExpansionSpec(custom_ratios=(('b', 'a'),)))

    def test_unknown_column(self):
        with pytest.raises(DatasetError, match="Unknown column"):
            expand_features(_matrix(), FeatureExpansionSpec(quadratic_columns=('q',)))

    def test_config_shorthand(self):
        spec = FeatureExpansionSpec.from_dict({'ratios': ['cement/water'], 'interactions': ['a*b']})
        assert spec.custom_ratios == (('cement', 'water'),)
        assert spec.interaction_pairs == (('a', 'b'),)
        assert FeatureExpansionSpec.from_dict(spec.to_dict()) == spec

    def test_unknown_key(self):
        with pytest.raises(DatasetError, match="Unknown expansion keys"):
            FeatureExpansionSpec.from_dict({'cubic': ['a']})

    def test_exclude_columns(self):
        assert exclude_columns(_matrix(), ['a']).column_names == ('b',)
        with pytest.raises(DatasetError):
            exclude_columns(_matrix(), ['zz'])


class TestStandardize:
    """Centering and scaling."""

    def test_zero_mean_unit_population_sd(self, linear_data):
        standardized, centers, scales = standardize(linear_data)
        np.testing.assert_allclose(standardized.features.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(standardized.features.std(axis=0), 1.0, rtol=1e-12)
        np.testing.assert_allclose(
            unstandardize(standardized.features, centers, scales), linear_data.features, atol=1e-12,
        )

    def test_constant_column(self):
        data = DataMatrix(np.array([[1.0, 7.0], [2.0, 7.0], [3.0, 7.0]]), ('a', 'k'))
        standardized, centers, scales = standardize(data)
        assert scales[1] == 0.0
        assert standardized.column('k').tolist() == [0.0, 0.0, 0.0]
        assert unstandardize(standardized.features, centers, scales)[:, 1].tolist() == [7.0, 7.0, 7.0]


class TestSplit:
    """Train/validation partitions."""

    def test_response_threshold_trains_strictly_above(self):
        data = _matrix()
        rule = SplitRule(SplitKind.RESPONSE_THRESHOLD, threshold=40.0, train_side=TrainSide.ABOVE)
        train, validation = split_indices(data, rule)
        assert train.tolist() == [5, 6, 7, 8, 9]
        assert validation.tolist() == [0, 1, 2, 3, 4]

    def test_band_complement(self):
        data = _matrix()
        rule = SplitRule(SplitKind.RESPONSE_BAND_COMPLEMENT, lower=20.0, upper=50.0)
        train, validation = split_indices(data, rule)
        assert validation.tolist() == [2, 3, 4, 5]
        assert train.tolist() == [0, 1, 6, 7, 8, 9]

    def test_feature_threshold_below(self):
        data = _matrix()
        rule = SplitRule(SplitKind.FEATURE_THRESHOLD, threshold=3.0, column='a', train_side=TrainSide.BELOW)
        train, validation = split_indices(data, rule)
        assert train.tolist() == [0, 1, 2]
        assert len(validation) == 7

    def test_random_fraction_size_and_seed(self):
        data = _matrix(40)
        rule = SplitRule(SplitKind.RANDOM_FRACTION, fraction=0.75, seed=3)
        train, validation = split_indices(data, rule)
        assert len(train) == 30 and len(validation) == 10
        assert sorted(train.tolist() + validation.tolist()) == list(range(40))
        again, _ = split_indices(data, rule)
        np.testing.assert_array_equal(train, again)

    def test_empty_partition_rejected(self):
        rule = SplitRule(SplitKind.RESPONSE_THRESHOLD, threshold=1000.0, label='none')
        with pytest.raises(DatasetError, match="training partition empty"):
            split(_matrix(), rule)

    def test_invalid_rules(self):
        with pytest.raises(DatasetError):
            SplitRule(SplitKind.RANDOM_FRACTION, fraction=1.5)
        with pytest.raises(DatasetError):
            SplitRule(SplitKind.FEATURE_THRESHOLD, threshold=1.0)
        with pytest.raises(DatasetError):
            SplitRule(SplitKind.RESPONSE_BAND_COMPLEMENT, lower=3.0, upper=1.0)
        with pytest.raises(DatasetError):
            SplitRule('sideways')

    def test_rule_dict_round_trip(self):
        for rule in concrete_split_rules(seed=5).values():
            assert SplitRule.from_dict(rule.to_dict()) == rule


class TestConcreteRatio:

    def test_ratio_appended_once(self):
        X = np.array([[300.0, 150.0, 28.0], [450.0, 180.0, 7.0]])
        data = DataMatrix(X, ('cement', 'water', 'age'), np.array([40.0, 55.0]), 'strength')

        with_ratio = with_concrete_ratio(data)
        assert with_ratio.column_names == ('cement', 'water', 'age', CONCRETE_RATIO)
        np.testing.assert_allclose(with_ratio.column(CONCRETE_RATIO), [2.0, 2.5])
        assert with_concrete_ratio(with_ratio) is with_ratio

    def test_loader_adds_ratio(self, tmp_workspace):
        path = tmp_workspace / 'concrete.csv'
        path.write_text(
            "Cement (component 1)(kg in a m^3 mixture),Water  (component 4)(kg in a m^3 mixture),csMPa\n"
            "300,150,40\n450,180,55\n",
            encoding='utf-8',
        )
        data = load_concrete_csv(path)
        assert data.column_names == ('cement', 'water', CONCRETE_RATIO)
        assert data.response_name == 'strength'


class TestConcreteSplits:
    """Published partition sizes; needs the real data file."""

    @pytest.mark.skipif(not os.environ.get('RERF_CONCRETE_CSV'), reason="RERF_CONCRETE_CSV not set")
    def test_split_sizes(self):
        data = load_concrete_csv(os.environ['RERF_CONCRETE_CSV'])
        assert data.n_rows == 1030
        assert data.n_columns == 9
        for label, rule in concrete_split_rules(seed=0).items():
            train, validation = split_indices(data, rule)
            assert (len(train), len(validation)) == CONCRETE_SPLIT_SIZES[label], label


if __name__ == "__main__":
    from .base import run_tests_with_report
    sys.exit(run_tests_with_report(__file__, 'dataset'))
