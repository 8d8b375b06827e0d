"""
Unit tests for regression trees and random forests.

Tests cover:
- Split selection (midpoint thresholds, exhaustive root-split check, stopping rules)
- Leaf sizes and prediction ranges (10^5 random forest queries)
- Seed determinism, including across thread counts
- Forest weights as a convex combination of training responses
- Model dictionaries

Usage:
    pytest src/rerf/tests/test_forest.py -v
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from rerf.dataset import DataMatrix
from rerf.forest import (
    ForestError,
    ForestParams,
    LeafNode,
    SplitNode,
    extract_weights,
    fit_forest,
    fit_tree,
    forest_from_dict,
    forest_to_dict,
    predict_forest,
    predict_tree,
)
from rerf.utils.seeding import make_rng


def _leaves(node):
    if isinstance(node, LeafNode):
        return [node]
    return _leaves(node.left) + _leaves(node.right)


class TestForestParams:

    def test_validation(self):
        with pytest.raises(ForestError):
            ForestParams(n_trees=0)
        with pytest.raises(ForestError):
            ForestParams(mtry=0)
        with pytest.raises(ForestError):
            ForestParams(nodesize=0)

    def test_mtry_above_p(self, linear_data):
        with pytest.raises(ForestError, match="exceeds"):
            fit_forest(linear_data, ForestParams(n_trees=2, mtry=4))


class TestFitTree:
    """Growing a single tree."""

    def test_midpoint_threshold(self):
        data = DataMatrix(np.array([[0.0], [1.0], [2.0], [3.0]]), ('x',), np.array([0.0, 0.0, 1.0, 1.0]))
        tree = fit_tree(data, mtry=1, nodesize=1, rng=make_rng(0))
        assert isinstance(tree, SplitNode)
        assert tree.split_column == 0
        assert tree.split_threshold == 1.5
        assert tree.left.prediction == 0.0
        assert tree.right.prediction == 1.0

    def test_nodesize_at_least_n_gives_single_leaf(self, linear_data):
        tree = fit_tree(linear_data, mtry=3, nodesize=linear_data.n_rows, rng=make_rng(0))
        assert isinstance(tree, LeafNode)
        assert tree.prediction == pytest.approx(linear_data.response.mean())

    def test_constant_response_gives_single_leaf(self):
        data = DataMatrix(make_rng(1).uniform(size=(20, 2)), ('a', 'b'), np.full(20, 2.5))
        tree = fit_tree(data, mtry=2, nodesize=1, rng=make_rng(0))
        assert isinstance(tree, LeafNode)
        assert tree.prediction == 2.5

    def test_recovers_step_exactly(self, step_data):
        tree = fit_tree(step_data, mtry=2, nodesize=1, rng=make_rng(0))
        np.testing.assert_array_equal(predict_tree(tree, step_data.features), step_data.response)

    def test_root_split_matches_enumeration(self):
        rng = make_rng(40)
        for _ in range(200):
            n = int(rng.integers(4, 31))
            p = int(rng.integers(1, 4))
            X = rng.uniform(size=(n, p))
            y = rng.normal(size=n)
            data = DataMatrix(X, tuple(f"c{j}" for j in range(p)), y)

            best = np.inf
            for column in range(p):
                values = np.unique(X[:, column])
                for threshold in (values[:-1] + values[1:]) / 2.0:
                    left = X[:, column] <= threshold
                    sse = ((y[left] - y[left].mean()) ** 2).sum() + ((y[~left] - y[~left].mean()) ** 2).sum()
                    best = min(best, sse)

            root = fit_tree(data, mtry=p, nodesize=1, rng=make_rng(0))
            assert isinstance(root, SplitNode)
            left = X[:, root.split_column] <= root.split_threshold
            chosen = ((y[left] - y[left].mean()) ** 2).sum() + ((y[~left] - y[~left].mean()) ** 2).sum()
            assert chosen == pytest.approx(best, rel=1e-9, abs=1e-12)

    def test_large_leaves_are_pure(self, linear_data):
        nodesize = 5
        rows = make_rng(3).integers(0, linear_data.n_rows, size=linear_data.n_rows)
        tree = fit_tree(linear_data, mtry=2, nodesize=nodesize, rng=make_rng(4), row_indices=rows)
        leaves = _leaves(tree)
        assert sum(leaf.mass for leaf in leaves) == linear_data.n_rows
        for leaf in leaves:
            held = linear_data.response[leaf.training_row_indices]
            assert leaf.mass <= nodesize or np.ptp(held) == 0.0
            assert held.min() <= leaf.prediction <= held.max()


class TestFitForest:
    """Bagged forests."""

    def test_deterministic_for_seed(self, linear_data):
        params = ForestParams(n_trees=15, mtry=2, nodesize=5, seed=21)
        first = predict_forest(fit_forest(linear_data, params), linear_data)
        second = predict_forest(fit_forest(linear_data, params), linear_data)
        np.testing.assert_array_equal(first, second)

    def test_thread_count_does_not_change_trees(self, linear_data):
        params = ForestParams(n_trees=12, mtry=1, nodesize=3, seed=5)
        serial = predict_forest(fit_forest(linear_data, params, n_jobs=1), linear_data)
        threaded = predict_forest(fit_forest(linear_data, params, n_jobs=3), linear_data)
        np.testing.assert_array_equal(serial, threaded)

    def test_seed_changes_forest(self, linear_data):
        a = predict_forest(fit_forest(linear_data, ForestParams(n_trees=5, mtry=2, seed=1)), linear_data)
        b = predict_forest(fit_forest(linear_data, ForestParams(n_trees=5, mtry=2, seed=2)), linear_data)
        assert not np.array_equal(a, b)

    def test_predictions_inside_training_range(self, linear_data):
        forest = fit_forest(linear_data, ForestParams(n_trees=10, mtry=2, nodesize=1, seed=3))
        far = DataMatrix(np.array([[-5.0, 9.0, 0.5], [10.0, -3.0, 0.5]]), linear_data.column_names)
        low, high = forest.training_response_range
        predictions = predict_forest(forest, far)
        assert np.all(predictions >= low) and np.all(predictions <= high)

    def test_range_bound_on_random_forests(self):
        rng = make_rng(41)
        for forest_index in range(100):
            n = int(rng.integers(5, 41))
            p = int(rng.integers(1, 4))
            names = tuple(f"c{j}" for j in range(p))
            train = DataMatrix(rng.uniform(size=(n, p)), names, rng.normal(scale=3.0, size=n))
            params = ForestParams(n_trees=5, mtry=int(rng.integers(1, p + 1)),
                                  nodesize=int(rng.integers(1, 6)), seed=forest_index)
            forest = fit_forest(train, params)

            queries = DataMatrix(rng.uniform(-5.0, 6.0, size=(1000, p)), names)
            predictions = predict_forest(forest, queries)
            assert predictions.min() >= train.response.min()
            assert predictions.max() <= train.response.max()

    def test_without_bootstrap_every_tree_sees_every_row(self, step_data):
        forest = fit_forest(step_data, ForestParams(n_trees=3, mtry=1, nodesize=1, bootstrap=False, seed=8))
        for tree in forest.trees:
            assert sum(leaf.mass for leaf in _leaves(tree)) == step_data.n_rows

    def test_column_mismatch(self, linear_data):
        forest = fit_forest(linear_data, ForestParams(n_trees=2, mtry=1))
        with pytest.raises(ForestError, match="Column mismatch"):
            predict_forest(forest, linear_data.select_columns(['a']))


class TestExtractWeights:

    def test_convex_combination_of_training_responses(self, linear_data):
        forest = fit_forest(linear_data, ForestParams(n_trees=20, mtry=2, nodesize=5, seed=9))
        for point in ([0.2, 0.7, 0.1], [0.9, 0.1, 0.5], linear_data.features[4]):
            weights = extract_weights(forest, point)
            assert np.all(weights >= 0.0)
            assert weights.sum() == pytest.approx(1.0, abs=1e-12)
            single = DataMatrix(np.asarray(point, dtype=float)[None, :], linear_data.column_names)
            assert weights @ linear_data.response == pytest.approx(predict_forest(forest, single)[0], abs=1e-10)

    def test_point_shape_checked(self, linear_data):
        forest = fit_forest(linear_data, ForestParams(n_trees=2, mtry=1))
        with pytest.raises(ForestError):
            extract_weights(forest, [0.1, 0.2])


class TestForestDict:

    def test_restored_forest_predicts_identically(self, linear_data):
        forest = fit_forest(linear_data, ForestParams(n_trees=6, mtry=2, nodesize=4, seed=14))
        restored = forest_from_dict(forest_to_dict(forest))
        assert restored.params == forest.params
        np.testing.assert_array_equal(predict_forest(restored, linear_data), predict_forest(forest, linear_data))


if __name__ == "__main__":
    from .base import run_tests_with_report
    sys.exit(run_tests_with_report(__file__, 'forest'))
