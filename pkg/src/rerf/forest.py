"""
CART regression trees and bagged random forests.

Trees split on the midpoint between consecutive distinct values of one of
`mtry` randomly drawn columns, choosing the split with the smallest summed
child sum of squares. Leaves keep the (bootstrap) training rows they hold,
which makes the forest prediction an explicit convex combination of the
training responses.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from .dataset import DataMatrix
from .utils.seeding import make_rng


logger = logging.getLogger(__name__)

DEFAULT_N_TREES = 500
DEFAULT_NODESIZE = 5

# Candidate splits whose child sum of squares is within this fraction of the
# node sum of squares of the best one are ties.
TIE_TOLERANCE = 1e-10


class ForestError(ValueError):
    pass


@dataclass(eq=False)
class LeafNode:
    prediction: float
    training_row_indices: np.ndarray

    @property
    def mass(self) -> int:
        return int(self.training_row_indices.shape[0])


@dataclass(eq=False)
class SplitNode:
    split_column: int
    split_threshold: float
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None


TreeNode = Union[LeafNode, SplitNode]


@dataclass(frozen=True)
class ForestParams:
    """
    Attributes:
        n_trees: Number of trees
        mtry: Columns drawn (without replacement) at every node
        nodesize: Nodes holding at most this many rows are not split
        seed: Master seed; tree t draws from the stream (seed, t)
        bootstrap: Fit each tree on n rows drawn with replacement
    """
    n_trees: int = DEFAULT_N_TREES
    mtry: int = 1
    nodesize: int = DEFAULT_NODESIZE
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ForestError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.mtry < 1:
            raise ForestError(f"mtry must be >= 1, got {self.mtry}")
        if self.nodesize < 1:
            raise ForestError(f"nodesize must be >= 1, got {self.nodesize}")

    def check_dimension(self, p: int) -> None:
        if self.mtry > p:
            raise ForestError(f"mtry={self.mtry} exceeds the number of columns p={p}")

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class Forest:
    trees: Tuple[TreeNode, ...]
    params: ForestParams
    training_response_range: Tuple[float, float]
    training_response: np.ndarray
    column_names: Tuple[str, ...]

    @property
    def n_training_rows(self) -> int:
        return int(self.training_response.shape[0])

    def predict(self, points: DataMatrix) -> np.ndarray:
        return predict_forest(self, points)


# ---------------------------------------------------------------------------
# Tree growing
# ---------------------------------------------------------------------------

def _leaf(y: np.ndarray, rows: np.ndarray) -> LeafNode:
    values = y[rows]
    # Clipping only removes rounding; it keeps the prediction inside the leaf's range
    prediction = float(np.clip(values.mean(), values.min(), values.max()))
    held = np.sort(rows)
    held.setflags(write=False)
    return LeafNode(prediction=prediction, training_row_indices=held)


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    columns: Sequence[int],
) -> Optional[Tuple[int, float]]:
    """
    Best (column, threshold) among `columns`, or None if no split reduces
    the node sum of squares.

    Ties go to the lowest column index, then the smallest threshold.
    """
    values = y[rows]
    centered = values - values.mean()
    node_sse = float(centered @ centered)
    if node_sse <= 0.0:
        return None

    m = rows.shape[0]
    n_left = np.arange(1, m, dtype=np.float64)
    n_right = m - n_left
    total = float(centered.sum())

    candidates = []
    for column in sorted(columns):
        x = X[rows, column]
        order = np.argsort(x, kind='stable')
        xs, ys = x[order], centered[order]
        boundary = xs[1:] > xs[:-1]
        if not boundary.any():
            continue

        left_sum = np.cumsum(ys)[:-1]
        left_sq = np.cumsum(ys * ys)[:-1]
        sse = (left_sq - left_sum ** 2 / n_left) + (
            (node_sse - left_sq) - (total - left_sum) ** 2 / n_right
        )

        low, high = xs[:-1][boundary], xs[1:][boundary]
        middle = (low + high) / 2.0
        thresholds = np.where(middle < high, middle, low)
        candidates.append((column, sse[boundary], thresholds))

    if not candidates:
        return None

    best = min(float(sse.min()) for _, sse, _ in candidates)
    tolerance = TIE_TOLERANCE * node_sse
    if best >= node_sse - tolerance:
        return None

    for column, sse, thresholds in candidates:
        hits = np.flatnonzero(sse <= best + tolerance)
        if hits.size:
            return column, float(thresholds[hits[0]])
    return None


def fit_tree(
    train: DataMatrix,
    mtry: int,
    nodesize: int,
    rng: np.random.Generator,
    row_indices: Optional[Sequence[int]] = None,
) -> TreeNode:
    """
    Grow one regression tree.

    Args:
        train: Training data with response
        mtry: Columns drawn at each node
        nodesize: Nodes with at most this many rows become leaves
        rng: Generator for the column draws
        row_indices: Rows the tree is grown on (a bootstrap sample may repeat
            rows). Defaults to every row once.

    Returns:
        Root node
    """
    if train.n_rows < 1:
        raise ForestError("Cannot grow a tree on zero rows")
    X = train.features
    y = train.require_response()
    p = train.n_columns
    if not 1 <= mtry <= max(p, 1):
        raise ForestError(f"mtry={mtry} outside [1, {p}]")

    rows = np.arange(train.n_rows) if row_indices is None else np.asarray(row_indices, dtype=np.intp)

    root_holder = SplitNode(split_column=-1, split_threshold=0.0)
    stack: List[Tuple[np.ndarray, SplitNode, str]] = [(rows, root_holder, 'left')]

    while stack:
        node_rows, parent, side = stack.pop()
        node: TreeNode
        chosen = None
        if node_rows.shape[0] > nodesize and p > 0:
            columns = rng.choice(p, size=mtry, replace=False)
            chosen = _best_split(X, y, node_rows, columns.tolist())

        if chosen is None:
            node = _leaf(y, node_rows)
        else:
            column, threshold = chosen
            goes_left = X[node_rows, column] <= threshold
            node = SplitNode(split_column=int(column), split_threshold=threshold)
            # Right pushed first so the left subtree is grown first
            stack.append((node_rows[~goes_left], node, 'right'))
            stack.append((node_rows[goes_left], node, 'left'))

        setattr(parent, side, node)

    return root_holder.left  # type: ignore[return-value]


def _grow(train: DataMatrix, params: ForestParams, tree_index: int) -> TreeNode:
    rng = make_rng(params.seed, tree_index)
    if params.bootstrap:
        rows = rng.integers(0, train.n_rows, size=train.n_rows)
    else:
        rows = np.arange(train.n_rows)
    return fit_tree(train, params.mtry, params.nodesize, rng, rows)


def fit_forest(train: DataMatrix, params: ForestParams, n_jobs: int = 1) -> Forest:
    """
    Bagged forest of `params.n_trees` trees.

    Tree t uses only the random stream (seed, t), so the forest is identical
    for any `n_jobs`.
    """
    y = train.require_response()
    if train.n_rows < 1:
        raise ForestError("Cannot fit a forest on zero rows")
    params.check_dimension(train.n_columns)

    if n_jobs == 1:
        trees = [_grow(train, params, t) for t in range(params.n_trees)]
    else:
        trees = Parallel(n_jobs=n_jobs, prefer='threads')(
            delayed(_grow)(train, params, t) for t in range(params.n_trees)
        )

    return Forest(
        trees=tuple(trees),
        params=params,
        training_response_range=(float(y.min()), float(y.max())),
        training_response=y,
        column_names=train.column_names,
    )


# ---------------------------------------------------------------------------
# Prediction and weights
# ---------------------------------------------------------------------------

def _aligned_features(forest: Forest, points: DataMatrix) -> np.ndarray:
    if points.column_names == forest.column_names:
        return points.features
    missing = [name for name in forest.column_names if name not in points.column_names]
    if missing:
        raise ForestError(f"Column mismatch: points lack forest columns {missing}")
    return points.select_columns(forest.column_names).features


def route(tree: TreeNode, X: np.ndarray) -> List[LeafNode]:
    """The leaf every row of X falls into."""
    leaves: List[Optional[LeafNode]] = [None] * X.shape[0]
    stack = [(tree, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if isinstance(node, LeafNode):
            for i in idx:
                leaves[i] = node
            continue
        goes_left = X[idx, node.split_column] <= node.split_threshold
        stack.append((node.left, idx[goes_left]))
        stack.append((node.right, idx[~goes_left]))
    return leaves  # type: ignore[return-value]


def predict_tree(tree: TreeNode, X: np.ndarray) -> np.ndarray:
    return np.array([leaf.prediction for leaf in route(tree, X)], dtype=np.float64)


def predict_forest(forest: Forest, points: DataMatrix) -> np.ndarray:
    """Average of the tree predictions at every point."""
    X = _aligned_features(forest, points)
    if X.shape[0] == 0:
        return np.zeros(0)
    per_tree = np.vstack([predict_tree(tree, X) for tree in forest.trees])
    average = per_tree.mean(axis=0)
    return np.clip(average, per_tree.min(axis=0), per_tree.max(axis=0))


def extract_weights(forest: Forest, point: Sequence[float]) -> np.ndarray:
    """
    Weights w with w >= 0, sum(w) = 1 and w . y_train = forest prediction.

    Row i's weight is the average over trees of its bootstrap multiplicity in
    the leaf holding `point`, divided by that leaf's bootstrap mass.
    """
    x = np.asarray(point, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != len(forest.column_names):
        raise ForestError(
            f"Point has shape {x.shape}; expected ({len(forest.column_names)},)"
        )
    n = forest.n_training_rows
    weights = np.zeros(n)
    for tree in forest.trees:
        leaf = route(tree, x[None, :])[0]
        weights += np.bincount(leaf.training_row_indices, minlength=n) / leaf.mass
    return weights / len(forest.trees)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def tree_to_dict(tree: TreeNode) -> Dict[str, Any]:
    """Flat pre-order node list; children are referenced by list position."""
    nodes: List[Dict[str, Any]] = []
    stack: List[Tuple[TreeNode, Optional[int], str]] = [(tree, None, '')]
    while stack:
        node, parent, side = stack.pop()
        position = len(nodes)
        if parent is not None:
            nodes[parent][side] = position
        if isinstance(node, LeafNode):
            nodes.append({
                'value': node.prediction,
                'rows': node.training_row_indices.tolist(),
            })
        else:
            nodes.append({
                'column': node.split_column,
                'threshold': node.split_threshold,
            })
            stack.append((node.right, position, 'right'))
            stack.append((node.left, position, 'left'))
    return {'nodes': nodes}


def tree_from_dict(source: Dict[str, Any]) -> TreeNode:
    raw = source['nodes']
    built: List[TreeNode] = []
    for entry in raw:
        if 'value' in entry:
            rows = np.asarray(entry['rows'], dtype=np.intp)
            rows.setflags(write=False)
            built.append(LeafNode(prediction=float(entry['value']), training_row_indices=rows))
        else:
            built.append(SplitNode(split_column=int(entry['column']),
                                   split_threshold=float(entry['threshold'])))
    for node, entry in zip(built, raw):
        if isinstance(node, SplitNode):
            node.left = built[entry['left']]
            node.right = built[entry['right']]
    return built[0]


def forest_to_dict(forest: Forest) -> Dict[str, Any]:
    return {
        'params': forest.params.to_dict(),
        'column_names': list(forest.column_names),
        'training_response': forest.training_response.tolist(),
        'trees': [tree_to_dict(tree) for tree in forest.trees],
    }


def forest_from_dict(source: Dict[str, Any]) -> Forest:
    response = np.asarray(source['training_response'], dtype=np.float64)
    response.setflags(write=False)
    return Forest(
        trees=tuple(tree_from_dict(tree) for tree in source['trees']),
        params=ForestParams(**source['params']),
        training_response_range=(float(response.min()), float(response.max())),
        training_response=response,
        column_names=tuple(source['column_names']),
    )
