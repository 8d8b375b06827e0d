"""
Pytest configuration and fixtures for rerf tests.

This module provides:
- tmp_workspace fixture for temporary run directories
- small deterministic datasets (linear, step, mixed) built from seeded streams
- a small tuning grid that keeps cross-validation tests fast
"""

import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from rerf.dataset import DataMatrix
from rerf.tuning import TuningGrid
from rerf.utils.seeding import make_rng


@pytest.fixture
def tmp_workspace():
    """
    Create a temporary directory for run directories, CSV files and model files.
    """
    temp_dir = tempfile.mkdtemp()
    yield Path(temp_dir)
    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture
def linear_data() -> DataMatrix:
    """120 rows, y = 1 + 2 a - b + 0 c + N(0, 0.1^2)."""
    rng = make_rng(11)
    X = rng.uniform(0.0, 1.0, size=(120, 3))
    y = 1.0 + 2.0 * X[:, 0] - X[:, 1] + rng.normal(0.0, 0.1, size=120)
    return DataMatrix(X, ('a', 'b', 'c'), y, 'y')


@pytest.fixture
def step_data() -> DataMatrix:
    """Noiseless step in the first column; the other columns are noise."""
    rng = make_rng(12)
    X = rng.uniform(0.0, 1.0, size=(80, 2))
    y = np.where(X[:, 0] > 0.5, 3.0, -1.0)
    return DataMatrix(X, ('s', 'noise'), y, 'y')


@pytest.fixture
def mixed_data() -> DataMatrix:
    """Linear trend plus a step, so both RERF stages have something to fit."""
    rng = make_rng(13)
    X = rng.uniform(0.0, 1.0, size=(90, 3))
    y = 4.0 * X[:, 0] + np.where(X[:, 1] > 0.5, 2.0, 0.0) + rng.normal(0.0, 0.05, size=90)
    return DataMatrix(X, ('u', 'v', 'w'), y, 'y')


@pytest.fixture
def small_grid() -> TuningGrid:
    return TuningGrid(
        lambdas=(0.01, 0.1, 1.0),
        mtry_candidates=(1, 2),
        nodesize_candidates=(5,),
        default_mtry=1,
        default_nodesize=5,
    )
