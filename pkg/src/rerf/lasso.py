"""
L1-penalized least squares by cyclic coordinate descent.

The objective, on standardized features and a centered response, is

    (1 / 2n) * ||y - X b||^2 + lambda * ||b||_1

with an unpenalized intercept recovered analytically. Coefficients are
returned on the original feature scale.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import DataMatrix, standardize


logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
DEFAULT_MAX_SWEEPS = 10_000
DEFAULT_KKT_TOL = 1e-7


class LassoError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyGrid:
    """Strictly increasing positive penalty values."""
    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if not values:
            raise LassoError("Penalty grid is empty")
        if any(v <= 0 or not np.isfinite(v) for v in values):
            raise LassoError("Penalty values must be positive and finite")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise LassoError("Penalty values must be strictly increasing")
        object.__setattr__(self, 'values', values)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[float]:
        return iter(self.values)

    def __getitem__(self, index: int) -> float:
        return self.values[index]


def default_penalty_grid(n_points: int = 100, low: float = 0.001, high: float = 100.0) -> PenaltyGrid:
    """Geometric grid from `low` to `high`, endpoints exact."""
    if n_points < 2:
        return PenaltyGrid((low,))
    steps = np.arange(n_points) * (np.log(high) - np.log(low)) / (n_points - 1)
    values = np.exp(np.log(low) + steps)
    values[0], values[-1] = low, high
    return PenaltyGrid(tuple(values.tolist()))


@dataclass(frozen=True, eq=False)
class LassoFit:
    """
    One Lasso solution.

    `coefficients` and `intercept` live on the original scale;
    `standardized_coefficients`, `centers` and `scales` are kept for
    optimality checks and the model file.
    """
    coefficients: np.ndarray
    intercept: float
    lambda_: float
    active_set: Tuple[int, ...]
    n_iterations: int
    converged: bool
    column_names: Tuple[str, ...]
    standardized_coefficients: np.ndarray
    centers: np.ndarray
    scales: np.ndarray
    objective_trace: Tuple[float, ...] = ()

    @property
    def n_active(self) -> int:
        return len(self.active_set)

    def predict(self, points: DataMatrix) -> np.ndarray:
        return predict_linear(self, points)


@dataclass(frozen=True, eq=False)
class _Design:
    """Standardized training design shared by every fit along a path."""
    columns: np.ndarray       # p x n, standardized, row j = feature j
    response: np.ndarray      # centered
    response_mean: float
    centers: np.ndarray
    scales: np.ndarray
    column_names: Tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return int(self.response.shape[0])


def _prepare(train: DataMatrix) -> _Design:
    if train.n_rows < 2:
        raise LassoError(f"Lasso needs at least 2 rows, got {train.n_rows}")
    y = train.require_response()
    standardized, centers, scales = standardize(train)
    y_mean = float(y.mean())
    return _Design(
        columns=np.ascontiguousarray(standardized.features.T),
        response=y - y_mean,
        response_mean=y_mean,
        centers=centers,
        scales=scales,
        column_names=train.column_names,
    )


def _soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def _objective(residual: np.ndarray, beta: np.ndarray, lambda_: float) -> float:
    n = residual.shape[0]
    return float(residual @ residual) / (2.0 * n) + lambda_ * float(np.abs(beta).sum())


def _kkt_violation(columns: np.ndarray, residual: np.ndarray, beta: np.ndarray,
                   lambda_: float, usable: np.ndarray) -> float:
    n = residual.shape[0]
    gradient = columns @ residual / n
    active = (beta != 0.0) & usable
    inactive = (beta == 0.0) & usable
    worst = 0.0
    if active.any():
        worst = max(worst, float(np.max(np.abs(gradient[active] - lambda_ * np.sign(beta[active])))))
    if inactive.any():
        worst = max(worst, float(np.max(np.abs(gradient[inactive]) - lambda_)))
    return max(worst, 0.0)


def _coordinate_descent(
    design: _Design,
    lambda_: float,
    beta: np.ndarray,
    tol: float,
    max_sweeps: int,
    kkt_tol: float,
    track_objective: bool,
) -> Tuple[np.ndarray, int, bool, List[float]]:
    columns = design.columns
    n = design.n_rows
    squared_norms = np.einsum('ij,ij->i', columns, columns) / n
    usable = squared_norms > 0.0
    beta = np.where(usable, beta, 0.0)
    residual = design.response - columns.T @ beta

    trace = [_objective(residual, beta, lambda_)] if track_objective else []
    converged = False
    sweep = 0

    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in np.flatnonzero(usable):
            column = columns[j]
            old = beta[j]
            rho = float(column @ residual) / n + squared_norms[j] * old
            new = _soft_threshold(rho, lambda_) / squared_norms[j]
            if new != old:
                residual -= column * (new - old)
                beta[j] = new
                max_change = max(max_change, abs(new - old))

        if track_objective:
            trace.append(_objective(residual, beta, lambda_))

        if max_change < tol and _kkt_violation(columns, residual, beta, lambda_, usable) <= kkt_tol:
            converged = True
            break

    return beta, sweep, converged, trace


def _finish(design: _Design, lambda_: float, beta: np.ndarray, n_iterations: int,
            converged: bool, trace: List[float]) -> LassoFit:
    usable = design.scales > 0.0
    coefficients = np.zeros_like(beta)
    coefficients[usable] = beta[usable] / design.scales[usable]
    intercept = design.response_mean - float(coefficients @ design.centers)

    if not converged:
        logger.warning(
            f"Lasso did not converge at lambda={lambda_:.6g} after {n_iterations} sweeps"
        )

    coefficients.setflags(write=False)
    standardized = beta.copy()
    standardized.setflags(write=False)
    return LassoFit(
        coefficients=coefficients,
        intercept=intercept,
        lambda_=float(lambda_),
        active_set=tuple(int(j) for j in np.flatnonzero(coefficients != 0.0)),
        n_iterations=n_iterations,
        converged=converged,
        column_names=design.column_names,
        standardized_coefficients=standardized,
        centers=design.centers,
        scales=design.scales,
        objective_trace=tuple(trace),
    )


def fit_lasso(
    train: DataMatrix,
    lambda_: float,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    kkt_tol: float = DEFAULT_KKT_TOL,
    warm_start: Optional[LassoFit] = None,
    track_objective: bool = False,
) -> LassoFit:
    """
    Fit the Lasso of the training response on every training column.

    Args:
        train: Training data with a response and at least 2 rows
        lambda_: Non-negative penalty on the standardized scale
        tol: Convergence threshold on the largest coefficient change per sweep
        max_sweeps: Sweep limit; exhausting it returns converged=False
        kkt_tol: Optimality slack required before declaring convergence
        warm_start: Previous fit on the same data to start from
        track_objective: Record the objective after every sweep

    Returns:
        LassoFit on the original scale
    """
    if lambda_ < 0 or not np.isfinite(lambda_):
        raise LassoError(f"Penalty must be a non-negative finite number, got {lambda_}")
    design = _prepare(train)
    beta = np.zeros(len(design.column_names))
    if warm_start is not None:
        beta = np.array(warm_start.standardized_coefficients, dtype=np.float64)
    beta, sweeps, converged, trace = _coordinate_descent(
        design, lambda_, beta, tol, max_sweeps, kkt_tol, track_objective,
    )
    return _finish(design, lambda_, beta, sweeps, converged, trace)


def lasso_path(
    train: DataMatrix,
    lambdas: Sequence[float],
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    kkt_tol: float = DEFAULT_KKT_TOL,
) -> List[LassoFit]:
    """
    Fits for every penalty in `lambdas`, returned in the given order.

    The path is solved from the largest penalty down, each fit warm-started
    from the previous one.
    """
    design = _prepare(train)
    order = sorted(range(len(lambdas)), key=lambda i: -float(lambdas[i]))
    fits: List[Optional[LassoFit]] = [None] * len(lambdas)

    beta = np.zeros(len(design.column_names))
    previous_active = 0
    for i in order:
        lambda_ = float(lambdas[i])
        if lambda_ < 0:
            raise LassoError(f"Penalty must be non-negative, got {lambda_}")
        beta, sweeps, converged, trace = _coordinate_descent(
            design, lambda_, beta.copy(), tol, max_sweeps, kkt_tol, False,
        )
        fit = _finish(design, lambda_, beta, sweeps, converged, trace)
        if fit.n_active < previous_active:
            logger.debug(
                f"Active set shrank from {previous_active} to {fit.n_active} "
                f"as lambda decreased to {lambda_:.6g}"
            )
        previous_active = fit.n_active
        fits[i] = fit

    return fits  # type: ignore[return-value]


def lambda_max(train: DataMatrix) -> float:
    """Smallest penalty at which every coefficient is zero."""
    design = _prepare(train)
    return float(np.max(np.abs(design.columns @ design.response)) / design.n_rows) if design.columns.size else 0.0


def _aligned_features(fit: LassoFit, data: DataMatrix) -> np.ndarray:
    if data.column_names == fit.column_names:
        return data.features
    missing = [name for name in fit.column_names if name not in data.column_names]
    if missing:
        raise LassoError(f"Column mismatch: data lacks fitted columns {missing}")
    return data.select_columns(fit.column_names).features


def predict_linear(fit: LassoFit, data: DataMatrix) -> np.ndarray:
    """intercept + X b for every row of `data`."""
    features = _aligned_features(fit, data)
    return fit.intercept + features @ fit.coefficients


def residuals(fit: LassoFit, data: DataMatrix) -> np.ndarray:
    """y - intercept - X b for every row of `data`."""
    return data.require_response() - predict_linear(fit, data)


def _standardized_state(fit: LassoFit, data: DataMatrix) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    features = _aligned_features(fit, data)
    usable = fit.scales > 0.0
    safe = np.where(usable, fit.scales, 1.0)
    columns = np.where(usable, (features - fit.centers) / safe, 0.0).T
    return columns, residuals(fit, data), usable


def lasso_objective(fit: LassoFit, data: DataMatrix) -> float:
    """The penalized objective of `fit` on `data`, standardized scale."""
    _, residual, _ = _standardized_state(fit, data)
    return _objective(residual, np.asarray(fit.standardized_coefficients), fit.lambda_)


def kkt_violation(fit: LassoFit, data: DataMatrix) -> float:
    """Largest violation of the Lasso optimality conditions of `fit` on its training data."""
    columns, residual, usable = _standardized_state(fit, data)
    return _kkt_violation(columns, residual, np.asarray(fit.standardized_coefficients), fit.lambda_, usable)
