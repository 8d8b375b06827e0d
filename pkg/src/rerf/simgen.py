"""
Synthetic regression scenarios.

Four mean functions of ten predictors x1..x10 (only the first five ever
matter) and two sampling schemes:

    I  every predictor unif(0, 1) in training and validation
    E  as I, except x3 ~ beta(4, 8) in training and beta(5, 1) in validation

INTRO adds an eleventh predictor z, unif(0, 0.8) in training and unif(0, 1)
in validation, with response f(x) + 10 z + noise.
"""

import logging
import pathlib
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import DataMatrix, to_csv
from .utils.seeding import make_rng


logger = logging.getLogger(__name__)

N_PREDICTORS = 10
PREDICTOR_NAMES: Tuple[str, ...] = tuple(f"x{i}" for i in range(1, N_PREDICTORS + 1))
INTRO_COLUMN = 'z'
RESPONSE_NAME = 'y'
DEFAULT_NOISE_SD = 0.5

TRAIN_STREAM = 0
VALIDATION_STREAM = 1


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class MeanModel:
    INTRO :str = 'INTRO'
    L     :str = 'L'
    P     :str = 'P'
    N     :str = 'N'

    @classmethod
    def values(cls) -> List[str]:
        return [getattr(cls, attr) for attr in cls.__annotations__.keys()]


@dataclass(frozen=True)
class Sampling:
    INTERPOLATION :str = 'I'
    EXTRAPOLATION :str = 'E'

    @classmethod
    def values(cls) -> List[str]:
        return [getattr(cls, attr) for attr in cls.__annotations__.keys()]


@dataclass(frozen=True)
class ScenarioSpec:
    """
    One synthetic experiment.

    Attributes:
        model: Mean function, one of MeanModel
        sampling: Sampling scheme, one of Sampling (ignored for INTRO)
        n_train: Training rows
        n_validation: Validation rows
        noise_sd: Standard deviation of the Gaussian noise; 0 gives noiseless data
        seed: Generator seed
    """
    model: str
    sampling: str = Sampling.INTERPOLATION
    n_train: int = 1000
    n_validation: int = 100
    noise_sd: float = DEFAULT_NOISE_SD
    seed: int = 0

    def __post_init__(self) -> None:
        if self.model not in MeanModel.values():
            raise SimulationError(f"Invalid model '{self.model}'. Must be one of: {MeanModel.values()}")
        if self.sampling not in Sampling.values():
            raise SimulationError(f"Invalid sampling '{self.sampling}'. Must be one of: {Sampling.values()}")
        if self.n_train < 1 or self.n_validation < 1:
            raise SimulationError(
                f"Sample sizes must be positive, got ({self.n_train}, {self.n_validation})"
            )
        if not np.isfinite(self.noise_sd) or self.noise_sd < 0:
            raise SimulationError(f"noise_sd must be a non-negative finite number, got {self.noise_sd}")

    @property
    def label(self) -> str:
        if self.model == MeanModel.INTRO:
            return MeanModel.INTRO
        return f"{self.model}x{self.sampling}"

    @property
    def column_names(self) -> Tuple[str, ...]:
        if self.model == MeanModel.INTRO:
            return PREDICTOR_NAMES + (INTRO_COLUMN,)
        return PREDICTOR_NAMES

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


SCENARIOS: Dict[str, ScenarioSpec] = {
    MeanModel.INTRO: ScenarioSpec(MeanModel.INTRO, n_train=1500, n_validation=300),
    **{
        f"{model}x{sampling}": ScenarioSpec(model, sampling)
        for model in (MeanModel.L, MeanModel.P, MeanModel.N)
        for sampling in (Sampling.INTERPOLATION, Sampling.EXTRAPOLATION)
    },
}


def scenario(label: str, **overrides: Any) -> ScenarioSpec:
    """
    Registered scenario by label, with optional field overrides.

    Example:
        >>> scenario('NxE', seed=3).n_train
        1000
    """
    try:
        spec = SCENARIOS[label]
    except KeyError:
        raise SimulationError(f"Unknown scenario '{label}'. Available: {list(SCENARIOS)}") from None
    return replace(spec, **overrides) if overrides else spec


def _logistic_step(t: np.ndarray) -> np.ndarray:
    return 4.0 / (1.0 + np.exp(-t))


def mean_function(model: str, X: np.ndarray, z: Optional[np.ndarray] = None) -> np.ndarray:
    """Noiseless response for every row of the n x 10 matrix X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != N_PREDICTORS:
        raise SimulationError(f"Expected {N_PREDICTORS} predictors, got shape {X.shape}")
    if (z is not None) != (model == MeanModel.INTRO):
        raise SimulationError("z must be supplied for INTRO and only for INTRO")

    x1, x2, x3, x4, x5 = (X[:, j] for j in range(5))
    match model:
        case MeanModel.INTRO:
            z = np.asarray(z, dtype=np.float64).reshape(-1)
            if z.shape[0] != X.shape[0]:
                raise SimulationError(f"z has {z.shape[0]} values for {X.shape[0]} rows")
            friedman = 0.1 * np.exp(4.0 * x1) + _logistic_step(20.0 * (x2 - 0.5)) + 3.0 * x3 + 2.0 * x4 + x5
            return friedman + 10.0 * z
        case MeanModel.L:
            return x1 + x2 + 2.0 * x3 + 2.0 * x4
        case MeanModel.P:
            return np.sin(np.pi * x1) + _logistic_step(20.0 * x2 - 10.0) + 2.0 * x3 + 2.0 * x4
        case MeanModel.N:
            return mean_function(MeanModel.P, X) + 3.0 * x3 * x4
        case _:
            raise SimulationError(f"Invalid model '{model}'. Must be one of: {MeanModel.values()}")


def eval_mean_function(model: str, x: Sequence[float], z: Optional[float] = None) -> float:
    """Noiseless response at a single 10-coordinate point."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise SimulationError(f"Expected a predictor vector, got shape {x.shape}")
    return float(mean_function(model, x[None, :], None if z is None else np.array([z]))[0])


def _draw(spec: ScenarioSpec, n: int, stream: int) -> DataMatrix:
    rng = make_rng(spec.seed, stream)
    training = stream == TRAIN_STREAM

    X = rng.uniform(0.0, 1.0, size=(n, N_PREDICTORS))
    if spec.model != MeanModel.INTRO and spec.sampling == Sampling.EXTRAPOLATION:
        X[:, 2] = rng.beta(4.0, 8.0, size=n) if training else rng.beta(5.0, 1.0, size=n)

    z = None
    features = X
    if spec.model == MeanModel.INTRO:
        z = rng.uniform(0.0, 0.8 if training else 1.0, size=n)
        features = np.column_stack([X, z])

    response = mean_function(spec.model, X, z)
    if spec.noise_sd > 0:
        response = response + rng.normal(0.0, spec.noise_sd, size=n)

    return DataMatrix(
        features=features,
        column_names=spec.column_names,
        response=response,
        response_name=RESPONSE_NAME,
    )


def generate(spec: ScenarioSpec) -> Tuple[DataMatrix, DataMatrix]:
    """
    Draw (train, validation) for `spec`.

    Training and validation rows come from independent streams of the
    scenario seed, so the training set does not depend on n_validation.
    """
    train = _draw(spec, spec.n_train, TRAIN_STREAM)
    validation = _draw(spec, spec.n_validation, VALIDATION_STREAM)
    logger.debug(f"Generated {spec.label} seed={spec.seed}: {train.n_rows} train, {validation.n_rows} validation")
    return train, validation


def export(spec: ScenarioSpec, directory: Union[str, pathlib.Path]) -> Dict[str, pathlib.Path]:
    """Write the training and validation sets of `spec` as CSV files under `directory`."""
    directory = pathlib.Path(directory)
    train, validation = generate(spec)
    return {
        'train': to_csv(train, directory / f"{spec.label}_seed{spec.seed}_train.csv"),
        'validation': to_csv(validation, directory / f"{spec.label}_seed{spec.seed}_validation.csv"),
    }
