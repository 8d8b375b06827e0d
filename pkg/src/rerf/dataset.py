"""
Tabular regression data: loading, validation, feature expansion,
standardization and train/validation splitting.

`DataMatrix` is the carrier every other module consumes. It is immutable:
its arrays are read-only copies, so one instance can be shared by any number
of threads or folds.
"""

import logging
import math
import pathlib
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .utils.seeding import make_rng


logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    pass


def _frozen(values: Any, ndim: int) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    if ndim == 2 and array.ndim == 1 and array.size == 0:
        array = array.reshape(0, 0)
    if array.ndim != ndim:
        raise DatasetError(f"Expected a {ndim}-dimensional array, got shape {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """
    Rows of predictor vectors with an optional paired response.

    Attributes:
        features: n_rows x p matrix of finite reals
        column_names: p unique predictor identifiers, in column order
        response: length-n_rows response vector, or None for prediction inputs
        response_name: Identifier of the response column, if known
        n_dropped: Rows removed at load time because of missing/non-numeric cells
    """
    features: np.ndarray
    column_names: Tuple[str, ...]
    response: Optional[np.ndarray] = None
    response_name: Optional[str] = None
    n_dropped: int = 0

    def __post_init__(self) -> None:
        features = _frozen(self.features, ndim=2)
        names = tuple(str(name) for name in self.column_names)

        if len(names) != features.shape[1]:
            raise DatasetError(
                f"Got {len(names)} column names for {features.shape[1]} feature columns"
            )
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise DatasetError(f"Duplicate column names: {duplicates}")
        if not np.all(np.isfinite(features)):
            raise DatasetError("Features contain non-finite values")

        response = None
        if self.response is not None:
            response = _frozen(self.response, ndim=1)
            if response.shape[0] != features.shape[0]:
                raise DatasetError(
                    f"Response length {response.shape[0]} does not match {features.shape[0]} rows"
                )
            if not np.all(np.isfinite(response)):
                raise DatasetError("Response contains non-finite values")

        object.__setattr__(self, 'features', features)
        object.__setattr__(self, 'column_names', names)
        object.__setattr__(self, 'response', response)

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_columns(self) -> int:
        return int(self.features.shape[1])

    @property
    def has_response(self) -> bool:
        return self.response is not None

    def require_response(self) -> np.ndarray:
        if self.response is None:
            raise DatasetError("This operation needs a response vector, but the data has none")
        return self.response

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DatasetError(
                f"Unknown column '{name}'. Available columns: {list(self.column_names)}"
            ) from None

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self.column_index(name)]

    def select_rows(self, indices: Sequence[int]) -> "DataMatrix":
        indices = np.asarray(indices, dtype=np.intp)
        return DataMatrix(
            features=self.features[indices],
            column_names=self.column_names,
            response=None if self.response is None else self.response[indices],
            response_name=self.response_name,
        )

    def select_columns(self, names: Sequence[str]) -> "DataMatrix":
        indices = [self.column_index(name) for name in names]
        return DataMatrix(
            features=self.features[:, indices],
            column_names=tuple(names),
            response=self.response,
            response_name=self.response_name,
            n_dropped=self.n_dropped,
        )

    def with_response(self, response: Optional[Sequence[float]], name: Optional[str] = None) -> "DataMatrix":
        return DataMatrix(
            features=self.features,
            column_names=self.column_names,
            response=response,
            response_name=name or self.response_name,
            n_dropped=self.n_dropped,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.features, columns=list(self.column_names))
        if self.response is not None:
            frame[self.response_name or 'y'] = self.response
        return frame


def load_csv(
    path: Union[str, pathlib.Path],
    response_column: str,
    column_renamer: Optional[Callable[[str], str]] = None,
) -> DataMatrix:
    """
    Load a comma-separated file with one header row into a DataMatrix.

    Empty cells and cells that do not parse as numbers count as missing; rows
    holding any missing value are dropped and counted in `n_dropped`.

    Args:
        path: CSV file path (UTF-8, '.' decimal separator)
        response_column: Header name of the response column
        column_renamer: Optional mapping applied to every header name first

    Returns:
        Validated DataMatrix with every other column as a predictor

    Raises:
        FileNotFoundError: If the file does not exist
        DatasetError: Missing response column, empty file or no usable rows
    """
    path = pathlib.Path(path)
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found: {path}")

    try:
        frame = pd.read_csv(path, encoding='utf-8', dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DatasetError(f"CSV file is empty: {path}") from None

    names = [str(name).strip() for name in frame.columns]
    if column_renamer is not None:
        names = [column_renamer(name) for name in names]
    frame.columns = names

    if response_column not in frame.columns:
        raise DatasetError(
            f"Response column '{response_column}' not in header {names}"
        )

    numeric = frame.apply(lambda col: pd.to_numeric(col.astype(str).str.strip(), errors='coerce'))
    numeric = numeric.replace([np.inf, -np.inf], np.nan)
    usable = numeric.notna().all(axis=1).to_numpy()
    n_dropped = int((~usable).sum())

    if not usable.any():
        raise DatasetError(f"No usable rows in {path} ({n_dropped} rows had missing or non-numeric values)")
    if n_dropped:
        logger.warning(f"Dropped {n_dropped} of {len(numeric)} rows with missing values from {path.name}")

    numeric = numeric.loc[usable]
    predictors = [name for name in numeric.columns if name != response_column]
    return DataMatrix(
        features=numeric[predictors].to_numpy(dtype=np.float64).reshape(len(numeric), len(predictors)),
        column_names=tuple(predictors),
        response=numeric[response_column].to_numpy(dtype=np.float64),
        response_name=response_column,
        n_dropped=n_dropped,
    )


def to_csv(data: DataMatrix, path: Union[str, pathlib.Path]) -> pathlib.Path:
    """Write a DataMatrix in the format `load_csv` reads back."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data.to_frame().to_csv(path, index=False, float_format='%.17g')
    return path


# ---------------------------------------------------------------------------
# Feature expansion
# ---------------------------------------------------------------------------

def quadratic_name(column: str) -> str:
    return f"{column}^2"


def interaction_name(left: str, right: str) -> str:
    return f"{left}*{right}"


def ratio_name(numerator: str, denominator: str) -> str:
    return f"{numerator}/{denominator}"


def _pairs(values: Any) -> Tuple[Tuple[str, str], ...]:
    pairs = []
    for value in values or ():
        if isinstance(value, str):
            # "a*b" / "a/b" shorthand used in configs
            for sep in ('*', '/', ','):
                if sep in value:
                    left, right = value.split(sep, 1)
                    break
            else:
                raise DatasetError(f"Cannot parse column pair '{value}'")
        else:
            left, right = value
        pairs.append((str(left).strip(), str(right).strip()))
    return tuple(pairs)


@dataclass(frozen=True)
class FeatureExpansionSpec:
    """
    Parametric terms appended to the predictors before the Lasso step.

    Output column order is fixed: original columns, then squares in listed
    order, then interactions, then ratios.
    """
    quadratic_columns: Tuple[str, ...] = ()
    interaction_pairs: Tuple[Tuple[str, str], ...] = ()
    custom_ratios: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, 'quadratic_columns', tuple(str(c) for c in self.quadratic_columns))
        object.__setattr__(self, 'interaction_pairs', _pairs(self.interaction_pairs))
        object.__setattr__(self, 'custom_ratios', _pairs(self.custom_ratios))

    @property
    def is_empty(self) -> bool:
        return not (self.quadratic_columns or self.interaction_pairs or self.custom_ratios)

    @property
    def referenced_columns(self) -> List[str]:
        referenced = list(self.quadratic_columns)
        for left, right in self.interaction_pairs + self.custom_ratios:
            referenced.extend([left, right])
        return referenced

    def generated_names(self) -> List[str]:
        return (
            [quadratic_name(c) for c in self.quadratic_columns]
            + [interaction_name(a, b) for a, b in self.interaction_pairs]
            + [ratio_name(a, b) for a, b in self.custom_ratios]
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'quadratic': list(self.quadratic_columns),
            'interactions': [list(pair) for pair in self.interaction_pairs],
            'ratios': [list(pair) for pair in self.custom_ratios],
        }

    @classmethod
    def from_dict(cls, source: Optional[Mapping[str, Any]]) -> "FeatureExpansionSpec":
        source = source or {}
        unknown = set(source) - {'quadratic', 'interactions', 'ratios'}
        if unknown:
            raise DatasetError(f"Unknown expansion keys: {sorted(unknown)}")
        return cls(
            quadratic_columns=tuple(source.get('quadratic') or ()),
            interaction_pairs=_pairs(source.get('interactions')),
            custom_ratios=_pairs(source.get('ratios')),
        )


def expand_features(data: DataMatrix, spec: FeatureExpansionSpec) -> DataMatrix:
    """
    Extend the p predictors with the q terms named by `spec`.

    Raises:
        DatasetError: Unknown column, or a zero denominator in a ratio
    """
    if spec.is_empty:
        return data

    for name in spec.referenced_columns:
        data.column_index(name)

    columns = [data.features]
    for name in spec.quadratic_columns:
        values = data.column(name)
        columns.append((values * values)[:, None])
    for left, right in spec.interaction_pairs:
        columns.append((data.column(left) * data.column(right))[:, None])
    for numerator, denominator in spec.custom_ratios:
        below = data.column(denominator)
        zero_rows = np.flatnonzero(below == 0.0)
        if zero_rows.size:
            raise DatasetError(
                f"Zero denominator in ratio {ratio_name(numerator, denominator)} "
                f"at rows {zero_rows[:10].tolist()}"
            )
        columns.append((data.column(numerator) / below)[:, None])

    return DataMatrix(
        features=np.hstack(columns),
        column_names=data.column_names + tuple(spec.generated_names()),
        response=data.response,
        response_name=data.response_name,
        n_dropped=data.n_dropped,
    )


def exclude_columns(data: DataMatrix, names: Sequence[str]) -> DataMatrix:
    """Drop predictor columns by name."""
    for name in names:
        data.column_index(name)
    kept = [name for name in data.column_names if name not in set(names)]
    return data.select_columns(kept)


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

def standardize(data: DataMatrix) -> Tuple[DataMatrix, np.ndarray, np.ndarray]:
    """
    Center each column and scale it to unit population standard deviation.

    Constant columns become zero columns and are flagged by a scale of 0.0,
    which keeps `unstandardize` exact for them.

    Returns:
        (standardized data, centers, scales)
    """
    features = data.features
    centers = features.mean(axis=0) if data.n_rows else np.zeros(data.n_columns)
    constant = np.ptp(features, axis=0) == 0.0 if data.n_rows else np.ones(data.n_columns, dtype=bool)
    scales = np.where(constant, 0.0, features.std(axis=0) if data.n_rows else 0.0)

    safe = np.where(constant, 1.0, scales)
    standardized = np.where(constant, 0.0, (features - centers) / safe)

    return (
        DataMatrix(
            features=standardized,
            column_names=data.column_names,
            response=data.response,
            response_name=data.response_name,
            n_dropped=data.n_dropped,
        ),
        centers,
        scales,
    )


def unstandardize(standardized: np.ndarray, centers: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Inverse of `standardize` on a raw feature array."""
    return np.asarray(standardized) * scales + centers


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitKind:
    RANDOM_FRACTION          :str = 'random_fraction'
    RESPONSE_THRESHOLD       :str = 'response_threshold'
    RESPONSE_BAND_COMPLEMENT :str = 'response_band_complement'
    FEATURE_THRESHOLD        :str = 'feature_threshold'
    FEATURE_BAND_COMPLEMENT  :str = 'feature_band_complement'

    @classmethod
    def values(cls) -> List[str]:
        return [getattr(cls, attr) for attr in cls.__annotations__.keys()]


@dataclass(frozen=True)
class TrainSide:
    ABOVE :str = 'above'
    BELOW :str = 'below'


@dataclass(frozen=True)
class SplitRule:
    """
    How to partition rows into training and validation sets.

    Threshold rules put rows strictly on `train_side` of the threshold into
    training. Band-complement rules train on rows strictly outside
    [lower, upper] and validate on the band itself.
    """
    kind: str
    fraction: Optional[float] = None
    threshold: Optional[float] = None
    lower: Optional[float] = None
    upper: Optional[float] = None
    column: Optional[str] = None
    train_side: str = TrainSide.ABOVE
    seed: int = 0
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in SplitKind.values():
            raise DatasetError(f"Invalid split kind '{self.kind}'. Must be one of: {SplitKind.values()}")
        if self.train_side not in (TrainSide.ABOVE, TrainSide.BELOW):
            raise DatasetError(f"Invalid train_side '{self.train_side}'")

        match self.kind:
            case SplitKind.RANDOM_FRACTION:
                if self.fraction is None or not 0.0 < self.fraction < 1.0:
                    raise DatasetError(f"random_fraction needs a fraction in (0, 1), got {self.fraction}")
            case SplitKind.RESPONSE_THRESHOLD | SplitKind.FEATURE_THRESHOLD:
                if self.threshold is None:
                    raise DatasetError(f"{self.kind} needs a threshold")
            case SplitKind.RESPONSE_BAND_COMPLEMENT | SplitKind.FEATURE_BAND_COMPLEMENT:
                if self.lower is None or self.upper is None or self.lower > self.upper:
                    raise DatasetError(f"{self.kind} needs lower <= upper, got ({self.lower}, {self.upper})")

        if self.kind.startswith('feature') and not self.column:
            raise DatasetError(f"{self.kind} needs a column")

    def to_dict(self) -> Dict[str, Any]:
        return {key: value for key, value in self.__dict__.items() if value is not None}

    @classmethod
    def from_dict(cls, source: Mapping[str, Any]) -> "SplitRule":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(source) - allowed
        if unknown:
            raise DatasetError(f"Unknown split rule keys: {sorted(unknown)}")
        return cls(**dict(source))


def split_indices(data: DataMatrix, rule: SplitRule) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row indices (train, validation) for `rule`, each in ascending order.

    Raises:
        DatasetError: Missing column/response, or an empty partition
    """
    n = data.n_rows

    if rule.kind == SplitKind.RANDOM_FRACTION:
        n_train = int(math.floor(rule.fraction * n))
        chosen = make_rng(rule.seed).choice(n, size=n_train, replace=False)
        train_mask = np.zeros(n, dtype=bool)
        train_mask[chosen] = True
    else:
        if rule.kind.startswith('response'):
            values = data.require_response()
        else:
            values = data.column(rule.column)

        if rule.kind in (SplitKind.RESPONSE_THRESHOLD, SplitKind.FEATURE_THRESHOLD):
            if rule.train_side == TrainSide.ABOVE:
                train_mask = values > rule.threshold
            else:
                train_mask = values < rule.threshold
        else:
            train_mask = (values < rule.lower) | (values > rule.upper)

    train = np.flatnonzero(train_mask)
    validation = np.flatnonzero(~train_mask)
    name = rule.label or rule.kind
    if train.size == 0:
        raise DatasetError(f"Split {name} leaves the training partition empty")
    if validation.size == 0:
        raise DatasetError(f"Split {name} leaves the validation partition empty")
    return train, validation


def split(data: DataMatrix, rule: SplitRule) -> Tuple[DataMatrix, DataMatrix]:
    """Partition `data` into (train, validation) per `rule`."""
    train, validation = split_indices(data, rule)
    logger.debug(f"Split {rule.label or rule.kind}: train={train.size}, validation={validation.size}")
    return data.select_rows(train), data.select_rows(validation)


# ---------------------------------------------------------------------------
# Concrete compressive strength data
# ---------------------------------------------------------------------------

CONCRETE_RESPONSE = 'strength'
CONCRETE_RATIO = ratio_name('cement', 'water')
CONCRETE_EXPANSION = FeatureExpansionSpec(custom_ratios=(('cement', 'water'),))

# Header keywords of the UCI release and its common CSV re-exports, checked in order
_CONCRETE_KEYWORDS: Tuple[Tuple[str, str], ...] = (
    ('strength', CONCRETE_RESPONSE),
    ('csmpa', CONCRETE_RESPONSE),
    ('cement', 'cement'),
    ('slag', 'slag'),
    ('fly', 'fly_ash'),
    ('water', 'water'),
    ('superplastic', 'superplasticizer'),
    ('coarse', 'coarse_aggregate'),
    ('fine', 'fine_aggregate'),
    ('age', 'age'),
)


def normalize_concrete_column(name: str) -> str:
    """Map a concrete-data header (long UCI form or short form) to a short identifier."""
    key = name.strip().lower().replace(' ', '').replace('_', '')
    for keyword, short in _CONCRETE_KEYWORDS:
        if keyword in key:
            return short
    return name.strip()


def with_concrete_ratio(data: DataMatrix) -> DataMatrix:
    """Append the cement-to-water ratio as a predictor unless it is already there."""
    if CONCRETE_RATIO in data.column_names:
        return data
    return expand_features(data, CONCRETE_EXPANSION)


def load_concrete_csv(path: Union[str, pathlib.Path]) -> DataMatrix:
    """Load the concrete strength CSV with normalized column names and the C/W column."""
    return with_concrete_ratio(load_csv(path, CONCRETE_RESPONSE, column_renamer=normalize_concrete_column))


def concrete_split_rules(seed: int = 0) -> Dict[str, SplitRule]:
    """
    The six training/validation splits of the concrete strength study.

    INT rules are random; EXT rules partition on strength or on the
    cement-to-water ratio column added by `with_concrete_ratio`.
    """
    return {
        'INT1': SplitRule(SplitKind.RANDOM_FRACTION, fraction=0.75, seed=seed, label='INT1'),
        'INT2': SplitRule(SplitKind.RANDOM_FRACTION, fraction=0.5, seed=seed, label='INT2'),
        'EXT1': SplitRule(SplitKind.RESPONSE_THRESHOLD, threshold=25.0,
                          train_side=TrainSide.ABOVE, label='EXT1'),
        'EXT2': SplitRule(SplitKind.RESPONSE_BAND_COMPLEMENT, lower=16.0, upper=56.0, label='EXT2'),
        'EXT3': SplitRule(SplitKind.FEATURE_THRESHOLD, threshold=2.0, column=CONCRETE_RATIO,
                          train_side=TrainSide.BELOW, label='EXT3'),
        'EXT4': SplitRule(SplitKind.FEATURE_BAND_COMPLEMENT, lower=1.0, upper=3.0,
                          column=CONCRETE_RATIO, label='EXT4'),
    }


CONCRETE_SPLIT_SIZES: Dict[str, Tuple[int, int]] = {
    'INT1': (772, 258),
    'INT2': (515, 515),
    'EXT1': (735, 295),
    'EXT2': (761, 269),
    'EXT3': (793, 237),
    'EXT4': (804, 226),
}
