from typing import Sequence

import numpy as np


class MetricError(ValueError):
    pass


def rmse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Root mean square error, sqrt(mean((predicted - actual)^2))."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape:
        raise MetricError(f"Length mismatch: {predicted.shape} vs {actual.shape}")
    if predicted.size == 0:
        raise MetricError("RMSE of empty vectors is undefined")
    difference = predicted - actual
    return float(np.sqrt(np.mean(difference * difference)))
