"""
Prediction-error metrics.

The error of one prediction is the squared distance between predicted and
actual stacked joint positions at every prediction offset. A run is
summarized by the mean curve over its prediction times; runs are aggregated
into mean and standard error of the mean per offset.
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from simulator.errors import DimensionError
from simulator.trajectory import Trajectory


def position_errors(predicted: np.ndarray, actual: np.ndarray) -> np.ndarray:
    """
    Squared joint-position error per offset.

    Args:
        predicted: (H + 1, N, 2) predicted positions
        actual: (H + 1, N, 2) actual positions
    """
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape:
        raise DimensionError(f"prediction {predicted.shape} does not match actual {actual.shape}")
    diff = (predicted - actual).reshape(predicted.shape[0], -1)
    return np.sum(diff ** 2, axis=1)


def prediction_error(predicted: Trajectory, actual: Trajectory) -> np.ndarray:
    """Squared joint-position error of a predicted trajectory at every offset."""
    if predicted.horizon != actual.horizon:
        raise DimensionError(f"horizon {predicted.horizon} != {actual.horizon}")
    return position_errors(predicted.positions(), actual.positions())


def run_error_curve(predictions: Sequence[np.ndarray], actual: np.ndarray, offsets: int) -> np.ndarray:
    """
    Mean error per offset over all predictions of one run.

    Args:
        predictions: predictions[t] is the (H + 1, N, 2) prediction made at step t
        actual: (T + 1, N, 2) positions actually visited
        offsets: number of offsets H + 1 to report

    Offsets that run past the end of the simulation are left out of the
    mean; an offset no prediction reaches is NaN.
    """
    actual = np.asarray(actual, dtype=float)
    total = np.zeros(offsets)
    count = np.zeros(offsets)
    for t, predicted in enumerate(predictions):
        predicted = np.asarray(predicted, dtype=float)
        n = min(offsets, predicted.shape[0], actual.shape[0] - t)
        if n <= 0:
            continue
        total[:n] += position_errors(predicted[:n], actual[t:t + n])
        count[:n] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.maximum(count, 1), np.nan)


@dataclass
class ErrorCurves:
    """
    Prediction error aggregated over runs.

    Attributes:
        offsets: prediction offsets in seconds
        mean: mean squared error per offset
        sem: standard error of the mean per offset (NaN with fewer than two runs)
        runs: number of runs contributing to each offset
    """

    offsets: np.ndarray
    mean: np.ndarray
    sem: np.ndarray
    runs: np.ndarray

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["offset_s", "mean_sq_error", "sem", "runs"])
            for row in zip(self.offsets, self.mean, self.sem, self.runs):
                writer.writerow([f"{row[0]:.17g}", f"{row[1]:.17g}", f"{row[2]:.17g}", int(row[3])])
        return path


def aggregate_errors(curves: Sequence[np.ndarray], dt: float) -> ErrorCurves:
    """Mean and standard error of the mean per offset, ignoring NaNs."""
    if len(curves) == 0:
        raise ValueError("no error curves to aggregate")
    width = max(len(c) for c in curves)
    table = np.full((len(curves), width), np.nan)
    for r, curve in enumerate(curves):
        table[r, : len(curve)] = curve

    mean = np.full(width, np.nan)
    sem = np.full(width, np.nan)
    runs = np.zeros(width, dtype=int)
    for k in range(width):
        column = table[:, k]
        column = column[~np.isnan(column)]
        runs[k] = column.size
        if column.size:
            mean[k] = column.mean()
        if column.size > 1:
            sem[k] = stats.sem(column)
    return ErrorCurves(np.arange(width) * dt, mean, sem, runs)
