# core/calibration_metrics.py
# Expected calibration error, reliability bins and per-class accuracy

import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd

from utils.errors import CalibrationError

logger = logging.getLogger(__name__)

BIN_COLUMNS = ["lower", "upper", "count", "mean_confidence", "accuracy"]


@dataclass
class PredictionLog:
    """Per-sample confidence, predicted class and actual class"""
    confidences: np.ndarray
    predicted: np.ndarray
    actual: np.ndarray

    def __post_init__(self):
        self.confidences = np.asarray(self.confidences, dtype=np.float64)
        self.predicted = np.asarray(self.predicted, dtype=np.int64)
        self.actual = np.asarray(self.actual, dtype=np.int64)
        n = len(self.confidences)
        if self.predicted.shape != (n,) or self.actual.shape != (n,):
            raise CalibrationError(
                f"log columns differ in length: {n}, {self.predicted.shape}, {self.actual.shape}"
            )
        if n and not np.all((self.confidences > 0.0) & (self.confidences <= 1.0)):
            raise CalibrationError("confidences must lie in (0,1]")

    def __len__(self) -> int:
        return len(self.confidences)

    @property
    def correct(self) -> np.ndarray:
        return self.predicted == self.actual


@dataclass
class ReliabilityBin:
    lower: float
    upper: float
    count: int
    mean_confidence: float
    accuracy: float


def _check_log(log: PredictionLog, n_bins: int):
    if len(log) == 0:
        raise CalibrationError("prediction log is empty")
    if n_bins < 1:
        raise CalibrationError(f"n_bins must be at least 1, got {n_bins}")


def bin_indices(confidences: np.ndarray, n_bins: int) -> np.ndarray:
    """1-based bin of each confidence: ceil(conf * n_bins) clamped to [1, n_bins]."""
    return np.clip(np.ceil(confidences * n_bins).astype(np.int64), 1, n_bins)


def reliability_bins(log: PredictionLog, n_bins: int = 10) -> List[ReliabilityBin]:
    """Equal-width bins (lo, hi] over (0,1]; empty bins report zero confidence and accuracy."""
    _check_log(log, n_bins)
    assignment = bin_indices(log.confidences, n_bins)
    correct = log.correct
    bins = []
    for b in range(1, n_bins + 1):
        members = assignment == b
        count = int(members.sum())
        if count:
            mean_confidence = float(log.confidences[members].mean())
            accuracy = float(correct[members].mean())
        else:
            mean_confidence = accuracy = 0.0
        bins.append(ReliabilityBin((b - 1) / n_bins, b / n_bins, count, mean_confidence, accuracy))
    return bins


def ece_from_bins(bins: List[ReliabilityBin]) -> float:
    total = sum(b.count for b in bins)
    if total == 0:
        raise CalibrationError("bins hold no samples")
    return float(sum((b.count / total) * abs(b.accuracy - b.mean_confidence) for b in bins if b.count))


def ece(log: PredictionLog, n_bins: int = 10) -> float:
    """Expected calibration error: sum_b (n_b/N) |acc_b - conf_b|."""
    return ece_from_bins(reliability_bins(log, n_bins))


def mce(log: PredictionLog, n_bins: int = 10) -> float:
    """Maximum calibration error over the non-empty bins."""
    return float(max(abs(b.accuracy - b.mean_confidence) for b in reliability_bins(log, n_bins) if b.count))


def per_class_accuracy(log: PredictionLog, num_classes: int) -> Tuple[List[float], float]:
    """
    Accuracy (percent) over samples of each actual class, plus their macro average.

    A class with no actual samples is reported as NaN and left out of the average.
    """
    if num_classes < 1:
        raise CalibrationError(f"num_classes must be positive, got {num_classes}")
    if len(log) and (log.actual.max() >= num_classes or log.predicted.max() >= num_classes
                     or log.actual.min() < 0 or log.predicted.min() < 0):
        raise CalibrationError(f"class indices must lie in [0, {num_classes})")
    correct = log.correct
    accuracies = []
    for k in range(num_classes):
        members = log.actual == k
        if members.any():
            accuracies.append(100.0 * float(correct[members].mean()))
        else:
            logger.warning(f"Class {k} has no samples; its accuracy is undefined")
            accuracies.append(math.nan)
    defined = [a for a in accuracies if not math.isnan(a)]
    average = float(np.mean(defined)) if defined else math.nan
    return accuracies, average


def bins_to_frame(bins: List[ReliabilityBin]) -> pd.DataFrame:
    return pd.DataFrame([[b.lower, b.upper, b.count, b.mean_confidence, b.accuracy] for b in bins],
                        columns=BIN_COLUMNS)


def write_bins_csv(bins: List[ReliabilityBin], path: str):
    """Per-bin rows followed by a summary row carrying the ECE."""
    frame = bins_to_frame(bins)
    frame.insert(0, "kind", "bin")
    frame["ece"] = np.nan
    summary = pd.DataFrame([{
        "kind": "summary",
        "count": sum(b.count for b in bins),
        "ece": ece_from_bins(bins),
    }])
    pd.concat([frame, summary], ignore_index=True).to_csv(path, index=False)


def read_bins_csv(path: str) -> Tuple[List[ReliabilityBin], float]:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except Exception as e:
        raise CalibrationError(f"Failed to read bins CSV {path}: {e}") from e
    rows = frame[frame["kind"] == "bin"]
    bins = [ReliabilityBin(float(r["lower"]), float(r["upper"]), int(r["count"]),
                           float(r["mean_confidence"]), float(r["accuracy"]))
            for _, r in rows.iterrows()]
    summary = frame[frame["kind"] == "summary"]
    value = float(summary["ece"].iloc[0]) if len(summary) else ece_from_bins(bins)
    return bins, value
