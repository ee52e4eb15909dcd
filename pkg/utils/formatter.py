import json
import os
import re
from typing import Any, Dict, List

import pandas as pd

from core.active_loop import MetricsHistory
from core.calibration_metrics import bins_to_frame, write_bins_csv
from core.prediction_log_manager import write_prediction_log
from utils.errors import DataIOError

EPOCH_COLUMNS = ["epoch", "loss", "train_size", "labeled_target", "target_accuracy"]
SELECTION_COLUMNS = ["round", "epoch", "rank", "index", "score", "label"]


def format_epoch_metrics(history: MetricsHistory) -> pd.DataFrame:
    """
    One row per epoch for learning curves.

    Args:
        history: Metrics of a finished experiment

    Returns:
        DataFrame with EPOCH_COLUMNS
    """
    return pd.DataFrame(
        [[e.epoch, e.loss, e.train_size, e.labeled_target, e.target_accuracy] for e in history.epochs],
        columns=EPOCH_COLUMNS,
    )


def format_selections(history: MetricsHistory, round_index: int = None) -> pd.DataFrame:
    """Selection records, optionally restricted to one round."""
    records = [s for s in history.selections if round_index is None or s.round == round_index]
    return pd.DataFrame(
        [[s.round, s.epoch, s.rank, s.index, s.score, s.label] for s in records],
        columns=SELECTION_COLUMNS,
    )


def format_per_class_accuracy(history: MetricsHistory) -> pd.DataFrame:
    rows = [{"class": str(k), "accuracy": a} for k, a in enumerate(history.per_class_accuracy)]
    rows.append({"class": "average", "accuracy": history.average_accuracy})
    return pd.DataFrame(rows, columns=["class", "accuracy"])


def format_summary(history: MetricsHistory) -> Dict[str, Any]:
    """Headline numbers of a run together with the config that produced it."""
    return {
        "config": history.config.to_dict(),
        "average_accuracy": history.average_accuracy,
        "overall_accuracy": history.overall_accuracy,
        "ece": history.ece,
        "labeled_target": history.labeled_target_count,
        "final_loss": history.epochs[-1].loss if history.epochs else None,
    }


def format_bins(history: MetricsHistory) -> pd.DataFrame:
    return bins_to_frame(history.bins)


def write_experiment_outputs(history: MetricsHistory, out_dir: str) -> List[str]:
    """
    Write every metrics file of a run into `out_dir`.

    Files: epochs.csv, selection_round_<r>.csv per round (1-based), per_class_accuracy.csv,
    reliability_bins.csv, predictions.csv and summary.json. Contents depend only on the
    run, so identical runs produce identical files.

    Returns:
        Paths of the written files
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
        written = []

        def target(name: str) -> str:
            path = os.path.join(out_dir, name)
            written.append(path)
            return path

        format_epoch_metrics(history).to_csv(target("epochs.csv"), index=False)
        for round_index in range(history.config.rounds):
            format_selections(history, round_index).to_csv(
                target(f"selection_round_{round_index + 1}.csv"), index=False
            )
        format_per_class_accuracy(history).to_csv(target("per_class_accuracy.csv"), index=False)
        write_bins_csv(history.bins, target("reliability_bins.csv"))
        write_prediction_log(history.prediction_log, target("predictions.csv"))
        with open(target("summary.json"), "w", encoding="utf-8") as f:
            json.dump(format_summary(history), f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise DataIOError(f"Failed to write experiment outputs to {out_dir}: {e}") from e
    return written


def write_loss_history(losses: List[float], path: str):
    try:
        pd.DataFrame({"epoch": range(1, len(losses) + 1), "loss": losses}).to_csv(path, index=False)
    except OSError as e:
        raise DataIOError(f"Failed to write {path}: {e}") from e


def sanitize_filename(filename: str) -> str:
    """
    Sanitize a filename for safe file system operations.

    Args:
        filename: Original filename

    Returns:
        Sanitized filename
    """
    sanitized = re.sub(r'[<>:"/\\|?*=\s]', '_', filename)
    if len(sanitized) > 100:
        sanitized = sanitized[:100]
    return sanitized
