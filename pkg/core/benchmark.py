# core/benchmark.py
# Multi-seed runs of experiment variants and paired comparison with a one-sided sign test

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Sequence

import pandas as pd
from scipy import stats

from core.active_loop import ExperimentConfig, ExperimentData, run_experiment
from utils.errors import ActiveLoopError

logger = logging.getLogger(__name__)

COMPARISON_COLUMNS = ["seed", "accuracy_a", "accuracy_b", "ece_a", "ece_b"]
RUN_COLUMNS = ["seed", "variant", "accuracy", "ece"]


@dataclass
class ComparisonResult:
    """Per-seed metrics of variants a and b plus the sign test of a > b on accuracy"""
    frame: pd.DataFrame
    wins_a: int
    wins_b: int
    ties: int
    p_value: float
    ece_p_value: float

    @property
    def mean_accuracy_a(self) -> float:
        return float(self.frame["accuracy_a"].mean())

    @property
    def mean_accuracy_b(self) -> float:
        return float(self.frame["accuracy_b"].mean())

    @property
    def mean_ece_a(self) -> float:
        return float(self.frame["ece_a"].mean())

    @property
    def mean_ece_b(self) -> float:
        return float(self.frame["ece_b"].mean())

    def summary(self) -> Dict[str, Any]:
        return {
            "seeds": len(self.frame),
            "wins_a": self.wins_a,
            "wins_b": self.wins_b,
            "ties": self.ties,
            "p_value": self.p_value,
            "mean_accuracy_a": self.mean_accuracy_a,
            "mean_accuracy_b": self.mean_accuracy_b,
            "mean_ece_a": self.mean_ece_a,
            "mean_ece_b": self.mean_ece_b,
            "ece_p_value": self.ece_p_value,
        }


def sign_test(wins: int, losses: int) -> float:
    """One-sided sign test p-value for 'wins outnumber losses'; ties are dropped beforehand."""
    trials = wins + losses
    if trials == 0:
        return 1.0
    return float(stats.binomtest(wins, trials, 0.5, alternative="greater").pvalue)


def run_variants(base_config: ExperimentConfig, data_factory: Callable[[int], ExperimentData],
                 variants: Dict[str, Dict[str, Any]], seeds: Sequence[int]) -> pd.DataFrame:
    """
    Run every named variant on the same data for every seed.

    Variants run in their dict order within a seed, and data_factory is called
    once per seed. Returns one row per (seed, variant) with columns RUN_COLUMNS.
    """
    if not seeds:
        raise ActiveLoopError("comparison needs at least one seed")
    if not variants:
        raise ActiveLoopError("comparison needs at least one variant")
    configs = {name: base_config.with_overrides(overrides) for name, overrides in variants.items()}

    rows = []
    for seed in seeds:
        data = data_factory(seed)
        for name, config in configs.items():
            history = run_experiment(config.with_overrides({"seed": seed}), data)
            rows.append([seed, name, history.average_accuracy, history.ece])
            logger.info(f"Seed {seed} {name}: accuracy {history.average_accuracy:.2f}, ECE {history.ece:.4f}")
    return pd.DataFrame(rows, columns=RUN_COLUMNS)


def paired_comparison(runs: pd.DataFrame, variant_a: str, variant_b: str) -> ComparisonResult:
    """
    Pair two variants of a run_variants table by seed and sign-test them
    (accuracy: a > b; ECE: a < b).
    """
    missing = {variant_a, variant_b} - set(runs["variant"])
    if missing:
        raise ActiveLoopError(f"no runs for variant(s) {sorted(missing)}")
    a = runs[runs["variant"] == variant_a].set_index("seed")
    b = runs[runs["variant"] == variant_b].set_index("seed")
    seeds = [seed for seed in a.index if seed in b.index]
    frame = pd.DataFrame({
        "seed": seeds,
        "accuracy_a": a.loc[seeds, "accuracy"].to_numpy(),
        "accuracy_b": b.loc[seeds, "accuracy"].to_numpy(),
        "ece_a": a.loc[seeds, "ece"].to_numpy(),
        "ece_b": b.loc[seeds, "ece"].to_numpy(),
    }, columns=COMPARISON_COLUMNS)

    wins_a = int((frame["accuracy_a"] > frame["accuracy_b"]).sum())
    wins_b = int((frame["accuracy_a"] < frame["accuracy_b"]).sum())
    ties = len(frame) - wins_a - wins_b
    ece_wins = int((frame["ece_a"] < frame["ece_b"]).sum())
    ece_losses = int((frame["ece_a"] > frame["ece_b"]).sum())

    result = ComparisonResult(frame, wins_a, wins_b, ties, sign_test(wins_a, wins_b),
                              sign_test(ece_wins, ece_losses))
    logger.info(
        f"{variant_a} vs {variant_b} over {len(frame)} seeds: {variant_a} wins {wins_a}, "
        f"{variant_b} wins {wins_b}, ties {ties}, p={result.p_value:.4g}"
    )
    return result


def compare_strategies(base_config: ExperimentConfig, data_factory: Callable[[int], ExperimentData],
                       variant_a: Dict[str, Any], variant_b: Dict[str, Any],
                       seeds: Sequence[int]) -> ComparisonResult:
    """
    Run both variants on the same data for every seed.

    Args:
        base_config: settings shared by both variants
        data_factory: builds the experiment data for a seed
        variant_a: config overrides for variant a (JSON key names)
        variant_b: config overrides for variant b
        seeds: master seeds; each seed drives both the data and the run

    Returns:
        ComparisonResult with the paired per-seed table and sign-test p-values
    """
    runs = run_variants(base_config, data_factory, {"a": variant_a, "b": variant_b}, seeds)
    return paired_comparison(runs, "a", "b")
