import json
import math
import os
import sys
from types import SimpleNamespace
from unittest.mock import patch

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from core.active_loop import ExperimentConfig, ExperimentData
from core.benchmark import (
    COMPARISON_COLUMNS,
    RUN_COLUMNS,
    compare_strategies,
    paired_comparison,
    run_variants,
    sign_test,
)
from core.synthetic_data import DomainShift, GaussianBenchSpec, make_gaussian_bench
from utils.config import load_experiment
from utils.errors import ActiveLoopError

ROOT = os.path.join(os.path.dirname(__file__), "..")
with open(os.path.join(os.path.dirname(__file__), "fixture.json")) as f:
    MULTI_SEED = json.load(f)["multi_seed"]
SEEDS = list(range(MULTI_SEED["seeds"]))


def upper_tail(wins, trials):
    return sum(math.comb(trials, i) for i in range(wins, trials + 1)) / 2 ** trials


def test_sign_test_matches_binomial_tail():
    assert sign_test(15, 5) == pytest.approx(upper_tail(15, 20))
    assert sign_test(15, 5) < 0.05
    assert sign_test(10, 10) == pytest.approx(upper_tail(10, 20))
    assert sign_test(0, 0) == 1.0


def fake_history(accuracy, ece):
    return SimpleNamespace(average_accuracy=accuracy, ece=ece)


def test_compare_counts_wins_and_drops_ties():
    # a, b alternate per seed: a wins, tie, b wins
    results = [fake_history(80.0, 0.10), fake_history(70.0, 0.20),
               fake_history(75.0, 0.10), fake_history(75.0, 0.10),
               fake_history(60.0, 0.30), fake_history(65.0, 0.05)]
    factory_seeds = []

    def data_factory(seed):
        factory_seeds.append(seed)
        return object()

    with patch('core.benchmark.run_experiment', side_effect=results) as mock_run:
        result = compare_strategies(ExperimentConfig(), data_factory, {"strategy": "sdm"},
                                    {"strategy": "random"}, [4, 5, 6])

    assert factory_seeds == [4, 5, 6]
    configs = [call.args[0] for call in mock_run.call_args_list]
    assert [c.seed for c in configs] == [4, 4, 5, 5, 6, 6]
    assert [c.strategy.value for c in configs] == ["sdm", "random"] * 3
    assert list(result.frame.columns) == COMPARISON_COLUMNS
    assert (result.wins_a, result.wins_b, result.ties) == (1, 1, 1)
    assert result.p_value == pytest.approx(0.75)
    assert result.summary()["seeds"] == 3
    assert result.mean_accuracy_a == pytest.approx(215.0 / 3)


def test_compare_rejects_bad_input():
    with pytest.raises(ActiveLoopError):
        compare_strategies(ExperimentConfig(), lambda seed: None, {}, {}, [])


def test_compare_runs_real_experiments():
    base = ExperimentConfig(rounds=1, selection_epochs=[3], total_epochs=5)

    def data_factory(seed):
        return ExperimentData(*make_gaussian_bench(GaussianBenchSpec(samples_per_class=30, seed=seed)))

    result = compare_strategies(base, data_factory, {"strategy": "sdm"}, {"strategy": "random"}, [0, 1])
    assert len(result.frame) == 2
    assert result.wins_a + result.wins_b + result.ties == 2
    assert 0.0 <= result.p_value <= 1.0


def test_run_variants_table_and_pairing():
    results = [fake_history(90.0, 0.05), fake_history(80.0, 0.10), fake_history(70.0, 0.20),
               fake_history(85.0, 0.04), fake_history(85.0, 0.12), fake_history(60.0, 0.30)]
    with patch('core.benchmark.run_experiment', side_effect=results):
        runs = run_variants(ExperimentConfig(), lambda seed: object(),
                            {"full": {}, "no_transfer": {}, "source_only": {"per_round_fraction": 0.0}}, [1, 2])

    assert list(runs.columns) == RUN_COLUMNS
    assert list(runs["variant"]) == ["full", "no_transfer", "source_only"] * 2
    result = paired_comparison(runs, "full", "source_only")
    assert list(result.frame["seed"]) == [1, 2]
    assert (result.wins_a, result.wins_b) == (2, 0)
    assert result.mean_ece_a == pytest.approx(0.045)
    with pytest.raises(ActiveLoopError):
        paired_comparison(runs, "full", "missing")
    with pytest.raises(ActiveLoopError):
        run_variants(ExperimentConfig(), lambda seed: None, {}, [0])


# ---------------------------------------------------------------------------
# twenty-seed comparisons

@pytest.mark.slow
def test_sdm_beats_random_on_rotated_gaussians():
    angle = MULTI_SEED["gaussian_rotation_angle"]

    def data_factory(seed):
        return ExperimentData(*make_gaussian_bench(GaussianBenchSpec(shift=DomainShift(angle), seed=seed)))

    result = compare_strategies(ExperimentConfig(), data_factory, {"strategy": "sdm"}, {"strategy": "random"}, SEEDS)
    assert result.p_value < MULTI_SEED["alpha"]
    assert result.wins_a > result.wins_b


@pytest.fixture(scope="module")
def texture_runs():
    setup = load_experiment(os.path.join(ROOT, MULTI_SEED["texture_config"]))
    variants = {
        "full": {"use_fda": True, "strategy": "sdm"},
        "no_transfer": {"use_fda": False, "strategy": "sdm"},
        "source_only": {"use_fda": False, "per_round_fraction": 0.0},
    }
    return run_variants(setup.config, setup.build_data, variants, SEEDS)


@pytest.mark.slow
def test_spectral_transfer_improves_accuracy(texture_runs):
    result = paired_comparison(texture_runs, "full", "no_transfer")
    assert result.p_value < MULTI_SEED["alpha"]
    assert result.mean_accuracy_a > result.mean_accuracy_b


@pytest.mark.slow
def test_full_method_is_no_worse_calibrated_than_source_only(texture_runs):
    result = paired_comparison(texture_runs, "full", "source_only")
    assert result.mean_ece_a <= result.mean_ece_b
    assert result.mean_accuracy_a > result.mean_accuracy_b
