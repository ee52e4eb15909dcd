# core/active_loop.py
# Pools, budget, selection strategies, simulated oracle and the training/selection experiment

import logging
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from core.calibration_metrics import (
    PredictionLog,
    ReliabilityBin,
    ece_from_bins,
    per_class_accuracy,
    reliability_bins,
)
from core.datasets import FeatureSet, ImageSet
from core.margin_model import (
    Featurizer,
    FeaturizerKind,
    HeadTrainer,
    LinearHead,
    MarginParams,
    predict_batch,
    prediction_entropy,
    score_pool,
)
from core.optimizers import OptimizerConfig, OptimizerKind
from core.spectral_transfer import SpectralStack, low_freq_mask, mix_low_frequencies
from utils.errors import ActiveLoopError, ConfigError, SdmError
from utils.seeding import PAIRING, SELECTION, SHUFFLING, draw_without_replacement, seeded_stream

SampleSet = Union[FeatureSet, ImageSet]

# JSON document keys that differ from the dataclass attribute names
CONFIG_KEY_ALIASES = {"lambda": "lam"}


class Strategy(Enum):
    SDM = "sdm"
    RANDOM = "random"
    ENTROPY = "entropy"


@dataclass
class ExperimentConfig:
    """Round schedule, training hyperparameters and selection strategy of one run"""
    rounds: int = 5
    per_round_fraction: float = 0.02
    selection_epochs: List[int] = field(default_factory=lambda: [10, 12, 14, 16, 18])
    total_epochs: int = 50
    batch_size: int = 32
    lam: float = 0.001
    beta: float = 0.033
    margin: float = 1.0
    strategy: Strategy = Strategy.SDM
    use_fda: bool = False
    seed: int = 0
    optimizer: OptimizerKind = OptimizerKind.ADADELTA
    learning_rate: float = 0.5
    rho: float = 0.9
    eps: float = 1e-6
    n_bins: int = 10
    query_workers: int = 1
    featurizer: Optional[FeaturizerKind] = None  # None picks by data kind
    feature_dim: int = 256

    def __post_init__(self):
        try:
            if isinstance(self.strategy, str):
                self.strategy = Strategy(self.strategy.lower())
            if isinstance(self.optimizer, str):
                self.optimizer = OptimizerKind(self.optimizer.lower())
            if isinstance(self.featurizer, str):
                self.featurizer = FeaturizerKind(self.featurizer)
        except ValueError as e:
            raise ConfigError(f"Invalid experiment config: {e}") from e
        self.selection_epochs = [int(e) for e in self.selection_epochs]
        self.validate()

    def validate(self):
        """Reject inconsistent schedules before any work is done."""
        if self.rounds < 0:
            raise ConfigError(f"rounds must be non-negative, got {self.rounds}")
        if self.total_epochs < 1:
            raise ConfigError(f"total_epochs must be positive, got {self.total_epochs}")
        if len(self.selection_epochs) != self.rounds:
            raise ConfigError(
                f"selection_epochs has {len(self.selection_epochs)} entries but rounds is {self.rounds}"
            )
        if any(b <= a for a, b in zip(self.selection_epochs, self.selection_epochs[1:])):
            raise ConfigError(f"selection_epochs must be strictly increasing, got {self.selection_epochs}")
        if self.selection_epochs and self.selection_epochs[-1] >= self.total_epochs:
            raise ConfigError(
                f"selection epochs must come before epoch {self.total_epochs}, got {self.selection_epochs}"
            )
        # selection needs a head trained for at least one epoch
        if self.selection_epochs and self.selection_epochs[0] < 2:
            raise ConfigError(f"first selection epoch must be 2 or later, got {self.selection_epochs[0]}")
        if not 0.0 <= self.per_round_fraction <= 1.0:
            raise ConfigError(f"per_round_fraction must lie in [0,1], got {self.per_round_fraction}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if not self.margin > 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if not self.lam >= 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError(f"beta must lie strictly inside (0,1), got {self.beta}")
        if self.n_bins < 1:
            raise ConfigError(f"n_bins must be positive, got {self.n_bins}")
        if self.query_workers < 1:
            raise ConfigError(f"query_workers must be positive, got {self.query_workers}")
        if self.feature_dim < 1:
            raise ConfigError(f"feature_dim must be positive, got {self.feature_dim}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "ExperimentConfig":
        """Build a config from JSON-style keys; unknown keys are rejected."""
        return cls(**_normalize_keys(values))

    def with_overrides(self, overrides: Dict[str, Any]) -> "ExperimentConfig":
        return replace(self, **_normalize_keys(overrides))

    def to_dict(self) -> Dict[str, Any]:
        result = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Enum):
                value = value.value
            key = next((k for k, v in CONFIG_KEY_ALIASES.items() if v == f.name), f.name)
            result[key] = list(value) if isinstance(value, list) else value
        return result

    def per_round_count(self, n_target: int) -> int:
        """ceil(per_round_fraction * n_t) over the original pool size."""
        # round first so that 0.02 * 1000 does not become 21 through float error
        return int(math.ceil(round(self.per_round_fraction * n_target, 9)))

    def budget(self, n_target: int) -> int:
        return self.rounds * self.per_round_count(n_target)

    def check_budget(self, n_target: int):
        budget = self.budget(n_target)
        if budget > n_target:
            raise ConfigError(f"budget B={budget} exceeds the target pool size {n_target}")

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            kind=self.optimizer,
            learning_rate=self.learning_rate,
            rho=self.rho,
            eps=self.eps,
            epochs=self.total_epochs,
            batch_size=self.batch_size,
            margin=self.margin,
            seed=self.seed,
        )

    def margin_params(self) -> MarginParams:
        return MarginParams(m=self.margin, lam=self.lam)


def _normalize_keys(values: Dict[str, Any]) -> Dict[str, Any]:
    known = {f.name for f in fields(ExperimentConfig)}
    normalized = {}
    for key, value in values.items():
        name = CONFIG_KEY_ALIASES.get(key, key)
        if name not in known:
            raise ConfigError(f"Unknown experiment config key '{key}'")
        normalized[name] = value
    return normalized


def _raw(samples: SampleSet) -> np.ndarray:
    return samples.images if isinstance(samples, ImageSet) else samples.features


class Pool:
    """
    Labeled source set plus the target set split into unlabeled and labeled parts.

    Target samples are addressed by their index in the original target pool.
    """

    def __init__(self, source_labeled: SampleSet, target: SampleSet, budget: Optional[int] = None):
        self.logger = logging.getLogger(__name__)
        if source_labeled.labels is None:
            raise ActiveLoopError("source set must be labeled")
        self.source_labeled = source_labeled
        self.target = target
        self.ground_truth_labels = target.labels
        self.budget = budget
        self._is_labeled = np.zeros(len(target), dtype=bool)
        self.rounds: List[np.ndarray] = []

    @property
    def n_target(self) -> int:
        return len(self.target)

    @property
    def target_unlabeled(self) -> np.ndarray:
        return np.flatnonzero(~self._is_labeled)

    @property
    def target_labeled(self) -> np.ndarray:
        """Labeled target indices in annotation order."""
        return np.concatenate(self.rounds) if self.rounds else np.zeros(0, dtype=np.int64)

    def labeled_target_labels(self) -> np.ndarray:
        if self.ground_truth_labels is None:
            return np.zeros(0, dtype=np.int64)
        return self.ground_truth_labels[self.target_labeled]

    def annotate(self, indices) -> "Pool":
        """Reveal ground-truth labels for `indices` and move them to the labeled set."""
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        if self.ground_truth_labels is None:
            raise ActiveLoopError("target pool has no ground-truth labels to reveal")
        if len(np.unique(indices)) != len(indices):
            raise ActiveLoopError(f"duplicate indices in annotation request: {indices.tolist()}")
        if len(indices) and (indices.min() < 0 or indices.max() >= self.n_target):
            raise ActiveLoopError(f"annotation indices must lie in [0, {self.n_target})")
        already = indices[self._is_labeled[indices]]
        if len(already):
            raise ActiveLoopError(f"indices already labeled: {already.tolist()}")
        labeled_after = int(self._is_labeled.sum()) + len(indices)
        if self.budget is not None and labeled_after > self.budget:
            raise ActiveLoopError(f"annotating {len(indices)} samples would exceed the budget B={self.budget}")
        self._is_labeled[indices] = True
        self.rounds.append(indices.copy())
        self.logger.debug(f"Annotated {len(indices)} target samples, {labeled_after} labeled in total")
        return self

    def check_invariants(self):
        labeled = self.target_labeled
        if len(np.unique(labeled)) != len(labeled):
            raise ActiveLoopError("a target sample was selected in more than one round")
        if len(np.intersect1d(labeled, self.target_unlabeled)):
            raise ActiveLoopError("labeled and unlabeled target sets overlap")
        if self.budget is not None and len(labeled) > self.budget:
            raise ActiveLoopError(f"{len(labeled)} labeled target samples exceed the budget B={self.budget}")


def annotate(pool: Pool, indices) -> Pool:
    return pool.annotate(indices)


# ---------------------------------------------------------------------------
# selection

def top_k_indices(candidates, scores, k: int) -> np.ndarray:
    """Top-k candidates by score descending, ties broken by ascending index."""
    candidates = np.asarray(candidates, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if k > len(candidates):
        raise ActiveLoopError(f"cannot select {k} samples from {len(candidates)} candidates")
    order = np.lexsort((candidates, -scores))
    return candidates[order[:k]]


def score_candidates(head: LinearHead, features: np.ndarray, strategy: Strategy,
                     params: MarginParams, workers: int = 1) -> np.ndarray:
    """Ranking score per row: Q for sdm, prediction entropy for entropy, zeros for random."""
    if strategy is Strategy.SDM:
        return score_pool(head, features, params, workers)[2]
    if strategy is Strategy.ENTROPY:
        if len(features) == 0:
            return np.zeros(0)
        return prediction_entropy(features @ head.weights.T + head.bias)
    return np.zeros(len(features))


def select_with_scores(head: LinearHead, featurizer: Featurizer, pool: Pool, k: int,
                       strategy: Union[Strategy, str], params: Optional[MarginParams] = None,
                       seed: int = 0, round_index: int = 0,
                       workers: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Choose k unlabeled target samples.

    Returns:
        (selected target indices in rank order, score of each selected sample)
    """
    if isinstance(strategy, str):
        try:
            strategy = Strategy(strategy.lower())
        except ValueError as e:
            raise ActiveLoopError(f"unknown selection strategy '{strategy}'") from e
    params = params or MarginParams()
    candidates = pool.target_unlabeled
    if k < 0 or k > len(candidates):
        raise ActiveLoopError(f"cannot select {k} samples from {len(candidates)} unlabeled candidates")
    if k == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)

    if strategy is Strategy.RANDOM:
        rng = seeded_stream(seed, SELECTION, round_index)
        chosen = draw_without_replacement(rng, candidates, k).astype(np.int64)
        return chosen, np.zeros(k)

    features = featurizer.forward_batch(_raw(pool.target)[candidates])
    scores = score_candidates(head, features, strategy, params, workers)
    chosen = top_k_indices(candidates, scores, k)
    by_index = dict(zip(candidates.tolist(), scores.tolist()))
    return chosen, np.array([by_index[i] for i in chosen.tolist()])


def select_batch(head: LinearHead, featurizer: Featurizer, pool: Pool, k: int,
                 strategy: Union[Strategy, str], params: Optional[MarginParams] = None,
                 seed: int = 0, round_index: int = 0, workers: int = 1) -> np.ndarray:
    return select_with_scores(head, featurizer, pool, k, strategy, params, seed, round_index, workers)[0]


# ---------------------------------------------------------------------------
# spectral transfer of the source set

class SourceTransfer:
    """
    Source spectra and target amplitudes of one experiment, computed once.

    Each call to transfer() only re-draws the pairing, mixes the amplitudes and
    inverts the spectra.
    """

    def __init__(self, source_images, target_images, beta: float, seed: int):
        source_images = np.asarray(source_images, dtype=np.float64)
        target_images = np.asarray(target_images, dtype=np.float64)
        if len(target_images) == 0:
            raise ActiveLoopError("spectral transfer needs a non-empty target image set")
        if source_images.ndim != 4 or source_images.shape[1:] != target_images.shape[1:]:
            raise ActiveLoopError(
                f"source images {source_images.shape[1:]} and target images {target_images.shape[1:]} "
                f"must be equally shaped H x W x C stacks"
            )
        height, width = source_images.shape[1:3]
        self.mask = low_freq_mask(height, width, beta)
        self.seed = seed
        self.n_source = len(source_images)
        self.n_target = len(target_images)
        # spectra are kept channels-first: N x C x H x W
        self.source = SpectralStack.of(np.moveaxis(source_images, -1, 1))
        self.target_amplitude = SpectralStack.of(np.moveaxis(target_images, -1, 1)).amplitude

    def partners(self, epoch: int) -> np.ndarray:
        """Target index paired with every source image at this epoch."""
        rng = seeded_stream(self.seed, PAIRING, epoch)
        return rng.integers(0, self.n_target, size=self.n_source)

    def transfer(self, epoch: int) -> np.ndarray:
        mixed = mix_low_frequencies(self.source, self.target_amplitude[self.partners(epoch)], self.mask)
        return np.moveaxis(mixed, 1, -1)


def apply_fda_to_source(source_images, target_images, beta: float, seed: int, epoch: int = 0) -> np.ndarray:
    """
    Pair every source image with a uniformly drawn target image and swap in its
    low-frequency amplitude. Pairs are re-drawn for every epoch.
    """
    return SourceTransfer(source_images, target_images, beta, seed).transfer(epoch)


# ---------------------------------------------------------------------------
# experiment

@dataclass
class ExperimentData:
    """Labeled source set, target pool with hidden labels, and held-out target test split"""
    source: SampleSet
    target_pool: SampleSet
    target_test: SampleSet

    def __post_init__(self):
        sets = (self.source, self.target_pool, self.target_test)
        if len({type(s) for s in sets}) != 1:
            raise ActiveLoopError("source, target pool and target test must all be feature sets or all image sets")
        for name, s in zip(("source", "target_pool", "target_test"), sets):
            if s.labels is None:
                raise ActiveLoopError(f"{name} set needs labels")
            if len(s) == 0:
                raise ActiveLoopError(f"{name} set is empty")
        if len({_raw(s).shape[1:] for s in sets}) != 1:
            raise ActiveLoopError(f"sample shapes differ: {[_raw(s).shape[1:] for s in sets]}")
        if min(int(s.labels.min()) for s in sets) < 0:
            raise ActiveLoopError("labels must be non-negative")

    @property
    def image_mode(self) -> bool:
        return isinstance(self.source, ImageSet)

    @property
    def num_classes(self) -> int:
        return max(2, max(int(s.labels.max()) for s in (self.source, self.target_pool, self.target_test)) + 1)

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return tuple(_raw(self.source).shape[1:])


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_size: int
    labeled_target: int
    target_accuracy: float


@dataclass
class SelectionRecord:
    round: int
    epoch: int
    rank: int
    index: int
    score: float
    label: int


@dataclass
class MetricsHistory:
    config: ExperimentConfig
    epochs: List[EpochRecord] = field(default_factory=list)
    selections: List[SelectionRecord] = field(default_factory=list)
    per_class_accuracy: List[float] = field(default_factory=list)
    average_accuracy: float = math.nan
    overall_accuracy: float = math.nan
    prediction_log: Optional[PredictionLog] = None
    bins: List[ReliabilityBin] = field(default_factory=list)
    ece: float = math.nan
    head: Optional[LinearHead] = None

    def selected_indices(self, round_index: int) -> List[int]:
        return [s.index for s in self.selections if s.round == round_index]

    @property
    def labeled_target_count(self) -> int:
        return len(self.selections)


def build_featurizer(config: ExperimentConfig, data: ExperimentData,
                     fit_raw: Optional[np.ndarray] = None) -> Featurizer:
    """
    Featurizer for the experiment. Projected kinds are normalized on `fit_raw`
    (the raw source set when not given); external features pass through untouched.
    """
    kind = config.featurizer
    if kind is None:
        kind = FeaturizerKind.RECTIFIED_PROJECTION if data.image_mode else FeaturizerKind.EXTERNAL_FEATURES
    if kind is FeaturizerKind.EXTERNAL_FEATURES and data.image_mode:
        raise ConfigError("external-features featurizer cannot consume images")
    if kind in (FeaturizerKind.RANDOM_PROJECTION, FeaturizerKind.RECTIFIED_PROJECTION):
        featurizer = Featurizer.random_projection(
            data.sample_shape, config.feature_dim, config.seed,
            rectified=kind is FeaturizerKind.RECTIFIED_PROJECTION,
        )
        return featurizer.fit_normalization(_raw(data.source) if fit_raw is None else fit_raw)
    return Featurizer(kind, data.sample_shape)


class ExperimentRunner:
    """Runs the epoch loop: optional spectral transfer, scheduled selection, head update"""

    def __init__(self, config: ExperimentConfig, data: ExperimentData):
        self.logger = logging.getLogger(__name__)
        config.validate()
        if config.use_fda and not data.image_mode:
            raise ConfigError("use_fda requires image data")
        self.config = config
        self.data = data
        self.n_target = len(data.target_pool)
        config.check_budget(self.n_target)
        self.per_round = config.per_round_count(self.n_target)
        self.pool = Pool(data.source, data.target_pool, budget=config.budget(self.n_target))
        self.transfer = (
            SourceTransfer(data.source.images, data.target_pool.images, config.beta, config.seed)
            if config.use_fda else None
        )
        # with transfer on, the normalization is fitted on the first epoch's restyled source
        fit_raw = self.transfer.transfer(1) if self.transfer is not None else None
        self.featurizer = build_featurizer(config, data, fit_raw)
        self.head = LinearHead.zeros(data.num_classes, self.featurizer.output_dim)
        self.trainer = HeadTrainer(self.head, config.optimizer_config())
        self.rng = seeded_stream(config.seed, SHUFFLING)
        self.schedule = {epoch: r for r, epoch in enumerate(config.selection_epochs)}

        self.target_features = self.featurizer.forward_batch(_raw(data.target_pool))
        self.test_features = self.featurizer.forward_batch(_raw(data.target_test))
        self.source_features = None if config.use_fda else self.featurizer.forward_batch(_raw(data.source))

        if self.per_round == 0:
            self.logger.warning("Per-round selection count is 0; running source-only training")

    def _source_features(self, epoch: int) -> np.ndarray:
        if self.transfer is None:
            return self.source_features
        return self.featurizer.forward_batch(self.transfer.transfer(epoch))

    def _select(self, epoch: int, round_index: int, history: MetricsHistory):
        chosen, scores = select_with_scores(
            self.trainer.head, self.featurizer, self.pool, self.per_round, self.config.strategy,
            self.config.margin_params(), self.config.seed, round_index, self.config.query_workers,
        )
        self.pool.annotate(chosen)
        self.pool.check_invariants()
        labels = self.pool.ground_truth_labels[chosen]
        for rank, (index, score, label) in enumerate(zip(chosen.tolist(), scores.tolist(), labels.tolist())):
            history.selections.append(SelectionRecord(round_index, epoch, rank, index, score, label))
        self.logger.info(
            f"Round {round_index + 1}/{self.config.rounds} at epoch {epoch}: selected {len(chosen)} "
            f"({len(self.pool.target_labeled)}/{self.pool.budget} of the budget) with {self.config.strategy.value}"
        )

    def _test_accuracy(self) -> float:
        predicted, _ = predict_batch(self.trainer.head, self.test_features)
        return float(np.mean(predicted == self.data.target_test.labels))

    def run(self) -> MetricsHistory:
        history = MetricsHistory(config=self.config)
        for epoch in range(1, self.config.total_epochs + 1):
            if epoch in self.schedule:
                self._select(epoch, self.schedule[epoch], history)

            labeled = self.pool.target_labeled
            train_x = np.vstack([self._source_features(epoch), self.target_features[labeled]])
            train_y = np.concatenate([self.data.source.labels, self.pool.labeled_target_labels()])
            loss = self.trainer.train_epoch(train_x, train_y, self.rng)
            accuracy = self._test_accuracy()
            history.epochs.append(EpochRecord(epoch, loss, len(train_y), len(labeled), accuracy))
            self.logger.info(
                f"Epoch {epoch}/{self.config.total_epochs}: loss={loss:.6f} "
                f"train={len(train_y)} target_acc={accuracy:.4f}"
            )

        self._finalize(history)
        return history

    def _finalize(self, history: MetricsHistory):
        predicted, confidences = predict_batch(self.trainer.head, self.test_features)
        log = PredictionLog(confidences, predicted, self.data.target_test.labels)
        history.prediction_log = log
        history.per_class_accuracy, history.average_accuracy = per_class_accuracy(log, self.data.num_classes)
        history.overall_accuracy = float(np.mean(log.correct))
        history.bins = reliability_bins(log, self.config.n_bins)
        history.ece = ece_from_bins(history.bins)
        history.head = self.trainer.head.copy()
        self.logger.info(
            f"Finished: average per-class accuracy {history.average_accuracy:.2f}%, ECE {history.ece:.4f}, "
            f"{history.labeled_target_count} target samples labeled"
        )


def run_experiment(config: ExperimentConfig, data: ExperimentData) -> MetricsHistory:
    """
    Train for config.total_epochs epochs, selecting and annotating target samples at
    each selection epoch before that epoch's update.
    """
    try:
        return ExperimentRunner(config, data).run()
    except SdmError:
        raise
    except ValueError as e:
        raise ActiveLoopError(f"Experiment failed: {e}") from e
