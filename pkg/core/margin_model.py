# core/margin_model.py
# Linear classifier head, adaptive margin loss, margin/query scores and head training

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from core.optimizers import OptimizerConfig, build_optimizer
from utils.errors import MarginModelError
from utils.seeding import FEATURIZER, SHUFFLING, seeded_stream

logger = logging.getLogger(__name__)

ZERO_NORM = 1e-12


class GradientConvention(Enum):
    DETACHED_GAMMA = "detached-gamma"
    FULL = "full"


class FeaturizerKind(Enum):
    IDENTITY_FLATTEN = "identity-flatten"
    RANDOM_PROJECTION = "fixed-random-projection"
    RECTIFIED_PROJECTION = "rectified-random-projection"
    EXTERNAL_FEATURES = "external-features"


_PROJECTED_KINDS = (FeaturizerKind.RANDOM_PROJECTION, FeaturizerKind.RECTIFIED_PROJECTION)


@dataclass
class LinearHead:
    """Classifier C: logits(f) = weights . f + bias"""
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise MarginModelError(f"weights must be K x D, got shape {self.weights.shape}")
        k, d = self.weights.shape
        if k < 2 or d < 1:
            raise MarginModelError(f"head needs K >= 2 classes and D >= 1 features, got K={k}, D={d}")
        if self.bias.shape != (k,):
            raise MarginModelError(f"bias must have length {k}, got shape {self.bias.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise MarginModelError("head parameters contain non-finite values")

    @classmethod
    def zeros(cls, num_classes: int, feature_dim: int) -> "LinearHead":
        return cls(np.zeros((num_classes, feature_dim)), np.zeros(num_classes))

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "LinearHead":
        return LinearHead(self.weights.copy(), self.bias.copy())


@dataclass
class Featurizer:
    """
    Fixed, forward-only feature extractor G.

    A featurizer may carry a frozen normalization: outputs are centered on
    `center` and divided by the scalar `scale`.
    """
    kind: FeaturizerKind
    input_shape: Tuple[int, ...]
    projection: Optional[np.ndarray] = None
    seed: int = 0
    center: Optional[np.ndarray] = None
    scale: float = 1.0

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = FeaturizerKind(self.kind)
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if self.kind in _PROJECTED_KINDS:
            if self.projection is None:
                raise MarginModelError(f"{self.kind.value} featurizer needs a projection matrix")
            self.projection = np.asarray(self.projection, dtype=np.float64)
            if self.projection.shape[1] != int(np.prod(self.input_shape)):
                raise MarginModelError(
                    f"projection expects {self.projection.shape[1]} inputs, input shape is {self.input_shape}"
                )
        if self.center is not None:
            self.center = np.asarray(self.center, dtype=np.float64)
            if self.center.shape != (self.output_dim,):
                raise MarginModelError(f"center must have length {self.output_dim}, got shape {self.center.shape}")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise MarginModelError(f"feature scale must be a positive number, got {self.scale}")

    @classmethod
    def random_projection(cls, input_shape, output_dim: int, seed: int, rectified: bool = False) -> "Featurizer":
        """Gaussian projection scaled by 1/sqrt(input dim); `rectified` adds a ReLU after it."""
        input_dim = int(np.prod(input_shape))
        rng = seeded_stream(seed, FEATURIZER)
        projection = rng.standard_normal((output_dim, input_dim)) / np.sqrt(input_dim)
        kind = FeaturizerKind.RECTIFIED_PROJECTION if rectified else FeaturizerKind.RANDOM_PROJECTION
        return cls(kind, tuple(input_shape), projection, seed)

    @property
    def output_dim(self) -> int:
        if self.kind in _PROJECTED_KINDS:
            return self.projection.shape[0]
        return int(np.prod(self.input_shape))

    def forward(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64)
        if raw.shape != self.input_shape:
            raise MarginModelError(f"input shape {raw.shape} does not match featurizer shape {self.input_shape}")
        return self.forward_batch(raw[np.newaxis])[0]

    def forward_batch(self, raw) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64)
        if raw.shape[1:] != self.input_shape:
            raise MarginModelError(
                f"batch sample shape {raw.shape[1:]} does not match featurizer shape {self.input_shape}"
            )
        features = self._project(raw.reshape(raw.shape[0], -1))
        if self.center is None:
            return features
        return (features - self.center) / self.scale

    def _project(self, flat: np.ndarray) -> np.ndarray:
        if self.kind is FeaturizerKind.RANDOM_PROJECTION:
            return flat @ self.projection.T
        if self.kind is FeaturizerKind.RECTIFIED_PROJECTION:
            return np.maximum(flat @ self.projection.T, 0.0)
        return flat

    def fit_normalization(self, raw) -> "Featurizer":
        """
        Copy of this featurizer whose outputs on `raw` have zero mean per dimension
        and unit root-mean-square overall.

        The statistics are frozen at fit time; the projection is shared.
        """
        raw = np.asarray(raw, dtype=np.float64)
        if len(raw) == 0 or raw.shape[1:] != self.input_shape:
            raise MarginModelError(
                f"normalization needs a non-empty batch of shape (N,) + {self.input_shape}, got {raw.shape}"
            )
        features = self._project(raw.reshape(raw.shape[0], -1))
        center = features.mean(axis=0)
        rms = float(np.sqrt(np.mean((features - center) ** 2)))
        scale = rms if rms > ZERO_NORM else 1.0
        return Featurizer(self.kind, self.input_shape, self.projection, self.seed, center, scale)


@dataclass(frozen=True)
class MarginParams:
    m: float = 1.0
    lam: float = 0.001

    def __post_init__(self):
        if not self.m > 0:
            raise MarginModelError(f"margin width m must be positive, got {self.m}")
        if not self.lam >= 0:
            raise MarginModelError(f"lambda must be non-negative, got {self.lam}")


@dataclass
class QueryRecord:
    sample_index: int
    margin_score: float
    cosine_term: float
    q_value: float


# ---------------------------------------------------------------------------
# single-sample operations

def logits(head: LinearHead, f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (head.feature_dim,):
        raise MarginModelError(f"feature vector of shape {f.shape} does not match D={head.feature_dim}")
    if not np.all(np.isfinite(f)):
        raise MarginModelError("feature vector contains non-finite values")
    return head.weights @ f + head.bias


def softmax_probs(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return _batch_softmax(z[np.newaxis])[0]


def top_two(p) -> Tuple[int, int]:
    """Indices of the largest and second-largest entries, lowest index first on ties."""
    order = np.argsort(-np.asarray(p), kind="stable")
    return int(order[0]), int(order[1])


def margin_score(z) -> float:
    """M = 1 - (p_1* - p_2*), in [0,1]; high near the decision boundary."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] < 2:
        raise MarginModelError("margin needs at least two classes")
    p = softmax_probs(z)
    first, second = top_two(p)
    return float(1.0 - (p[first] - p[second]))


def _check_label(k: int, j: int):
    if not 0 <= j < k:
        raise MarginModelError(f"label {j} outside [0, {k})")


def adaptive_margin_loss(z, j: int, m: float) -> float:
    """
    L = sum_{i != j} (gamma_i * [m - z_j + z_i]_+ - z_j), gamma_i = 1 - (z_j - z_i)/m.

    The -z_j term is repeated K-1 times.
    """
    z = np.asarray(z, dtype=np.float64)
    _check_label(z.shape[0], j)
    if not m > 0:
        raise MarginModelError(f"margin width m must be positive, got {m}")
    losses, _ = _batch_loss_and_grad(z[np.newaxis], np.array([j]), m, GradientConvention.DETACHED_GAMMA)
    return float(losses[0])


def grad_loss_wrt_logits(z, j: int, m: float,
                         convention=GradientConvention.DETACHED_GAMMA) -> np.ndarray:
    """
    Gradient of the adaptive margin loss with respect to the logits.

    detached-gamma treats gamma_i as a constant weight; full differentiates through
    gamma, which doubles every active hinge contribution. d_i == m counts as inactive.
    """
    if isinstance(convention, str):
        try:
            convention = GradientConvention(convention)
        except ValueError:
            raise MarginModelError(f"unknown gradient convention '{convention}'")
    z = np.asarray(z, dtype=np.float64)
    _check_label(z.shape[0], j)
    if not m > 0:
        raise MarginModelError(f"margin width m must be positive, got {m}")
    _, grads = _batch_loss_and_grad(z[np.newaxis], np.array([j]), m, convention)
    return grads[0]


def grad_wrt_features(head: LinearHead, f, grad_z) -> np.ndarray:
    """Chain rule through the linear head: weights^T . grad_z."""
    f = np.asarray(f, dtype=np.float64)
    grad_z = np.asarray(grad_z, dtype=np.float64)
    if f.shape != (head.feature_dim,) or grad_z.shape != (head.num_classes,):
        raise MarginModelError(
            f"expected f of length {head.feature_dim} and grad_z of length {head.num_classes}, "
            f"got {f.shape} and {grad_z.shape}"
        )
    return head.weights.T @ grad_z


def grad_margin_wrt_logits(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] < 2:
        raise MarginModelError("margin needs at least two classes")
    return _batch_margin_grad(_batch_softmax(z[np.newaxis]))[0]


def estimate_loss_gradient(head: LinearHead, f, m: float) -> np.ndarray:
    """Label-free loss gradient: p_1* grad L(x, 1*) + p_2* grad L(x, 2*) in feature space."""
    z = logits(head, f)
    p = softmax_probs(z)
    first, second = top_two(p)
    grad_z = (p[first] * grad_loss_wrt_logits(z, first, m)
              + p[second] * grad_loss_wrt_logits(z, second, m))
    return grad_wrt_features(head, f, grad_z)


def query_score(head: LinearHead, f, params: MarginParams, sample_index: int = 0) -> QueryRecord:
    """Q = M + lambda * cos(estimated loss gradient, margin gradient)."""
    f = np.asarray(f, dtype=np.float64)
    logits(head, f)  # validates f
    margins, cosines, q_values = score_pool(head, f[np.newaxis], params)
    return QueryRecord(sample_index, float(margins[0]), float(cosines[0]), float(q_values[0]))


def predict(head: LinearHead, featurizer: Featurizer, raw) -> Tuple[int, float]:
    """Argmax class and its softmax probability, lowest index on ties."""
    f = featurizer.forward(raw)
    p = softmax_probs(logits(head, f))
    cls = int(np.argmax(p))
    return cls, float(p[cls])


def predict_batch(head: LinearHead, features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Argmax class and its softmax probability for every row of an N x D matrix."""
    features = np.asarray(features, dtype=np.float64)
    p = _batch_softmax(features @ head.weights.T + head.bias)
    predicted = np.argmax(p, axis=1)
    return predicted, p[np.arange(len(p)), predicted]


# ---------------------------------------------------------------------------
# vectorized helpers over N x K logit matrices

def _batch_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _batch_top_two(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    order = np.argsort(-p, axis=1, kind="stable")
    return order[:, 0], order[:, 1]


def _batch_loss_and_grad(z: np.ndarray, labels: np.ndarray, m: float,
                         convention: GradientConvention) -> Tuple[np.ndarray, np.ndarray]:
    n, k = z.shape
    rows = np.arange(n)
    z_j = z[rows, labels]
    d = z_j[:, np.newaxis] - z
    gamma = 1.0 - d / m
    hinge = np.maximum(m - d, 0.0)
    others = np.ones((n, k), dtype=bool)
    others[rows, labels] = False
    hinge_terms = np.where(others, gamma * hinge, 0.0)
    losses = hinge_terms.sum(axis=1) - (k - 1) * z_j

    active = others & (d < m)
    weight = gamma if convention is GradientConvention.DETACHED_GAMMA else 2.0 * gamma
    grads = np.where(active, weight, 0.0)
    grads[rows, labels] = -grads.sum(axis=1) - (k - 1)
    return losses, grads


def _batch_margin_grad(p: np.ndarray) -> np.ndarray:
    n, k = p.shape
    rows = np.arange(n)
    first, second = _batch_top_two(p)
    eye = np.eye(k)
    grad_first = p[rows, first][:, np.newaxis] * (eye[first] - p)
    grad_second = p[rows, second][:, np.newaxis] * (eye[second] - p)
    return -(grad_first - grad_second)


def prediction_entropy(z: np.ndarray) -> np.ndarray:
    """Shannon entropy of softmax(z) per row."""
    p = _batch_softmax(np.atleast_2d(np.asarray(z, dtype=np.float64)))
    safe = np.where(p > 0, p, 1.0)
    return -(p * np.log(safe)).sum(axis=1)


def _score_chunk(head: LinearHead, features: np.ndarray,
                 params: MarginParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    z = features @ head.weights.T + head.bias
    p = _batch_softmax(z)
    rows = np.arange(len(p))
    first, second = _batch_top_two(p)
    margins = 1.0 - (p[rows, first] - p[rows, second])

    _, grad_first = _batch_loss_and_grad(z, first, params.m, GradientConvention.DETACHED_GAMMA)
    _, grad_second = _batch_loss_and_grad(z, second, params.m, GradientConvention.DETACHED_GAMMA)
    loss_grad = (p[rows, first][:, np.newaxis] * grad_first
                 + p[rows, second][:, np.newaxis] * grad_second) @ head.weights
    margin_grad = _batch_margin_grad(p) @ head.weights

    loss_norm = np.linalg.norm(loss_grad, axis=1)
    margin_norm = np.linalg.norm(margin_grad, axis=1)
    # cosine of a vanishing gradient is 0, so Q falls back to the margin
    degenerate = (loss_norm < ZERO_NORM) | (margin_norm < ZERO_NORM)
    dots = np.einsum("ij,ij->i", loss_grad, margin_grad)
    cosines = np.where(degenerate, 0.0, dots / np.where(degenerate, 1.0, loss_norm * margin_norm))
    cosines = np.clip(cosines, -1.0, 1.0)
    return margins, cosines, margins + params.lam * cosines


def score_pool(head: LinearHead, features: np.ndarray, params: MarginParams,
               workers: int = 1) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Margin, cosine and Q for every row of an N x D feature matrix.

    With workers > 1 the rows are scored in contiguous chunks on a thread pool and
    concatenated in index order.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != head.feature_dim:
        raise MarginModelError(f"expected an N x {head.feature_dim} feature matrix, got {features.shape}")
    if len(features) == 0:
        empty = np.zeros(0)
        return empty, empty.copy(), empty.copy()
    if workers <= 1 or len(features) < 2 * workers:
        return _score_chunk(head, features, params)
    chunks = np.array_split(features, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda chunk: _score_chunk(head, chunk, params), chunks))
    return tuple(np.concatenate([part[i] for part in parts]) for i in range(3))


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainingHistory:
    epoch_losses: List[float] = field(default_factory=list)


class HeadTrainer:
    """Minibatch descent on the mean adaptive margin loss, detached-gamma gradients"""

    def __init__(self, head: LinearHead, config: OptimizerConfig):
        self.head = head
        self.config = config
        self.optimizer = build_optimizer(config)

    def train_epoch(self, features: np.ndarray, labels: np.ndarray, rng: np.random.Generator) -> float:
        n = len(features)
        if n == 0:
            raise MarginModelError("cannot train on an empty dataset")
        order = rng.permutation(n)
        params = {"weights": self.head.weights, "bias": self.head.bias}
        total = 0.0
        for start in range(0, n, self.config.batch_size):
            batch = order[start:start + self.config.batch_size]
            f = features[batch]
            z = f @ self.head.weights.T + self.head.bias
            losses, grad_z = _batch_loss_and_grad(z, labels[batch], self.config.margin,
                                                  GradientConvention.DETACHED_GAMMA)
            total += float(losses.sum())
            grad_z /= len(batch)
            self.optimizer.step(params, {"weights": grad_z.T @ f, "bias": grad_z.sum(axis=0)})
        return total / n


def _check_training_set(head: LinearHead, features: np.ndarray, labels: np.ndarray):
    if len(features) == 0:
        raise MarginModelError("cannot train on an empty dataset")
    if features.ndim != 2 or features.shape[1] != head.feature_dim:
        raise MarginModelError(f"expected an N x {head.feature_dim} feature matrix, got {features.shape}")
    if labels.shape != (len(features),):
        raise MarginModelError(f"expected {len(features)} labels, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= head.num_classes:
        raise MarginModelError(f"labels must lie in [0, {head.num_classes})")


def train_head(head: LinearHead, labeled_features, labels,
               optimizer_config: Optional[OptimizerConfig] = None) -> Tuple[LinearHead, TrainingHistory]:
    """
    Train a copy of `head` on labeled features.

    Returns:
        The trained head and the per-epoch mean loss history
    """
    config = optimizer_config or OptimizerConfig()
    features = np.asarray(labeled_features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_training_set(head, features, labels)

    trainer = HeadTrainer(head.copy(), config)
    rng = seeded_stream(config.seed, SHUFFLING)
    history = TrainingHistory()
    for epoch in range(config.epochs):
        loss = trainer.train_epoch(features, labels, rng)
        history.epoch_losses.append(loss)
        logger.debug(f"train_head epoch {epoch + 1}/{config.epochs}: loss={loss:.6f}")
    return trainer.head, history
