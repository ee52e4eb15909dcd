# core/synthetic_data.py
# Seeded two-domain benchmarks: Gaussian feature clusters and styled textures

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from core.datasets import DomainTag, FeatureSet, ImageSet
from core.spectral_transfer import dft2d_stack, low_freq_mask
from utils.errors import SyntheticDataError
from utils.seeding import GENERATION, seeded_stream

logger = logging.getLogger(__name__)

TEST_FRACTION = 0.2


@dataclass
class DomainShift:
    rotation_angle: float = 0.0  # degrees, in the plane of the first two dimensions
    translation: Optional[List[float]] = None


@dataclass
class GaussianBenchSpec:
    """Class means on a circle in dims 0-1; the target domain rotates and translates them"""
    num_classes: int = 3
    feature_dim: int = 2
    samples_per_class: int = 300
    class_mean_radius: float = 3.0
    noise_sigma: float = 0.5
    shift: DomainShift = field(default_factory=DomainShift)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.shift, dict):
            self.shift = DomainShift(**self.shift)
        if self.num_classes < 2 or self.feature_dim < 2:
            raise SyntheticDataError(f"need K >= 2 and D >= 2, got K={self.num_classes}, D={self.feature_dim}")
        if not self.noise_sigma > 0:
            raise SyntheticDataError(f"noise_sigma must be positive, got {self.noise_sigma}")
        if self.samples_per_class < 1:
            raise SyntheticDataError(f"samples_per_class must be positive, got {self.samples_per_class}")
        if self.shift.translation is not None and len(self.shift.translation) != self.feature_dim:
            raise SyntheticDataError(
                f"translation has {len(self.shift.translation)} entries, feature_dim is {self.feature_dim}"
            )


@dataclass
class DomainStyle:
    """Low-frequency appearance of one domain"""
    brightness: float
    gradient_amplitude: float
    gradient_direction: Tuple[int, int]  # lowest-frequency bin of the illumination field
    contrast: float = 1.0


def _default_styles() -> List[DomainStyle]:
    return [
        DomainStyle(brightness=0.40, gradient_amplitude=0.10, gradient_direction=(0, 1), contrast=1.0),
        DomainStyle(brightness=0.55, gradient_amplitude=0.10, gradient_direction=(1, 0), contrast=1.2),
    ]


@dataclass
class TextureBenchSpec:
    """
    Images = domain illumination field (low frequencies) + class stripe pattern
    (high frequencies) + noise, clamped to [0,1].
    """
    num_classes: int = 3
    image_size: int = 32
    channels: int = 1
    samples_per_class: int = 300
    pattern_amplitude: float = 0.12
    pattern_frequency: Optional[int] = None  # defaults to image_size // 4
    phase_jitter: float = math.pi / 6
    domain_styles: List[DomainStyle] = field(default_factory=_default_styles)
    band_beta: float = 0.1
    noise_sigma: float = 0.03
    seed: int = 0

    def __post_init__(self):
        self.domain_styles = [DomainStyle(**s) if isinstance(s, dict) else s for s in self.domain_styles]
        for style in self.domain_styles:
            style.gradient_direction = tuple(style.gradient_direction)
        n = self.image_size
        if n < 4 or n & (n - 1):
            raise SyntheticDataError(f"image_size must be a power of two >= 4, got {n}")
        if self.num_classes < 2:
            raise SyntheticDataError(f"need at least two classes, got {self.num_classes}")
        if self.channels not in (1, 3):
            raise SyntheticDataError(f"channels must be 1 or 3, got {self.channels}")
        if len(self.domain_styles) != 2:
            raise SyntheticDataError("exactly two domain styles (source, target) are required")
        if not self.noise_sigma > 0 or self.samples_per_class < 1:
            raise SyntheticDataError("noise_sigma and samples_per_class must be positive")
        if self.pattern_frequency is None:
            self.pattern_frequency = n // 4
        mask = low_freq_mask(n, n, self.band_beta).astype(bool)
        for k, (u, v) in enumerate(self.class_frequencies()):
            if mask[u % n, v % n]:
                raise SyntheticDataError(f"class {k} pattern bin ({u},{v}) falls inside the low-frequency band")
        for style in self.domain_styles:
            u, v = style.gradient_direction
            if not mask[u % n, v % n]:
                raise SyntheticDataError(f"domain field bin ({u},{v}) lies outside the low-frequency band")

    def class_frequencies(self) -> List[Tuple[int, int]]:
        """Stripe frequency bin per class: orientations cycle, frequency grows per cycle."""
        directions = [(1, 0), (0, 1), (1, 1), (1, -1)]
        bins = []
        for k in range(self.num_classes):
            du, dv = directions[k % len(directions)]
            f = self.pattern_frequency + k // len(directions)
            bins.append((du * f, dv * f))
        return bins


# ---------------------------------------------------------------------------
# gaussian bench

def _rotation(angle_degrees: float, dim: int) -> np.ndarray:
    theta = math.radians(angle_degrees)
    rot = np.eye(dim)
    rot[:2, :2] = [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]
    return rot


def _class_means(spec: GaussianBenchSpec) -> np.ndarray:
    means = np.zeros((spec.num_classes, spec.feature_dim))
    angles = 2 * np.pi * np.arange(spec.num_classes) / spec.num_classes
    means[:, 0] = spec.class_mean_radius * np.cos(angles)
    means[:, 1] = spec.class_mean_radius * np.sin(angles)
    return means


def _stratified_split(labels: np.ndarray, num_classes: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-class 80/20 pool/test split, indices in ascending order."""
    rng = seeded_stream(seed, GENERATION, "split")
    pool, test = [], []
    for k in range(num_classes):
        members = rng.permutation(np.flatnonzero(labels == k))
        n_test = int(round(TEST_FRACTION * len(members)))
        test.extend(members[:n_test])
        pool.extend(members[n_test:])
    return np.sort(np.array(pool, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


def make_gaussian_bench(spec: GaussianBenchSpec) -> Tuple[FeatureSet, FeatureSet, FeatureSet]:
    """
    Returns:
        (source set, target pool, target test split)
    """
    means = _class_means(spec)
    translation = np.zeros(spec.feature_dim) if spec.shift.translation is None else np.asarray(spec.shift.translation)
    target_means = (means + translation) @ _rotation(spec.shift.rotation_angle, spec.feature_dim).T

    def sample(domain: str, domain_means: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
        features = np.empty((len(labels), spec.feature_dim))
        for i, k in enumerate(labels):
            rng = seeded_stream(spec.seed, GENERATION, domain, i)
            features[i] = domain_means[k] + spec.noise_sigma * rng.standard_normal(spec.feature_dim)
        return features, labels

    src_x, src_y = sample("source", means)
    trg_x, trg_y = sample("target", target_means)
    pool_idx, test_idx = _stratified_split(trg_y, spec.num_classes, spec.seed)
    source = FeatureSet(src_x, src_y, np.full(len(src_y), DomainTag.SOURCE.value))
    target = FeatureSet(trg_x, trg_y, np.full(len(trg_y), DomainTag.TARGET.value))
    logger.info(
        f"Gaussian bench: {len(source)} source, {len(pool_idx)} target pool, {len(test_idx)} target test"
    )
    return source, target.subset(pool_idx), target.subset(test_idx)


# ---------------------------------------------------------------------------
# texture bench

def _texture_image(spec: TextureBenchSpec, style: DomainStyle, label: int,
                   rng: np.random.Generator) -> np.ndarray:
    n = spec.image_size
    h, w = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    gu, gv = style.gradient_direction
    field_ = style.brightness + style.contrast * style.gradient_amplitude * np.cos(
        2 * np.pi * (gu * h + gv * w) / n)
    u, v = spec.class_frequencies()[label]
    phase_offset = rng.uniform(-spec.phase_jitter, spec.phase_jitter)
    pattern = spec.pattern_amplitude * np.cos(2 * np.pi * (u * h + v * w) / n + phase_offset)
    image = field_[:, :, np.newaxis] + pattern[:, :, np.newaxis]
    image = image + spec.noise_sigma * rng.standard_normal((n, n, spec.channels))
    return np.clip(image, 0.0, 1.0)


def make_texture_bench(spec: TextureBenchSpec) -> Tuple[ImageSet, ImageSet, ImageSet]:
    """
    Returns:
        (source images, target pool images, target test images)
    """
    def sample(domain: str, style: DomainStyle) -> Tuple[np.ndarray, np.ndarray]:
        labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
        images = np.stack([
            _texture_image(spec, style, int(k), seeded_stream(spec.seed, GENERATION, domain, i))
            for i, k in enumerate(labels)
        ])
        return images, labels

    src_x, src_y = sample("source", spec.domain_styles[0])
    trg_x, trg_y = sample("target", spec.domain_styles[1])
    pool_idx, test_idx = _stratified_split(trg_y, spec.num_classes, spec.seed)
    source = ImageSet(src_x, src_y, np.full(len(src_y), DomainTag.SOURCE.value))
    target = ImageSet(trg_x, trg_y, np.full(len(trg_y), DomainTag.TARGET.value))
    logger.info(
        f"Texture bench: {len(source)} source, {len(pool_idx)} target pool, {len(test_idx)} target test "
        f"({spec.image_size}x{spec.image_size}x{spec.channels})"
    )
    return source, target.subset(pool_idx), target.subset(test_idx)


def mean_amplitude_spectrum(images: np.ndarray) -> np.ndarray:
    """Mean DFT amplitude over an N x H x W x C stack, averaged over channels too."""
    channels_first = np.moveaxis(np.asarray(images, dtype=np.float64), -1, 1)
    return np.abs(dft2d_stack(channels_first)).mean(axis=(0, 1))


def domain_amplitude_gap(images_a: np.ndarray, images_b: np.ndarray, beta: float) -> Tuple[float, float]:
    """
    Mean per-bin gap between the mean amplitude spectra of two image stacks.

    Returns:
        (gap inside the low-frequency band, gap outside it)
    """
    gap = np.abs(mean_amplitude_spectrum(images_a) - mean_amplitude_spectrum(images_b))
    h, w = gap.shape
    mask = low_freq_mask(h, w, beta).astype(bool)
    return float(gap[mask].mean()), float(gap[~mask].mean())


def dominant_high_frequency_bin(channel: np.ndarray, beta: float) -> Tuple[int, int]:
    """Bin with the largest amplitude outside the low-frequency band."""
    amp = np.abs(dft2d_stack(np.asarray(channel, dtype=np.float64)))
    h, w = amp.shape
    amp = np.where(low_freq_mask(h, w, beta).astype(bool), -1.0, amp)
    u, v = np.unravel_index(int(np.argmax(amp)), amp.shape)
    return int(u), int(v)
