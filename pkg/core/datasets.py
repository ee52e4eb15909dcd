# core/datasets.py
# Shared sample containers for feature-space and image-space pools

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from utils.errors import InvariantViolationError


class DomainTag(Enum):
    SOURCE = 0
    TARGET = 1


@dataclass
class FeatureSet:
    """N x D feature matrix with optional labels and per-sample domain tags"""
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    domain_tags: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise InvariantViolationError(f"features must be N x D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if not np.all(np.isfinite(self.features)):
            raise InvariantViolationError("features contain non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise InvariantViolationError(f"expected {n} labels, got shape {self.labels.shape}")
        if self.domain_tags is None:
            self.domain_tags = np.zeros(n, dtype=np.uint8)
        self.domain_tags = np.asarray(self.domain_tags, dtype=np.uint8)
        if self.domain_tags.shape != (n,):
            raise InvariantViolationError(f"expected {n} domain tags, got shape {self.domain_tags.shape}")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "FeatureSet":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureSet(
            features=self.features[indices],
            labels=None if self.labels is None else self.labels[indices],
            domain_tags=self.domain_tags[indices],
        )


@dataclass
class ImageSet:
    """N x H x W x C stack of images in [0,1] with labels and domain tags"""
    images: np.ndarray
    labels: Optional[np.ndarray] = None
    domain_tags: Optional[np.ndarray] = None
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 4 or self.images.shape[-1] not in (1, 3):
            raise InvariantViolationError(f"images must be N x H x W x C with C in {{1,3}}, got {self.images.shape}")
        n = self.images.shape[0]
        if not np.all(np.isfinite(self.images)):
            raise InvariantViolationError("images contain non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise InvariantViolationError(f"expected {n} labels, got shape {self.labels.shape}")
        if self.domain_tags is None:
            self.domain_tags = np.zeros(n, dtype=np.uint8)
        self.domain_tags = np.asarray(self.domain_tags, dtype=np.uint8)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, indices) -> "ImageSet":
        indices = np.asarray(indices, dtype=np.int64)
        return ImageSet(
            images=self.images[indices],
            labels=None if self.labels is None else self.labels[indices],
            domain_tags=self.domain_tags[indices],
            names=[self.names[i] for i in indices] if self.names else [],
        )
