# Loss weights and the running class-center state used by the affinity loss.

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError, LabelError
from ..model.config import NUM_CLASSES, Task
from ..utils.resource_loader import dataclass_from_dict

VA_BINS_PER_AXIS = 3
VA_CENTER_COUNT = VA_BINS_PER_AXIS ** 2
PROB_FLOOR = 1e-12


@dataclass
class LossConfig:
    focal_gamma: float = 2.0
    focal_alpha: float | list[float] = 1.0
    lambda_affinity: float = 1.0
    lambda_affinity_va: float = 0.0
    lambda_partition: float = 1.0
    affinity_center_lr: float = 0.5
    affinity_epsilon: float = 1e-8
    partition_epsilon: float = 1e-8

    def __post_init__(self):
        for name in ("focal_gamma", "lambda_affinity", "lambda_affinity_va", "lambda_partition",
                     "affinity_epsilon", "partition_epsilon"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"loss.{name} must be finite and >= 0, got {value}")
            setattr(self, name, value)
        if not 0.0 < float(self.affinity_center_lr) <= 1.0:
            raise ConfigError(f"loss.affinity_center_lr must be in (0, 1], got {self.affinity_center_lr}")
        alpha = np.asarray(self.focal_alpha, dtype=np.float64)
        if alpha.ndim == 0:
            self.focal_alpha = float(alpha)
        elif alpha.shape != (NUM_CLASSES,):
            raise ConfigError(f"loss.focal_alpha must be a scalar or {NUM_CLASSES} weights, got shape {alpha.shape}")
        else:
            self.focal_alpha = [float(a) for a in alpha]
        if not np.all(np.isfinite(alpha)) or np.any(alpha < 0):
            raise ConfigError("loss.focal_alpha entries must be finite and >= 0")

    def alpha_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.focal_alpha, dtype=np.float64), (NUM_CLASSES,)).copy()

    def affinity_weight(self, task: Task) -> float:
        return self.lambda_affinity if Task.parse(task) is Task.EXPR else self.lambda_affinity_va

    @classmethod
    def from_dict(cls, d: dict | None) -> "LossConfig":
        return dataclass_from_dict(cls, d, "loss")

    def to_dict(self) -> dict:
        return asdict(self)


def va_bins(va: np.ndarray) -> np.ndarray:
    """Quantize (valence, arousal) pairs onto a 3x3 grid over [-1,1]^2 -> ids 0..8."""
    va = np.asarray(va, dtype=np.float64).reshape(-1, 2)
    idx = np.clip(np.floor((va + 1.0) * 0.5 * VA_BINS_PER_AXIS), 0, VA_BINS_PER_AXIS - 1).astype(np.int64)
    return idx[:, 0] * VA_BINS_PER_AXIS + idx[:, 1]


def check_labels(labels, n: int, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise LabelError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (not np.issubdtype(labels.dtype, np.integer)
                        or labels.min() < 0 or labels.max() >= num_classes):
        raise LabelError(f"labels must be integers in 0..{num_classes - 1}")
    return labels.astype(np.int64)


@dataclass
class ClassCenters:
    """Per-class feature centers with a mask of classes seen so far."""

    centers: np.ndarray   # [K, F]
    seen: np.ndarray      # [K] bool

    @classmethod
    def zeros(cls, num_centers: int, feature_dim: int, dtype=np.float32) -> "ClassCenters":
        return cls(np.zeros((num_centers, feature_dim), dtype=dtype), np.zeros(num_centers, dtype=bool))

    @classmethod
    def for_task(cls, task: Task, feature_dim: int, dtype=np.float32) -> "ClassCenters":
        count = NUM_CLASSES if Task.parse(task) is Task.EXPR else VA_CENTER_COUNT
        return cls.zeros(count, feature_dim, dtype)

    @property
    def num_centers(self) -> int:
        return self.centers.shape[0]

    def set(self, index: int, center) -> None:
        self.centers[index] = center
        self.seen[index] = True

    def spread(self) -> float:
        """Mean squared distance of the seen centers to their mean; 1 with fewer than 2 seen."""
        seen = self.centers[self.seen].astype(np.float64)
        if len(seen) < 2:
            return 1.0
        return float(((seen - seen.mean(axis=0)) ** 2).sum(axis=1).mean())

    def _class_means(self, labels: np.ndarray, features: np.ndarray):
        labels = check_labels(labels, features.shape[0], self.num_centers)
        for c in np.unique(labels):
            yield int(c), features[labels == c].mean(axis=0)

    def ensure(self, labels, features: np.ndarray) -> None:
        """Seed never-seen classes of this batch at their batch means."""
        for c, batch_mean in self._class_means(labels, np.asarray(features)):
            if not self.seen[c]:
                self.set(c, batch_mean)

    def update(self, labels, features: np.ndarray, lr: float) -> None:
        """Move each batch class's center toward its batch mean by ``lr``."""
        for c, batch_mean in self._class_means(labels, np.asarray(features)):
            if self.seen[c]:
                self.centers[c] = (1.0 - lr) * self.centers[c] + lr * batch_mean
            else:
                self.set(c, batch_mean)

    def copy(self) -> "ClassCenters":
        return ClassCenters(self.centers.copy(), self.seen.copy())

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"centers": self.centers, "seen": self.seen.astype(np.uint8)}

    @classmethod
    def from_state_arrays(cls, arrays: dict[str, np.ndarray]) -> "ClassCenters":
        return cls(arrays["centers"].copy(), arrays["seen"].astype(bool))
