# Differentiable training objectives.

import logging
from dataclasses import dataclass, field

import numpy as np

from ..diffcore import Tensor, clamp_min, stack
from ..errors import BatchSizeError, ConfigError, DimensionError, SampleSizeError
from ..model.config import NUM_CLASSES, Task
from ..model.network import ModelOutput
from .config import PROB_FLOOR, ClassCenters, LossConfig, check_labels, va_bins

logger = logging.getLogger(__name__)

CCC_DENOM_EPS = 1e-12


def focal_loss(probs: Tensor, labels, config: LossConfig) -> Tensor:
    """mean_i  -alpha_{y_i} (1 - p_{i,y_i})^gamma log max(p_{i,y_i}, 1e-12)."""
    if probs.ndim != 2 or probs.shape[1] != NUM_CLASSES:
        raise DimensionError(f"focal_loss expects [N,{NUM_CLASSES}] probabilities, got shape {probs.shape}")
    n = probs.shape[0]
    if n == 0:
        raise BatchSizeError("focal_loss needs at least one sample")
    labels = check_labels(labels, n, NUM_CLASSES)

    p_true = clamp_min(probs[np.arange(n), labels], PROB_FLOOR)
    terms = p_true.log()
    if config.focal_gamma != 0.0:
        terms = terms * ((1.0 - p_true) ** config.focal_gamma)
    alpha = config.alpha_vector()[labels].astype(probs.dtype)
    if not np.all(alpha == 1.0):
        terms = terms * Tensor(alpha)
    return -terms.mean()


def affinity_loss(features: Tensor, labels, centers: ClassCenters, epsilon: float = 1e-8) -> Tensor:
    """Mean squared distance to the class centers over the spread of the seen centers.

    Centers enter as constants; the gradient flows to ``features`` only.
    """
    if features.ndim != 2:
        raise DimensionError(f"affinity_loss expects [N,F] features, got shape {features.shape}")
    n, f = features.shape
    if n == 0:
        raise BatchSizeError("affinity_loss needs at least one sample")
    if f != centers.centers.shape[1]:
        raise DimensionError(f"affinity_loss: features have {f} dims, centers have {centers.centers.shape[1]}")
    labels = check_labels(labels, n, centers.num_centers)

    targets = Tensor(centers.centers[labels].astype(features.dtype))
    diff = features - targets
    distances = (diff * diff).sum(axis=1)
    return distances.mean() * (1.0 / (centers.spread() + epsilon))


def partition_loss(head_features: list[Tensor], epsilon: float = 1e-8) -> Tensor:
    """1 / (1 + mean across samples and features of the across-head population variance)."""
    if not head_features:
        raise ConfigError("partition_loss needs at least one head")
    stacked = stack(head_features, axis=0)                  # [H, N, F]
    centered = stacked - stacked.mean(axis=0, keepdims=True)
    variance = (centered * centered).mean(axis=0).mean()
    return 1.0 / (variance + (1.0 + epsilon))


def ccc_loss(pred_va: Tensor, target_va) -> Tensor:
    """1 - mean over (valence, arousal) of the concordance correlation, with population moments."""
    target = np.asarray(target_va, dtype=pred_va.dtype)
    if pred_va.ndim != 2 or pred_va.shape[1] != 2 or target.shape != pred_va.shape:
        raise DimensionError(f"ccc_loss expects matching [N,2] arrays, got {pred_va.shape} and {target.shape}")
    if pred_va.shape[0] < 2:
        raise SampleSizeError(f"ccc_loss needs at least 2 samples, got {pred_va.shape[0]}")

    pred_mean = pred_va.mean(axis=0)
    target_mean = target.mean(axis=0)
    dp = pred_va - pred_mean
    dt = Tensor(target - target_mean)
    covariance = (dp * dt).mean(axis=0)
    pred_var = (dp * dp).mean(axis=0)
    target_var = (dt * dt).mean(axis=0)
    gap = pred_mean - Tensor(target_mean)
    concordance = (covariance * 2.0) / (pred_var + target_var + gap * gap + CCC_DENOM_EPS)
    return 1.0 - concordance.mean()


def affinity_labels(task: Task, targets) -> np.ndarray:
    """Class ids for the affinity centers: expression labels, or VA grid cells."""
    if Task.parse(task) is Task.EXPR:
        return np.asarray(targets, dtype=np.int64)
    return va_bins(targets)


@dataclass
class LossBreakdown:
    total: Tensor
    components: dict[str, Tensor] = field(default_factory=dict)
    weights: dict[str, float] = field(default_factory=dict)

    def values(self) -> dict[str, float]:
        out = {name: t.item() for name, t in self.components.items()}
        out["total"] = self.total.item()
        return out


def combined_loss(output: ModelOutput, targets, config: LossConfig,
                  centers: ClassCenters | None = None) -> LossBreakdown:
    """Primary task loss plus the weighted affinity and partition terms.

    EXPR: focal + l_aff * affinity + l_part * partition
    VA:   ccc_loss + l_aff_va * affinity (VA grid centers) + l_part * partition
    Terms with zero weight are not computed.
    """
    task = output.task
    if task is Task.EXPR:
        primary_name, primary = "focal", focal_loss(output.probs, targets, config)
    else:
        primary_name, primary = "ccc", ccc_loss(output.va, targets)
    components = {primary_name: primary}
    weights = {primary_name: 1.0}
    total = primary

    lam_affinity = config.affinity_weight(task)
    if lam_affinity > 0:
        if centers is None:
            raise ConfigError("affinity term is enabled but no class centers were supplied")
        term = affinity_loss(output.backbone_features, affinity_labels(task, targets), centers,
                             config.affinity_epsilon)
        components["affinity"], weights["affinity"] = term, lam_affinity
        total = total + term * lam_affinity

    if config.lambda_partition > 0:
        term = partition_loss(output.head_features, config.partition_epsilon)
        components["partition"], weights["partition"] = term, config.lambda_partition
        total = total + term * config.lambda_partition

    return LossBreakdown(total, components, weights)
