# Soft-voting bagging: members trained with different seeds and augmentation
# policies, combined by weighted averaging of their predictions.

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from ..data.augment import AugmentPolicy
from ..data.loader import open_image_set
from ..errors import AlignmentError, ConfigError, TaskMismatchError
from ..model.config import Task
from ..model.network import DanModel
from ..training.config import RunConfig
from ..training.trainer import BEST_CHECKPOINT, train
from ..utils.resource_loader import dataclass_from_dict
from .predictions import PredictionRecord, index_predictions

logger = logging.getLogger(__name__)

DEFAULT_POLICIES = [{"kind": "none"}, {"kind": "hflip"}, {"kind": "color_jitter"}]


def normalize_weights(weights: Sequence[float] | None, count: int) -> list[float]:
    if count < 1:
        raise ConfigError("an ensemble needs at least one member")
    if weights is None:
        return [1.0 / count] * count
    weights = [float(w) for w in weights]
    if len(weights) != count:
        raise ConfigError(f"got {len(weights)} weights for {count} members")
    if any(not math.isfinite(w) or w < 0 for w in weights):
        raise ConfigError(f"ensemble weights must be finite and >= 0, got {weights}")
    total = math.fsum(weights)
    if total <= 0:
        raise ConfigError("ensemble weights sum to zero")
    return [w / total for w in weights]


@dataclass
class EnsembleSpec:
    checkpoints: list[str]
    weights: list[float] | None = None
    task: Task = Task.EXPR

    def __post_init__(self):
        self.task = Task.parse(self.task)
        self.checkpoints = [str(c) for c in self.checkpoints]
        if not self.checkpoints:
            raise ConfigError("ensemble needs at least one checkpoint")
        self.weights = normalize_weights(self.weights, len(self.checkpoints))

    @classmethod
    def from_dict(cls, d: dict | None) -> "EnsembleSpec":
        return dataclass_from_dict(cls, d, "ensemble")


@dataclass
class EnsembleConfig:
    """How ensemble members are trained: member i uses seed + i * seed_stride and policies[i % len]."""

    members: int = 3
    seed_stride: int = 1
    policies: list[dict] = field(default_factory=lambda: [dict(p) for p in DEFAULT_POLICIES])
    weights: list[float] | None = None
    parallel: int = 1

    def __post_init__(self):
        if self.members < 1:
            raise ConfigError(f"ensemble.members must be >= 1, got {self.members}")
        if not self.policies:
            raise ConfigError("ensemble.policies must name at least one augmentation policy")
        for p in self.policies:
            AugmentPolicy.from_dict(p)
        if self.parallel < 1:
            raise ConfigError(f"ensemble.parallel must be >= 1, got {self.parallel}")
        normalize_weights(self.weights, self.members)

    @classmethod
    def from_dict(cls, d: dict | None) -> "EnsembleConfig":
        return dataclass_from_dict(cls, d, "ensemble")

    def member_seed(self, base_seed: int, index: int) -> int:
        return base_seed + index * self.seed_stride

    def member_policy(self, index: int) -> dict:
        return dict(self.policies[index % len(self.policies)])


def _vote_values(values: list[tuple[float, ...]], weights: list[float]) -> tuple[float, ...]:
    first = values[0]
    if all(v == first for v in values[1:]):
        return first
    return tuple(math.fsum(w * v[j] for w, v in zip(weights, values)) for j in range(len(first)))


def soft_vote(members: Sequence[Sequence[PredictionRecord]],
              weights: Sequence[float] | None = None) -> list[PredictionRecord]:
    """Weighted mean of the members' predictions per item, in the first member's order.

    Expression probabilities are renormalized onto the simplex after
    averaging; valence/arousal are averaged as points. When all members agree
    on an item their shared prediction is returned unchanged.
    """
    weights = normalize_weights(weights, len(members))
    tasks = {p.task for member in members for p in member}
    if len(tasks) > 1:
        raise TaskMismatchError(f"members predict different tasks: {sorted(t.value for t in tasks)}")
    indexes = [index_predictions(member) for member in members]

    all_ids = set().union(*(idx.keys() for idx in indexes))
    usable = set.intersection(*({i for i, p in idx.items() if p.ok} for idx in indexes))
    missing = all_ids - usable
    if missing:
        raise AlignmentError("ensemble members do not cover the same items", sorted(missing))

    voted = []
    for record in members[0]:
        rows = [idx[record.item_id] for idx in indexes]
        if record.task is Task.EXPR:
            probs = _vote_values([r.probs for r in rows], weights)
            if probs is not rows[0].probs:
                total = math.fsum(probs)
                probs = tuple(p / total for p in probs)
            voted.append(PredictionRecord(record.item_id, record.task, probs=probs))
        else:
            va = _vote_values([r.va for r in rows], weights)
            voted.append(PredictionRecord(record.item_id, record.task,
                                          va=tuple(min(1.0, max(-1.0, v)) for v in va)))
    return voted


def train_ensemble(run_config: RunConfig, out_dir: str | os.PathLike, ensemble: EnsembleConfig | None = None,
                   progress: bool = False) -> list[Path]:
    """Train the configured members into ``out_dir/member_<i>/``; returns their best checkpoints."""
    ensemble = ensemble or EnsembleConfig.from_dict(run_config.ensemble)
    out_dir = Path(out_dir)
    base = run_config.train
    data_config = run_config.data
    if not data_config.train_manifest:
        raise ConfigError("data.train_manifest is required to train ensemble members")

    def job(i: int) -> Path:
        seed = ensemble.member_seed(base.seed, i)
        member_dir = out_dir / f"member_{i}"
        config = replace(base, seed=seed, model=replace(base.model, seed=seed), progress=progress)
        member_data = replace(data_config, augment=ensemble.member_policy(i))
        task, size = config.model.task, config.model.input_size
        train_set = open_image_set(member_data.train_manifest, member_data, task, size, seed,
                                   augment_train=True, offline_dir=member_dir / "augmented")
        val_set = None
        if member_data.val_manifest:
            val_set = open_image_set(member_data.val_manifest, member_data, task, size, seed)
        logger.info("Training ensemble member %d (seed %d, policy %s)", i, seed, member_data.augment.get("kind", "none"))
        train(DanModel(config.model), train_set, config, val_set, member_dir, balanced=member_data.balanced)
        return member_dir / BEST_CHECKPOINT

    if ensemble.parallel > 1:
        with ThreadPoolExecutor(max_workers=ensemble.parallel) as pool:
            return list(pool.map(job, range(ensemble.members)))
    return [job(i) for i in range(ensemble.members)]
