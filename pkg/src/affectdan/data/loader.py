# Batch assembly: decode -> crop -> augment -> resize -> normalize -> NCHW.

import logging
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterator

import numpy as np
from einops import rearrange

from ..errors import ConfigError, EmptyDatasetError
from ..model.config import Task
from ..utils.resource_loader import dataclass_from_dict
from .augment import AugmentPolicy, augment, materialize_augmentations
from .images import Image, crop, crop_and_resize, read_image
from .records import AnnotationRecord, load_manifest, merge_sources

logger = logging.getLogger(__name__)


@dataclass
class DataConfig:
    train_manifest: str | list[str] | None = None   # several manifests are merged per task
    val_manifest: str | None = None
    image_root: str | None = None        # default: directory of each manifest
    balanced: bool = True
    augment: dict | None = None          # AugmentPolicy fields; None disables augmentation
    augment_mode: str = "online"         # online | offline
    workers: int = 0
    cache_size: int = 1024               # decoded source images kept per image set; 0 disables

    def __post_init__(self):
        if isinstance(self.train_manifest, (list, tuple)):
            if not self.train_manifest or not all(isinstance(m, str) and m for m in self.train_manifest):
                raise ConfigError("data.train_manifest must be a path or a non-empty list of paths")
            self.train_manifest = list(self.train_manifest)
        if self.cache_size < 0:
            raise ConfigError(f"data.cache_size must be >= 0, got {self.cache_size}")
        if self.augment_mode not in ("online", "offline"):
            raise ConfigError(f"data.augment_mode must be 'online' or 'offline', got '{self.augment_mode}'")
        if self.workers < 0:
            raise ConfigError(f"data.workers must be >= 0, got {self.workers}")
        if self.augment is not None:
            AugmentPolicy.from_dict(self.augment)

    @property
    def policy(self) -> AugmentPolicy | None:
        return AugmentPolicy.from_dict(self.augment) if self.augment is not None else None

    @classmethod
    def from_dict(cls, d: dict | None) -> "DataConfig":
        return dataclass_from_dict(cls, d, "data")

    def to_dict(self) -> dict:
        return asdict(self)


def to_model_input(images: Sequence[Image] | np.ndarray) -> np.ndarray:
    """uint8 [N,H,W,3] -> float32 [N,3,H,W] in [-1, 1]."""
    stacked = np.stack([im.pixels for im in images]) if not isinstance(images, np.ndarray) else images
    return rearrange(stacked.astype(np.float32) / np.float32(127.5) - np.float32(1.0), "n h w c -> n c h w")


def targets_for(records: Sequence[AnnotationRecord], task: Task) -> np.ndarray:
    if task is Task.EXPR:
        return np.asarray([r.expr for r in records], dtype=np.int64)
    return np.asarray([[r.valence, r.arousal] for r in records], dtype=np.float64)


@dataclass
class ImageSet:
    """Records plus the directory their relative paths resolve against."""

    records: list[AnnotationRecord]
    root: Path
    task: Task
    image_size: int
    policy: AugmentPolicy | None = None
    seed: int = 0
    workers: int = 0
    cache_size: int = 1024

    def __post_init__(self):
        self._source = lru_cache(maxsize=self.cache_size)(self._decode) if self.cache_size > 0 else self._decode

    def __len__(self) -> int:
        return len(self.records)

    def _decode(self, index: int) -> Image:
        record = self.records[index]
        image = read_image(self.resolve(record))
        if record.bbox is not None:
            image = crop(image, record.bbox)
        return image

    def cache_info(self):
        """``functools`` cache statistics, or None when caching is off."""
        return self._source.cache_info() if self.cache_size > 0 else None

    def resolve(self, record: AnnotationRecord) -> Path:
        path = Path(record.path)
        return path if path.is_absolute() else self.root / path

    def item(self, index: int, draw: int | None = None) -> Image:
        """Model-sized image of record ``index``; ``draw`` keys the augmentation."""
        image = self._source(index)
        if self.policy is not None and draw is not None:
            image = augment(image, self.policy, (self.seed, draw))
        return crop_and_resize(image, None, self.image_size)

    def batch(self, indices: Sequence[int], draws: Sequence[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(images [N,3,S,S] float32, targets) for the given record indices, in order."""
        draws = list(draws) if draws is not None else [None] * len(indices)
        jobs = list(zip(indices, draws))
        if self.workers > 0 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                images = list(pool.map(lambda job: self.item(*job), jobs))
        else:
            images = [self.item(i, d) for i, d in jobs]
        return to_model_input(images), targets_for([self.records[i] for i in indices], self.task)

    def sequential(self, batch_size: int) -> Iterator[tuple[list[int], np.ndarray, np.ndarray]]:
        """Un-augmented pass over all records in manifest order."""
        for start in range(0, len(self.records), batch_size):
            indices = list(range(start, min(start + batch_size, len(self.records))))
            images, targets = self.batch(indices)
            yield indices, images, targets


def manifest_root(manifest_path: str | os.PathLike, image_root: str | None) -> Path:
    return Path(image_root) if image_root else Path(manifest_path).resolve().parent


def _anchored(record: AnnotationRecord, root: Path) -> AnnotationRecord:
    path = Path(record.path)
    return record if path.is_absolute() else replace(record, path=str((root / path).resolve()))


def open_image_set(manifest_path: str | os.PathLike | Sequence[str | os.PathLike], config: DataConfig,
                   task: Task, image_size: int, seed: int = 0, augment_train: bool = False,
                   offline_dir: str | os.PathLike | None = None) -> ImageSet:
    """Load one or more manifests into an ImageSet holding only the records usable for ``task``.

    Several manifests (a primary corpus plus external ones) are merged with
    ``merge_sources``; their relative paths are resolved against each
    manifest's own root first.

    With ``augment_train`` the configured policy is applied: online mode keys it
    per draw; offline mode writes augmented copies under ``offline_dir`` once and
    adds them as extra records.
    """
    paths = [manifest_path] if isinstance(manifest_path, (str, os.PathLike)) else list(manifest_path)
    if not paths:
        raise ConfigError("at least one manifest is required")
    loaded = [load_manifest(p) for p in paths]
    if len(paths) > 1:
        loaded = [[_anchored(r, manifest_root(p, config.image_root)) for r in records]
                  for p, records in zip(paths, loaded)]
    try:
        merged = merge_sources(loaded, task)
    except EmptyDatasetError as e:
        names = ", ".join(str(p) for p in paths)
        raise EmptyDatasetError(f"manifest(s) {names} have no records usable for task '{task.value}'") from e
    for source, count in sorted(merged.retained.items()):
        logger.info("%s: retained %d %s record(s), dropped %d", task.value, count, source,
                    merged.dropped.get(source, 0))
    usable = merged.records
    root = manifest_root(paths[0], config.image_root)
    policy = config.policy if augment_train else None
    if policy is not None and config.augment_mode == "offline":
        if offline_dir is None:
            raise ConfigError("offline augmentation needs an output directory")
        extra = materialize_augmentations(usable, [policy], root, offline_dir, seed)
        # materialized paths are absolute so one root serves both record kinds
        usable = usable + [replace(r, path=str((Path(offline_dir) / r.path).resolve())) for r in extra]
        policy = None
    return ImageSet(usable, root, task, image_size, policy, seed, config.workers, config.cache_size)
