# Synthetic expression corpus: eight visually separable pattern classes with
# expression labels and a smooth valence/arousal labelling.
#
# Class c gets an RGB tint, a grating oriented at c*pi/8 with a random phase,
# a blob placed at angle 2*pi*c/8 on a ring, and pixel noise. Its VA label is
#   valence = 0.7 cos(2 pi c / 8) + 0.25 sin(phase)
#   arousal = 0.7 sin(2 pi c / 8) + 0.25 cos(phase)

import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from tqdm import tqdm

from ..errors import ConfigError, ImageIOError
from ..model.config import NUM_CLASSES
from ..utils.resource_loader import dataclass_from_dict
from .augment import keyed_rng
from .images import Image, write_image
from .records import AnnotationRecord, Source, save_manifest

logger = logging.getLogger(__name__)

PALETTE = np.array([
    [220, 60, 60], [60, 200, 60], [60, 80, 220], [210, 200, 50],
    [200, 60, 200], [50, 200, 200], [240, 140, 40], [150, 150, 150],
], dtype=np.float64) / 255.0

GRATING_CYCLES = 4.0
BLOB_RADIUS = 0.5
BLOB_WIDTH = 0.18
NOISE_STD = 10.0
SPLIT_STREAM = 1 << 40

MANIFEST_NAME = "manifest.csv"
TRAIN_NAME = "train.csv"
VAL_NAME = "val.csv"


@dataclass
class SynthSpec:
    num_classes: int = NUM_CLASSES
    per_class: int = 100
    image_size: int = 64
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        if not 1 <= self.num_classes <= NUM_CLASSES:
            raise ConfigError(f"synth.num_classes must be in 1..{NUM_CLASSES}, got {self.num_classes}")
        if self.per_class < 1 or self.image_size < 4:
            raise ConfigError("synth.per_class must be >= 1 and synth.image_size >= 4")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"synth.val_fraction must be in [0, 1), got {self.val_fraction}")

    @classmethod
    def from_dict(cls, d: dict | None) -> "SynthSpec":
        return dataclass_from_dict(cls, d, "synth")


@dataclass
class SynthResult:
    out_dir: Path
    records: list[AnnotationRecord]
    train: list[AnnotationRecord] = field(default_factory=list)
    val: list[AnnotationRecord] = field(default_factory=list)

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / MANIFEST_NAME

    @property
    def train_path(self) -> Path:
        return self.out_dir / TRAIN_NAME

    @property
    def val_path(self) -> Path:
        return self.out_dir / VAL_NAME


def va_label(cls: int, phase: float) -> tuple[float, float]:
    angle = 2.0 * math.pi * cls / NUM_CLASSES
    return (0.7 * math.cos(angle) + 0.25 * math.sin(phase),
            0.7 * math.sin(angle) + 0.25 * math.cos(phase))


def render_sample(cls: int, phase: float, noise: np.ndarray, size: int) -> Image:
    coords = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    theta = cls * math.pi / NUM_CLASSES
    grating = np.sin(math.pi * GRATING_CYCLES * (xx * math.cos(theta) + yy * math.sin(theta)) + phase)
    angle = 2.0 * math.pi * cls / NUM_CLASSES
    cx, cy = BLOB_RADIUS * math.cos(angle), BLOB_RADIUS * math.sin(angle)
    blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * BLOB_WIDTH ** 2))
    tint = PALETTE[cls]
    pixels = 70.0 + 60.0 * tint + 40.0 * grating[..., None] + 110.0 * blob[..., None] * tint + noise
    return Image(np.clip(np.rint(pixels), 0, 255).astype(np.uint8))


def stratified_split(records: Sequence[AnnotationRecord], val_fraction: float,
                     seed: int) -> tuple[list[AnnotationRecord], list[AnnotationRecord]]:
    """Hold out round(val_fraction * n_c) records of every expression class; order is preserved."""
    groups: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(-1 if r.expr is None else r.expr, []).append(i)
    held_out = set()
    for cls, indices in sorted(groups.items()):
        rng = keyed_rng(seed, SPLIT_STREAM + cls + 1)
        k = int(round(val_fraction * len(indices)))
        held_out.update(rng.permutation(indices)[:k].tolist())
    train = [r for i, r in enumerate(records) if i not in held_out]
    val = [r for i, r in enumerate(records) if i in held_out]
    return train, val


def synth_generate(spec: SynthSpec, out_dir: str | os.PathLike, progress: bool = False) -> SynthResult:
    """Write the corpus under ``out_dir/SYNTH`` plus manifest.csv, train.csv and val.csv."""
    out_dir = Path(out_dir)
    image_dir = out_dir / Source.SYNTH.value
    try:
        image_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ImageIOError(f"cannot create output directory '{image_dir}': {e}") from e

    records = []
    total = spec.num_classes * spec.per_class
    with tqdm(total=total, desc="synth", unit="img", disable=not progress) as bar:
        for cls in range(spec.num_classes):
            for i in range(spec.per_class):
                rng = keyed_rng(spec.seed, cls * spec.per_class + i)
                phase = float(rng.uniform(0.0, 2.0 * math.pi))
                noise = rng.normal(0.0, NOISE_STD, size=(spec.image_size, spec.image_size, 3))
                rel = f"{Source.SYNTH.value}/c{cls}_{i:05d}.ppm"
                write_image(render_sample(cls, phase, noise, spec.image_size), out_dir / rel)
                valence, arousal = va_label(cls, phase)
                records.append(AnnotationRecord(rel, Source.SYNTH, cls, valence, arousal))
                bar.update(1)

    train, val = stratified_split(records, spec.val_fraction, spec.seed)
    save_manifest(records, out_dir / MANIFEST_NAME)
    save_manifest(train, out_dir / TRAIN_NAME)
    save_manifest(val, out_dir / VAL_NAME)
    logger.info("Synthesized %d images (%d train / %d val) into %s", len(records), len(train), len(val), out_dir)
    return SynthResult(out_dir, records, train, val)
