# Seeded augmentation compositions: colour jitter, random crop, horizontal flip
# and the two pairings (jitter then crop, crop then flip).
#
# Randomness comes from a counter-based Philox generator keyed by
# (seed, sample_index), so a sample's augmentation does not depend on which
# worker processes it or in what order.

import logging
import os
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path, PurePosixPath
from typing import Sequence

import numpy as np
from PIL import ImageEnhance, ImageOps

from ..errors import ConfigError
from ..utils.resource_loader import dataclass_from_dict
from .images import Image, crop, read_image, write_image
from .records import AnnotationRecord

logger = logging.getLogger(__name__)

_KEY_MASK = (1 << 64) - 1


class AugmentKind(str, Enum):
    NONE = "none"
    COLOR_JITTER = "color_jitter"
    RANDOM_CROP = "random_crop"
    HFLIP = "hflip"
    JITTER_THEN_CROP = "jitter_then_crop"
    CROP_THEN_FLIP = "crop_then_flip"


_STEPS = {
    AugmentKind.NONE: (),
    AugmentKind.COLOR_JITTER: ("jitter",),
    AugmentKind.RANDOM_CROP: ("crop",),
    AugmentKind.HFLIP: ("flip",),
    AugmentKind.JITTER_THEN_CROP: ("jitter", "crop"),
    AugmentKind.CROP_THEN_FLIP: ("crop", "flip"),
}


@dataclass(frozen=True)
class AugmentPolicy:
    kind: AugmentKind = AugmentKind.NONE
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    crop_ratio: float = 0.9
    flip_probability: float = 0.5

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", AugmentKind(self.kind))
        except ValueError as e:
            raise ConfigError(f"unknown augmentation kind '{self.kind}'") from e
        for name in ("brightness", "contrast", "saturation"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"augment.{name} must be in [0, 1), got {getattr(self, name)}")
        if not 0.0 < self.crop_ratio <= 1.0:
            raise ConfigError(f"augment.crop_ratio must be in (0, 1], got {self.crop_ratio}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ConfigError(f"augment.flip_probability must be in [0, 1], got {self.flip_probability}")

    @classmethod
    def from_dict(cls, d: dict | None) -> "AugmentPolicy":
        return dataclass_from_dict(cls, d, "augment")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def keyed_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([int(seed) & _KEY_MASK, int(index) & _KEY_MASK], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _jitter(image: Image, policy: AugmentPolicy, rng: np.random.Generator) -> Image:
    pil = image.to_pil()
    for strength, enhancer in ((policy.brightness, ImageEnhance.Brightness),
                               (policy.contrast, ImageEnhance.Contrast),
                               (policy.saturation, ImageEnhance.Color)):
        factor = rng.uniform(1.0 - strength, 1.0 + strength)
        if strength > 0.0:
            pil = enhancer(pil).enhance(factor)
    return Image.from_pil(pil)


def crop_extent(width: int, height: int, ratio: float) -> tuple[int, int]:
    return max(1, int(round(ratio * width))), max(1, int(round(ratio * height)))


def _crop(image: Image, policy: AugmentPolicy, rng: np.random.Generator) -> Image:
    cw, ch = crop_extent(image.width, image.height, policy.crop_ratio)
    x0 = int(rng.integers(0, image.width - cw + 1))
    y0 = int(rng.integers(0, image.height - ch + 1))
    return Image(image.pixels[y0:y0 + ch, x0:x0 + cw])


def _flip(image: Image, policy: AugmentPolicy, rng: np.random.Generator) -> Image:
    if rng.random() < policy.flip_probability:
        return Image.from_pil(ImageOps.mirror(image.to_pil()))
    return image


_APPLY = {"jitter": _jitter, "crop": _crop, "flip": _flip}


def augment(image: Image, policy: AugmentPolicy, rng_key: tuple[int, int]) -> Image:
    """Apply ``policy`` with randomness drawn from the (seed, sample_index) key."""
    rng = keyed_rng(*rng_key)
    for step in _STEPS[policy.kind]:
        image = _APPLY[step](image, policy, rng)
    return image


def _output_location(record: AnnotationRecord) -> tuple[str, str]:
    path = PurePosixPath(record.path.replace("\\", "/"))
    parts = [p for p in path.parent.parts if p not in ("/", ".", "..") and not p.endswith(":")]
    if parts and parts[0] == record.source.value:
        parts = parts[1:]
    return path.stem, PurePosixPath(record.source.value, *parts).as_posix()


def materialize_augmentations(records: Sequence[AnnotationRecord], policies: Sequence[AugmentPolicy],
                              image_root: str | os.PathLike, out_dir: str | os.PathLike,
                              seed: int) -> list[AnnotationRecord]:
    """Write one augmented copy per (record, policy) to disk and return records for them.

    Paths in the returned records are relative to ``out_dir`` and keep the
    source record's directories (video folders stay apart). Crop boxes are
    applied before augmenting, so the new records carry none.
    """
    out_dir = Path(out_dir)
    written = []
    taken: set[str] = set()
    for i, record in enumerate(records):
        source = read_image(Path(image_root) / record.path)
        if record.bbox is not None:
            source = crop(source, record.bbox)
        stem, folder = _output_location(record)
        if any(f"{folder}/{stem}__{p.kind.value}_{k}.ppm" in taken for k, p in enumerate(policies)):
            stem = f"{stem}__{i}"   # same path listed twice, e.g. with two crop boxes
        for k, policy in enumerate(policies):
            image = augment(source, policy, (seed, i * len(policies) + k))
            rel = PurePosixPath(folder) / f"{stem}__{policy.kind.value}_{k}.ppm"
            taken.add(rel.as_posix())
            (out_dir / rel.parent).mkdir(parents=True, exist_ok=True)
            write_image(image, out_dir / rel)
            written.append(AnnotationRecord(rel.as_posix(), record.source, record.expr,
                                            record.valence, record.arousal, None))
    logger.info("Materialized %d augmented images into %s", len(written), out_dir)
    return written
