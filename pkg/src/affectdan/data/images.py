# 8-bit RGB images: PPM (P6) / PNG decoding and the crop + bilinear resize step.

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from ..errors import GeometryError, ImageIOError

_FORMATS = {".ppm": "PPM", ".png": "PNG"}


@dataclass
class Image:
    """Row-major 8-bit RGB pixels, shape [height, width, 3]."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise GeometryError(f"image pixels must be [H, W, 3], got shape {self.pixels.shape}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def to_pil(self) -> PILImage.Image:
        return PILImage.fromarray(self.pixels, mode="RGB")

    @classmethod
    def from_pil(cls, image: PILImage.Image) -> "Image":
        return cls(np.asarray(image.convert("RGB"), dtype=np.uint8))


def read_image(path: str | os.PathLike) -> Image:
    try:
        with PILImage.open(path) as img:
            img.load()
            return Image.from_pil(img)
    except (OSError, UnidentifiedImageError, ValueError) as e:
        raise ImageIOError(f"cannot read image '{path}': {e}") from e


def write_image(image: Image, path: str | os.PathLike) -> None:
    fmt = _FORMATS.get(os.path.splitext(str(path))[1].lower())
    if fmt is None:
        raise ImageIOError(f"unsupported image extension for '{path}' (use .ppm or .png)")
    try:
        image.to_pil().save(path, format=fmt)
    except OSError as e:
        raise ImageIOError(f"cannot write image '{path}': {e}") from e


def crop(image: Image, bbox: tuple[int, int, int, int]) -> Image:
    x, y, w, h = (int(v) for v in bbox)
    if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > image.width or y + h > image.height:
        raise GeometryError(f"bbox {tuple(bbox)} lies outside the {image.width}x{image.height} image")
    return Image(image.pixels[y:y + h, x:x + w])


def crop_and_resize(image: Image, bbox: tuple[int, int, int, int] | None, out_size: int) -> Image:
    """Crop to ``bbox`` (x, y, w, h) or keep the full frame, then bilinear-resize to a square."""
    if bbox is not None:
        image = crop(image, bbox)
    pil = image.to_pil()
    if pil.size != (out_size, out_size):
        pil = pil.resize((out_size, out_size), resample=PILImage.Resampling.BILINEAR)
    return Image.from_pil(pil)
