"""Random-access crop reading over raster images.

Sources decode to an 8-bit RGB array once at open time; crops are then
plain array slices, which makes repeated reads byte-identical and safe
for unrestricted concurrent use. Grayscale inputs are expanded to three
channels so every consumer sees the same contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import OutOfBoundsFrameError, UnsupportedFormatError
from .geometry import FrameOrigin

SUPPORTED_FORMATS = {"PNG", "TIFF"}

# The paintings this toolkit targets exceed PIL's decompression-bomb
# heuristic (~0.9 gigapixel images); trusted local files only.
Image.MAX_IMAGE_PIXELS = None


@dataclass(frozen=True)
class ImageSource:
    """In-memory RGB raster with crop access."""

    image_id: str
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"pixels must be HxWx3, got shape {self.pixels.shape}")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError("image must be at least 1x1")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def read_crop(self, origin: FrameOrigin, tile: int) -> np.ndarray:
        """Exactly tile x tile RGB pixels at `origin`; frame must be in bounds."""
        x, y = origin.x, origin.y
        if x + tile > self.width or y + tile > self.height:
            raise OutOfBoundsFrameError(
                f"frame at ({x},{y}) size {tile} exceeds image {self.width}x{self.height}"
            )
        return self.pixels[y : y + tile, x : x + tile].copy()

    def read_crop_padded(self, origin: FrameOrigin, tile: int) -> np.ndarray:
        """Like read_crop but zero-fills past the right/bottom image edges.

        Keeps frame-local (0, 0) aligned with the global origin so padded
        frames translate detections identically to unpadded ones.
        """
        x, y = origin.x, origin.y
        if x >= self.width or y >= self.height:
            raise OutOfBoundsFrameError(f"frame origin ({x},{y}) outside image")
        out = np.zeros((tile, tile, 3), dtype=self.pixels.dtype)
        w = min(tile, self.width - x)
        h = min(tile, self.height - y)
        out[:h, :w] = self.pixels[y : y + h, x : x + w]
        return out


def _as_rgb(array: np.ndarray) -> np.ndarray:
    if array.ndim == 2:
        return np.repeat(array[:, :, np.newaxis], 3, axis=2)
    return array[:, :, :3]


def open_image(path: str | Path, image_id: str | None = None) -> ImageSource:
    """Open a PNG or TIFF file as an 8-bit RGB source.

    The image id defaults to the file stem. IO errors (missing file,
    unreadable data) propagate as OSError; other formats raise
    UnsupportedFormatError.
    """
    path = Path(path)
    with Image.open(path) as im:
        if im.format not in SUPPORTED_FORMATS:
            raise UnsupportedFormatError(f"{path}: unsupported format {im.format!r}")
        if im.mode not in ("RGB", "L"):
            im = im.convert("RGB")
        pixels = _as_rgb(np.asarray(im, dtype=np.uint8))
    return ImageSource(image_id if image_id is not None else path.stem, pixels)


def from_array(image_id: str, array: np.ndarray) -> ImageSource:
    """Wrap an in-memory array (HxW grayscale or HxWx3+) as a source."""
    return ImageSource(image_id, np.ascontiguousarray(_as_rgb(np.asarray(array, dtype=np.uint8))))
