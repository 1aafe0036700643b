from __future__ import annotations

import numpy as np
import pytest
from PIL import Image

from tiledet.errors import OutOfBoundsFrameError, UnsupportedFormatError
from tiledet.geometry import FrameOrigin
from tiledet.image_store import from_array, open_image
from tiledet.tiler import TilingConfig, plan_frames


@pytest.fixture
def png_path(tmp_path, rng):
    path = tmp_path / "asset.png"
    Image.fromarray(rng.integers(0, 255, size=(1088, 1088, 3), dtype=np.uint8)).save(path)
    return path


def test_open_png_dimensions(png_path):
    src = open_image(png_path)
    assert (src.width, src.height) == (1088, 1088)
    assert src.image_id == "asset"


def test_open_rgb_png_has_three_channels(png_path):
    assert open_image(png_path).pixels.shape == (1088, 1088, 3)


def test_open_missing_file_is_io_failure(tmp_path):
    with pytest.raises(OSError):
        open_image(tmp_path / "nope.png")


def test_open_unsupported_format(tmp_path, rng):
    path = tmp_path / "asset.bmp"
    Image.fromarray(rng.integers(0, 255, size=(16, 16, 3), dtype=np.uint8)).save(path)
    with pytest.raises(UnsupportedFormatError):
        open_image(path)


def test_open_tiff(tmp_path, rng):
    path = tmp_path / "asset.tif"
    pixels = rng.integers(0, 255, size=(64, 48, 3), dtype=np.uint8)
    Image.fromarray(pixels).save(path)
    src = open_image(path)
    assert (src.width, src.height) == (48, 64)
    np.testing.assert_array_equal(src.pixels, pixels)


def test_grayscale_expanded_to_three_channels(tmp_path, rng):
    path = tmp_path / "gray.png"
    gray = rng.integers(0, 255, size=(32, 32), dtype=np.uint8)
    Image.fromarray(gray, mode="L").save(path)
    src = open_image(path)
    assert src.pixels.shape == (32, 32, 3)
    for c in range(3):
        np.testing.assert_array_equal(src.pixels[:, :, c], gray)


def test_uniform_color_crop():
    src = from_array("flat", np.full((256, 256, 3), 77, dtype=np.uint8))
    crop = src.read_crop(FrameOrigin(0, 0), 64)
    assert crop.shape == (64, 64, 3)
    assert (crop == 77).all()


def test_repeated_reads_identical(noise_image):
    a = noise_image.read_crop(FrameOrigin(100, 50), 256)
    b = noise_image.read_crop(FrameOrigin(100, 50), 256)
    np.testing.assert_array_equal(a, b)


def test_overlapping_crops_agree(noise_image):
    left = noise_image.read_crop(FrameOrigin(0, 0), 256)
    right = noise_image.read_crop(FrameOrigin(128, 0), 256)
    np.testing.assert_array_equal(left[:, 128:], right[:, :128])


def test_crop_past_edge_rejected(noise_image):
    with pytest.raises(OutOfBoundsFrameError):
        noise_image.read_crop(FrameOrigin(noise_image.width - 100, 0), 256)


def test_padded_crop_zero_fills():
    src = from_array("small", np.full((40, 30, 3), 9, dtype=np.uint8))
    crop = src.read_crop_padded(FrameOrigin(0, 0), 64)
    assert crop.shape == (64, 64, 3)
    assert (crop[:40, :30] == 9).all()
    assert (crop[40:, :] == 0).all()
    assert (crop[:, 30:] == 0).all()


def test_crop_returns_copy(noise_image):
    crop = noise_image.read_crop(FrameOrigin(0, 0), 16)
    crop[:] = 0
    assert noise_image.read_crop(FrameOrigin(0, 0), 16).any()


def test_plan_stitching_reproduces_every_pixel(noise_image):
    # every pixel covered by >= 1 frame, and all frames agree with the source
    cfg = TilingConfig(tile=512, overlap=128)
    plan = plan_frames(noise_image.width, noise_image.height, cfg, image_id="noise")
    seen = np.zeros((noise_image.height, noise_image.width), dtype=bool)
    for frame in plan.frames():
        crop = noise_image.read_crop(frame.origin, frame.tile)
        x, y = frame.origin.x, frame.origin.y
        np.testing.assert_array_equal(
            crop, noise_image.pixels[y : y + cfg.tile, x : x + cfg.tile]
        )
        seen[y : y + cfg.tile, x : x + cfg.tile] = True
    assert seen.all()
