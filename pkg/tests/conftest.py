from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tiledet.dataset_prep import Annotation
from tiledet.geometry import BoundingBox
from tiledet.image_store import ImageSource, from_array
from tiledet.nms import Detection

settings.register_profile(
    "ci", derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ci")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, after the test run."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_box(x: float, y: float, w: float, h: float) -> BoundingBox:
    return BoundingBox(x, y, x + w, y + h)


def make_detection(x, y, w, h, class_id=1, confidence=0.9) -> Detection:
    return Detection(make_box(x, y, w, h), class_id, confidence)


def make_annotation(x, y, w, h, class_id=1, image_id="img") -> Annotation:
    return Annotation(image_id, make_box(x, y, w, h), class_id)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240521)


@pytest.fixture
def noise_image(rng) -> ImageSource:
    return from_array("noise", rng.integers(0, 255, size=(1500, 2000, 3)))


def grid_annotations(
    n_cols=4, n_rows=3, x0=150, y0=150, dx=450, dy=420, w=80, h=60, image_id="img"
) -> list[Annotation]:
    """Well-separated small ground-truth boxes on a lattice, two classes."""
    out = []
    for i in range(n_cols):
        for j in range(n_rows):
            x, y = x0 + i * dx, y0 + j * dy
            out.append(make_annotation(x, y, w, h, class_id=1 + (i + j) % 2, image_id=image_id))
    return out
