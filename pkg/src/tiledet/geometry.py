"""Axis-aligned box arithmetic: areas, overlap ratios, and coordinate transforms.

Coordinates are continuous pixel values with the origin at the top-left
corner and y growing downward. Area is the plain coordinate-difference
product, so a box's nominal pixel grid never enters the arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DegenerateBoxError


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Axis-aligned rectangle; zero-area (degenerate) boxes are representable."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted box: {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class FrameOrigin:
    """Top-left corner of a window in global image coordinates."""

    x: int
    y: int

    def __post_init__(self) -> None:
        if self.x < 0 or self.y < 0:
            raise ValueError(f"negative frame origin: {self}")


def area(b: BoundingBox) -> float:
    """Pixel area of a box; zero for degenerate boxes."""
    return b.width * b.height


def intersection(b1: BoundingBox, b2: BoundingBox) -> BoundingBox | None:
    """Overlap rectangle of two boxes, or None when they are disjoint.

    A shared edge counts as disjoint (the overlap has zero area).
    """
    x_min = max(b1.x_min, b2.x_min)
    y_min = max(b1.y_min, b2.y_min)
    x_max = min(b1.x_max, b2.x_max)
    y_max = min(b1.y_max, b2.y_max)
    if x_max <= x_min or y_max <= y_min:
        return None
    return BoundingBox(x_min, y_min, x_max, y_max)


def intersection_area(b1: BoundingBox, b2: BoundingBox) -> float:
    iw = min(b1.x_max, b2.x_max) - max(b1.x_min, b2.x_min)
    ih = min(b1.y_max, b2.y_max) - max(b1.y_min, b2.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou(b1: BoundingBox, b2: BoundingBox) -> float:
    """Intersection over union, in [0, 1].

    Raises DegenerateBoxError when both boxes have zero area (the union
    vanishes and the ratio is undefined).
    """
    a1 = area(b1)
    a2 = area(b2)
    if a1 == 0.0 and a2 == 0.0:
        raise DegenerateBoxError(f"iou undefined for two zero-area boxes: {b1}, {b2}")
    inter = intersection_area(b1, b2)
    return inter / (a1 + a2 - inter)


def iom(b1: BoundingBox, b2: BoundingBox) -> float:
    """Intersection over the smaller box's area, in [0, 1].

    Equals 1 exactly when one box contains the other, which makes it the
    ratio of choice for spotting nested duplicate predictions. Raises
    DegenerateBoxError when either box has zero area.
    """
    smaller = min(area(b1), area(b2))
    if smaller == 0.0:
        raise DegenerateBoxError(f"iom undefined for zero-area box: {b1}, {b2}")
    return intersection_area(b1, b2) / smaller


def to_global(b: BoundingBox, origin: FrameOrigin) -> BoundingBox:
    """Translate a frame-local box into global image coordinates."""
    return BoundingBox(
        b.x_min + origin.x, b.y_min + origin.y, b.x_max + origin.x, b.y_max + origin.y
    )


def to_local(b: BoundingBox, origin: FrameOrigin) -> BoundingBox:
    """Translate a global box into the coordinates of the frame at `origin`."""
    return BoundingBox(
        b.x_min - origin.x, b.y_min - origin.y, b.x_max - origin.x, b.y_max - origin.y
    )
