"""Sliding-window planning for large images.

Windows are square tiles laid out on a per-axis lattice of stride
``tile - overlap``; the last window on each axis is clamped so it ends
exactly at the image edge (yielding a larger overlap there instead of
padding). Only images smaller than one tile get a padded single window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import SchemaViolationError
from .geometry import BoundingBox, FrameOrigin
from .jsonlio import iter_jsonl, require_fields, write_jsonl

DEFAULT_TILE = 1088
DEFAULT_OVERLAP = 324


@dataclass(frozen=True)
class TilingConfig:
    tile: int = DEFAULT_TILE
    overlap: int = DEFAULT_OVERLAP

    def __post_init__(self) -> None:
        if not 0 <= self.overlap < self.tile:
            raise ValueError(f"need 0 <= overlap < tile, got {self}")

    @property
    def stride(self) -> int:
        return self.tile - self.overlap


@dataclass(frozen=True)
class Frame:
    """One planned window: row-major index, global origin, side, padding flag."""

    index: int
    origin: FrameOrigin
    tile: int
    padded: bool


@dataclass(frozen=True)
class FramePlan:
    """The ordered (row-major) set of windows tiling one image."""

    image_id: str
    tile: int
    width: int
    height: int
    xs: tuple[int, ...] = field(repr=False)
    ys: tuple[int, ...] = field(repr=False)
    padded_x: bool = False
    padded_y: bool = False

    @property
    def n_cols(self) -> int:
        return len(self.xs)

    @property
    def n_rows(self) -> int:
        return len(self.ys)

    @property
    def n_frames(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def padded(self) -> bool:
        return self.padded_x or self.padded_y

    def origin(self, index: int) -> FrameOrigin:
        row, col = divmod(index, self.n_cols)
        return FrameOrigin(self.xs[col], self.ys[row])

    def frame(self, index: int) -> Frame:
        if not 0 <= index < self.n_frames:
            raise IndexError(f"frame index {index} out of range 0..{self.n_frames - 1}")
        return Frame(index, self.origin(index), self.tile, self.padded)

    def frames(self) -> Iterable[Frame]:
        for index in range(self.n_frames):
            yield self.frame(index)

    @cached_property
    def _origin_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        # per-frame (x, y) origin arrays in row-major frame-index order
        ox = np.tile(np.asarray(self.xs, dtype=np.int64), self.n_rows)
        oy = np.repeat(np.asarray(self.ys, dtype=np.int64), self.n_cols)
        return ox, oy


def _axis_origins(length: int, cfg: TilingConfig) -> tuple[tuple[int, ...], bool]:
    """Window origins along one axis, plus whether padding is required.

    For length > tile the count is ceil((length - tile) / stride) + 1 with
    the last origin clamped to length - tile; for length <= tile a single
    window at 0 covers the axis (padded when strictly smaller).
    """
    if length < 1:
        raise ValueError(f"axis length must be >= 1, got {length}")
    if length <= cfg.tile:
        return (0,), length < cfg.tile
    n = math.ceil((length - cfg.tile) / cfg.stride) + 1
    origins = [k * cfg.stride for k in range(n - 1)]
    origins.append(length - cfg.tile)
    return tuple(origins), False


def plan_frames(
    width: int, height: int, cfg: TilingConfig = TilingConfig(), image_id: str = ""
) -> FramePlan:
    """Plan the row-major window lattice covering a width x height image."""
    xs, padded_x = _axis_origins(width, cfg)
    ys, padded_y = _axis_origins(height, cfg)
    return FramePlan(
        image_id=image_id,
        tile=cfg.tile,
        width=width,
        height=height,
        xs=xs,
        ys=ys,
        padded_x=padded_x,
        padded_y=padded_y,
    )


def frames_covering(plan: FramePlan, b: BoundingBox) -> list[int]:
    """Indices of every frame whose window fully contains the box.

    A frame at (ox, oy) contains the box iff ox <= x_min, oy <= y_min,
    x_max <= ox + tile and y_max <= oy + tile. May be empty for boxes
    larger than the containment guarantee (sides <= overlap).
    """
    xarr, yarr = plan._origin_arrays
    mask = (
        (xarr <= b.x_min)
        & (b.x_max <= xarr + plan.tile)
        & (yarr <= b.y_min)
        & (b.y_max <= yarr + plan.tile)
    )
    return [int(i) for i in np.nonzero(mask)[0]]


def write_manifest(plan: FramePlan, path: str | Path) -> int:
    """Write the frame manifest (JSON Lines, one record per frame)."""
    return write_jsonl(
        path,
        (
            {
                "image_id": plan.image_id,
                "frame_index": f.index,
                "x": f.origin.x,
                "y": f.origin.y,
                "tile": f.tile,
                "padded": f.padded,
            }
            for f in plan.frames()
        ),
    )


def read_manifest(path: str | Path) -> FramePlan:
    """Reconstruct a FramePlan from a manifest file.

    Image dimensions are recovered as max(origin) + tile, which is exact for
    every unpadded plan (the last window ends at the image edge) and an
    upper bound for padded single-window plans.
    """
    spath = str(path)
    records = []
    fields = {
        "image_id": "str",
        "frame_index": "int",
        "x": "int",
        "y": "int",
        "tile": "int",
        "padded": "bool",
    }
    for line_no, obj in iter_jsonl(path):
        require_fields(spath, line_no, obj, fields)
        records.append((line_no, obj))
    if not records:
        raise SchemaViolationError(spath, 1, "empty frame manifest")

    first = records[0][1]
    image_id, tile = first["image_id"], first["tile"]
    xs: list[int] = []
    ys: list[int] = []
    padded = False
    for pos, (line_no, obj) in enumerate(records):
        if obj["frame_index"] != pos:
            raise SchemaViolationError(spath, line_no, f"expected frame_index {pos}")
        if obj["image_id"] != image_id or obj["tile"] != tile:
            raise SchemaViolationError(spath, line_no, "inconsistent image_id or tile")
        if obj["x"] not in xs:
            xs.append(obj["x"])
        if obj["y"] not in ys:
            ys.append(obj["y"])
        padded = padded or obj["padded"]

    plan = FramePlan(
        image_id=image_id,
        tile=tile,
        width=max(xs) + tile,
        height=max(ys) + tile,
        xs=tuple(xs),
        ys=tuple(ys),
        padded_x=padded,
        padded_y=False,
    )
    # the manifest must be exactly the row-major lattice over xs x ys
    for pos, (line_no, obj) in enumerate(records):
        origin = plan.origin(pos)
        if (obj["x"], obj["y"]) != (origin.x, origin.y):
            raise SchemaViolationError(spath, line_no, "frames are not in row-major lattice order")
    if plan.n_frames != len(records):
        raise SchemaViolationError(spath, records[-1][0], "frame count does not match lattice")
    return plan
