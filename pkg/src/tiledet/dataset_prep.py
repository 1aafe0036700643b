"""Leakage-free train/validation frame datasets from annotated large images.

Images are carved into a lattice of equal square cells separated by
gutters at least one frame wide; cells are assigned wholesale to a split
and frames are sampled with their top-left corner inside a cell, so a
frame may spill into the surrounding gutter but can never touch another
cell's territory. Severely overrepresented classes are then undersampled
by discarding frames that contain nothing else.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from PIL import Image

from .errors import ImageTooSmallError, InsufficientAnnotatedAreaError, SchemaViolationError
from .geometry import BoundingBox, FrameOrigin, area, intersection, to_local
from .image_store import ImageSource
from .jsonlio import iter_jsonl, require_fields, write_jsonl

DEFAULT_MIN_CELL = 2160
DEFAULT_GUTTER = 1088
DEFAULT_TRAIN_FRACTION = 0.8
DEFAULT_REBALANCE_PERCENTILE = 35.0
DEFAULT_MIN_VISIBLE_FRACTION = 0.5
RETRY_BUDGET_PER_FRAME = 1000

SPLITS = ("train", "validation")


@dataclass(frozen=True)
class Annotation:
    """Ground-truth box for one object instance, in global image coordinates."""

    image_id: str
    box: BoundingBox
    class_id: int


@dataclass(frozen=True)
class Cell:
    """One grid cell: column/row position and pixel rectangle."""

    index: int
    x: int
    y: int
    side: int

    @property
    def rect(self) -> BoundingBox:
        return BoundingBox(self.x, self.y, self.x + self.side, self.y + self.side)


@dataclass(frozen=True)
class GridSpec:
    """Lattice of equal square cells separated by gutter bands."""

    width: int
    height: int
    cell_side: int
    gutter: int
    n_cols: int
    n_rows: int

    @property
    def n_cells(self) -> int:
        return self.n_cols * self.n_rows

    def cell(self, index: int) -> Cell:
        row, col = divmod(index, self.n_cols)
        pitch = self.cell_side + self.gutter
        return Cell(index, col * pitch, row * pitch, self.cell_side)

    def cells(self) -> list[Cell]:
        return [self.cell(i) for i in range(self.n_cells)]


@dataclass(frozen=True)
class SplitAssignment:
    """Every cell mapped to exactly one split."""

    split_by_cell: Mapping[int, str]
    train_fraction: float
    seed: int

    def cells_of(self, split: str) -> list[int]:
        return sorted(i for i, s in self.split_by_cell.items() if s == split)


@dataclass(frozen=True)
class FrameSample:
    """A sampled training/validation frame with its clipped local annotations."""

    image_id: str
    origin: FrameOrigin
    tile: int
    split: str
    annotations: tuple[Annotation, ...]


def _axis_cell_count(length: int, min_cell: int, gutter: int) -> int:
    # largest n with (length - (n-1)*gutter) / n >= min_cell
    return (length + gutter) // (min_cell + gutter)


def build_grid(
    width: int,
    height: int,
    min_cell: int = DEFAULT_MIN_CELL,
    gutter: int = DEFAULT_GUTTER,
) -> GridSpec:
    """Maximal lattice of equal square cells with side >= min_cell.

    Cell counts are maximized per axis; the shared square side is the
    smaller of the two per-axis sides (floored to whole pixels), leaving
    any remainder as margin at the right/bottom edges.
    """
    n_cols = _axis_cell_count(width, min_cell, gutter)
    n_rows = _axis_cell_count(height, min_cell, gutter)
    if n_cols < 1 or n_rows < 1:
        raise ImageTooSmallError(
            f"{width}x{height} image cannot hold a cell of side {min_cell}"
        )
    side_x = (width - (n_cols - 1) * gutter) // n_cols
    side_y = (height - (n_rows - 1) * gutter) // n_rows
    return GridSpec(
        width=width,
        height=height,
        cell_side=min(side_x, side_y),
        gutter=gutter,
        n_cols=n_cols,
        n_rows=n_rows,
    )


def assign_cells(
    grid: GridSpec, ratio: float = DEFAULT_TRAIN_FRACTION, seed: int = 0
) -> SplitAssignment:
    """Shuffle cells and send round(total * (1 - ratio)) of them to validation."""
    if grid.n_cells < 1:
        raise ValueError("grid has no cells")
    indices = list(range(grid.n_cells))
    random.Random(seed).shuffle(indices)
    n_val = round(grid.n_cells * (1.0 - ratio))
    mapping = {i: ("validation" if pos < n_val else "train") for pos, i in enumerate(indices)}
    return SplitAssignment(split_by_cell=mapping, train_fraction=ratio, seed=seed)


def clip_annotations(
    annotations: Iterable[Annotation],
    origin: FrameOrigin,
    tile: int,
    min_visible_fraction: float = DEFAULT_MIN_VISIBLE_FRACTION,
) -> list[Annotation]:
    """Clip global annotations to a frame and translate them to local coords.

    An annotation survives only if its clipped area is at least
    min_visible_fraction of the original; border-touching boxes with empty
    overlap are dropped outright.
    """
    frame_rect = BoundingBox(origin.x, origin.y, origin.x + tile, origin.y + tile)
    out: list[Annotation] = []
    for ann in annotations:
        clipped = intersection(ann.box, frame_rect)
        if clipped is None:
            continue
        if area(clipped) < min_visible_fraction * area(ann.box):
            continue
        out.append(Annotation(ann.image_id, to_local(clipped, origin), ann.class_id))
    return out


def sample_frames(
    grid: GridSpec,
    assignment: SplitAssignment,
    annotations: Sequence[Annotation],
    counts: Mapping[str, int],
    tile: int,
    seed: int = 0,
    image_id: str = "",
    min_visible_fraction: float = DEFAULT_MIN_VISIBLE_FRACTION,
    retry_budget: int = RETRY_BUDGET_PER_FRAME,
) -> list[FrameSample]:
    """Rejection-sample annotated frames, top-left corner uniform in a cell.

    For each requested frame a cell of the split is drawn uniformly, then
    an origin uniform over the cell's pixels (clamped so the frame stays in
    the image); frames with no surviving clipped annotation are re-drawn.
    The RNG stream derives from (seed, image_id) so per-image work can run
    concurrently without changing outputs.
    """
    if tile > grid.cell_side + grid.gutter:
        raise ValueError(f"tile {tile} exceeds cell side {grid.cell_side} + gutter {grid.gutter}")
    rng = random.Random(f"{seed}:{image_id}")
    samples: list[FrameSample] = []
    for split in SPLITS:
        target = counts.get(split, 0)
        cell_ids = assignment.cells_of(split)
        if target > 0 and not cell_ids:
            raise InsufficientAnnotatedAreaError(f"no cells assigned to split {split!r}")
        for _ in range(target):
            sample = None
            for _attempt in range(retry_budget):
                cell = grid.cell(rng.choice(cell_ids))
                x_hi = min(cell.x + cell.side - 1, grid.width - tile)
                y_hi = min(cell.y + cell.side - 1, grid.height - tile)
                if x_hi < cell.x or y_hi < cell.y:
                    continue
                origin = FrameOrigin(rng.randint(cell.x, x_hi), rng.randint(cell.y, y_hi))
                local = clip_annotations(annotations, origin, tile, min_visible_fraction)
                if not local:
                    continue
                sample = FrameSample(
                    image_id=image_id,
                    origin=origin,
                    tile=tile,
                    split=split,
                    annotations=tuple(local),
                )
                break
            if sample is None:
                raise InsufficientAnnotatedAreaError(
                    f"no annotated frame found for split {split!r} "
                    f"within {retry_budget} attempts"
                )
            samples.append(sample)
    return samples


def class_histogram(samples: Iterable[FrameSample]) -> Counter[int]:
    """Instance counts per class across all samples."""
    counts: Counter[int] = Counter()
    for sample in samples:
        counts.update(ann.class_id for ann in sample.annotations)
    return counts


def nearest_rank_percentile(values: Sequence[int], percentile: float) -> int:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not values:
        raise ValueError("percentile of empty sequence")
    ordered = sorted(values)
    rank = max(1, math.ceil(percentile / 100.0 * len(ordered)))
    return ordered[rank - 1]


def rebalance(
    samples: Sequence[FrameSample],
    percentile: float = DEFAULT_REBALANCE_PERCENTILE,
) -> list[FrameSample]:
    """Undersample overrepresented classes by dropping their exclusive frames.

    The percentile of the per-class instance counts fixes a threshold T;
    classes above it are overrepresented. Only frames composed entirely of
    overrepresented classes are candidates. Frames are removed one at a
    time, targeting the currently most common class, and a removal is
    skipped if it would push any class below T - so classes at or below
    the threshold keep every instance, and no class undershoots it.
    """
    counts = class_histogram(samples)
    if not counts:
        raise ValueError("rebalance requires at least one annotated class")
    threshold = nearest_rank_percentile(list(counts.values()), percentile)
    overrepresented = {c for c, n in counts.items() if n > threshold}

    keep = [True] * len(samples)
    removable: list[int] = []
    per_frame: list[Counter[int]] = []
    for i, sample in enumerate(samples):
        frame_counts = Counter(ann.class_id for ann in sample.annotations)
        per_frame.append(frame_counts)
        if frame_counts and set(frame_counts) <= overrepresented:
            removable.append(i)

    current = Counter(counts)
    while True:
        excess = [c for c in overrepresented if current[c] > threshold]
        if not excess:
            break
        # most common class first; class id breaks ties deterministically
        excess.sort(key=lambda c: (-current[c], c))
        removed_one = False
        for target in excess:
            best = None
            for i in removable:
                if not keep[i] or per_frame[i][target] == 0:
                    continue
                if any(current[c] - k < threshold for c, k in per_frame[i].items()):
                    continue  # would undershoot the threshold
                key = (-per_frame[i][target], i)
                if best is None or key < best[0]:
                    best = (key, i)
            if best is not None:
                i = best[1]
                keep[i] = False
                current.subtract(per_frame[i])
                removed_one = True
                break
        if not removed_one:
            break
    return [s for i, s in enumerate(samples) if keep[i]]


# ---------------------------------------------------------------------------
# file formats

ANNOTATION_FIELDS = {
    "image_id": "str",
    "class_id": "int",
    "x_min": "number",
    "y_min": "number",
    "x_max": "number",
    "y_max": "number",
}


def read_annotations(path: str | Path) -> list[Annotation]:
    """Read the global annotation file (JSON Lines, one instance per line)."""
    out: list[Annotation] = []
    for line_no, obj in iter_jsonl(path):
        require_fields(str(path), line_no, obj, ANNOTATION_FIELDS)
        box = BoundingBox(obj["x_min"], obj["y_min"], obj["x_max"], obj["y_max"])
        if area(box) <= 0:
            raise SchemaViolationError(str(path), line_no, "zero-area annotation box")
        out.append(Annotation(obj["image_id"], box, obj["class_id"]))
    return out


def write_annotations(annotations: Iterable[Annotation], path: str | Path) -> int:
    return write_jsonl(
        path,
        (
            {
                "image_id": a.image_id,
                "class_id": a.class_id,
                "x_min": a.box.x_min,
                "y_min": a.box.y_min,
                "x_max": a.box.x_max,
                "y_max": a.box.y_max,
            }
            for a in annotations
        ),
    )


def write_samples(samples: Iterable[FrameSample], path: str | Path) -> int:
    """Persist sampled frames with their local annotations (JSON Lines)."""
    return write_jsonl(
        path,
        (
            {
                "image_id": s.image_id,
                "x": s.origin.x,
                "y": s.origin.y,
                "tile": s.tile,
                "split": s.split,
                "annotations": [
                    {
                        "class_id": a.class_id,
                        "x_min": a.box.x_min,
                        "y_min": a.box.y_min,
                        "x_max": a.box.x_max,
                        "y_max": a.box.y_max,
                    }
                    for a in s.annotations
                ],
            }
            for s in samples
        ),
    )


def read_samples(path: str | Path) -> list[FrameSample]:
    spath = str(path)
    fields = {"image_id": "str", "x": "int", "y": "int", "tile": "int", "split": "str"}
    out: list[FrameSample] = []
    for line_no, obj in iter_jsonl(path):
        require_fields(spath, line_no, obj, fields)
        if obj["split"] not in SPLITS:
            raise SchemaViolationError(spath, line_no, f"unknown split {obj['split']!r}")
        raw_anns = obj.get("annotations")
        if not isinstance(raw_anns, list):
            raise SchemaViolationError(spath, line_no, "missing annotations list")
        anns = []
        for raw in raw_anns:
            if not isinstance(raw, dict):
                raise SchemaViolationError(spath, line_no, "annotation entries must be objects")
            require_fields(
                spath,
                line_no,
                raw,
                {k: v for k, v in ANNOTATION_FIELDS.items() if k != "image_id"},
            )
            anns.append(
                Annotation(
                    obj["image_id"],
                    BoundingBox(raw["x_min"], raw["y_min"], raw["x_max"], raw["y_max"]),
                    raw["class_id"],
                )
            )
        out.append(
            FrameSample(
                image_id=obj["image_id"],
                origin=FrameOrigin(obj["x"], obj["y"]),
                tile=obj["tile"],
                split=obj["split"],
                annotations=tuple(anns),
            )
        )
    return out


def _frame_stem(sample: FrameSample) -> str:
    return f"{sample.image_id}_{sample.split}_{sample.origin.x}_{sample.origin.y}"


def _label_lines(sample: FrameSample) -> list[str]:
    # "class x_center y_center width height", normalized to [0, 1] by tile
    lines = []
    for ann in sample.annotations:
        b = ann.box
        cx = (b.x_min + b.x_max) / 2.0 / sample.tile
        cy = (b.y_min + b.y_max) / 2.0 / sample.tile
        w = b.width / sample.tile
        h = b.height / sample.tile
        lines.append(f"{ann.class_id} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}")
    return lines


def parse_label_file(path: str | Path, tile: int) -> list[tuple[int, BoundingBox]]:
    """Invert the label format back to frame-local pixel boxes."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        class_id, cx, cy, w, h = line.split()
        cx, cy, w, h = (float(v) * tile for v in (cx, cy, w, h))
        out.append(
            (int(class_id), BoundingBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2))
        )
    return out


def export_split(
    samples: Sequence[FrameSample],
    sources: Mapping[str, ImageSource],
    out_dir: str | Path,
) -> Path:
    """Write frame crops, label files, and the split manifest under out_dir.

    Layout: images/<stem>.png, labels/<stem>.txt, manifest.jsonl. Output is
    deterministic, so re-exporting the same samples is byte-identical.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    labels_dir = out_dir / "labels"
    images_dir.mkdir(parents=True, exist_ok=True)
    labels_dir.mkdir(parents=True, exist_ok=True)

    manifest_records = []
    for sample in samples:
        if not sample.annotations:
            raise ValueError(f"frame without labels cannot be exported: {sample}")
        source = sources[sample.image_id]
        crop = source.read_crop_padded(sample.origin, sample.tile)
        stem = _frame_stem(sample)
        Image.fromarray(crop).save(images_dir / f"{stem}.png")
        (labels_dir / f"{stem}.txt").write_text(
            "\n".join(_label_lines(sample)) + "\n", encoding="utf-8"
        )
        manifest_records.append(
            {
                "frame_file": f"images/{stem}.png",
                "image_id": sample.image_id,
                "origin_x": sample.origin.x,
                "origin_y": sample.origin.y,
                "split": sample.split,
            }
        )
    write_jsonl(out_dir / "manifest.jsonl", manifest_records)
    return out_dir
