"""Duplicate suppression for merged window predictions.

Overlapping windows produce nested high-confidence predictions of the
same object; confidence-ranked suppression would keep the smallest of
them and wreck localization. This routine instead filters by confidence,
groups same-class predictions by intersection-over-minimum (which is 1
for any nested pair), and keeps the largest-area member of each group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateBoxError, InputTooLargeError
from .geometry import BoundingBox, area

ORACLE_MAX_INPUT = 12


@dataclass(frozen=True)
class Detection:
    """One model prediction: box, class, confidence."""

    box: BoundingBox
    class_id: int
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence outside [0, 1]: {self.confidence}")


@dataclass(frozen=True)
class NmsConfig:
    iom_threshold: float = 0.5
    confidence_threshold: float = 0.5

    def __post_init__(self) -> None:
        for v in (self.iom_threshold, self.confidence_threshold):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"thresholds must be in [0, 1], got {self}")


def canonical_key(d: Detection) -> tuple:
    """Sort key: descending area, descending confidence, then coordinates.

    This fixed processing order makes suppression invariant to the order
    in which windows delivered their predictions.
    """
    b = d.box
    return (-area(b), -d.confidence, b.x_min, b.y_min, b.x_max, b.y_max, d.class_id)


def filter_confidence(dets: Sequence[Detection], c_star: float) -> list[Detection]:
    """Detections with confidence >= c_star, input order preserved."""
    return [d for d in dets if d.confidence >= c_star]


def pairwise_iom(boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Symmetric NxN matrix M[i][j] = IoM(boxes[i], boxes[j]); unit diagonal.

    Raises DegenerateBoxError when any box has zero area.
    """
    n = len(boxes)
    if n == 0:
        return np.zeros((0, 0))
    coords = np.array([b.as_tuple() for b in boxes], dtype=np.float64)
    areas = (coords[:, 2] - coords[:, 0]) * (coords[:, 3] - coords[:, 1])
    if np.any(areas == 0.0):
        raise DegenerateBoxError("pairwise IoM over a zero-area box")
    iw = np.minimum(coords[:, None, 2], coords[None, :, 2]) - np.maximum(
        coords[:, None, 0], coords[None, :, 0]
    )
    ih = np.minimum(coords[:, None, 3], coords[None, :, 3]) - np.maximum(
        coords[:, None, 1], coords[None, :, 1]
    )
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    return inter / np.minimum(areas[:, None], areas[None, :])


def custom_nms(dets: Sequence[Detection], cfg: NmsConfig) -> list[Detection]:
    """Confidence filter, then keep-largest coalescing of same-class IoM groups.

    Survivors are processed in canonical order (largest area first). Each
    still-alive detection pivots a group of the still-alive same-class
    detections whose IoM with it meets the threshold; the pivot - by
    construction the largest-area member - is kept and the rest removed.
    Output is in canonical order.
    """
    survivors = sorted(filter_confidence(dets, cfg.confidence_threshold), key=canonical_key)
    n = len(survivors)
    if n <= 1:
        return survivors

    matrix = pairwise_iom([d.box for d in survivors])
    classes = np.array([d.class_id for d in survivors])
    t = cfg.iom_threshold

    alive = np.ones(n, dtype=bool)
    kept: list[Detection] = []
    for i in range(n):
        if not alive[i]:
            continue
        group = alive & (classes == classes[i]) & (matrix[i] >= t)
        # the pivot is the canonical minimum of its group: any earlier kept
        # detection overlapping it this much would already have removed it
        alive &= ~group
        kept.append(survivors[i])
    return kept


def brute_force_nms_oracle(dets: Sequence[Detection], cfg: NmsConfig) -> list[Detection]:
    """Direct re-evaluation of the suppression semantics, for tests only.

    Independently coded: scalar loops, explicit removal set, inline overlap
    arithmetic - shares nothing with custom_nms. Capped at
    ORACLE_MAX_INPUT detections.
    """
    if len(dets) > ORACLE_MAX_INPUT:
        raise InputTooLargeError(f"oracle accepts at most {ORACLE_MAX_INPUT} detections")

    def box_area(d: Detection) -> float:
        return (d.box.x_max - d.box.x_min) * (d.box.y_max - d.box.y_min)

    def overlap_over_min(a: Detection, b: Detection) -> float:
        w = min(a.box.x_max, b.box.x_max) - max(a.box.x_min, b.box.x_min)
        h = min(a.box.y_max, b.box.y_max) - max(a.box.y_min, b.box.y_min)
        inter = w * h if (w > 0 and h > 0) else 0.0
        return inter / min(box_area(a), box_area(b))

    pool = [d for d in dets if d.confidence >= cfg.confidence_threshold]
    pool.sort(
        key=lambda d: (
            -box_area(d),
            -d.confidence,
            d.box.x_min,
            d.box.y_min,
            d.box.x_max,
            d.box.y_max,
            d.class_id,
        )
    )
    removed: set[int] = set()
    kept: list[Detection] = []
    for i, pivot in enumerate(pool):
        if i in removed:
            continue
        for j, other in enumerate(pool):
            if j == i or j in removed:
                continue
            if other.class_id != pivot.class_id:
                continue
            if overlap_over_min(pivot, other) >= cfg.iom_threshold:
                removed.add(j)
        kept.append(pivot)
    return kept
