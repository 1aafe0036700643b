"""Detector backends: the pluggable interface, a file-backed replay oracle,
and a synthetic noisy detector for end-to-end and metric tests.

The per-frame detections file is the wire format between real inference
(which may live in another process or language) and the merge stage: a
header line carrying the SHA-256 of the frame manifest it was produced
against, then one record per detection in frame-local coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from .dataset_prep import Annotation, clip_annotations
from .errors import ManifestMismatchError, SchemaViolationError
from .geometry import BoundingBox, area
from .jsonlio import (
    dumps_record,
    header_record,
    is_header,
    iter_jsonl,
    require_fields,
)
from .nms import Detection
from .tiler import Frame, FramePlan

FRAME_DETECTIONS_KIND = "frame_detections"

DETECTION_FIELDS = {
    "frame_index": "int",
    "class_id": "int",
    "x_min": "number",
    "y_min": "number",
    "x_max": "number",
    "y_max": "number",
    "confidence": "number",
}


@runtime_checkable
class DetectorBackend(Protocol):
    """Per-frame detector: boxes in [0, tile]^2, confidences in [0, 1]."""

    needs_pixels: bool
    thread_safe: bool

    def detect(self, frame: Frame, pixels: np.ndarray | None) -> list[Detection]: ...


# ---------------------------------------------------------------------------
# per-frame detections file

def write_frame_detections(
    per_frame: Mapping[int, Sequence[Detection]],
    path: str | Path,
    manifest_sha256: str | None,
) -> int:
    """Write header + records, frames in index order; returns record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_record(header_record(FRAME_DETECTIONS_KIND, manifest_sha256)))
        fh.write("\n")
        for frame_index in sorted(per_frame):
            for det in per_frame[frame_index]:
                fh.write(
                    dumps_record(
                        {
                            "frame_index": frame_index,
                            "class_id": det.class_id,
                            "x_min": det.box.x_min,
                            "y_min": det.box.y_min,
                            "x_max": det.box.x_max,
                            "y_max": det.box.y_max,
                            "confidence": det.confidence,
                        }
                    )
                )
                fh.write("\n")
                n += 1
    return n


def read_frame_detections(
    path: str | Path,
) -> tuple[dict[int, list[Detection]], str | None]:
    """Read a per-frame detections file; returns (records, manifest hash).

    Files written by other tools may omit the header line, in which case
    the hash comes back None and no manifest check is possible.
    """
    spath = str(path)
    per_frame: dict[int, list[Detection]] = {}
    manifest_sha256: str | None = None
    for line_no, obj in iter_jsonl(path):
        if line_no == 1 and is_header(obj):
            if obj.get("kind") != FRAME_DETECTIONS_KIND:
                raise SchemaViolationError(spath, line_no, f"unexpected kind {obj.get('kind')!r}")
            manifest_sha256 = obj.get("manifest_sha256")
            continue
        require_fields(spath, line_no, obj, DETECTION_FIELDS)
        det = Detection(
            box=BoundingBox(obj["x_min"], obj["y_min"], obj["x_max"], obj["y_max"]),
            class_id=obj["class_id"],
            confidence=obj["confidence"],
        )
        per_frame.setdefault(obj["frame_index"], []).append(det)
    return per_frame, manifest_sha256


# ---------------------------------------------------------------------------
# oracle backend

class OracleBackend:
    """Replays stored per-frame detections; frames without records are empty."""

    needs_pixels = False
    thread_safe = True

    def __init__(
        self,
        per_frame: Mapping[int, Sequence[Detection]],
        plan: FramePlan,
        manifest_sha256: str | None = None,
        expected_sha256: str | None = None,
    ):
        if expected_sha256 is not None and manifest_sha256 != expected_sha256:
            raise ManifestMismatchError(
                f"detections were produced against manifest {manifest_sha256}, "
                f"expected {expected_sha256}"
            )
        stray = [i for i in per_frame if not 0 <= i < plan.n_frames]
        if stray:
            raise ManifestMismatchError(
                f"detections reference frames {sorted(stray)} outside the "
                f"plan's 0..{plan.n_frames - 1}"
            )
        self._per_frame = {i: list(dets) for i, dets in per_frame.items()}

    @classmethod
    def from_file(
        cls, path: str | Path, plan: FramePlan, expected_sha256: str | None = None
    ) -> OracleBackend:
        per_frame, file_hash = read_frame_detections(path)
        return cls(per_frame, plan, manifest_sha256=file_hash, expected_sha256=expected_sha256)

    def detect(self, frame: Frame, pixels: np.ndarray | None = None) -> list[Detection]:
        return list(self._per_frame.get(frame.index, []))


# ---------------------------------------------------------------------------
# synthetic backend

@dataclass(frozen=True)
class SyntheticScenario:
    """Noise model for fabricating detector output from ground truth.

    Every ground-truth instance visible in a frame is emitted (clipped to
    the window) with probability 1 - fn_rate, each coordinate jittered
    uniformly within +/- jitter px; Poisson(fp_rate) false positives per
    frame get uniform positions with sides drawn from the ground-truth
    side distribution. Confidences are clamped Gaussians.
    """

    seed: int
    annotations: tuple[Annotation, ...]
    fn_rate: float = 0.0
    fp_rate: float = 0.0
    jitter: float = 0.0
    tp_confidence: tuple[float, float] = (0.9, 0.05)
    fp_confidence: tuple[float, float] = (0.6, 0.15)
    fp_classes: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if not 0.0 <= self.fn_rate <= 1.0 or self.fp_rate < 0.0:
            raise ValueError(f"bad rates in {self}")
        if self.jitter < 0.0:
            raise ValueError("jitter must be >= 0")


def _confidence(rng: np.random.Generator, mean: float, sd: float) -> float:
    return float(np.clip(rng.normal(mean, sd) if sd > 0 else mean, 0.0, 1.0))


def synthesize_detections(
    scenario: SyntheticScenario, plan: FramePlan
) -> tuple[dict[int, list[Detection]], list[Annotation]]:
    """Deterministic (seeded) fake per-frame detections plus the ground truth."""
    rng = np.random.default_rng(scenario.seed)
    gt_classes = sorted({a.class_id for a in scenario.annotations})
    fp_classes = scenario.fp_classes or tuple(gt_classes)
    sides = [
        s
        for a in scenario.annotations
        for s in (a.box.width, a.box.height)
    ]

    per_frame: dict[int, list[Detection]] = {}
    for frame in plan.frames():
        dets: list[Detection] = []
        visible = clip_annotations(
            scenario.annotations, frame.origin, frame.tile, min_visible_fraction=0.0
        )
        for ann in visible:
            if scenario.fn_rate > 0 and rng.random() < scenario.fn_rate:
                continue
            box = ann.box
            if scenario.jitter > 0:
                j = scenario.jitter
                coords = np.array(box.as_tuple()) + rng.uniform(-j, j, size=4)
                x_min, y_min = np.minimum(coords[:2], coords[2:])
                x_max, y_max = np.maximum(coords[:2], coords[2:])
                box = BoundingBox(
                    float(np.clip(x_min, 0, frame.tile)),
                    float(np.clip(y_min, 0, frame.tile)),
                    float(np.clip(x_max, 0, frame.tile)),
                    float(np.clip(y_max, 0, frame.tile)),
                )
                if area(box) == 0.0:
                    continue  # jittered out of the window entirely
            dets.append(
                Detection(box, ann.class_id, _confidence(rng, *scenario.tp_confidence))
            )
        if scenario.fp_rate > 0 and fp_classes and sides:
            for _ in range(int(rng.poisson(scenario.fp_rate))):
                w = float(rng.choice(sides))
                h = float(rng.choice(sides))
                w = min(w, frame.tile)
                h = min(h, frame.tile)
                x = float(rng.uniform(0, frame.tile - w))
                y = float(rng.uniform(0, frame.tile - h))
                dets.append(
                    Detection(
                        BoundingBox(x, y, x + w, y + h),
                        int(rng.choice(fp_classes)),
                        _confidence(rng, *scenario.fp_confidence),
                    )
                )
        if dets:
            per_frame[frame.index] = dets
    return per_frame, list(scenario.annotations)


class SyntheticBackend:
    """Precomputed synthetic detections behind the backend interface.

    Synthesis happens once at construction, in frame-index order, so
    concurrent detect calls cannot perturb the stream of randomness.
    """

    needs_pixels = False
    thread_safe = True

    def __init__(self, scenario: SyntheticScenario, plan: FramePlan):
        self._per_frame, self.ground_truth = synthesize_detections(scenario, plan)

    def detect(self, frame: Frame, pixels: np.ndarray | None = None) -> list[Detection]:
        return list(self._per_frame.get(frame.index, []))


class StubBackend:
    """Returns a fixed answer for every frame; handy in tests."""

    needs_pixels = False
    thread_safe = True

    def __init__(self, dets: Iterable[Detection] = ()):  # empty by default
        self._dets = list(dets)

    def detect(self, frame: Frame, pixels: np.ndarray | None = None) -> list[Detection]:
        return list(self._dets)
