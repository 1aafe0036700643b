"""End-to-end large-image inference: plan, detect per window, merge, suppress.

Per-frame detection is embarrassingly parallel; merging happens after a
full barrier and sorts into canonical order, so the result is identical
no matter how frames were scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .backends import DetectorBackend
from .errors import BackendError, SchemaViolationError, UnknownFrameIndexError
from .geometry import BoundingBox, area, to_global
from .image_store import ImageSource
from .jsonlio import (
    dumps_record,
    header_record,
    is_header,
    iter_jsonl,
    require_fields,
)
from .nms import Detection, NmsConfig, canonical_key, custom_nms
from .tiler import FramePlan, TilingConfig, plan_frames

DETECTIONS_KIND = "detections"

GLOBAL_DETECTION_FIELDS = {
    "image_id": "str",
    "class_id": "int",
    "x_min": "number",
    "y_min": "number",
    "x_max": "number",
    "y_max": "number",
    "confidence": "number",
}


@dataclass(frozen=True)
class MergedResult:
    """Global detections for one image, before and after suppression."""

    image_id: str
    detections_before_nms: tuple[Detection, ...]
    detections_after_nms: tuple[Detection, ...]
    nms_config: NmsConfig
    plan: FramePlan


def merge_windows(
    per_frame: Mapping[int, Sequence[Detection]], plan: FramePlan
) -> list[Detection]:
    """Translate frame-local detections to global coordinates and concatenate.

    Frames contribute in index order; unknown frame indices are an error.
    """
    merged: list[Detection] = []
    for frame_index in sorted(per_frame):
        if not 0 <= frame_index < plan.n_frames:
            raise UnknownFrameIndexError(frame_index)
        origin = plan.origin(frame_index)
        for det in per_frame[frame_index]:
            merged.append(
                Detection(to_global(det.box, origin), det.class_id, det.confidence)
            )
    return merged


def _clip_to_image(dets: Sequence[Detection], plan: FramePlan) -> list[Detection]:
    # only padded plans can produce out-of-bounds boxes; drop empty leftovers
    out = []
    for det in dets:
        b = det.box
        clipped = BoundingBox(
            min(max(b.x_min, 0.0), plan.width),
            min(max(b.y_min, 0.0), plan.height),
            min(max(b.x_max, 0.0), plan.width),
            min(max(b.y_max, 0.0), plan.height),
        )
        if area(clipped) == 0.0:
            continue
        out.append(Detection(clipped, det.class_id, det.confidence))
    return out


def run_backend(
    plan: FramePlan,
    backend: DetectorBackend,
    src: ImageSource | None = None,
    jobs: int = 1,
) -> dict[int, list[Detection]]:
    """Detect on every frame of the plan, optionally with a thread pool.

    A backend failure on any frame aborts the whole run (silent gaps would
    corrupt recall); the frame index travels with the error.
    """

    def detect_one(frame_index: int) -> list[Detection]:
        frame = plan.frame(frame_index)
        pixels = None
        if backend.needs_pixels:
            if src is None:
                raise ValueError("backend needs pixels but no image source given")
            pixels = (
                src.read_crop_padded(frame.origin, frame.tile)
                if frame.padded
                else src.read_crop(frame.origin, frame.tile)
            )
        try:
            return backend.detect(frame, pixels)
        except Exception as exc:
            raise BackendError(frame_index, exc) from exc

    indices = range(plan.n_frames)
    if jobs > 1 and backend.thread_safe:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(detect_one, indices))
    else:
        results = [detect_one(i) for i in indices]
    return {i: dets for i, dets in zip(indices, results) if dets}


def infer_large_image(
    src: ImageSource,
    backend: DetectorBackend,
    tiling: TilingConfig = TilingConfig(),
    nms: NmsConfig = NmsConfig(),
    jobs: int = 1,
) -> MergedResult:
    """plan -> per-frame detect -> merge to global -> custom NMS."""
    plan = plan_frames(src.width, src.height, tiling, image_id=src.image_id)
    per_frame = run_backend(plan, backend, src=src, jobs=jobs)
    before = sorted(_clip_to_image(merge_windows(per_frame, plan), plan), key=canonical_key)
    after = custom_nms(before, nms)
    return MergedResult(
        image_id=src.image_id,
        detections_before_nms=tuple(before),
        detections_after_nms=tuple(after),
        nms_config=nms,
        plan=plan,
    )


# ---------------------------------------------------------------------------
# global detections file

def write_detections(
    dets: Sequence[Detection],
    image_id: str,
    path: str | Path,
    manifest_sha256: str | None = None,
) -> int:
    """Write global detections (header + one record per detection)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_record(header_record(DETECTIONS_KIND, manifest_sha256)))
        fh.write("\n")
        for det in dets:
            fh.write(
                dumps_record(
                    {
                        "image_id": image_id,
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
    return len(dets)


def read_detections(path: str | Path) -> tuple[list[Detection], str | None, str | None]:
    """Read global detections; returns (detections, image_id, manifest hash)."""
    spath = str(path)
    dets: list[Detection] = []
    image_id: str | None = None
    manifest_sha256: str | None = None
    for line_no, obj in iter_jsonl(path):
        if line_no == 1 and is_header(obj):
            if obj.get("kind") != DETECTIONS_KIND:
                raise SchemaViolationError(spath, line_no, f"unexpected kind {obj.get('kind')!r}")
            manifest_sha256 = obj.get("manifest_sha256")
            continue
        require_fields(spath, line_no, obj, GLOBAL_DETECTION_FIELDS)
        if image_id is None:
            image_id = obj["image_id"]
        elif obj["image_id"] != image_id:
            raise SchemaViolationError(spath, line_no, "mixed image_ids in detections file")
        dets.append(
            Detection(
                BoundingBox(obj["x_min"], obj["y_min"], obj["x_max"], obj["y_max"]),
                obj["class_id"],
                obj["confidence"],
            )
        )
    return dets, image_id, manifest_sha256
