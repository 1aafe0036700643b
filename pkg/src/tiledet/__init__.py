"""Sliding-window object detection toolkit for ultra-high-resolution images."""

from .geometry import BoundingBox, FrameOrigin, area, iom, iou, to_global, to_local
from .nms import Detection, NmsConfig, custom_nms, filter_confidence, pairwise_iom
from .tiler import Frame, FramePlan, TilingConfig, frames_covering, plan_frames
from .dataset_prep import (
    Annotation,
    GridSpec,
    FrameSample,
    SplitAssignment,
    assign_cells,
    build_grid,
    class_histogram,
    clip_annotations,
    export_split,
    rebalance,
    sample_frames,
)
from .metrics import (
    EvalReport,
    MatchConfig,
    MatchResult,
    average_precision,
    build_report,
    match,
    mean_average_precision,
    precision_recall_f1,
)
from .pipeline import MergedResult, infer_large_image, merge_windows
from .tune import SweepSpec, sweep

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "BoundingBox",
    "Detection",
    "EvalReport",
    "Frame",
    "FrameOrigin",
    "FramePlan",
    "FrameSample",
    "GridSpec",
    "MatchConfig",
    "MatchResult",
    "MergedResult",
    "NmsConfig",
    "SplitAssignment",
    "SweepSpec",
    "TilingConfig",
    "area",
    "assign_cells",
    "average_precision",
    "build_grid",
    "build_report",
    "class_histogram",
    "clip_annotations",
    "custom_nms",
    "export_split",
    "filter_confidence",
    "frames_covering",
    "infer_large_image",
    "iom",
    "iou",
    "match",
    "mean_average_precision",
    "merge_windows",
    "pairwise_iom",
    "plan_frames",
    "precision_recall_f1",
    "rebalance",
    "sample_frames",
    "sweep",
    "to_global",
    "to_local",
]
