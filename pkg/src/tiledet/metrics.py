"""Matching-based detection evaluation.

Predictions claim ground truths greedily in confidence order, one-to-one,
same class only, at an IoU threshold. On top of the match sit Precision,
Recall, F1, 101-point interpolated average precision, and per-class
reports comparing a before-suppression run against an after-suppression
run with percent-variation columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset_prep import Annotation
from .errors import ClassAbsentError
from .geometry import iou
from .nms import Detection, canonical_key

RECALL_GRID = np.linspace(0.0, 1.0, 101)


def tau_range(start: float = 0.5, stop: float = 0.95, step: float = 0.05) -> tuple[float, ...]:
    """Inclusive IoU-threshold grid, e.g. 0.50, 0.55, ..., 0.95."""
    n = int(round((stop - start) / step)) + 1
    return tuple(round(start + k * step, 10) for k in range(n))


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ValueError(f"iou_threshold outside [0, 1]: {self.iou_threshold}")


@dataclass(frozen=True)
class MatchResult:
    """One-to-one matching outcome: pairs, false positives, false negatives."""

    pairs: tuple[tuple[Detection, Annotation], ...]
    unmatched_predictions: tuple[Detection, ...]
    unmatched_ground_truths: tuple[Annotation, ...]

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_predictions)

    @property
    def fn(self) -> int:
        return len(self.unmatched_ground_truths)


def _gt_key(a: Annotation) -> tuple:
    b = a.box
    return (b.x_min, b.y_min, b.x_max, b.y_max, a.class_id)


def _greedy_claims(
    ordered_preds: Sequence[Detection], gt_order: Sequence[Annotation], tau: float
) -> list[int]:
    """Per-prediction index of the claimed ground truth, or -1.

    Predictions must already be in processing order; each claims the
    still-unclaimed same-class ground truth of highest IoU >= tau.
    """
    claimed = [False] * len(gt_order)
    out: list[int] = []
    for pred in ordered_preds:
        best_i = -1
        best_iou = 0.0
        for i, gt in enumerate(gt_order):
            if claimed[i] or gt.class_id != pred.class_id:
                continue
            overlap = iou(pred.box, gt.box)
            if overlap >= tau and overlap > best_iou:
                best_iou = overlap
                best_i = i
        if best_i >= 0:
            claimed[best_i] = True
        out.append(best_i)
    return out


def _processing_order(preds: Sequence[Detection]) -> list[Detection]:
    return sorted(preds, key=lambda d: (-d.confidence,) + canonical_key(d))


def match(
    preds: Sequence[Detection], gts: Sequence[Annotation], cfg: MatchConfig = MatchConfig()
) -> MatchResult:
    """Greedy confidence-ordered one-to-one matching at IoU >= threshold.

    Each prediction, in descending confidence (ties broken by canonical box
    order), claims the still-unmatched same-class ground truth of highest
    IoU; sub-threshold or classless predictions become false positives.
    """
    order = _processing_order(preds)
    gt_order = sorted(gts, key=_gt_key)
    claims = _greedy_claims(order, gt_order, cfg.iou_threshold)
    pairs = tuple(
        (pred, gt_order[i]) for pred, i in zip(order, claims) if i >= 0
    )
    false_pos = tuple(pred for pred, i in zip(order, claims) if i < 0)
    matched_gts = {i for i in claims if i >= 0}
    false_neg = tuple(gt for i, gt in enumerate(gt_order) if i not in matched_gts)
    return MatchResult(pairs, false_pos, false_neg)


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both vanish."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall_f1(m: MatchResult) -> tuple[float, float | None, float | None]:
    """(P, R, F1); recall and F1 are None when there is no ground truth."""
    n_preds = m.tp + m.fp
    precision = m.tp / n_preds if n_preds else 0.0
    if m.tp + m.fn == 0:
        return precision, None, None
    recall = m.tp / (m.tp + m.fn)
    return precision, recall, f1_score(precision, recall)


def _tp_flags_for_class(
    preds: Sequence[Detection], gts: Sequence[Annotation], tau: float, class_id: int
) -> tuple[list[bool], int]:
    """Per-prediction TP flags in confidence order, restricted to one class."""
    ordered = _processing_order([d for d in preds if d.class_id == class_id])
    class_gts = sorted((g for g in gts if g.class_id == class_id), key=_gt_key)
    claims = _greedy_claims(ordered, class_gts, tau)
    return [i >= 0 for i in claims], len(class_gts)


def average_precision(
    preds: Sequence[Detection],
    gts: Sequence[Annotation],
    cfg: MatchConfig,
    class_id: int,
) -> float:
    """101-point interpolated area under the class's precision-recall curve."""
    if not any(g.class_id == class_id for g in gts):
        raise ClassAbsentError(f"class {class_id} absent from ground truth")
    flags, n_gt = _tp_flags_for_class(preds, gts, cfg.iou_threshold, class_id)
    if not flags:
        return 0.0
    tp_cum = np.cumsum(np.asarray(flags, dtype=np.float64))
    ranks = np.arange(1, len(flags) + 1, dtype=np.float64)
    precisions = tp_cum / ranks
    recalls = tp_cum / n_gt
    # interpolated precision at r = best precision at any recall >= r
    interp = np.maximum.accumulate(precisions[::-1])[::-1]
    indices = np.searchsorted(recalls, RECALL_GRID, side="left")
    valid = indices < len(flags)
    return float(np.where(valid, interp[np.minimum(indices, len(flags) - 1)], 0.0).mean())


def mean_average_precision(
    preds: Sequence[Detection],
    gts: Sequence[Annotation],
    taus: Sequence[float] = tau_range(),
) -> float:
    """Mean AP over ground-truth classes, averaged over the IoU grid."""
    classes = sorted({g.class_id for g in gts})
    if not classes:
        raise ClassAbsentError("no ground truth classes")
    total = 0.0
    for tau in taus:
        cfg = MatchConfig(tau)
        total += sum(average_precision(preds, gts, cfg, c) for c in classes) / len(classes)
    return total / len(taus)


# ---------------------------------------------------------------------------
# reports

OTHERS_LABEL = "others"
ALL_LABEL = "ALL"


@dataclass(frozen=True)
class ReportRow:
    """One class row (or the 'others'/'ALL' aggregate) of an EvalReport."""

    label: str
    n_before: int
    p_before: float
    r_before: float | None
    f1_before: float | None
    n_after: int
    p_after: float
    r_after: float | None
    f1_after: float | None
    delta_p: float | None
    delta_r: float | None
    delta_f1: float | None


@dataclass(frozen=True)
class EvalReport:
    """Per-class and aggregate evaluation of a before/after detection pair."""

    iou_threshold: float
    rows: tuple[ReportRow, ...]
    map_before: float | None = None
    map_after: float | None = None

    def row(self, label: str) -> ReportRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_json_dict(self) -> dict:
        doc: dict = {
            "iou_threshold": self.iou_threshold,
            "rows": [vars(r).copy() for r in self.rows],
        }
        if self.map_before is not None:
            doc["map_before"] = self.map_before
        if self.map_after is not None:
            doc["map_after"] = self.map_after
        return doc

    def render_text(self) -> str:
        headers = [
            "Cat.", "n", "P", "R", "F1", "n", "P", "R", "F1", "dP%", "dR%", "dF1%",
        ]
        table = [["", "Before", "", "", "", "After", "", "", "", "Delta", "", ""], headers]
        for r in self.rows:
            table.append(
                [
                    r.label,
                    str(r.n_before),
                    _fmt(r.p_before),
                    _fmt(r.r_before),
                    _fmt(r.f1_before),
                    str(r.n_after),
                    _fmt(r.p_after),
                    _fmt(r.r_after),
                    _fmt(r.f1_after),
                    _fmt_pct(r.delta_p),
                    _fmt_pct(r.delta_r),
                    _fmt_pct(r.delta_f1),
                ]
            )
        widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
        lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in table]
        if self.map_before is not None and self.map_after is not None:
            lines.append(f"mAP before {self.map_before:.4f}  after {self.map_after:.4f}")
        return "\n".join(lines)


def _fmt(v: float | None) -> str:
    return "--" if v is None else f"{v:.4f}"


def _fmt_pct(v: float | None) -> str:
    return "--" if v is None else f"{100.0 * v:.2f}%"


def percent_change(before: float | None, after: float | None) -> float | None:
    """Variation ascribable to suppression, relative to the after value."""
    if before is None or after is None or after == 0.0:
        return None
    return (after - before) / after


def _evaluate_subset(
    preds: Sequence[Detection], gts: Sequence[Annotation], cfg: MatchConfig
) -> tuple[int, float, float | None, float | None]:
    p, r, f1 = precision_recall_f1(match(preds, gts, cfg))
    return len(preds), p, r, f1


def build_report(
    before: Sequence[Detection],
    after: Sequence[Detection],
    gts: Sequence[Annotation],
    cfg: MatchConfig = MatchConfig(),
    include_map: bool = False,
    map_taus: Sequence[float] = tau_range(),
) -> EvalReport:
    """Per-class rows, an 'others' row, and an ALL row, with delta columns.

    Class rows cover the union of ground-truth classes; predictions whose
    class never occurs in the ground truth are pooled into 'others' (their
    precision is 0 by definition and recall/F1 are absent). Deltas compare
    after against before, relative to after.
    """
    gt_classes = sorted({g.class_id for g in gts})
    rows: list[ReportRow] = []

    def make_row(label: str, before_sub, after_sub, gts_sub) -> ReportRow:
        nb, pb, rb, fb = _evaluate_subset(before_sub, gts_sub, cfg)
        na, pa, ra, fa = _evaluate_subset(after_sub, gts_sub, cfg)
        return ReportRow(
            label=label,
            n_before=nb, p_before=pb, r_before=rb, f1_before=fb,
            n_after=na, p_after=pa, r_after=ra, f1_after=fa,
            delta_p=percent_change(pb, pa),
            delta_r=percent_change(rb, ra),
            delta_f1=percent_change(fb, fa),
        )

    for class_id in gt_classes:
        rows.append(
            make_row(
                str(class_id),
                [d for d in before if d.class_id == class_id],
                [d for d in after if d.class_id == class_id],
                [g for g in gts if g.class_id == class_id],
            )
        )

    others_before = [d for d in before if d.class_id not in gt_classes]
    others_after = [d for d in after if d.class_id not in gt_classes]
    if others_before or others_after:
        rows.append(make_row(OTHERS_LABEL, others_before, others_after, []))

    rows.append(make_row(ALL_LABEL, list(before), list(after), list(gts)))

    map_before = map_after = None
    if include_map and gt_classes:
        map_before = mean_average_precision(before, gts, map_taus)
        map_after = mean_average_precision(after, gts, map_taus)
    return EvalReport(
        iou_threshold=cfg.iou_threshold,
        rows=tuple(rows),
        map_before=map_before,
        map_after=map_after,
    )
