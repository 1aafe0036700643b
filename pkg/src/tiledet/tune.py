"""Grid search over the suppression hyperparameters (c_star, t).

Suppression is a pure function of the merged detections, so the sweep
reuses one before-NMS set across all grid points and never re-runs the
detector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .dataset_prep import Annotation
from .metrics import MatchConfig, match, mean_average_precision, precision_recall_f1
from .nms import Detection, NmsConfig, custom_nms

OBJECTIVES = ("map", "map50", "f1", "precision", "recall")


@dataclass(frozen=True)
class SweepSpec:
    c_star_range: tuple[float, float] = (0.5, 0.8)
    t_range: tuple[float, float] = (0.5, 0.95)
    step: float = 0.05
    objective: str = "map"

    def __post_init__(self) -> None:
        for lo, hi in (self.c_star_range, self.t_range):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"range outside [0, 1]: {self}")
        if self.step <= 0.0:
            raise ValueError("step must be > 0")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")

    def c_star_values(self) -> tuple[float, ...]:
        return _grid(*self.c_star_range, self.step)

    def t_values(self) -> tuple[float, ...]:
        return _grid(*self.t_range, self.step)


def _grid(start: float, stop: float, step: float) -> tuple[float, ...]:
    n = int((stop - start) / step + 1e-9) + 1
    return tuple(round(start + k * step, 10) for k in range(n))


@dataclass(frozen=True)
class SweepResult:
    c_star: float
    t: float
    objective: float


def evaluate_objective(
    after: Sequence[Detection],
    gts: Sequence[Annotation],
    objective: str,
    match_cfg: MatchConfig = MatchConfig(),
) -> float:
    """Score one suppressed detection set; empty sets score 0, never error."""
    if not gts:
        raise ValueError("objective needs ground truth")
    if objective == "map":
        return mean_average_precision(after, gts)
    if objective == "map50":
        return mean_average_precision(after, gts, taus=(match_cfg.iou_threshold,))
    p, r, f1 = precision_recall_f1(match(after, gts, match_cfg))
    value = {"precision": p, "recall": r, "f1": f1}[objective]
    return value if value is not None else 0.0


def sweep(
    before_nms: Sequence[Detection],
    gts: Sequence[Annotation],
    spec: SweepSpec = SweepSpec(),
    match_cfg: MatchConfig = MatchConfig(),
) -> list[SweepResult]:
    """Score every (c_star, t) grid point; best first.

    Ties prefer the higher confidence threshold, then the higher IoM
    threshold (the most aggressive suppression achieving the score).
    """
    if not before_nms or not gts:
        raise ValueError("sweep needs detections and ground truth")
    results = [
        SweepResult(
            c_star,
            t,
            evaluate_objective(
                custom_nms(before_nms, NmsConfig(iom_threshold=t, confidence_threshold=c_star)),
                gts,
                spec.objective,
                match_cfg,
            ),
        )
        for c_star in spec.c_star_values()
        for t in spec.t_values()
    ]
    results.sort(key=lambda r: (-r.objective, -r.c_star, -r.t))
    return results
