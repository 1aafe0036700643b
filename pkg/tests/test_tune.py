from __future__ import annotations

import pytest

from tiledet.metrics import MatchConfig
from tiledet.tune import SweepSpec, evaluate_objective, sweep

from conftest import grid_annotations, make_detection


def perfect_detections(gts, confidence=0.9):
    return [
        make_detection(
            a.box.x_min, a.box.y_min, a.box.width, a.box.height,
            class_id=a.class_id, confidence=confidence,
        )
        for a in gts
    ]


class TestSweepSpec:
    def test_default_grid_includes_reported_optima(self):
        spec = SweepSpec()
        points = {(c, t) for c in spec.c_star_values() for t in spec.t_values()}
        assert {(0.75, 0.7), (0.8, 0.6), (0.8, 0.5)} <= points

    def test_grid_sizes(self):
        spec = SweepSpec()
        assert len(spec.c_star_values()) == 7
        assert len(spec.t_values()) == 10

    def test_bad_ranges_rejected(self):
        with pytest.raises(ValueError):
            SweepSpec(c_star_range=(0.9, 0.2))
        with pytest.raises(ValueError):
            SweepSpec(step=0.0)
        with pytest.raises(ValueError):
            SweepSpec(objective="accuracy")


class TestSweep:
    def test_perfect_detections_reach_objective_one(self):
        gts = grid_annotations()
        results = sweep(perfect_detections(gts), gts, SweepSpec(objective="f1"))
        assert results[0].objective == 1.0

    def test_single_grid_point(self):
        gts = grid_annotations()
        spec = SweepSpec(c_star_range=(0.5, 0.5), t_range=(0.7, 0.7), objective="f1")
        results = sweep(perfect_detections(gts), gts, spec)
        assert len(results) == 1
        assert (results[0].c_star, results[0].t) == (0.5, 0.7)

    def test_low_confidence_fps_push_threshold_up(self):
        gts = grid_annotations()
        dets = perfect_detections(gts, confidence=0.99)
        dets += [
            make_detection(1800, 20 + 90 * i, 60, 60, class_id=1, confidence=0.55)
            for i in range(4)
        ]
        results = sweep(dets, gts, SweepSpec(objective="f1"))
        best = results[0].objective
        assert best == 1.0
        optimal = [r for r in results if r.objective == best]
        assert optimal and all(r.c_star >= 0.6 for r in optimal)

    def test_results_sorted_best_first_with_tie_breaks(self):
        gts = grid_annotations()
        results = sweep(perfect_detections(gts), gts, SweepSpec(objective="f1"))
        values = [(r.objective, r.c_star, r.t) for r in results]
        assert values == sorted(values, key=lambda v: (-v[0], -v[1], -v[2]))

    def test_winner_reproducible_independently(self):
        from tiledet.nms import NmsConfig, custom_nms

        gts = grid_annotations()
        dets = perfect_detections(gts, confidence=0.7)
        dets += [make_detection(1800, 20, 60, 60, class_id=2, confidence=0.52)]
        spec = SweepSpec(objective="f1")
        best = sweep(dets, gts, spec)[0]
        after = custom_nms(dets, NmsConfig(best.t, best.c_star))
        assert evaluate_objective(after, gts, "f1", MatchConfig()) == best.objective

    def test_input_not_mutated(self):
        gts = grid_annotations()
        dets = perfect_detections(gts)
        snapshot = list(dets)
        sweep(dets, gts, SweepSpec(objective="precision"))
        assert dets == snapshot

    def test_empty_after_nms_scores_zero_not_error(self):
        gts = grid_annotations()
        dets = perfect_detections(gts, confidence=0.45)  # below every c_star
        results = sweep(dets, gts, SweepSpec(objective="f1"))
        assert all(r.objective == 0.0 for r in results)

    def test_map_objective(self):
        gts = grid_annotations()
        results = sweep(perfect_detections(gts), gts, SweepSpec(objective="map"))
        assert results[0].objective == 1.0

    def test_empty_inputs_rejected(self):
        gts = grid_annotations()
        with pytest.raises(ValueError):
            sweep([], gts, SweepSpec())
        with pytest.raises(ValueError):
            sweep(perfect_detections(gts), [], SweepSpec())
