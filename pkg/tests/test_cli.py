from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from tiledet.cli import _class_color, main
from tiledet.dataset_prep import write_annotations
from tiledet.jsonlio import sha256_of_file

from conftest import grid_annotations


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Toy image + ground truth + the full plan/detect/merge artifact chain."""
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(77)
    Image.fromarray(rng.integers(0, 255, size=(1500, 2000, 3), dtype=np.uint8)).save(
        root / "toy.png"
    )
    annotations = grid_annotations(image_id="toy")
    write_annotations(annotations, root / "gt.jsonl")

    assert main([
        "plan", "--image", str(root / "toy.png"), "--out", str(root / "plan.jsonl"),
    ]) == 0
    assert main([
        "detect", "--backend", "synthetic", "--manifest", str(root / "plan.jsonl"),
        "--annotations", str(root / "gt.jsonl"), "--seed", "3",
        "--out", str(root / "framedets.jsonl"),
    ]) == 0
    assert main([
        "merge", "--manifest", str(root / "plan.jsonl"),
        "--detections", str(root / "framedets.jsonl"),
        "--conf", "0.5", "--iom", "0.7",
        "--before-out", str(root / "before.jsonl"),
        "--after-out", str(root / "after.jsonl"),
    ]) == 0
    return root


class TestPlan:
    def test_exact_tile_image_single_line(self, tmp_path, rng):
        img = tmp_path / "sq.png"
        Image.fromarray(rng.integers(0, 255, size=(1088, 1088, 3), dtype=np.uint8)).save(img)
        out = tmp_path / "plan.jsonl"
        assert main(["plan", "--image", str(img), "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 1

    def test_line_count_matches_plan(self, tmp_path):
        from tiledet.tiler import plan_frames

        out = tmp_path / "plan.jsonl"
        code = main(
            ["plan", "--width", "5000", "--height", "4000", "--image-id", "x",
             "--out", str(out)]
        )
        assert code == 0
        assert len(out.read_text().splitlines()) == plan_frames(5000, 4000).n_frames

    def test_missing_input_nonzero_exit_stderr(self, tmp_path, capsys):
        code = main(["plan", "--image", str(tmp_path / "nope.png"), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "nope.png" in capsys.readouterr().err

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            assert main(["plan", "--width", "3000", "--height", "2000",
                         "--image-id", "p", "--out", str(out)]) == 0
        assert sha256_of_file(a) == sha256_of_file(b)


class TestDetectMerge:
    def test_merge_then_eval_noiseless_is_perfect(self, workspace, capsys):
        code = main([
            "eval", "--before", str(workspace / "before.jsonl"),
            "--after", str(workspace / "after.jsonl"),
            "--annotations", str(workspace / "gt.jsonl"), "--format", "json",
        ])
        assert code == 0
        doc = json.loads(capsys.readouterr().out.split("evaluated")[0])
        all_row = next(r for r in doc["rows"] if r["label"] == "ALL")
        assert all_row["p_after"] == 1.0
        assert all_row["r_after"] == 1.0
        assert all_row["f1_after"] == 1.0

    def test_eval_identical_files_zero_deltas(self, workspace, capsys):
        code = main([
            "eval", "--before", str(workspace / "after.jsonl"),
            "--after", str(workspace / "after.jsonl"),
            "--annotations", str(workspace / "gt.jsonl"), "--format", "json",
        ])
        assert code == 0
        doc = json.loads(capsys.readouterr().out.split("evaluated")[0])
        for row in doc["rows"]:
            for key in ("delta_p", "delta_r", "delta_f1"):
                assert row[key] in (0.0, None)

    def test_oracle_detect_round_trip(self, workspace, tmp_path):
        out = tmp_path / "replayed.jsonl"
        code = main([
            "detect", "--backend", "oracle", "--manifest", str(workspace / "plan.jsonl"),
            "--detections", str(workspace / "framedets.jsonl"), "--out", str(out),
        ])
        assert code == 0
        assert sha256_of_file(out) == sha256_of_file(workspace / "framedets.jsonl")

    def test_manifest_mismatch_refused(self, workspace, tmp_path, capsys):
        other = tmp_path / "other_plan.jsonl"
        assert main(["plan", "--width", "4000", "--height", "4000",
                     "--image-id", "toy", "--out", str(other)]) == 0
        code = main([
            "merge", "--manifest", str(other),
            "--detections", str(workspace / "framedets.jsonl"),
            "--before-out", str(tmp_path / "b.jsonl"),
            "--after-out", str(tmp_path / "a.jsonl"),
        ])
        assert code == 1
        assert "manifest" in capsys.readouterr().err.lower()

    def test_corrupted_line_named_in_error(self, workspace, tmp_path, capsys):
        corrupted = tmp_path / "bad.jsonl"
        lines = (workspace / "framedets.jsonl").read_text().splitlines()
        assert len(lines) >= 17
        lines[16] = '{"frame_index": 0, "class_id": 1}'
        corrupted.write_text("\n".join(lines) + "\n")
        code = main([
            "merge", "--manifest", str(workspace / "plan.jsonl"),
            "--detections", str(corrupted),
            "--before-out", str(tmp_path / "b.jsonl"),
            "--after-out", str(tmp_path / "a.jsonl"),
        ])
        assert code == 1
        assert ":17:" in capsys.readouterr().err

    def test_nms_rerun_byte_identical(self, workspace, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            assert main(["nms", "--detections", str(workspace / "before.jsonl"),
                         "--conf", "0.5", "--iom", "0.7", "--out", str(out)]) == 0
        assert sha256_of_file(a) == sha256_of_file(b)


class TestSplitRebalance:
    def annotations_file(self, tmp_path):
        annotations = [
            a
            for x in range(20, 960, 36)
            for y in range(20, 960, 36)
            for a in [grid_annotations(1, 1, x0=x, y0=y, w=16, h=16, image_id="big")[0]]
        ]
        path = tmp_path / "gt.jsonl"
        write_annotations(annotations, path)
        return path

    def test_split_and_rebalance(self, tmp_path, capsys):
        gt = self.annotations_file(tmp_path)
        samples = tmp_path / "samples.jsonl"
        code = main([
            "split", "--annotations", str(gt), "--width", "1000", "--height", "1000",
            "--image-id", "big", "--min-cell", "200", "--gutter", "64", "--tile", "64",
            "--seed", "5", "--train-count", "20", "--val-count", "5",
            "--out", str(samples),
        ])
        assert code == 0
        assert len(samples.read_text().splitlines()) == 25
        rebalanced = tmp_path / "rebalanced.jsonl"
        code = main([
            "rebalance", "--samples", str(samples), "--percentile", "35",
            "--out", str(rebalanced),
        ])
        assert code == 0
        assert rebalanced.exists()

    def test_split_with_export_dir(self, tmp_path, rng):
        gt = self.annotations_file(tmp_path)
        img = tmp_path / "big.png"
        Image.fromarray(rng.integers(0, 255, size=(1000, 1000, 3), dtype=np.uint8)).save(img)
        export = tmp_path / "dataset"
        code = main([
            "split", "--annotations", str(gt), "--image", str(img),
            "--min-cell", "200", "--gutter", "64", "--tile", "64",
            "--seed", "5", "--train-count", "8", "--val-count", "2",
            "--out", str(tmp_path / "samples.jsonl"), "--export-dir", str(export),
        ])
        assert code == 0
        images = list((export / "images").glob("*.png"))
        labels = list((export / "labels").glob("*.txt"))
        assert len(images) == 10 and len(labels) == 10
        assert len((export / "manifest.jsonl").read_text().splitlines()) == 10
        for label_file in labels:
            assert label_file.read_text().strip()  # every exported frame labeled

    def test_export_dir_without_image_rejected(self, tmp_path, capsys):
        gt = self.annotations_file(tmp_path)
        code = main([
            "split", "--annotations", str(gt), "--width", "1000", "--height", "1000",
            "--image-id", "big", "--min-cell", "200", "--gutter", "64", "--tile", "64",
            "--train-count", "2", "--val-count", "1",
            "--out", str(tmp_path / "s.jsonl"), "--export-dir", str(tmp_path / "d"),
        ])
        assert code == 1
        assert "--image" in capsys.readouterr().err

    def test_split_deterministic(self, tmp_path):
        gt = self.annotations_file(tmp_path)
        outs = []
        for name in ("s1.jsonl", "s2.jsonl"):
            out = tmp_path / name
            assert main([
                "split", "--annotations", str(gt), "--width", "1000", "--height", "1000",
                "--image-id", "big", "--min-cell", "200", "--gutter", "64", "--tile", "64",
                "--seed", "5", "--train-count", "10", "--val-count", "3",
                "--out", str(out),
            ]) == 0
            outs.append(sha256_of_file(out))
        assert outs[0] == outs[1]


class TestTune:
    def test_sweep_file(self, workspace, tmp_path):
        out = tmp_path / "sweep.json"
        code = main([
            "tune", "--detections", str(workspace / "before.jsonl"),
            "--annotations", str(workspace / "gt.jsonl"),
            "--objective", "f1", "--out", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert len(doc) == 70
        assert set(doc[0]) == {"c_star", "t", "objective"}
        assert doc[0]["objective"] == max(r["objective"] for r in doc)


class TestOverlay:
    def test_empty_detections_pixel_identical(self, tmp_path, rng):
        img = tmp_path / "toy.png"
        pixels = rng.integers(0, 255, size=(64, 64, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(img)
        empty = tmp_path / "dets.jsonl"
        empty.write_text('{"kind":"detections"}\n')
        out = tmp_path / "out.png"
        assert main(["overlay", "--image", str(img), "--detections", str(empty),
                     "--out", str(out)]) == 0
        np.testing.assert_array_equal(np.asarray(Image.open(out)), pixels)

    def test_single_detection_draws_class_color(self, workspace, tmp_path):
        dets = tmp_path / "one.jsonl"
        dets.write_text(
            '{"kind":"detections"}\n'
            '{"image_id":"toy","class_id":7,"x_min":100,"y_min":100,"x_max":200,'
            '"y_max":180,"confidence":0.9}\n'
        )
        out = tmp_path / "out.png"
        assert main(["overlay", "--image", str(workspace / "toy.png"),
                     "--detections", str(dets), "--out", str(out)]) == 0
        pixels = np.asarray(Image.open(out))
        color = np.array(_class_color(7))
        on_border = (pixels[100:103, 100:200] == color).all(axis=-1)
        assert on_border.any()

    def test_rerun_byte_identical(self, workspace, tmp_path):
        outs = []
        for name in ("o1.png", "o2.png"):
            out = tmp_path / name
            assert main(["overlay", "--image", str(workspace / "toy.png"),
                         "--detections", str(workspace / "after.jsonl"),
                         "--out", str(out)]) == 0
            outs.append(sha256_of_file(out))
        assert outs[0] == outs[1]

    def test_wrong_image_refused(self, workspace, tmp_path, capsys):
        dets = tmp_path / "foreign.jsonl"
        dets.write_text(
            '{"kind":"detections"}\n'
            '{"image_id":"somebody_else","class_id":1,"x_min":0,"y_min":0,"x_max":5,'
            '"y_max":5,"confidence":0.9}\n'
        )
        code = main(["overlay", "--image", str(workspace / "toy.png"),
                     "--detections", str(dets), "--out", str(tmp_path / "o.png")])
        assert code == 1


class TestConfigPrecedence:
    def test_flag_beats_config_beats_default(self, tmp_path):
        config = tmp_path / "conf.json"
        config.write_text(json.dumps({"tile": 512, "overlap": 128}))
        out = tmp_path / "plan.jsonl"
        # config applies
        assert main(["plan", "--width", "1024", "--height", "512", "--image-id", "x",
                     "--config", str(config), "--out", str(out)]) == 0
        first = json.loads(out.read_text().splitlines()[0])
        assert first["tile"] == 512
        # flag wins over config
        assert main(["plan", "--width", "1024", "--height", "512", "--image-id", "x",
                     "--config", str(config), "--tile", "256", "--overlap", "64",
                     "--out", str(out)]) == 0
        first = json.loads(out.read_text().splitlines()[0])
        assert first["tile"] == 256
        # defaults otherwise
        assert main(["plan", "--width", "1100", "--height", "1100", "--image-id", "x",
                     "--out", str(out)]) == 0
        first = json.loads(out.read_text().splitlines()[0])
        assert first["tile"] == 1088


class TestConsoleScript:
    def test_installed_entry_point(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "tiledet.cli", "plan", "--width", "2000",
             "--height", "2000", "--image-id", "x", "--out", str(tmp_path / "p.jsonl")],
            capture_output=True, text=True,
        )
        assert result.returncode == 0
        assert "planned" in result.stdout

    def test_error_goes_to_stderr(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "tiledet.cli", "plan", "--image",
             str(tmp_path / "ghost.png"), "--out", str(tmp_path / "p.jsonl")],
            capture_output=True, text=True,
        )
        assert result.returncode == 1
        assert "error:" in result.stderr