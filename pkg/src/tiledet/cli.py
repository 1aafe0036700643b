"""Command-line entry point for the full workflow.

Subcommands: plan, extract, split, rebalance, detect, merge, nms, eval,
tune, overlay. Configuration precedence is flags > --config file >
built-in defaults. Artifacts that depend on a frame manifest embed its
SHA-256 and downstream stages refuse mismatched inputs.
"""

from __future__ import annotations

import argparse
import colorsys
import json
import sys
from pathlib import Path

from PIL import Image, ImageDraw

from . import dataset_prep, image_store, metrics, tune
from .backends import (
    OracleBackend,
    SyntheticBackend,
    SyntheticScenario,
    read_frame_detections,
    write_frame_detections,
)
from .errors import ManifestMismatchError, TiledetError
from .jsonlio import sha256_of_file
from .nms import NmsConfig, canonical_key, custom_nms
from .pipeline import merge_windows, read_detections, run_backend, write_detections
from .tiler import TilingConfig, plan_frames, read_manifest, write_manifest

DEFAULTS = {
    "tile": 1088,
    "overlap": 324,
    "gutter": 1088,
    "min_cell": 2160,
    "conf": 0.5,
    "iom": 0.5,
    "iou": 0.5,
    "ratio": 0.8,
    "seed": 0,
    "jobs": 1,
    "percentile": 35.0,
    "min_visible": 0.5,
    "fn_rate": 0.0,
    "fp_rate": 0.0,
    "jitter": 0.0,
    "c_star_min": 0.5,
    "c_star_max": 0.8,
    "t_min": 0.5,
    "t_max": 0.95,
    "step": 0.05,
    "map_stop": 0.95,
}


class Settings:
    """Resolve option values: explicit flag > config file > default."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        self._config = {}
        config_path = self._args.get("config")
        if config_path:
            self._config = json.loads(Path(config_path).read_text(encoding="utf-8"))

    def __getattr__(self, name: str):
        value = self._args.get(name)
        if value is not None:
            return value
        if name in self._config:
            return self._config[name]
        if name in DEFAULTS:
            return DEFAULTS[name]
        return None


def _require_inputs(*paths: str | None) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise FileNotFoundError(f"input not found: {p}")


def _image_dims(s: Settings) -> tuple[int, int, str]:
    if s.image:
        _require_inputs(s.image)
        with Image.open(s.image) as im:
            width, height = im.size
        image_id = s.image_id or Path(s.image).stem
        return width, height, image_id
    if s.width is None or s.height is None:
        raise ValueError("need --image or both --width and --height")
    return s.width, s.height, s.image_id or ""


def _check_hashes(expected: str | None, *found: str | None) -> None:
    for h in found:
        if expected is not None and h is not None and h != expected:
            raise ManifestMismatchError(
                f"artifact carries manifest hash {h[:12]}.., expected {expected[:12]}.."
            )


def _annotations_for(annotations, image_id: str | None):
    """Restrict a possibly multi-image annotation list to one image."""
    if not image_id:
        return annotations
    scoped = [a for a in annotations if a.image_id == image_id]
    if not scoped:
        raise ValueError(f"annotations contain no entries for image {image_id!r}")
    return scoped


# ---------------------------------------------------------------------------
# subcommands

def cmd_plan(s: Settings) -> str:
    width, height, image_id = _image_dims(s)
    plan = plan_frames(width, height, TilingConfig(s.tile, s.overlap), image_id=image_id)
    n = write_manifest(plan, s.out)
    return f"planned {n} frames ({plan.n_cols}x{plan.n_rows}) for {width}x{height} -> {s.out}"


def cmd_extract(s: Settings) -> str:
    _require_inputs(s.image, s.manifest)
    plan = read_manifest(s.manifest)
    src = image_store.open_image(s.image, image_id=plan.image_id)
    out_dir = Path(s.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for frame in plan.frames():
        crop = (
            src.read_crop_padded(frame.origin, frame.tile)
            if frame.padded
            else src.read_crop(frame.origin, frame.tile)
        )
        Image.fromarray(crop).save(out_dir / f"frame_{frame.index:05d}.png")
    return f"extracted {plan.n_frames} frames -> {out_dir}"


def cmd_split(s: Settings) -> str:
    _require_inputs(s.annotations)
    width, height, image_id = _image_dims(s)
    annotations = [
        a for a in dataset_prep.read_annotations(s.annotations) if a.image_id == image_id
    ] if image_id else dataset_prep.read_annotations(s.annotations)
    if not image_id and annotations:
        image_id = annotations[0].image_id
    grid = dataset_prep.build_grid(width, height, min_cell=s.min_cell, gutter=s.gutter)
    assignment = dataset_prep.assign_cells(grid, ratio=s.ratio, seed=s.seed)
    samples = dataset_prep.sample_frames(
        grid,
        assignment,
        annotations,
        counts={"train": s.train_count, "validation": s.val_count},
        tile=s.tile,
        seed=s.seed,
        image_id=image_id,
        min_visible_fraction=s.min_visible,
    )
    dataset_prep.write_samples(samples, s.out)
    if s.export_dir:
        if not s.image:
            raise ValueError("--export-dir requires --image")
        src = image_store.open_image(s.image, image_id=image_id)
        dataset_prep.export_split(samples, {image_id: src}, s.export_dir)
    n_train = sum(1 for x in samples if x.split == "train")
    return (
        f"grid {grid.n_cols}x{grid.n_rows} cells (side {grid.cell_side}); "
        f"sampled {n_train} train + {len(samples) - n_train} validation frames -> {s.out}"
    )


def cmd_rebalance(s: Settings) -> str:
    _require_inputs(s.samples)
    samples = dataset_prep.read_samples(s.samples)
    kept = dataset_prep.rebalance(samples, percentile=s.percentile)
    dataset_prep.write_samples(kept, s.out)
    if s.export_dir:
        if not s.image:
            raise ValueError("--export-dir requires --image (repeatable)")
        _require_inputs(*s.image)
        sources = {}
        for path in s.image:
            src = image_store.open_image(path)
            sources[src.image_id] = src
        dataset_prep.export_split(kept, sources, s.export_dir)
    return f"kept {len(kept)} of {len(samples)} frames -> {s.out}"


def cmd_detect(s: Settings) -> str:
    _require_inputs(s.manifest)
    plan = read_manifest(s.manifest)
    manifest_hash = sha256_of_file(s.manifest)
    if s.backend == "oracle":
        _require_inputs(s.detections)
        backend = OracleBackend.from_file(s.detections, plan, expected_sha256=manifest_hash)
    else:
        _require_inputs(s.annotations)
        annotations = _annotations_for(
            dataset_prep.read_annotations(s.annotations), plan.image_id
        )
        scenario = SyntheticScenario(
            seed=s.seed,
            annotations=tuple(annotations),
            fn_rate=s.fn_rate,
            fp_rate=s.fp_rate,
            jitter=s.jitter,
        )
        backend = SyntheticBackend(scenario, plan)
    per_frame = run_backend(plan, backend, jobs=s.jobs)
    n = write_frame_detections(per_frame, s.out, manifest_hash)
    return f"{s.backend} backend produced {n} detections over {plan.n_frames} frames -> {s.out}"


def cmd_merge(s: Settings) -> str:
    _require_inputs(s.manifest, s.detections)
    plan = read_manifest(s.manifest)
    manifest_hash = sha256_of_file(s.manifest)
    per_frame, file_hash = read_frame_detections(s.detections)
    _check_hashes(manifest_hash, file_hash)
    stray = [i for i in per_frame if not 0 <= i < plan.n_frames]
    if stray:
        raise ManifestMismatchError(f"detections reference unknown frames {sorted(stray)[:5]}")
    cfg = NmsConfig(iom_threshold=s.iom, confidence_threshold=s.conf)
    before = sorted(merge_windows(per_frame, plan), key=canonical_key)
    after = custom_nms(before, cfg)
    write_detections(before, plan.image_id, s.before_out, manifest_hash)
    write_detections(after, plan.image_id, s.after_out, manifest_hash)
    return (
        f"merged {len(before)} detections, {len(after)} kept after NMS "
        f"(conf>={cfg.confidence_threshold}, iom>={cfg.iom_threshold})"
    )


def cmd_nms(s: Settings) -> str:
    _require_inputs(s.detections)
    dets, image_id, file_hash = read_detections(s.detections)
    cfg = NmsConfig(iom_threshold=s.iom, confidence_threshold=s.conf)
    kept = custom_nms(dets, cfg)
    write_detections(kept, image_id or "", s.out, file_hash)
    return f"kept {len(kept)} of {len(dets)} detections -> {s.out}"


def cmd_eval(s: Settings) -> str:
    _require_inputs(s.before, s.after, s.annotations)
    before, image_before, hash_before = read_detections(s.before)
    after, image_after, hash_after = read_detections(s.after)
    _check_hashes(hash_before, hash_after)
    gts = _annotations_for(
        dataset_prep.read_annotations(s.annotations), image_before or image_after
    )
    report = metrics.build_report(
        before,
        after,
        gts,
        metrics.MatchConfig(s.iou),
        include_map=bool(s.map),
        map_taus=metrics.tau_range(stop=s.map_stop) if s.map else metrics.tau_range(),
    )
    if s.format == "json":
        print(json.dumps(report.to_json_dict(), indent=2))
    else:
        print(report.render_text())
    if s.out:
        Path(s.out).write_text(
            json.dumps(report.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )
    all_row = report.row(metrics.ALL_LABEL)
    return (
        f"evaluated {len(before)} before / {len(after)} after detections at "
        f"iou>={report.iou_threshold}: P {all_row.p_after:.4f}"
    )


def cmd_tune(s: Settings) -> str:
    _require_inputs(s.detections, s.annotations)
    dets, det_image_id, _ = read_detections(s.detections)
    gts = _annotations_for(dataset_prep.read_annotations(s.annotations), det_image_id)
    spec = tune.SweepSpec(
        c_star_range=(s.c_star_min, s.c_star_max),
        t_range=(s.t_min, s.t_max),
        step=s.step,
        objective=s.objective,
    )
    results = tune.sweep(dets, gts, spec, metrics.MatchConfig(s.iou))
    doc = [{"c_star": r.c_star, "t": r.t, "objective": r.objective} for r in results]
    Path(s.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    best = results[0]
    return (
        f"swept {len(results)} grid points; best {spec.objective}={best.objective:.4f} "
        f"at c_star={best.c_star}, t={best.t} -> {s.out}"
    )


def _class_color(class_id: int) -> tuple[int, int, int]:
    # golden-ratio hue stepping: stable, well-separated colors per class
    hue = (class_id * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.9, 0.95)
    return int(r * 255), int(g * 255), int(b * 255)


def cmd_overlay(s: Settings) -> str:
    _require_inputs(s.image, s.detections)
    dets, det_image_id, _ = read_detections(s.detections)
    image_id = s.image_id or Path(s.image).stem
    if det_image_id is not None and det_image_id != image_id:
        raise ValueError(
            f"detections are for image {det_image_id!r}, not {image_id!r}"
        )
    with Image.open(s.image) as im:
        canvas = im.convert("RGB")
        draw = ImageDraw.Draw(canvas)
        for det in dets:
            color = _class_color(det.class_id)
            b = det.box
            draw.rectangle((b.x_min, b.y_min, b.x_max, b.y_max), outline=color, width=3)
            draw.text(
                (b.x_min + 2, max(b.y_min - 12, 0)),
                f"{det.class_id} {det.confidence:.2f}",
                fill=color,
            )
        canvas.save(s.out)
    return f"drew {len(dets)} detections -> {s.out}"


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiledet",
        description="Sliding-window detection toolkit for ultra-high-resolution images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="write the sliding-window frame manifest")
    p.add_argument("--image")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--image-id")
    p.add_argument("--tile", type=int)
    p.add_argument("--overlap", type=int)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("extract", help="write each planned frame as a PNG crop")
    p.add_argument("--image", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("split", help="sample leakage-free train/validation frames")
    p.add_argument("--annotations", required=True)
    p.add_argument("--image")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--image-id")
    p.add_argument("--min-cell", type=int, dest="min_cell")
    p.add_argument("--gutter", type=int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--tile", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-visible", type=float, dest="min_visible",
                   help="fraction of a clipped box that must stay visible")
    p.add_argument("--train-count", type=int, required=True, dest="train_count")
    p.add_argument("--val-count", type=int, required=True, dest="val_count")
    p.add_argument("--out", required=True)
    p.add_argument("--export-dir", dest="export_dir")
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("rebalance", help="undersample overrepresented classes")
    p.add_argument("--samples", required=True)
    p.add_argument("--percentile", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--export-dir", dest="export_dir")
    p.add_argument("--image", action="append", help="image file(s) for --export-dir")
    _add_common(p)
    p.set_defaults(func=cmd_rebalance)

    p = sub.add_parser("detect", help="run a backend over the planned frames")
    p.add_argument("--backend", choices=("oracle", "synthetic"), required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", help="stored per-frame detections (oracle)")
    p.add_argument("--annotations", help="ground truth to synthesize from (synthetic)")
    p.add_argument("--seed", type=int)
    p.add_argument("--fn-rate", type=float, dest="fn_rate")
    p.add_argument("--fp-rate", type=float, dest="fp_rate")
    p.add_argument("--jitter", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("merge", help="translate per-frame detections and apply NMS")
    p.add_argument("--manifest", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--conf", type=float)
    p.add_argument("--iom", type=float)
    p.add_argument("--before-out", required=True, dest="before_out")
    p.add_argument("--after-out", required=True, dest="after_out")
    _add_common(p)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("nms", help="suppress duplicates in a global detections file")
    p.add_argument("--detections", required=True)
    p.add_argument("--conf", type=float)
    p.add_argument("--iom", type=float)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("eval", help="report P/R/F1 per class, before vs after NMS")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--iou", type=float)
    p.add_argument("--map", action="store_true")
    p.add_argument("--map-stop", type=float, dest="map_stop")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", help="write the JSON report here as well")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune", help="grid-search NMS hyperparameters")
    p.add_argument("--detections", required=True, help="global before-NMS detections")
    p.add_argument("--annotations", required=True)
    p.add_argument("--c-star-min", type=float, dest="c_star_min")
    p.add_argument("--c-star-max", type=float, dest="c_star_max")
    p.add_argument("--t-min", type=float, dest="t_min")
    p.add_argument("--t-max", type=float, dest="t_max")
    p.add_argument("--step", type=float)
    p.add_argument("--objective", choices=tune.OBJECTIVES, default="map")
    p.add_argument("--iou", type=float)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("overlay", help="draw detections onto the image")
    p.add_argument("--image", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--image-id")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_overlay)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        summary = args.func(Settings(args))
    except (TiledetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
