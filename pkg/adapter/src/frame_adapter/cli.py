from __future__ import annotations

import argparse
import sys

from .runner import AdapterConfig, ManifestError, ModelLoadError, run_adapter


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frame-adapter",
        description="Run a TorchScript detector over a frame manifest and "
        "write per-frame detections",
    )
    parser.add_argument("--weights", required=True, help="TorchScript model file")
    parser.add_argument("--manifest", required=True, help="frame manifest (JSON Lines)")
    parser.add_argument("--image", required=True, help="source image (PNG/TIFF)")
    parser.add_argument("--output", required=True, help="per-frame detections file to write")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--batch-size", type=int, default=8, dest="batch_size")
    parser.add_argument("--image-id", dest="image_id")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = AdapterConfig(
        weights=args.weights,
        manifest=args.manifest,
        image=args.image,
        output=args.output,
        device=args.device,
        batch_size=args.batch_size,
        image_id=args.image_id,
    )
    try:
        n = run_adapter(cfg)
    except (ManifestError, ModelLoadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {n} detections -> {cfg.output}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
