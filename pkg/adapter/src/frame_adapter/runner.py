from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

MANIFEST_FIELDS = ("image_id", "frame_index", "x", "y", "tile", "padded")


class ModelLoadError(RuntimeError):
    """The weights file could not be loaded as a TorchScript module."""


class ManifestError(ValueError):
    """The manifest is malformed or inconsistent with the image/model."""


@dataclass(frozen=True)
class AdapterConfig:
    weights: str
    manifest: str
    image: str
    output: str
    device: str = "cpu"
    batch_size: int = 8
    image_id: str | None = None  # overrides the image-stem consistency check


@dataclass(frozen=True)
class _Frame:
    index: int
    x: int
    y: int
    tile: int
    padded: bool


def _read_manifest(path: Path) -> tuple[list[_Frame], str | None]:
    """Parse manifest records; returns (frames, image_id). Empty file is valid."""
    frames: list[_Frame] = []
    image_id: str | None = None
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict) or any(k not in obj for k in MANIFEST_FIELDS):
            raise ManifestError(f"{path}:{line_no}: not a frame manifest record")
        ints_ok = all(
            isinstance(obj[k], int) and not isinstance(obj[k], bool)
            for k in ("frame_index", "x", "y", "tile")
        )
        if not ints_ok or not isinstance(obj["padded"], bool):
            raise ManifestError(f"{path}:{line_no}: malformed frame manifest record")
        if image_id is None:
            image_id = obj["image_id"]
        elif obj["image_id"] != image_id:
            raise ManifestError(f"{path}:{line_no}: mixed image ids")
        frames.append(
            _Frame(obj["frame_index"], obj["x"], obj["y"], obj["tile"], obj["padded"])
        )
    return frames, image_id


def _load_model(cfg: AdapterConfig) -> torch.jit.ScriptModule:
    try:
        model = torch.jit.load(cfg.weights, map_location=cfg.device)
    except Exception as exc:
        raise ModelLoadError(f"cannot load weights {cfg.weights!r}: {exc}") from exc
    model.eval()
    return model


def _load_pixels(path: str) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "RGB":
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8)


def _crop(pixels: np.ndarray, frame: _Frame) -> np.ndarray:
    """Frame crop, zero-filled past the right/bottom image edges."""
    height, width = pixels.shape[:2]
    if frame.x >= width or frame.y >= height:
        raise ManifestError(f"frame {frame.index} origin outside the image")
    if not frame.padded and (frame.x + frame.tile > width or frame.y + frame.tile > height):
        raise ManifestError(f"unpadded frame {frame.index} exceeds the image bounds")
    out = np.zeros((frame.tile, frame.tile, 3), dtype=np.uint8)
    h = min(frame.tile, height - frame.y)
    w = min(frame.tile, width - frame.x)
    out[:h, :w] = pixels[frame.y : frame.y + h, frame.x : frame.x + w]
    return out


def _candidate_records(frame: _Frame, rows: torch.Tensor) -> list[dict]:
    records = []
    for row in rows.detach().cpu().numpy():
        if not np.isfinite(row).all():
            continue
        x_min, y_min, x_max, y_max = (float(np.clip(v, 0.0, frame.tile)) for v in row[:4])
        if x_max <= x_min or y_max <= y_min:
            continue  # degenerate candidate, useless downstream
        records.append(
            {
                "frame_index": frame.index,
                "class_id": int(row[5]),
                "x_min": x_min,
                "y_min": y_min,
                "x_max": x_max,
                "y_max": y_max,
                "confidence": float(np.clip(row[4], 0.0, 1.0)),
            }
        )
    return records


def run_adapter(cfg: AdapterConfig) -> int:
    """Write per-frame detections for every manifest frame; returns record count."""
    manifest_path = Path(cfg.manifest)
    manifest_sha256 = hashlib.sha256(manifest_path.read_bytes()).hexdigest()
    frames, manifest_image_id = _read_manifest(manifest_path)

    model = _load_model(cfg)
    expected_id = cfg.image_id if cfg.image_id is not None else Path(cfg.image).stem
    if frames and manifest_image_id != expected_id:
        raise ManifestError(
            f"manifest is for image {manifest_image_id!r}, not {expected_id!r}"
        )
    if frames:
        tiles = {f.tile for f in frames}
        if len(tiles) != 1:
            raise ManifestError(f"mixed tile sizes in manifest: {sorted(tiles)}")
        tile = tiles.pop()
        max_side = getattr(model, "max_input_side", None)
        if max_side is not None and tile > int(max_side):
            raise ManifestError(
                f"manifest tile {tile} exceeds the model's supported side {int(max_side)}"
            )

    n = 0
    with open(cfg.output, "w", encoding="utf-8") as fh:
        header = {"kind": "frame_detections", "manifest_sha256": manifest_sha256}
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        if not frames:
            return 0
        pixels = _load_pixels(cfg.image)
        for start in range(0, len(frames), cfg.batch_size):
            batch = frames[start : start + cfg.batch_size]
            stack = np.stack([_crop(pixels, f) for f in batch])
            tensor = (
                torch.from_numpy(stack).to(cfg.device).permute(0, 3, 1, 2).float() / 255.0
            )
            with torch.no_grad():
                output = model(tensor)
            if output.ndim != 3 or output.shape[-1] != 6:
                raise ModelLoadError(
                    f"model returned shape {tuple(output.shape)}, expected [B, N, 6]"
                )
            for frame, rows in zip(batch, output):
                for record in _candidate_records(frame, rows):
                    fh.write(json.dumps(record, separators=(",", ":")) + "\n")
                    n += 1
    return n
