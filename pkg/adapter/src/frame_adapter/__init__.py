"""Bridge from a pretrained detector to the tiled-inference wire format.

Reads a frame manifest (JSON Lines: image_id, frame_index, x, y, tile,
padded), crops each frame from the source image, batches the crops
through a TorchScript detection model, and writes one record per raw
model candidate in frame-local coordinates. The output starts with a
header line carrying the SHA-256 of the manifest it was produced
against, so downstream merge stages can refuse mismatched inputs.

Suppression belongs downstream: candidates are written unthresholded and
un-deduplicated.

Model contract: a TorchScript module mapping a float32 RGB batch
[B, 3, tile, tile] scaled to [0, 1] onto a tensor [B, N, 6] whose rows
are (x_min, y_min, x_max, y_max, confidence, class_id). An optional
integer attribute ``max_input_side`` declares the largest supported
input side.
"""

from .runner import AdapterConfig, ManifestError, ModelLoadError, run_adapter

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "ManifestError", "ModelLoadError", "run_adapter"]
