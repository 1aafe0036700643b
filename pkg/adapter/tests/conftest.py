from __future__ import annotations

import shutil
import subprocess

import numpy as np
import pytest
import torch
from PIL import Image

TILE = 64


class ToyDetector(torch.nn.Module):
    """Two fixed candidates per frame; confidence follows crop brightness."""

    def __init__(self, max_input_side: int = 1088):
        super().__init__()
        self.max_input_side = max_input_side

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        b = images.shape[0]
        brightness = images.mean(dim=[1, 2, 3])
        out = torch.zeros(b, 2, 6)
        out[:, 0, 0] = 4.0
        out[:, 0, 1] = 5.0
        out[:, 0, 2] = 40.0
        out[:, 0, 3] = 36.0
        out[:, 0, 4] = (0.5 + 0.4 * brightness).clamp(0.0, 1.0)
        out[:, 0, 5] = 47.0
        out[:, 1, 0] = 10.0
        out[:, 1, 1] = 12.0
        out[:, 1, 2] = 58.0
        out[:, 1, 3] = 60.0
        out[:, 1, 4] = 0.4
        out[:, 1, 5] = 138.0
        return out


@pytest.fixture(scope="session")
def primary_cli() -> str:
    path = shutil.which("tiledet")
    assert path, "the tiled-inference CLI must be installed for adapter tests"
    return path


@pytest.fixture(scope="session")
def workspace(tmp_path_factory, primary_cli):
    """Toy image, a 2-frame manifest produced by the primary CLI, toy weights."""
    root = tmp_path_factory.mktemp("adapter")
    rng = np.random.default_rng(123)
    pixels = rng.integers(0, 255, size=(TILE, 112, 3), dtype=np.uint8)
    Image.fromarray(pixels).save(root / "toy.png")

    result = subprocess.run(
        [primary_cli, "plan", "--width", "112", "--height", str(TILE),
         "--image-id", "toy", "--tile", str(TILE), "--overlap", "16",
         "--out", str(root / "plan.jsonl")],
        capture_output=True, text=True,
    )
    assert result.returncode == 0, result.stderr
    assert len((root / "plan.jsonl").read_text().splitlines()) == 2

    torch.jit.script(ToyDetector()).save(str(root / "toy_model.pt"))
    return root
