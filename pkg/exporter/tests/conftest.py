import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def smooth_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    theta = rng.uniform(0, 2 * np.pi)
    period = rng.uniform(size / 3, size)
    wave = np.sin(2 * np.pi * (np.cos(theta) * xx + np.sin(theta) * yy) / period)
    stacked = np.stack([128 + 60 * wave, 128 - 40 * wave, 128 + 20 * wave], axis=-1)
    return np.clip(np.rint(stacked), 0, 255).astype(np.uint8)


@pytest.fixture
def tiny_dataset(tmp_path) -> tuple[Path, Path]:
    """Two-image manifest with PNGs on disk; returns (manifest_path, images_dir)."""
    rng = np.random.default_rng(77)
    images_dir = tmp_path / "images"
    images_dir.mkdir()
    entries = []
    for i in range(2):
        name = f"img{i}"
        Image.fromarray(smooth_image(rng)).save(images_dir / f"{name}.png")
        entries.append({"id": name, "path": f"{name}.png", "role": "database"})
    manifest = {"protocol": "standard", "images": entries, "ground_truth": {}}
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(json.dumps(manifest))
    return manifest_path, images_dir


class StubTrunk:
    """Tiny deterministic stand-in for the conv trunk: seeded 1x1 conv then
    adaptive max-pool, shaped like (C, 7, 7)."""

    def __init__(self, channels: int = 6, seed: int = 0):
        import torch

        rng = np.random.default_rng(seed)
        weight = rng.normal(size=(channels, 3, 1, 1)).astype(np.float32)
        self.conv = torch.nn.Conv2d(3, channels, kernel_size=1, bias=False)
        with torch.no_grad():
            self.conv.weight.copy_(torch.from_numpy(weight))
        self.pool = torch.nn.AdaptiveMaxPool2d(7)
        self.channels = channels

    def __call__(self, x):
        return self.pool(self.conv(x))
