"""Orbit image acquisition for the exporter.

Preferred source is the retrieval pipeline's own orbit dump
(`<image_id>_r<r>_s<s>.png` files from `orbitpool extract --debug-images`),
which guarantees pixel parity by construction.  When those files are absent
the orbit is regenerated here following the pipeline's documented geometry:

- rotation about the image center, bilinear, same-size output, samples
  falling outside the input set to the pad color; the angle is decomposed
  into an exact quarter-turn permutation plus a residual bilinear rotation;
- centered crops with side fraction min_fraction ** (k / (steps - 1));
- bilinear resize with half-pixel centers;
- rotation-major (rotation, scale) ordering, rotate first, then crop.

Regenerated orbits should be validated against at least one pipeline-written
sample with `check_parity` before a large export.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class OrbitParams:
    """Orbit sampling parameters; defaults match the retrieval pipeline."""

    rotation_steps: int = 36
    rotation_step_degrees: float = 10.0
    scale_steps: int = 10
    scale_min_fraction: float = 0.5
    pad_rgb: tuple[int, int, int] = (124, 117, 104)
    target_size: tuple[int, int] = (224, 224)

    @property
    def n_rot(self) -> int:
        return self.rotation_steps

    @property
    def n_scale(self) -> int:
        return self.scale_steps


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def rotate(pixels: np.ndarray, angle_degrees: float, pad_rgb) -> np.ndarray:
    angle = float(angle_degrees) % 360.0
    h, w = pixels.shape[:2]
    quarter = 90.0 if h == w else 180.0
    k = int(angle // quarter) * int(quarter // 90)
    angle -= k * 90.0
    if k:
        pixels = np.ascontiguousarray(np.rot90(pixels, k))
    if angle == 0.0:
        return pixels.copy()

    rad = math.radians(angle)
    cos_a, sin_a = math.cos(rad), math.sin(rad)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    u = np.arange(w, dtype=np.float64) - cx
    v = (np.arange(h, dtype=np.float64) - cy)[:, None]
    xs = cos_a * u - sin_a * v + cx
    ys = sin_a * u + cos_a * v + cy
    inside = (xs >= 0.0) & (xs <= w - 1) & (ys >= 0.0) & (ys <= h - 1)
    x0 = np.clip(np.floor(xs), 0, max(w - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(ys), 0, max(h - 2, 0)).astype(np.intp)
    fx = np.clip(xs - x0, 0.0, 1.0)[..., None]
    fy = np.clip(ys - y0, 0.0, 1.0)[..., None]
    src = pixels.astype(np.float64)
    top = (1.0 - fx) * src[y0, x0] + fx * src[y0, x0 + 1]
    bot = (1.0 - fx) * src[y0 + 1, x0] + fx * src[y0 + 1, x0 + 1]
    out = (1.0 - fy) * top + fy * bot
    out[~inside] = np.asarray(pad_rgb, dtype=np.float64)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def resize(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = pixels.shape[:2]
    if (h, w) == (out_h, out_w):
        return pixels.copy()
    xs = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1)
    ys = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1)
    x0 = np.clip(np.floor(xs), 0, max(w - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(ys), 0, max(h - 2, 0)).astype(np.intp)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]
    src = pixels.astype(np.float64)
    r0, r1 = src[y0], src[np.minimum(y0 + 1, h - 1)]
    top = (1.0 - fx) * r0[:, x0] + fx * r0[:, np.minimum(x0 + 1, w - 1)]
    bot = (1.0 - fx) * r1[:, x0] + fx * r1[:, np.minimum(x0 + 1, w - 1)]
    out = (1.0 - fy) * top + fy * bot
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def crop_fraction(k: int, params: OrbitParams) -> float:
    if params.scale_steps == 1:
        return 1.0
    return params.scale_min_fraction ** (k / (params.scale_steps - 1))


def regenerate_orbit(pixels: np.ndarray, params: OrbitParams) -> list[np.ndarray]:
    """All rotation-major orbit images for one input."""
    out = []
    th, tw = params.target_size
    for r in range(params.n_rot):
        rotated = rotate(pixels, r * params.rotation_step_degrees, params.pad_rgb)
        h, w = rotated.shape[:2]
        for s in range(params.n_scale):
            frac = crop_fraction(s, params)
            ch, cw = max(1, round(frac * h)), max(1, round(frac * w))
            top, left = (h - ch) // 2, (w - cw) // 2
            out.append(resize(rotated[top : top + ch, left : left + cw], th, tw))
    return out


def orbit_image_paths(orbit_dir: Path, image_id: str, params: OrbitParams) -> list[Path]:
    return [
        orbit_dir / f"{image_id}_r{r}_s{s}.png"
        for r in range(params.n_rot)
        for s in range(params.n_scale)
    ]


def load_orbit(orbit_dir: Path, image_id: str, params: OrbitParams) -> list[np.ndarray] | None:
    """Read a pipeline-written orbit; None when any element is missing."""
    paths = orbit_image_paths(orbit_dir, image_id, params)
    if not all(p.exists() for p in paths):
        return None
    return [load_rgb(p) for p in paths]


def check_parity(
    regenerated: list[np.ndarray], reference: list[np.ndarray], max_levels: int = 1
) -> int:
    """Largest per-pixel deviation between a regenerated orbit and a
    pipeline-written one; raises when it exceeds max_levels."""
    if len(regenerated) != len(reference):
        raise ValueError(f"orbit sizes differ: {len(regenerated)} vs {len(reference)}")
    worst = 0
    for a, b in zip(regenerated, reference):
        if a.shape != b.shape:
            raise ValueError(f"orbit element shapes differ: {a.shape} vs {b.shape}")
        worst = max(worst, int(np.abs(a.astype(int) - b.astype(int)).max()))
    if worst > max_levels:
        raise ValueError(
            f"orbit regeneration out of parity: max deviation {worst} levels "
            f"(allowed {max_levels}); regenerate with the pipeline's --debug-images instead"
        )
    return worst
