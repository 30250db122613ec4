"""Image-space orbit generation: rotations with padding and geometric center crops.

Rotation is applied to the original image first, then the crop/resize, so all
crops of one image see identically-padded corners and the scale axis stays
comparable across rotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

# ImageNet per-channel pixel means rounded to 8 bit; used to pad rotations.
DEFAULT_PAD_RGB = (124, 117, 104)

MIN_IMAGE_SIDE = 8


@dataclass(frozen=True)
class ImageRGB:
    """8-bit RGB image, pixels shaped (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels)
        if pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {pixels.dtype}")
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got {pixels.shape}")
        if pixels.shape[0] < MIN_IMAGE_SIDE or pixels.shape[1] < MIN_IMAGE_SIDE:
            raise ValueError(
                f"image must be at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}, "
                f"got {pixels.shape[0]}x{pixels.shape[1]}"
            )
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class OrbitSpec:
    """Sampling parameters for the rotation and scale orbits."""

    rotation_enabled: bool = True
    rotation_steps: int = 36
    rotation_step_degrees: float = 10.0
    scale_enabled: bool = True
    scale_steps: int = 10
    scale_min_fraction: float = 0.5
    pad_rgb: tuple[int, int, int] = DEFAULT_PAD_RGB
    target_size: tuple[int, int] = (224, 224)

    def __post_init__(self):
        if self.rotation_steps < 1 or self.scale_steps < 1:
            raise ValueError("rotation_steps and scale_steps must be >= 1")
        if self.rotation_enabled:
            if abs(self.rotation_steps * self.rotation_step_degrees - 360.0) > 1e-6:
                raise ValueError(
                    "rotation steps must tile the full circle: "
                    f"{self.rotation_steps} x {self.rotation_step_degrees} != 360"
                )
        if not (0.0 < self.scale_min_fraction <= 1.0):
            raise ValueError(f"scale_min_fraction must be in (0, 1], got {self.scale_min_fraction}")
        th, tw = self.target_size
        if th < MIN_IMAGE_SIDE or tw < MIN_IMAGE_SIDE:
            raise ValueError(f"target_size must be at least {MIN_IMAGE_SIDE} per side")
        if len(self.pad_rgb) != 3 or not all(0 <= v <= 255 for v in self.pad_rgb):
            raise ValueError(f"pad_rgb must be three 8-bit channel values, got {self.pad_rgb}")

    @property
    def n_rot(self) -> int:
        return self.rotation_steps if self.rotation_enabled else 1

    @property
    def n_scale(self) -> int:
        return self.scale_steps if self.scale_enabled else 1


def scale_fraction(k: int, spec: OrbitSpec) -> float:
    """Crop side fraction for scale index k: geometric from 1 down to min_fraction."""
    if not 0 <= k < spec.scale_steps:
        raise ValueError(f"scale index {k} out of range [0, {spec.scale_steps})")
    if spec.scale_steps == 1:
        return 1.0
    return spec.scale_min_fraction ** (k / (spec.scale_steps - 1))


def rotate_with_padding(
    img: ImageRGB, angle_degrees: float, pad_rgb: tuple[int, int, int]
) -> ImageRGB:
    """Rotate about the image center with bilinear interpolation.

    Output size equals input size; target pixels whose source coordinate falls
    outside the input are set to pad_rgb.  Angle 0 is a pixel-identical copy,
    and multiples of 90 degrees on square images (180 on any image) are exact
    index permutations with no interpolation.

    Any angle is decomposed into the largest exact quarter-turn permutation
    plus a residual bilinear rotation, so rotating an already quarter-turned
    image reproduces the directly rotated image bit for bit.
    """
    angle = float(angle_degrees) % 360.0
    pixels = img.pixels
    h, w = pixels.shape[:2]
    quarter = 90.0 if h == w else 180.0
    k = int(angle // quarter) * int(quarter // 90)
    angle -= k * 90.0
    if k:
        pixels = np.ascontiguousarray(np.rot90(pixels, k))
    if angle == 0.0:
        return ImageRGB(pixels.copy())

    # Inverse mapping: sample the source at R(angle) applied to centered target
    # offsets; at 90 degrees this reproduces np.rot90 exactly.
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
    return ImageRGB(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def resize_bilinear(pixels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers; identity when sizes match."""
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


def center_crop_geometric(img: ImageRGB, k: int, spec: OrbitSpec) -> ImageRGB:
    """Centered crop with side fraction s_k, resized to the extractor input size."""
    frac = scale_fraction(k, spec)
    h, w = img.height, img.width
    crop_h = max(1, int(round(frac * h)))
    crop_w = max(1, int(round(frac * w)))
    top = (h - crop_h) // 2
    left = (w - crop_w) // 2
    region = img.pixels[top : top + crop_h, left : left + crop_w]
    th, tw = spec.target_size
    return ImageRGB(resize_bilinear(region, th, tw))


def generate_orbit_images(img: ImageRGB, spec: OrbitSpec) -> list[ImageRGB]:
    """All n_rot x n_scale orbit images in rotation-major order.

    Each entry is the original rotated by r * step, then cropped at scale
    index s and resized to spec.target_size.  A disabled group contributes a
    single identity element.
    """
    out = []
    for r in range(spec.n_rot):
        angle = r * spec.rotation_step_degrees if spec.rotation_enabled else 0.0
        rotated = rotate_with_padding(img, angle, spec.pad_rgb)
        for s in range(spec.n_scale):
            out.append(center_crop_geometric(rotated, s if spec.scale_enabled else 0, spec))
    return out


def load_image(path) -> ImageRGB:
    """Read a PNG or JPEG file as RGB."""
    with Image.open(path) as im:
        return ImageRGB(np.asarray(im.convert("RGB"), dtype=np.uint8))


def save_image(img: ImageRGB, path) -> None:
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")
