"""Feature extraction boundary: a seeded toy convolutional extractor for
self-contained runs, orbit tensor assembly, and the FOT1 feature-file format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import FeatureOrbitTensor
from .orbits import ImageRGB

FOT_MAGIC = b"FOT1"
FOT_VERSION = 1
FOT_HEADER = struct.Struct("<4sHH5II")  # magic, version, reserved, 5 axis sizes, flags

FLAG_ROTATION = 0x1
FLAG_SCALE = 0x2


class FeatureFileError(Exception):
    """Base class for malformed feature files."""


class BadMagicError(FeatureFileError):
    pass


class UnsupportedVersionError(FeatureFileError):
    pass


class TruncatedFileError(FeatureFileError):
    pass


class NonFiniteDataError(FeatureFileError):
    pass


@dataclass(frozen=True)
class FeatureMap:
    """Single-image feature map shaped (channels, height, width), float32."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"feature map must be (C, H, W), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("feature map contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ToyExtractorConfig:
    """Deterministic random-filter extractor standing in for a pretrained net.

    Same seed and config always produce bit-identical filters.
    """

    seed: int = 0
    n_stages: int = 3
    channels_out: int = 64
    kernel_size: int = 3
    out_spatial: int = 7

    def __post_init__(self):
        if min(self.n_stages, self.channels_out, self.kernel_size, self.out_spatial) < 1:
            raise ValueError("toy extractor config fields must be >= 1")

    @property
    def min_input_side(self) -> int:
        return self.out_spatial * (2**self.n_stages)


def _toy_filters(cfg: ToyExtractorConfig) -> list[np.ndarray]:
    # Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], no bias: bounded activations
    # and zero input -> zero output.
    rng = np.random.default_rng(cfg.seed)
    filters = []
    c_in = 3
    for _ in range(cfg.n_stages):
        fan_in = c_in * cfg.kernel_size * cfg.kernel_size
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(cfg.channels_out, c_in, cfg.kernel_size, cfg.kernel_size))
        filters.append(w.astype(np.float32))
        c_in = cfg.channels_out
    return filters


def _conv_same(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    out_c, in_c, k, _ = w.shape
    pad_lo, pad_hi = (k - 1) // 2, k // 2
    xp = np.pad(x, ((0, 0), (pad_lo, pad_hi), (pad_lo, pad_hi)))
    h, p_w = x.shape[1], x.shape[2]
    windows = sliding_window_view(xp, (k, k), axis=(1, 2))  # (C, H, W, k, k)
    cols = windows.transpose(1, 2, 0, 3, 4).reshape(h * p_w, in_c * k * k)
    out = cols @ w.reshape(out_c, -1).T
    return np.ascontiguousarray(out.T.reshape(out_c, h, p_w))


def _max_pool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    return x[:, : h2 * 2, : w2 * 2].reshape(c, h2, 2, w2, 2).max(axis=(2, 4))


def _adaptive_max_pool(x: np.ndarray, size: int) -> np.ndarray:
    c, h, w = x.shape
    out = np.empty((c, size, size), dtype=x.dtype)
    for i in range(size):
        y0, y1 = (i * h) // size, -((-(i + 1) * h) // size)
        for j in range(size):
            x0, x1 = (j * w) // size, -((-(j + 1) * w) // size)
            out[:, i, j] = x[:, y0:y1, x0:x1].max(axis=(1, 2))
    return out


def toy_extract(img: ImageRGB, cfg: ToyExtractorConfig) -> FeatureMap:
    """Seeded random convolution stages with rectification and 2x2 max-pooling,
    then adaptive max-pooling to a fixed spatial grid.
    """
    min_side = cfg.min_input_side
    if img.height < min_side or img.width < min_side:
        raise ValueError(
            f"image {img.height}x{img.width} too small for toy extractor: "
            f"minimum side is {min_side} ({cfg.out_spatial} x 2^{cfg.n_stages})"
        )
    x = (img.pixels.astype(np.float32) / 255.0).transpose(2, 0, 1)
    for w in _toy_filters(cfg):
        x = _conv_same(x, w)
        x = np.maximum(x, 0.0, out=x)
        x = _max_pool2(x)
    return FeatureMap(_adaptive_max_pool(x, cfg.out_spatial))


def assemble_orbit_tensor(
    maps: list[FeatureMap],
    n_rot: int,
    n_scale: int,
    rotation_generated: bool | None = None,
    scale_generated: bool | None = None,
) -> FeatureOrbitTensor:
    """Stack per-orbit-element feature maps into a rotation-major orbit tensor.

    maps[r * n_scale + s] becomes entry (r, s), matching generate_orbit_images.
    """
    if len(maps) != n_rot * n_scale:
        raise ValueError(f"expected {n_rot} x {n_scale} = {n_rot * n_scale} maps, got {len(maps)}")
    shapes = {m.data.shape for m in maps}
    if len(shapes) != 1:
        raise ValueError(f"feature maps disagree on shape: {sorted(shapes)}")
    data = np.stack([m.data for m in maps]).reshape((n_rot, n_scale) + maps[0].data.shape)
    return FeatureOrbitTensor(
        data,
        rotation_generated=(n_rot > 1) if rotation_generated is None else rotation_generated,
        scale_generated=(n_scale > 1) if scale_generated is None else scale_generated,
    )


def write_feature_file(t: FeatureOrbitTensor, path) -> None:
    """Write a FOT1 file: fixed little-endian header then float32 payload in
    (rot, scale, channel, row, col) order with col fastest.
    """
    flags = (FLAG_ROTATION if t.rotation_generated else 0) | (
        FLAG_SCALE if t.scale_generated else 0
    )
    header = FOT_HEADER.pack(
        FOT_MAGIC, FOT_VERSION, 0, t.n_rot, t.n_scale, t.channels, t.height, t.width, flags
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(t.data.astype("<f4").tobytes())


def read_feature_file(path) -> FeatureOrbitTensor:
    """Read a FOT1 file back into an orbit tensor, validating the layout."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) >= 4 and raw[:4] != FOT_MAGIC:
        raise BadMagicError(f"bad magic {raw[:4]!r}, expected {FOT_MAGIC!r}")
    if len(raw) < FOT_HEADER.size:
        raise TruncatedFileError(f"file has {len(raw)} bytes, header needs {FOT_HEADER.size}")
    _, version, _, n_rot, n_scale, channels, height, width, flags = FOT_HEADER.unpack_from(raw)
    if version != FOT_VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}, expected {FOT_VERSION}")
    shape = (n_rot, n_scale, channels, height, width)
    if min(shape) < 1:
        raise FeatureFileError(f"header declares empty axis: {shape}")
    n_elements = int(np.prod(shape, dtype=np.int64))
    expected = FOT_HEADER.size + 4 * n_elements
    if len(raw) < expected:
        raise TruncatedFileError(
            f"header declares {n_elements} elements ({expected} bytes), file has {len(raw)}"
        )
    if len(raw) > expected:
        raise FeatureFileError(f"{len(raw) - expected} trailing bytes after payload")
    data = np.frombuffer(raw, dtype="<f4", offset=FOT_HEADER.size).reshape(shape)
    if not np.all(np.isfinite(data)):
        raise NonFiniteDataError("payload contains non-finite values")
    return FeatureOrbitTensor(
        data,
        rotation_generated=bool(flags & FLAG_ROTATION),
        scale_generated=bool(flags & FLAG_SCALE),
    )
