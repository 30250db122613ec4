"""Shared numeric containers, normalization and distance primitives.

All containers are immutable after construction; every operation here is a
pure function, so unrestricted parallel use is safe.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

# Canonical axis names for the three orbit directions of a FeatureOrbitTensor.
# The translation axis is the flattened spatial grid (rows and columns jointly).
AXIS_ROT = "rot"
AXIS_SCALE = "scale"
AXIS_TRANS = "trans"

# Tolerance on the unit norm of a descriptor flagged as normalized.
NORM_TOL = 1e-4


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureOrbitTensor:
    """Stack of feature maps indexed by (rotation, scale, channel, row, col).

    ``rotation_generated`` / ``scale_generated`` record whether the axis was
    actually sampled by orbit generation (a disabled axis has size 1).
    ``consumed_axes`` tracks which orbit axes have already been pooled away.
    """

    data: np.ndarray
    rotation_generated: bool = False
    scale_generated: bool = False
    consumed_axes: frozenset[str] = frozenset()

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 5:
            raise ValueError(f"orbit tensor must have 5 axes, got {data.ndim}")
        if min(data.shape) < 1:
            raise ValueError(f"all axes must be nonempty, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("orbit tensor contains non-finite values")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "consumed_axes", frozenset(self.consumed_axes))

    @property
    def n_rot(self) -> int:
        return self.data.shape[0]

    @property
    def n_scale(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[3]

    @property
    def width(self) -> int:
        return self.data.shape[4]


@dataclass(frozen=True)
class Descriptor:
    """Flat real-valued global descriptor with provenance metadata."""

    values: np.ndarray
    sequence_tag: str = ""
    normalized: bool = False

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32).reshape(-1)
        if values.size < 1:
            raise ValueError("descriptor must have at least one dimension")
        if self.normalized:
            norm = float(np.linalg.norm(values.astype(np.float64)))
            if abs(norm - 1.0) > NORM_TOL:
                raise ValueError(f"descriptor flagged normalized but has norm {norm!r}")
        object.__setattr__(self, "values", _freeze(values))

    @property
    def dims(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class BinaryHash:
    """Bit-packed binarized descriptor.

    Bit i lives in byte i // 8 at bit position i % 8 (little-endian bit order
    within bytes); pad bits in the last byte are zero.
    """

    bits: np.ndarray
    n_bits: int

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8).reshape(-1)
        if self.n_bits < 1:
            raise ValueError("hash must have at least one bit")
        if bits.size != (self.n_bits + 7) // 8:
            raise ValueError(
                f"{self.n_bits} bits require {(self.n_bits + 7) // 8} bytes, got {bits.size}"
            )
        tail = self.n_bits % 8
        if tail and (int(bits[-1]) >> tail):
            raise ValueError("pad bits in the last byte must be zero")
        object.__setattr__(self, "bits", _freeze(bits))

    def unpack(self) -> np.ndarray:
        """Expand to a boolean vector of length n_bits."""
        return np.unpackbits(self.bits, bitorder="little")[: self.n_bits].astype(bool)


def pack_bits(flags: np.ndarray) -> BinaryHash:
    """Pack a boolean vector into a BinaryHash (little-endian bit order)."""
    flags = np.asarray(flags, dtype=bool).reshape(-1)
    if flags.size < 1:
        raise ValueError("cannot pack an empty bit vector")
    packed = np.packbits(flags.astype(np.uint8), bitorder="little")
    return BinaryHash(packed, flags.size)


def l2_normalize(d: Descriptor) -> Descriptor:
    """Scale a descriptor to unit Euclidean norm, preserving direction.

    The zero vector is returned unchanged with ``normalized=False``: all-zero
    descriptors can legitimately arise from dead feature channels and must not
    abort batch evaluation.
    """
    norm = float(np.linalg.norm(d.values.astype(np.float64)))
    if norm == 0.0:
        return dataclasses.replace(d, normalized=False)
    values = (d.values.astype(np.float64) / norm).astype(np.float32)
    return Descriptor(values, sequence_tag=d.sequence_tag, normalized=True)


def euclidean_distance(a: Descriptor, b: Descriptor) -> float:
    """L2 distance between two descriptors of equal dimensionality."""
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")
    diff = a.values.astype(np.float64) - b.values.astype(np.float64)
    return float(np.linalg.norm(diff))


def _as_words(h: BinaryHash) -> np.ndarray:
    buf = h.bits
    pad = (-buf.size) % 8
    if pad:
        buf = np.concatenate([buf, np.zeros(pad, dtype=np.uint8)])
    return buf.view("<u8")


def hamming_distance(a: BinaryHash, b: BinaryHash) -> int:
    """Number of differing bits, computed by popcount over packed 64-bit words."""
    if a.n_bits != b.n_bits:
        raise ValueError(f"bit length mismatch: {a.n_bits} vs {b.n_bits}")
    return int(np.bitwise_count(_as_words(a) ^ _as_words(b)).sum())
