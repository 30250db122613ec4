"""Writer for the FOT1 orbit feature-file format.

Bit-identical layout to the consumer pipeline's own writer: 32-byte
little-endian header (magic, version, reserved, five axis sizes, axis flags)
followed by the float32 payload in (rot, scale, channel, row, col) order with
col fastest.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FOT1"
VERSION = 1
HEADER = struct.Struct("<4sHH5II")

FLAG_ROTATION = 0x1
FLAG_SCALE = 0x2


def write_fot1(
    path, data: np.ndarray, rotation_generated: bool, scale_generated: bool
) -> None:
    data = np.ascontiguousarray(data, dtype=np.float32)
    if data.ndim != 5:
        raise ValueError(f"orbit tensor must have 5 axes, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError("refusing to write non-finite feature values")
    flags = (FLAG_ROTATION if rotation_generated else 0) | (FLAG_SCALE if scale_generated else 0)
    header = HEADER.pack(MAGIC, VERSION, 0, *data.shape, flags)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.astype("<f4").tobytes())


def read_fot1(path) -> tuple[np.ndarray, bool, bool]:
    """Minimal reader used for self-checks; the retrieval pipeline has its own."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"bad magic {raw[:4]!r}")
    _, version, _, n_rot, n_scale, c, h, w, flags = HEADER.unpack_from(raw)
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(n_rot, n_scale, c, h, w)
    return data, bool(flags & FLAG_ROTATION), bool(flags & FLAG_SCALE)
