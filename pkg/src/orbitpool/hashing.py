"""Descriptor binarization by thresholding at the database mean, plus the
BHI1 hash-index format and its threshold sidecar.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import BinaryHash, Descriptor, pack_bits

BHI_MAGIC = b"BHI1"
BHT_MAGIC = b"BHT1"
VERSION = 1

_INDEX_HEADER = struct.Struct("<4sHII")  # magic, version, n_bits, n_entries
_SIDECAR_HEADER = struct.Struct("<4sHII")  # magic, version, n_bits, source length


class HashFileError(Exception):
    """Malformed BHI1 index or threshold sidecar."""


@dataclass(frozen=True)
class ThresholdVector:
    """Per-dimension binarization thresholds fit on database descriptors."""

    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32).reshape(-1)
        if values.size < 1:
            raise ValueError("threshold vector must have at least one dimension")
        if not np.all(np.isfinite(values)):
            raise ValueError("threshold vector contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> int:
        return int(self.values.size)


def fit_thresholds(database_descriptors: list[Descriptor], source: str = "") -> ThresholdVector:
    """Per-dimension arithmetic mean over the database-side descriptors.

    Queries are excluded by the caller so the index stays query-independent.
    """
    if not database_descriptors:
        raise ValueError("cannot fit thresholds on an empty descriptor list")
    dims = {d.dims for d in database_descriptors}
    if len(dims) != 1:
        raise ValueError(f"descriptors disagree on dims: {sorted(dims)}")
    stacked = np.stack([d.values for d in database_descriptors]).astype(np.float64)
    return ThresholdVector(stacked.mean(axis=0).astype(np.float32), source=source)


def binarize(d: Descriptor, t: ThresholdVector) -> BinaryHash:
    """bit_i = 1 iff d_i > t_i (strict; ties map to 0)."""
    if d.dims != t.dims:
        raise ValueError(f"dimension mismatch: descriptor {d.dims} vs thresholds {t.dims}")
    return pack_bits(d.values > t.values)


def write_hash_index(entries: list[tuple[str, BinaryHash]], path) -> None:
    """Write a BHI1 index: header then (id length, UTF-8 id, hash bytes) per entry."""
    if not entries:
        raise ValueError("cannot write an empty hash index")
    n_bits = {h.n_bits for _, h in entries}
    if len(n_bits) != 1:
        raise ValueError(f"hashes disagree on bit length: {sorted(n_bits)}")
    ids = [i for i, _ in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids in hash index")
    with open(path, "wb") as fh:
        fh.write(_INDEX_HEADER.pack(BHI_MAGIC, VERSION, n_bits.pop(), len(entries)))
        for entry_id, h in entries:
            raw = entry_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(h.bits.tobytes())


def read_hash_index(path) -> list[tuple[str, BinaryHash]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) >= 4 and raw[:4] != BHI_MAGIC:
        raise HashFileError(f"bad magic {raw[:4]!r}, expected {BHI_MAGIC!r}")
    if len(raw) < _INDEX_HEADER.size:
        raise HashFileError(f"file has {len(raw)} bytes, header needs {_INDEX_HEADER.size}")
    _, version, n_bits, n_entries = _INDEX_HEADER.unpack_from(raw)
    if version != VERSION:
        raise HashFileError(f"unsupported version {version}")
    if n_bits < 1:
        raise HashFileError("header declares zero bits")
    n_bytes = (n_bits + 7) // 8
    entries = []
    offset = _INDEX_HEADER.size
    for _ in range(n_entries):
        if offset + 4 > len(raw):
            raise HashFileError("truncated entry header")
        (id_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        if offset + id_len + n_bytes > len(raw):
            raise HashFileError("truncated entry payload")
        entry_id = raw[offset : offset + id_len].decode("utf-8")
        offset += id_len
        bits = np.frombuffer(raw, dtype=np.uint8, count=n_bytes, offset=offset)
        offset += n_bytes
        entries.append((entry_id, BinaryHash(bits, n_bits)))
    if offset != len(raw):
        raise HashFileError(f"{len(raw) - offset} trailing bytes after last entry")
    return entries


def write_thresholds(t: ThresholdVector, path) -> None:
    """Threshold sidecar: BHT1 header, UTF-8 source id, float32 payload."""
    source = t.source.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_SIDECAR_HEADER.pack(BHT_MAGIC, VERSION, t.dims, len(source)))
        fh.write(source)
        fh.write(t.values.astype("<f4").tobytes())


def read_thresholds(path) -> ThresholdVector:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) >= 4 and raw[:4] != BHT_MAGIC:
        raise HashFileError(f"bad magic {raw[:4]!r}, expected {BHT_MAGIC!r}")
    if len(raw) < _SIDECAR_HEADER.size:
        raise HashFileError(f"file has {len(raw)} bytes, header needs {_SIDECAR_HEADER.size}")
    _, version, n_bits, source_len = _SIDECAR_HEADER.unpack_from(raw)
    if version != VERSION:
        raise HashFileError(f"unsupported version {version}")
    expected = _SIDECAR_HEADER.size + source_len + 4 * n_bits
    if len(raw) != expected:
        raise HashFileError(f"expected {expected} bytes, file has {len(raw)}")
    source = raw[_SIDECAR_HEADER.size : _SIDECAR_HEADER.size + source_len].decode("utf-8")
    values = np.frombuffer(raw, dtype="<f4", offset=_SIDECAR_HEADER.size + source_len)
    return ThresholdVector(values, source=source)
