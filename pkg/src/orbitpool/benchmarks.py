"""Seeded synthetic retrieval benchmarks.

Queries are exact quarter-turn rotations of the database images, so a
descriptor pooled over the rotation orbit should retrieve the original
perfectly while the raw flattened features should not.  Images are sums of
random low-frequency waves normalized to identical per-channel statistics,
which removes global color cues and keeps bilinear resampling artifacts small.
"""

from __future__ import annotations

import numpy as np

from .core import Descriptor, FeatureOrbitTensor
from .extractor import ToyExtractorConfig, assemble_orbit_tensor, toy_extract
from .orbits import ImageRGB, OrbitSpec, generate_orbit_images, rotate_with_padding
from .pooling import PoolingSequence, apply_sequence, sequence_orbit_subset
from .retrieval import (
    DatasetManifest,
    ManifestImage,
    Protocol,
    QueryTruth,
    Role,
    mean_average_precision,
    rank_all,
)

QUERY_ANGLES = (90.0, 180.0, 270.0)


def synthetic_image(rng: np.random.Generator, size: int = 64, n_waves: int = 6) -> ImageRGB:
    """Random mixture of low-frequency plane waves, per-channel normalized."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    channels = []
    for _ in range(3):
        acc = np.zeros((size, size))
        for _ in range(n_waves):
            theta = rng.uniform(0, 2 * np.pi)
            period = rng.uniform(size / 3, size)
            phase = rng.uniform(0, 2 * np.pi)
            acc += rng.uniform(0.5, 1.0) * np.sin(
                2 * np.pi * (np.cos(theta) * xx + np.sin(theta) * yy) / period + phase
            )
        acc = (acc - acc.mean()) / max(acc.std(), 1e-9)
        channels.append(128.0 + 40.0 * acc)
    stacked = np.stack(channels, axis=-1)
    return ImageRGB(np.clip(np.rint(stacked), 0, 255).astype(np.uint8))


def make_rotation_benchmark(
    n_base: int = 50, size: int = 64, seed: int = 0
) -> tuple[dict[str, ImageRGB], DatasetManifest]:
    """Database of synthetic originals; queries are their 90/180/270 rotations."""
    rng = np.random.default_rng(seed)
    pad = (124, 117, 104)
    images: dict[str, ImageRGB] = {}
    manifest_images = []
    truth = {}
    for i in range(n_base):
        base_id = f"base_{i:03d}"
        base = synthetic_image(rng, size=size)
        images[base_id] = base
        manifest_images.append(ManifestImage(base_id, f"{base_id}.png", Role.DATABASE))
        for angle in QUERY_ANGLES:
            qid = f"query_{i:03d}_r{int(angle)}"
            images[qid] = rotate_with_padding(base, angle, pad)
            manifest_images.append(ManifestImage(qid, f"{qid}.png", Role.QUERY))
            truth[qid] = QueryTruth(frozenset({base_id}))
    manifest = DatasetManifest(tuple(manifest_images), truth, Protocol.STANDARD)
    return images, manifest


def extract_orbit_tensor(
    img: ImageRGB, spec: OrbitSpec, cfg: ToyExtractorConfig
) -> FeatureOrbitTensor:
    maps = [toy_extract(o, cfg) for o in generate_orbit_images(img, spec)]
    return assemble_orbit_tensor(
        maps,
        spec.n_rot,
        spec.n_scale,
        rotation_generated=spec.rotation_enabled,
        scale_generated=spec.scale_enabled,
    )


def descriptors_for_sequence(
    tensors: dict[str, FeatureOrbitTensor], seq: PoolingSequence
) -> dict[str, Descriptor]:
    """Pool each image's orbit, restricted to the axes the sequence uses."""
    return {
        image_id: apply_sequence(sequence_orbit_subset(t, seq), seq)
        for image_id, t in tensors.items()
    }


def benchmark_map(
    tensors: dict[str, FeatureOrbitTensor],
    manifest: DatasetManifest,
    seq: PoolingSequence,
) -> float:
    descriptors = descriptors_for_sequence(tensors, seq)
    return mean_average_precision(rank_all(descriptors, manifest), manifest)
