"""Export pool-layer feature orbits from a pretrained network to FOT1 files.

One file per manifest image with axes (n_rot, n_scale, 512, 7, 7); orbit
images are taken from the retrieval pipeline's dump when available and
regenerated (with a parity check) otherwise.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fot import write_fot1
from .orbits import OrbitParams, check_parity, load_orbit, load_rgb, regenerate_orbit

# Canonical preprocessing for the torchvision VGG16 weights; recorded in the
# run metadata for provenance.
CHANNEL_MEAN = (0.485, 0.456, 0.406)
CHANNEL_STD = (0.229, 0.224, 0.225)

POOL_SHAPE = (512, 7, 7)


class ExportError(Exception):
    pass


@dataclass(frozen=True)
class ExportJob:
    manifest_path: Path
    out_dir: Path
    orbit: OrbitParams = OrbitParams()
    model_id: str = "vgg16"
    batch_size: int = 32
    images_root: Path | None = None
    orbit_images_dir: Path | None = None
    weights_path: Path | None = None
    weights_sha256: str | None = None
    force: bool = False


def load_manifest_images(path: Path) -> list[tuple[str, str]]:
    """(id, path) pairs from a manifest JSON; schema owned by the consumer."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [(img["id"], img["path"]) for img in doc["images"]]


def _file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_model(job: ExportJob):
    """Convolutional trunk of the 16-layer VGG network up to its final
    max-pool: (3, 224, 224) input -> (512, 7, 7) output."""
    import torch
    import torchvision

    if job.model_id != "vgg16":
        raise ExportError(f"unsupported model {job.model_id!r}; only vgg16 is wired up")
    model = torchvision.models.vgg16(weights=None)
    if job.weights_path is not None:
        if job.weights_sha256 is not None:
            got = _file_sha256(job.weights_path)
            if got != job.weights_sha256.lower():
                raise ExportError(
                    f"weight checksum mismatch for {job.weights_path}: "
                    f"expected {job.weights_sha256}, got {got}"
                )
        state = torch.load(job.weights_path, map_location="cpu", weights_only=True)
        try:
            model.load_state_dict(state)
        except RuntimeError as exc:
            raise ExportError(f"weights do not fit vgg16: {exc}") from exc
    else:
        try:
            weights = torchvision.models.VGG16_Weights.IMAGENET1K_V1
            model = torchvision.models.vgg16(weights=weights)
        except Exception as exc:
            raise ExportError(
                "no --weights given and the pretrained download failed; "
                f"provide a local vgg16 state dict ({exc})"
            ) from exc
    trunk = model.features.eval()
    for p in trunk.parameters():
        p.requires_grad_(False)
    return trunk


def preprocess(batch_uint8: np.ndarray):
    """uint8 NHWC -> normalized float32 NCHW tensor."""
    import torch

    x = torch.from_numpy(batch_uint8.astype(np.float32) / 255.0).permute(0, 3, 1, 2)
    mean = torch.tensor(CHANNEL_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(CHANNEL_STD).view(1, 3, 1, 1)
    return (x - mean) / std


def extract_orbit_features(
    model, orbit_images: list[np.ndarray], batch_size: int, expected_shape=POOL_SHAPE
) -> np.ndarray:
    import torch

    maps = []
    with torch.no_grad():
        for lo in range(0, len(orbit_images), batch_size):
            batch = np.stack(orbit_images[lo : lo + batch_size])
            out = model(preprocess(batch))
            got = tuple(out.shape[1:])
            if expected_shape is not None and got != tuple(expected_shape):
                raise ExportError(
                    f"feature shape mismatch: model produced {got}, expected "
                    f"{tuple(expected_shape)}; check the input resolution and weights"
                )
            maps.append(out.cpu().numpy().astype(np.float32))
    return np.concatenate(maps, axis=0)


def gather_orbit(job: ExportJob, image_id: str, image_path: str) -> list[np.ndarray]:
    if job.orbit_images_dir is not None:
        orbit = load_orbit(job.orbit_images_dir, image_id, job.orbit)
        if orbit is not None:
            return orbit
    root = job.images_root if job.images_root is not None else job.manifest_path.parent
    pixels = load_rgb(root / image_path)
    orbit = regenerate_orbit(pixels, job.orbit)
    if job.orbit_images_dir is not None:
        reference = load_orbit(job.orbit_images_dir, image_id, job.orbit)
        if reference is not None:
            check_parity(orbit, reference)
    return orbit


def run_export(job: ExportJob, model=None, expected_shape=POOL_SHAPE) -> int:
    """Export every manifest image; returns the number of files written."""
    images = load_manifest_images(job.manifest_path)
    if model is None:
        model = build_model(job)
    job.out_dir.mkdir(parents=True, exist_ok=True)

    meta = {
        "model": job.model_id,
        "channel_mean": list(CHANNEL_MEAN),
        "channel_std": list(CHANNEL_STD),
        "input_size": list(job.orbit.target_size),
        "orbit": dataclasses.asdict(job.orbit),
        "weights": str(job.weights_path) if job.weights_path else "torchvision_imagenet1k_v1",
    }
    (job.out_dir / "export_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    written = 0
    n_rot, n_scale = job.orbit.n_rot, job.orbit.n_scale
    for image_id, image_path in images:
        out_path = job.out_dir / f"{image_id}.fot1"
        if out_path.exists() and not job.force:
            print(json.dumps({"image": image_id, "status": "skipped"}), flush=True)
            continue
        orbit = gather_orbit(job, image_id, image_path)
        if len(orbit) != n_rot * n_scale:
            raise ExportError(
                f"orbit of {image_id!r} has {len(orbit)} elements, expected {n_rot * n_scale}"
            )
        features = extract_orbit_features(model, orbit, job.batch_size, expected_shape)
        tensor = features.reshape((n_rot, n_scale) + features.shape[1:])
        tmp = out_path.with_name(out_path.name + ".tmp")
        write_fot1(tmp, tensor, rotation_generated=n_rot > 1, scale_generated=n_scale > 1)
        tmp.replace(out_path)
        written += 1
        print(json.dumps({"image": image_id, "status": "ok", "out": str(out_path)}), flush=True)
    return written


def load_orbit_params(text: str) -> OrbitParams:
    if text == "default":
        return OrbitParams()
    doc = json.loads(Path(text).read_text(encoding="utf-8"))
    for key in ("pad_rgb", "target_size"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return OrbitParams(**doc)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="export_features",
        description="Export pretrained pool-layer orbit features to FOT1 files",
    )
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--orbit", default="default", help="'default' or a JSON file")
    parser.add_argument("--out", required=True)
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--images", default=None, help="root for manifest image paths")
    parser.add_argument("--orbit-images", default=None,
                        help="directory of pipeline-written orbit PNGs")
    parser.add_argument("--weights", default=None, help="local vgg16 state dict")
    parser.add_argument("--weights-sha256", default=None)
    parser.add_argument("--force", action="store_true")
    args = parser.parse_args(argv)

    try:
        job = ExportJob(
            manifest_path=Path(args.manifest),
            out_dir=Path(args.out),
            orbit=load_orbit_params(args.orbit),
            batch_size=args.batch,
            images_root=Path(args.images) if args.images else None,
            orbit_images_dir=Path(args.orbit_images) if args.orbit_images else None,
            weights_path=Path(args.weights) if args.weights else None,
            weights_sha256=args.weights_sha256,
            force=args.force,
        )
        written = run_export(job)
    except (ExportError, OSError, ValueError, KeyError) as exc:
        print(json.dumps({"status": "error", "error": str(exc)}), file=sys.stderr, flush=True)
        return 1
    print(json.dumps({"status": "done", "written": written}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
