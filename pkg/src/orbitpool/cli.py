"""Batch pipeline front-end: extract -> pool -> hash -> eval, plus pairwise
distance reports.

Stages exchange files so the expensive orbit extraction is cached across
pooling-sequence ablations.  Every run writes its resolved configuration next
to its outputs and logs one JSON line per image per stage.  Exit codes:
0 success, 1 partial failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import BinaryHash, Descriptor, l2_normalize
from .extractor import (
    ToyExtractorConfig,
    assemble_orbit_tensor,
    read_feature_file,
    toy_extract,
    write_feature_file,
)
from .hashing import (
    binarize,
    fit_thresholds,
    read_hash_index,
    write_hash_index,
    write_thresholds,
)
from .orbits import OrbitSpec, generate_orbit_images, load_image, save_image
from .pooling import FLATTEN_ORDER, apply_sequence, parse_sequence, sequence_orbit_subset
from .retrieval import (
    DatasetManifest,
    Protocol,
    load_manifest,
    mean_average_precision,
    pairwise_distance_report,
    per_query_average_precision,
    per_query_recall4,
    rank_all,
    recall4_times4,
    write_distance_csv,
)

SEED_ENV = "ORBITPOOL_SEED"

DEFAULT_DISTANCE_SEQUENCES = ["", "A:scale", "A:scale,A:trans", "A:scale,A:trans,A:rot"]

_log_lock = threading.Lock()


class ConfigError(Exception):
    pass


class MissingStageError(Exception):
    """An upstream stage artifact is absent."""


def log_event(**fields) -> None:
    line = json.dumps(fields, sort_keys=True)
    with _log_lock:
        print(line, flush=True)


@dataclass(frozen=True)
class RunConfig:
    manifest_path: Path
    input_dir: Path
    output_dir: Path
    orbit: OrbitSpec
    toy: ToyExtractorConfig | None
    feature_dir: Path | None
    sequence: str
    hash: bool
    distance_pairs: tuple[tuple[str, str], ...]
    distance_sequences: tuple[str, ...]

    @property
    def features_dir(self) -> Path:
        return self.feature_dir if self.feature_dir is not None else self.output_dir / "features"

    def to_dict(self) -> dict:
        return {
            "manifest": str(self.manifest_path),
            "input_dir": str(self.input_dir),
            "output_dir": str(self.output_dir),
            "orbit": dataclasses.asdict(self.orbit),
            "extractor": (
                {"file": str(self.feature_dir)}
                if self.feature_dir is not None
                else {"toy": dataclasses.asdict(self.toy)}
            ),
            "sequence": self.sequence,
            "hash": self.hash,
            "distance_pairs": [list(p) for p in self.distance_pairs],
            "distance_sequences": list(self.distance_sequences),
        }


_KNOWN_KEYS = {
    "manifest",
    "input_dir",
    "output_dir",
    "orbit",
    "extractor",
    "sequence",
    "hash",
    "distance_pairs",
    "distance_sequences",
}


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "manifest" not in doc:
        raise ConfigError("config requires a 'manifest' path")
    base = path.parent

    def resolve(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else (base / p).resolve()

    try:
        orbit_doc = dict(doc.get("orbit", {}))
        for key in ("pad_rgb", "target_size"):
            if key in orbit_doc:
                orbit_doc[key] = tuple(orbit_doc[key])
        orbit = OrbitSpec(**orbit_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad orbit spec: {exc}") from exc

    extractor_doc = doc.get("extractor", {"toy": {}})
    toy = None
    feature_dir = None
    if "file" in extractor_doc:
        feature_dir = resolve(extractor_doc["file"])
    elif "toy" in extractor_doc:
        toy_doc = dict(extractor_doc["toy"])
        if SEED_ENV in os.environ:
            try:
                toy_doc["seed"] = int(os.environ[SEED_ENV])
            except ValueError as exc:
                raise ConfigError(f"{SEED_ENV} must be an integer") from exc
        try:
            toy = ToyExtractorConfig(**toy_doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad toy extractor config: {exc}") from exc
    else:
        raise ConfigError("extractor must be {'toy': {...}} or {'file': <dir>}")

    pairs = tuple(tuple(p) for p in doc.get("distance_pairs", ()))
    if any(len(p) != 2 for p in pairs):
        raise ConfigError("distance_pairs entries must be [id_a, id_b] pairs")
    return RunConfig(
        manifest_path=resolve(doc["manifest"]),
        input_dir=resolve(doc.get("input_dir", ".")),
        output_dir=resolve(doc.get("output_dir", "out")),
        orbit=orbit,
        toy=toy,
        feature_dir=feature_dir,
        sequence=doc.get("sequence", ""),
        hash=bool(doc.get("hash", False)),
        distance_pairs=pairs,
        distance_sequences=tuple(doc.get("distance_sequences", DEFAULT_DISTANCE_SEQUENCES)),
    )


def _load_manifest(cfg: RunConfig) -> DatasetManifest:
    try:
        return load_manifest(cfg.manifest_path)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load manifest {cfg.manifest_path}: {exc}") from exc


def _save_npy(path, values: np.ndarray) -> None:
    # np.save appends ".npy" to bare paths; a file handle keeps the name as-is.
    with open(path, "wb") as fh:
        np.save(fh, values)


def _atomic_write(path: Path, write_fn) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_resolved_config(cfg: RunConfig, stage_dir: Path, extra: dict | None = None) -> None:
    doc = cfg.to_dict()
    if extra:
        doc.update(extra)
    stage_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(
        stage_dir / "resolved_config.json",
        lambda tmp: Path(tmp).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n"),
    )


def _run_parallel(jobs: int, work_items, fn) -> int:
    """Run fn over items, collecting per-item failures; returns failure count."""
    failures = 0
    if jobs <= 1:
        for item in work_items:
            failures += 0 if fn(item) else 1
        return failures
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        for ok in pool.map(fn, work_items):
            failures += 0 if ok else 1
    return failures


def cmd_extract(cfg: RunConfig, force: bool, jobs: int, debug_images: bool) -> int:
    if cfg.toy is None:
        raise ConfigError(
            "extract requires a toy extractor; file-based features come from an external exporter"
        )
    manifest = _load_manifest(cfg)
    out_dir = cfg.output_dir / "features"
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(cfg, out_dir)
    debug_dir = cfg.output_dir / "orbit_images"

    def process(image) -> bool:
        out_path = out_dir / f"{image.id}.fot1"
        if out_path.exists() and not force:
            log_event(stage="extract", image=image.id, status="skipped", out=str(out_path))
            return True
        try:
            img = load_image(cfg.input_dir / image.path)
            orbit = generate_orbit_images(img, cfg.orbit)
            maps = [toy_extract(o, cfg.toy) for o in orbit]
            tensor = assemble_orbit_tensor(
                maps,
                cfg.orbit.n_rot,
                cfg.orbit.n_scale,
                rotation_generated=cfg.orbit.rotation_enabled,
                scale_generated=cfg.orbit.scale_enabled,
            )
            _atomic_write(out_path, lambda tmp: write_feature_file(tensor, tmp))
            if debug_images:
                debug_dir.mkdir(parents=True, exist_ok=True)
                for r in range(cfg.orbit.n_rot):
                    for s in range(cfg.orbit.n_scale):
                        save_image(
                            orbit[r * cfg.orbit.n_scale + s],
                            debug_dir / f"{image.id}_r{r}_s{s}.png",
                        )
        except Exception as exc:
            log_event(stage="extract", image=image.id, status="error", error=str(exc))
            return False
        log_event(stage="extract", image=image.id, status="ok", out=str(out_path))
        return True

    images = sorted(manifest.images, key=lambda im: im.id)
    failures = _run_parallel(jobs, images, process)
    log_event(stage="extract", status="done", images=len(images), failures=failures)
    return 1 if failures else 0


def _descriptor_paths(cfg: RunConfig) -> tuple[Path, Path]:
    desc_dir = cfg.output_dir / "descriptors"
    return desc_dir, desc_dir / "index.json"


def cmd_pool(cfg: RunConfig, force: bool, jobs: int, sequence_override: str | None) -> int:
    seq_text = cfg.sequence if sequence_override is None else sequence_override
    try:
        seq = parse_sequence(seq_text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    manifest = _load_manifest(cfg)
    features_dir = cfg.features_dir
    desc_dir, index_path = _descriptor_paths(cfg)
    desc_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(cfg, desc_dir, {"sequence": seq_text})

    # Outputs of a different sequence must not be reused.
    reusable = False
    if index_path.exists() and not force:
        try:
            reusable = json.loads(index_path.read_text())["sequence"] == seq_text
        except (ValueError, KeyError):
            reusable = False

    entries: dict[str, dict] = {}
    entries_lock = threading.Lock()

    def process(image) -> bool:
        feature_path = features_dir / f"{image.id}.fot1"
        out_path = desc_dir / f"{image.id}.npy"
        try:
            if not feature_path.exists():
                raise MissingStageError(
                    f"missing feature file {feature_path}: run the extract stage first"
                )
            if not (out_path.exists() and reusable):
                tensor = read_feature_file(feature_path)
                descriptor = apply_sequence(sequence_orbit_subset(tensor, seq), seq)
                _atomic_write(out_path, lambda tmp: _save_npy(tmp, descriptor.values))
                tag = descriptor.sequence_tag
                dims = descriptor.dims
            else:
                values = np.load(out_path)
                tag = f"seq={seq_text};flatten={FLATTEN_ORDER}"
                dims = int(values.size)
            with entries_lock:
                entries[image.id] = {"file": out_path.name, "dims": dims, "sequence_tag": tag}
        except Exception as exc:
            log_event(stage="pool", image=image.id, status="error", error=str(exc))
            return False
        log_event(stage="pool", image=image.id, status="ok", out=str(out_path), dims=dims)
        return True

    images = sorted(manifest.images, key=lambda im: im.id)
    failures = _run_parallel(jobs, images, process)
    index_doc = {"sequence": seq_text, "entries": {k: entries[k] for k in sorted(entries)}}
    _atomic_write(
        index_path,
        lambda tmp: Path(tmp).write_text(json.dumps(index_doc, indent=2, sort_keys=True) + "\n"),
    )
    log_event(stage="pool", status="done", images=len(images), failures=failures)
    return 1 if failures else 0


def _load_descriptors(cfg: RunConfig, manifest: DatasetManifest) -> dict[str, Descriptor]:
    desc_dir, index_path = _descriptor_paths(cfg)
    if not index_path.exists():
        raise MissingStageError(f"missing descriptor index {index_path}: run the pool stage first")
    index_doc = json.loads(index_path.read_text())
    items = {}
    for image in manifest.images:
        entry = index_doc["entries"].get(image.id)
        if entry is None:
            raise MissingStageError(
                f"descriptor for {image.id!r} missing from {index_path}: rerun the pool stage"
            )
        values = np.load(desc_dir / entry["file"])
        items[image.id] = Descriptor(values, sequence_tag=entry["sequence_tag"])
    return items


def cmd_hash(cfg: RunConfig, force: bool) -> int:
    manifest = _load_manifest(cfg)
    items = _load_descriptors(cfg, manifest)
    hash_dir = cfg.output_dir / "hash"
    hash_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(cfg, hash_dir)
    index_path = hash_dir / "index.bhi1"
    thresholds_path = hash_dir / "thresholds.bht1"
    if index_path.exists() and thresholds_path.exists() and not force:
        log_event(stage="hash", status="skipped", out=str(index_path))
        return 0

    # Hashing operates on the normalized descriptors the float metric compares.
    normalized = {image_id: l2_normalize(d) for image_id, d in items.items()}
    database = [normalized[i] for i in sorted(manifest.database_ids())]
    thresholds = fit_thresholds(database, source=cfg.manifest_path.name)
    entries = []
    for image_id in sorted(normalized):
        entries.append((image_id, binarize(normalized[image_id], thresholds)))
        log_event(stage="hash", image=image_id, status="ok", bits=thresholds.dims)
    _atomic_write(index_path, lambda tmp: write_hash_index(entries, tmp))
    _atomic_write(thresholds_path, lambda tmp: write_thresholds(thresholds, tmp))
    log_event(stage="hash", status="done", images=len(entries), bits=thresholds.dims)
    return 0


def cmd_eval(cfg: RunConfig, metric: str) -> int:
    manifest = _load_manifest(cfg)
    if cfg.hash:
        index_path = cfg.output_dir / "hash" / "index.bhi1"
        if not index_path.exists():
            raise MissingStageError(f"missing hash index {index_path}: run the hash stage first")
        items: dict[str, Descriptor | BinaryHash] = dict(read_hash_index(index_path))
        missing = [im.id for im in manifest.images if im.id not in items]
        if missing:
            raise MissingStageError(
                f"hash index lacks entries for {missing[:3]}...: rerun the hash stage"
            )
        distance_kind = "hamming"
    else:
        items = _load_descriptors(cfg, manifest)
        distance_kind = "euclidean_l2_normalized"

    ranked = rank_all(items, manifest)
    if metric == "map":
        per_query = per_query_average_precision(ranked, manifest)
        value = mean_average_precision(ranked, manifest)
    elif metric == "recall4x4":
        if manifest.protocol is not Protocol.UKB:
            raise ConfigError("metric recall4x4 requires a ukb-protocol manifest")
        per_query = per_query_recall4(ranked, manifest)
        value = recall4_times4(ranked, manifest)
    else:
        raise ConfigError(f"unknown metric {metric!r}")
    for qid in sorted(per_query):
        log_event(stage="eval", image=qid, status="ok", score=per_query[qid])

    eval_dir = cfg.output_dir / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(cfg, eval_dir, {"metric": metric, "distance": distance_kind})
    out_doc = {
        "metric": metric,
        "value": value,
        "per_query": {k: per_query[k] for k in sorted(per_query)},
        "config": {**cfg.to_dict(), "distance": distance_kind, "ap_variant": "non_interpolated_junk_removed"},
    }
    _atomic_write(
        eval_dir / "metrics.json",
        lambda tmp: Path(tmp).write_text(json.dumps(out_doc, indent=2, sort_keys=True) + "\n"),
    )
    log_event(stage="eval", status="done", metric=metric, value=value, distance=distance_kind)
    return 0


def cmd_distance(cfg: RunConfig) -> int:
    if not cfg.distance_pairs:
        raise ConfigError("distance requires distance_pairs in the config")
    try:
        sequences = [parse_sequence(s) for s in cfg.distance_sequences]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    features_dir = cfg.features_dir
    rows = []
    failures = 0
    for id_a, id_b in cfg.distance_pairs:
        pair_id = f"{id_a}|{id_b}"
        try:
            tensors = []
            for image_id in (id_a, id_b):
                path = features_dir / f"{image_id}.fot1"
                if not path.exists():
                    raise MissingStageError(
                        f"missing feature file {path}: run the extract stage first"
                    )
                tensors.append(read_feature_file(path))
            for seq in sequences:
                sub_a = sequence_orbit_subset(tensors[0], seq)
                sub_b = sequence_orbit_subset(tensors[1], seq)
                rows.extend(pairwise_distance_report(pair_id, sub_a, sub_b, [seq]))
            log_event(stage="distance", image=pair_id, status="ok")
        except Exception as exc:
            log_event(stage="distance", image=pair_id, status="error", error=str(exc))
            failures += 1
    dist_dir = cfg.output_dir / "distance"
    dist_dir.mkdir(parents=True, exist_ok=True)
    _write_resolved_config(cfg, dist_dir)
    _atomic_write(dist_dir / "report.csv", lambda tmp: write_distance_csv(rows, tmp))
    log_event(stage="distance", status="done", pairs=len(cfg.distance_pairs), failures=failures)
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="orbitpool",
        description="Invariant global descriptors from orbit moment pooling",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("extract", "pool", "hash", "eval", "distance"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run config JSON")
        p.add_argument("--force", action="store_true", help="rewrite existing outputs")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers within the stage")
        p.add_argument("--sequence", default=None, help="pooling sequence, e.g. A:scale,S:trans,M:rot")
        p.add_argument("--metric", choices=("map", "recall4x4"), default="map")
        if name == "extract":
            p.add_argument("--debug-images", action="store_true", help="also write orbit PNGs")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.command == "extract":
            return cmd_extract(cfg, args.force, args.jobs, args.debug_images)
        if args.command == "pool":
            return cmd_pool(cfg, args.force, args.jobs, args.sequence)
        if args.command == "hash":
            return cmd_hash(cfg, args.force)
        if args.command == "eval":
            return cmd_eval(cfg, args.metric)
        return cmd_distance(cfg)
    except (ConfigError, MissingStageError) as exc:
        log_event(stage=args.command, status="config_error", error=str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
