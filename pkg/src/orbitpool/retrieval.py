"""Dataset manifests, ranking, and retrieval metrics (mAP, 4xRecall@4).

Manifests are JSON; the evaluation conventions are the Oxford-style ones:
non-interpolated average precision, junk ids removed before ranking, and the
query excluded from its own ranking except under the UKB protocol where every
image queries an index it belongs to.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import (
    BinaryHash,
    Descriptor,
    FeatureOrbitTensor,
    euclidean_distance,
    l2_normalize,
)
from .pooling import PoolingSequence, apply_sequence, format_sequence


class Role(Enum):
    QUERY = "query"
    DATABASE = "database"
    BOTH = "both"


class Protocol(Enum):
    STANDARD = "standard"
    UKB = "ukb"


@dataclass(frozen=True)
class ManifestImage:
    id: str
    path: str
    role: Role


@dataclass(frozen=True)
class QueryTruth:
    relevant: frozenset[str]
    junk: frozenset[str] = frozenset()


@dataclass(frozen=True)
class DatasetManifest:
    images: tuple[ManifestImage, ...]
    ground_truth: dict[str, QueryTruth]
    protocol: Protocol = Protocol.STANDARD

    def __post_init__(self):
        ids = [img.id for img in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in manifest")
        by_id = {img.id: img for img in self.images}
        db_ids = self.database_ids()
        for qid, truth in self.ground_truth.items():
            img = by_id.get(qid)
            if img is None or img.role is Role.DATABASE:
                raise ValueError(f"ground-truth query {qid!r} is not a query-role image")
            stray = (truth.relevant | truth.junk) - db_ids
            if stray:
                raise ValueError(f"ground truth of {qid!r} names non-database ids: {sorted(stray)}")
            if truth.relevant & truth.junk:
                raise ValueError(f"relevant and junk sets of {qid!r} overlap")
            if self.protocol is Protocol.UKB:
                if len(truth.relevant) != 4 or qid not in truth.relevant:
                    raise ValueError(
                        f"UKB protocol requires exactly 4 relevant per query including "
                        f"the query itself; {qid!r} has {sorted(truth.relevant)}"
                    )
        for img in self.images:
            if img.role is Role.QUERY and img.id not in self.ground_truth:
                raise ValueError(f"query image {img.id!r} has no ground truth")

    def database_ids(self) -> frozenset[str]:
        return frozenset(
            img.id for img in self.images if img.role in (Role.DATABASE, Role.BOTH)
        )

    def query_ids(self) -> list[str]:
        return sorted(self.ground_truth)


def manifest_from_dict(doc: dict) -> DatasetManifest:
    images = tuple(
        ManifestImage(img["id"], img["path"], Role(img["role"])) for img in doc["images"]
    )
    truth = {
        qid: QueryTruth(frozenset(entry["relevant"]), frozenset(entry.get("junk", ())))
        for qid, entry in doc["ground_truth"].items()
    }
    return DatasetManifest(images, truth, Protocol(doc["protocol"]))


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {
        "protocol": manifest.protocol.value,
        "images": [
            {"id": img.id, "path": img.path, "role": img.role.value} for img in manifest.images
        ],
        "ground_truth": {
            qid: {"relevant": sorted(t.relevant), "junk": sorted(t.junk)}
            for qid, t in manifest.ground_truth.items()
        },
    }


def load_manifest(path) -> DatasetManifest:
    with open(path, "r", encoding="utf-8") as fh:
        return manifest_from_dict(json.load(fh))


def save_manifest(manifest: DatasetManifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class RankedList:
    """Database ids ordered by ascending distance to one query."""

    query_id: str
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        ids = [i for i, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids in ranked list")
        dists = [d for _, d in self.entries]
        if any(b < a for a, b in zip(dists, dists[1:])):
            raise ValueError("distances must be non-decreasing")


def _rank_descriptors(query: Descriptor, index: list[tuple[str, Descriptor]]) -> list[tuple[str, float]]:
    q = l2_normalize(query)
    return [(i, euclidean_distance(q, l2_normalize(d))) for i, d in index]


def _rank_hashes(query: BinaryHash, index: list[tuple[str, BinaryHash]]) -> list[tuple[str, float]]:
    from .core import _as_words

    if not index:
        return []
    if any(h.n_bits != query.n_bits for _, h in index):
        raise ValueError("hash index entries disagree with query on bit length")
    words = np.stack([_as_words(h) for _, h in index])
    counts = np.bitwise_count(words ^ _as_words(query)[None, :]).sum(axis=1)
    return [(i, float(c)) for (i, _), c in zip(index, counts)]


def rank(
    query_id: str,
    query: Descriptor | BinaryHash,
    index: list[tuple[str, Descriptor | BinaryHash]],
    protocol: Protocol = Protocol.STANDARD,
    junk: frozenset[str] = frozenset(),
) -> RankedList:
    """Order index entries by ascending distance to the query.

    Float descriptors are L2-normalized on both sides and compared with
    Euclidean distance; hashes with Hamming distance.  Junk ids are removed
    before ranking, the query's own id is excluded under the STANDARD
    protocol, and ties are broken by lexicographic id for determinism.
    """
    kept = [(i, v) for i, v in index if i not in junk]
    if protocol is Protocol.STANDARD:
        kept = [(i, v) for i, v in kept if i != query_id]
    if isinstance(query, Descriptor):
        if any(not isinstance(v, Descriptor) for _, v in kept):
            raise ValueError("type mismatch: float query against a hash index")
        scored = _rank_descriptors(query, kept)
    elif isinstance(query, BinaryHash):
        if any(not isinstance(v, BinaryHash) for _, v in kept):
            raise ValueError("type mismatch: hash query against a float index")
        scored = _rank_hashes(query, kept)
    else:
        raise TypeError(f"query must be Descriptor or BinaryHash, got {type(query).__name__}")
    scored.sort(key=lambda pair: (pair[1], pair[0]))
    return RankedList(query_id, tuple(scored))


def rank_all(
    items: dict[str, Descriptor | BinaryHash], manifest: DatasetManifest
) -> list[RankedList]:
    """Rank every manifest query against the database-role entries."""
    index = [(i, items[i]) for i in sorted(manifest.database_ids())]
    return [
        rank(qid, items[qid], index, manifest.protocol, manifest.ground_truth[qid].junk)
        for qid in manifest.query_ids()
    ]


def average_precision(r: RankedList, relevant: frozenset[str] | set[str]) -> float:
    """Non-interpolated AP: mean of precision@k over the relevant hits.

    Relevant items absent from the ranking contribute zero.
    """
    if not relevant:
        raise ValueError(f"empty relevant set for query {r.query_id!r}")
    hits = 0
    total = 0.0
    for k, (entry_id, _) in enumerate(r.entries, start=1):
        if entry_id in relevant:
            hits += 1
            total += hits / k
    return total / len(relevant)


def per_query_average_precision(
    lists: list[RankedList], manifest: DatasetManifest
) -> dict[str, float]:
    return {
        r.query_id: average_precision(r, manifest.ground_truth[r.query_id].relevant)
        for r in lists
    }


def mean_average_precision(lists: list[RankedList], manifest: DatasetManifest) -> float:
    """Unweighted mean of per-query AP, reduced in sorted query-id order."""
    per_query = per_query_average_precision(lists, manifest)
    if not per_query:
        raise ValueError("no ranked lists to average")
    return sum(per_query[qid] for qid in sorted(per_query)) / len(per_query)


def per_query_recall4(lists: list[RankedList], manifest: DatasetManifest) -> dict[str, float]:
    if manifest.protocol is not Protocol.UKB:
        raise ValueError("4xRecall@4 requires the UKB protocol")
    out = {}
    for r in lists:
        relevant = manifest.ground_truth[r.query_id].relevant
        top4 = {entry_id for entry_id, _ in r.entries[:4]}
        out[r.query_id] = float(len(top4 & relevant))
    return out


def recall4_times4(lists: list[RankedList], manifest: DatasetManifest) -> float:
    """UKB metric: mean count of relevant images in the top 4 (max 4.0)."""
    per_query = per_query_recall4(lists, manifest)
    if not per_query:
        raise ValueError("no ranked lists to average")
    return sum(per_query[qid] for qid in sorted(per_query)) / len(per_query)


@dataclass(frozen=True)
class DistanceRow:
    pair_id: str
    sequence: str
    distance: float


def pairwise_distance_report(
    pair_id: str,
    tensor_a: FeatureOrbitTensor,
    tensor_b: FeatureOrbitTensor,
    sequences: list[PoolingSequence],
) -> list[DistanceRow]:
    """Normalized descriptor distance between two images, one row per sequence."""
    rows = []
    for seq in sequences:
        da = l2_normalize(apply_sequence(tensor_a, seq))
        db = l2_normalize(apply_sequence(tensor_b, seq))
        rows.append(DistanceRow(pair_id, format_sequence(seq), euclidean_distance(da, db)))
    return rows


def write_distance_csv(rows: list[DistanceRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair_id", "sequence", "distance"])
        for row in rows:
            writer.writerow([row.pair_id, row.sequence, repr(row.distance)])
