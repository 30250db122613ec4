"""Converters from the four public benchmarks' native ground-truth layouts to
the retrieval pipeline's manifest JSON.

Expected raw layouts:

- holidays: one directory of JPEGs named like 123456.jpg; images sharing the
  first four digits form a group and the ...00 image is the group's query.
- oxbuild: gt text files (<name>_query.txt / _good.txt / _ok.txt / _junk.txt)
  plus the image directory; query files contain "oxc1_<stem> x1 y1 x2 y2".
- ukb: JPEGs named ukbenchNNNNN.jpg in consecutive groups of four; every
  image queries the whole collection and its group (itself included) is
  relevant.
- graphics: queries/ and database/ image directories plus ground_truth.txt
  lines "<query_file> <relevant_file> [<relevant_file> ...]".

Each converter warns (but still writes the manifest) when the converted
query/database counts differ from the published benchmark sizes.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

EXPECTED_COUNTS = {
    "holidays": {"queries": 500, "database": 991},
    "oxbuild": {"queries": 55},
    "ukb": {"queries": 10200, "groups": 2550},
    "graphics": {"queries": 1500, "database": 1000},
}


class ConversionError(Exception):
    pass


def _warn_count(dataset: str, kind: str, got: int) -> None:
    expected = EXPECTED_COUNTS[dataset].get(kind)
    if expected is not None and got != expected:
        warnings.warn(
            f"{dataset}: expected {expected} {kind}, found {got}", stacklevel=3
        )


def _image_entry(image_id: str, path: str, role: str) -> dict:
    return {"id": image_id, "path": path, "role": role}


def convert_holidays(raw: Path) -> dict:
    jpegs = sorted(p for p in raw.iterdir() if p.suffix.lower() in (".jpg", ".jpeg"))
    if not jpegs:
        raise ConversionError(f"no JPEG images under {raw}")
    groups: dict[int, list[Path]] = {}
    for p in jpegs:
        try:
            number = int(p.stem)
        except ValueError as exc:
            raise ConversionError(f"unexpected holidays filename {p.name!r}") from exc
        groups.setdefault(number // 100, []).append(p)
    images = []
    truth = {}
    n_queries = n_db = 0
    for group in sorted(groups):
        members = sorted(groups[group], key=lambda p: int(p.stem))
        query, rest = members[0], members[1:]
        images.append(_image_entry(query.stem, query.name, "query"))
        n_queries += 1
        for p in rest:
            images.append(_image_entry(p.stem, p.name, "database"))
            n_db += 1
        truth[query.stem] = {"relevant": [p.stem for p in rest], "junk": []}
    _warn_count("holidays", "queries", n_queries)
    _warn_count("holidays", "database", n_db)
    return {"protocol": "standard", "images": images, "ground_truth": truth}


def _read_stems(path: Path) -> list[str]:
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def convert_oxbuild(raw: Path) -> dict:
    gt_dir = raw / "gt" if (raw / "gt").is_dir() else raw
    image_dir = raw / "images" if (raw / "images").is_dir() else raw
    query_files = sorted(gt_dir.glob("*_query.txt"))
    if not query_files:
        raise ConversionError(f"no *_query.txt ground-truth files under {gt_dir}")
    stems = sorted(p.stem for p in image_dir.glob("*.jpg"))
    if not stems:
        raise ConversionError(f"no JPEG images under {image_dir}")
    images = [_image_entry(stem, f"{stem}.jpg", "both") for stem in stems]
    known = set(stems)
    truth = {}
    for qf in query_files:
        name = qf.stem[: -len("_query")]
        first = qf.read_text().split()
        stem = first[0]
        if stem.startswith("oxc1_"):
            stem = stem[len("oxc1_") :]
        if stem not in known:
            raise ConversionError(f"query {name!r} references unknown image {stem!r}")
        relevant = []
        for kind in ("good", "ok"):
            listing = gt_dir / f"{name}_{kind}.txt"
            if listing.exists():
                relevant += _read_stems(listing)
        junk_file = gt_dir / f"{name}_junk.txt"
        junk = _read_stems(junk_file) if junk_file.exists() else []
        truth[f"{name}#{stem}"] = {"relevant": sorted(set(relevant)), "junk": sorted(set(junk))}
        images.append(_image_entry(f"{name}#{stem}", f"{stem}.jpg", "query"))
    _warn_count("oxbuild", "queries", len(truth))
    return {"protocol": "standard", "images": images, "ground_truth": truth}


def convert_ukb(raw: Path) -> dict:
    jpegs = sorted(p for p in raw.iterdir() if p.suffix.lower() == ".jpg")
    if not jpegs:
        raise ConversionError(f"no JPEG images under {raw}")
    groups: dict[int, list[str]] = {}
    for p in jpegs:
        if not p.stem.startswith("ukbench"):
            raise ConversionError(f"unexpected ukb filename {p.name!r}")
        number = int(p.stem[len("ukbench") :])
        groups.setdefault(number // 4, []).append(p.stem)
    bad = {g: members for g, members in groups.items() if len(members) != 4}
    if bad:
        raise ConversionError(f"ukb groups without exactly 4 images: {sorted(bad)[:5]}")
    images = [_image_entry(p.stem, p.name, "both") for p in jpegs]
    truth = {
        stem: {"relevant": sorted(members), "junk": []}
        for members in groups.values()
        for stem in members
    }
    _warn_count("ukb", "queries", len(truth))
    _warn_count("ukb", "groups", len(groups))
    return {"protocol": "ukb", "images": images, "ground_truth": truth}


def convert_graphics(raw: Path) -> dict:
    gt_path = raw / "ground_truth.txt"
    if not gt_path.exists():
        raise ConversionError(f"missing {gt_path}")
    db_files = sorted((raw / "database").glob("*"))
    images = [
        _image_entry(p.stem, f"database/{p.name}", "database")
        for p in db_files
        if p.is_file()
    ]
    known_db = {p.stem for p in db_files}
    truth = {}
    n_queries = 0
    for line in gt_path.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        query, relevant = parts[0], parts[1:]
        if not relevant:
            raise ConversionError(f"graphics query {query!r} lists no relevant images")
        stems = [Path(r).stem for r in relevant]
        missing = [s for s in stems if s not in known_db]
        if missing:
            raise ConversionError(f"graphics query {query!r} references unknown {missing}")
        qid = Path(query).stem
        images.append(_image_entry(qid, f"queries/{query}", "query"))
        truth[qid] = {"relevant": sorted(set(stems)), "junk": []}
        n_queries += 1
    _warn_count("graphics", "queries", n_queries)
    _warn_count("graphics", "database", len(known_db))
    return {"protocol": "standard", "images": images, "ground_truth": truth}


CONVERTERS = {
    "holidays": convert_holidays,
    "oxbuild": convert_oxbuild,
    "ukb": convert_ukb,
    "graphics": convert_graphics,
}


def convert_ground_truth(dataset: str, raw_path) -> dict:
    if dataset not in CONVERTERS:
        raise ConversionError(f"unknown dataset {dataset!r}; pick one of {sorted(CONVERTERS)}")
    return CONVERTERS[dataset](Path(raw_path))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="convert_gt", description="Convert benchmark ground truth to manifest JSON"
    )
    parser.add_argument("--dataset", required=True, choices=sorted(CONVERTERS))
    parser.add_argument("--raw", required=True, help="dataset root directory")
    parser.add_argument("--out", required=True, help="output manifest path")
    args = parser.parse_args(argv)
    try:
        manifest = convert_ground_truth(args.dataset, args.raw)
    except (ConversionError, OSError) as exc:
        print(json.dumps({"status": "error", "error": str(exc)}), file=sys.stderr, flush=True)
        return 1
    Path(args.out).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(
        json.dumps(
            {
                "status": "done",
                "dataset": args.dataset,
                "queries": len(manifest["ground_truth"]),
                "images": len(manifest["images"]),
            }
        ),
        flush=True,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
