#!/usr/bin/env python3
"""Sequence ablation on the synthetic rotation benchmark.

Database images are random smooth synthetics; queries are their quarter-turn
rotations.  Prints mAP per pooling sequence so the effect of adding invariance
groups is directly visible.
"""

import argparse
import time

from orbitpool.benchmarks import benchmark_map, extract_orbit_tensor, make_rotation_benchmark
from orbitpool.extractor import ToyExtractorConfig
from orbitpool.orbits import OrbitSpec
from orbitpool.pooling import parse_sequence

DEFAULT_SEQUENCES = [
    "",
    "A:scale",
    "A:trans",
    "A:rot",
    "A:scale,A:trans",
    "A:scale,A:trans,A:rot",
    "A:scale,S:trans,M:rot",
]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n-base", type=int, default=50)
    parser.add_argument("--size", type=int, default=64, help="source image side")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--toy-seed", type=int, default=11)
    parser.add_argument("--scale-steps", type=int, default=4)
    parser.add_argument("--sequences", nargs="*", default=DEFAULT_SEQUENCES)
    args = parser.parse_args()

    images, manifest = make_rotation_benchmark(n_base=args.n_base, size=args.size, seed=args.seed)
    spec = OrbitSpec(target_size=(32, 32), scale_steps=args.scale_steps)
    cfg = ToyExtractorConfig(seed=args.toy_seed, n_stages=2, channels_out=16, out_spatial=7)

    start = time.perf_counter()
    tensors = {i: extract_orbit_tensor(img, spec, cfg) for i, img in images.items()}
    print(f"extracted {len(tensors)} orbits ({spec.n_rot}x{spec.n_scale}) "
          f"in {time.perf_counter() - start:.1f}s")

    print(f"{'sequence':>24}  mAP")
    for text in args.sequences:
        value = benchmark_map(tensors, manifest, parse_sequence(text))
        print(f"{text or '(raw flatten)':>24}  {value:.4f}")


if __name__ == "__main__":
    main()
