"""Synthesize scenes, run the baseline detector and print the mAP grid.

Sweeps SNR buckets and collision fractions; every configuration gets its own
seed so the image sets are independent.

    python scripts/build_and_eval.py --n 200 --collisions 0 0.5 --compress
    python scripts/build_and_eval.py --n 100 --out data/run1   # also writes the dataset tree
"""

import argparse
import json
import time

from rfident.dataset import ScenarioConfig, build_dataset, iter_scenes, load_pictures
from rfident.detect import baseline_detect
from rfident.evaluate import evaluate
from rfident.synth import SnrBucket


def run(n, buckets, collisions, compress, seed, out=None):
    sc = ScenarioConfig(n_images=n, snr_buckets=buckets, collision_fraction=collisions,
                        compress=compress, seed=seed, save_recordings=out is not None)
    geom = sc.pipeline.geometry()
    if out:
        scenes = load_pictures(build_dataset(sc, out))
    else:
        scenes = ((img, labels) for _, img, labels, _ in iter_scenes(sc))
    pairs = [(baseline_detect(img, geometry=geom, mapping=sc.pipeline.mapping), labels)
             for img, labels in scenes]
    return evaluate(pairs)


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--buckets", nargs="+", default=["Low", "Mid", "High"])
    ap.add_argument("--collisions", type=float, nargs="+", default=[0.0, 0.5])
    ap.add_argument("--compress", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="write the dataset tree here (single configuration only)")
    ap.add_argument("--json")
    args = ap.parse_args()

    buckets = tuple(SnrBucket.parse(b) for b in args.buckets)
    results = {}
    for i, frac in enumerate(args.collisions):
        t = time.perf_counter()
        rep = run(args.n, buckets, frac, args.compress, args.seed + i, args.out)
        dt = time.perf_counter() - t
        print(f"\n== collision fraction {frac:g}: {args.n} images, {dt:.1f} s")
        print(rep.table())
        results[str(frac)] = rep.to_dict()
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
