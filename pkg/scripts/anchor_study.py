"""Mean shape IoU of k-means anchors against k, over synthetic annotations.

    python scripts/anchor_study.py --n 300 --kmax 9
"""

import argparse

import numpy as np

from rfident.dataset import ScenarioConfig, iter_scenes
from rfident.detect import kmeans_anchors


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--kmax", type=int, default=9)
    ap.add_argument("--collisions", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sc = ScenarioConfig(n_images=args.n, collision_fraction=args.collisions, seed=args.seed,
                        save_recordings=False)
    shapes = np.array([(a.box.w, a.box.h) for _, _, labels, _ in iter_scenes(sc) for a in labels])
    print(f"{len(shapes)} boxes")
    print(f"{'k':>3}{'mean IoU':>10}  anchors (w, h)")
    for k in range(1, args.kmax + 1):
        res = kmeans_anchors(shapes, k, seed=args.seed)
        anchors = " ".join(f"({w:.3f},{h:.3f})" for w, h in res.anchors)
        print(f"{k:>3}{res.mean_iou(shapes):>10.3f}  {anchors}")


if __name__ == "__main__":
    main()
