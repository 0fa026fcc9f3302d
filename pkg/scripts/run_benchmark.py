"""Repeat every throughput benchmark and compare the streaming run with its stages.

    python scripts/run_benchmark.py --repeats 5 --duration 0.5 --json bench.json
"""

import argparse
import json
import os

import numpy as np

from rfident.bench import MODULES, BenchReport, bench, stage_a_rate
from rfident.spectral import PipelineConfig
from rfident.stream import NoiseSource, run_stream


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--duration", type=float, default=0.5)
    ap.add_argument("--frames", type=int, default=16, help="frames for the pipeline-law run")
    ap.add_argument("--json")
    args = ap.parse_args()

    cfg = PipelineConfig()
    rows = {}
    print(f"{'module':<12}{'mean Msamps/s':>15}{'CV %':>8}{'real time':>11}")
    for m in MODULES:
        rates = [bench(m, args.duration, cfg).throughput_msamps for _ in range(args.repeats)]
        mean, cv = float(np.mean(rates)), float(np.std(rates) / np.mean(rates))
        rows[m] = {"runs": rates, "mean": mean, "cv": cv}
        print(f"{m:<12}{mean:>15.1f}{100 * cv:>8.1f}{'yes' if mean >= 100 else 'no':>11}")

    fft, comp = (BenchReport(m, int(rows[m]["mean"] * 1e6), 1.0) for m in ("fft", "compression"))
    print(f"\nFFT+compression stage: {stage_a_rate(fft, comp):.1f} Msamps/s")

    stats = run_stream(NoiseSource(1, max_samples=args.frames * cfg.samples_per_image), cfg)
    a, b, e2e = stats.stage_a_msamps, stats.stage_b_msamps, stats.end_to_end_msamps
    serial = 1.0 / (1.0 / a + 1.0 / b)
    cores = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
    print(f"streaming run on {cores} core(s): stage A {a:.1f}, stage B {b:.1f}, "
          f"end to end {e2e:.1f} Msamps/s")
    print(f"  slowest stage {min(a, b):.1f}, both stages back to back {serial:.1f}")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"modules": rows, "stream": stats.to_dict(), "cores": cores}, fh, indent=2)


if __name__ == "__main__":
    main()
