"""Throughput microbenchmarks on synthetic random input."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .detect import baseline_detect
from .errors import ValidationError
from .spectral import PipelineConfig, compress, fft_noise_floor_db, fft_rows, render_image
from .stream import NoiseSource, run_stream

MODULES = ("fft", "compression", "detection", "end_to_end")


@dataclass(frozen=True)
class BenchReport:
    module: str
    samples_processed: int
    elapsed_s: float

    @property
    def throughput_msamps(self) -> float:
        return self.samples_processed / self.elapsed_s / 1e6

    @property
    def real_time(self) -> bool:
        """True when the module keeps up with a 100 Msamps/s input."""
        return self.throughput_msamps >= 100.0

    def to_dict(self) -> dict:
        return {"module": self.module, "samples_processed": self.samples_processed,
                "elapsed_s": self.elapsed_s, "throughput_msamps": self.throughput_msamps}


def _noise(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2), dtype=np.float32) * np.float32(np.sqrt(0.5))
    return x.view(np.complex64)[:, 0]


def _repeat(step, samples_per_call, duration_s):
    step()  # warm-up (JIT, caches, FFT plans)
    done = 0
    t0 = time.perf_counter()
    while True:
        step()
        done += samples_per_call
        elapsed = time.perf_counter() - t0
        if elapsed >= duration_s:
            return done, elapsed


def bench(module: str, duration_s: float = 1.0, config: PipelineConfig = PipelineConfig(),
          seed: int = 0) -> BenchReport:
    """Time one pipeline stage for at least ``duration_s`` seconds.

    Throughput is counted in input I/Q samples for every module, so the
    numbers are directly comparable with the incoming sample rate.
    """
    if module not in MODULES:
        raise ValidationError(f"unknown module {module!r}; pick one of {MODULES}")
    if duration_s <= 0:
        raise ValidationError("duration must be positive")
    cfg = config
    if cfg.noise_floor_db is None:
        cfg = replace(cfg, noise_floor_db=fft_noise_floor_db(0.0, cfg.fft_size))
    n = cfg.samples_per_image
    x = _noise(n, seed)
    if module == "fft":
        done, elapsed = _repeat(lambda: fft_rows(x, cfg.fft_size, shift=False), n, duration_s)
    elif module == "compression":
        comp = cfg.compression
        if comp is None:
            raise ValidationError("compression bench needs a compression config")
        spec = fft_rows(x, cfg.fft_size, shift=False)

        done, elapsed = _repeat(lambda: compress(spec, comp, cfg.noise_floor_db, cfg.mapping, shift=True),
                                n, duration_s)
    elif module == "detection":
        img, geom = render_image(x, cfg)
        done, elapsed = _repeat(lambda: baseline_detect(img, geometry=geom, mapping=cfg.mapping),
                                n, duration_s)
    else:
        render_image(x, cfg)  # warm-up
        budget = max(2, int(np.ceil(duration_s * 100e6 / n)))
        while True:
            stats = run_stream(NoiseSource(seed, max_samples=budget * n), cfg, queue_depth=4)
            if stats.wall_s >= duration_s:
                break
            budget *= 2
        done, elapsed = stats.frames_detected * n, stats.wall_s
    return BenchReport(module, int(done), float(elapsed))


def stage_a_rate(fft: BenchReport, compression: BenchReport) -> float:
    """Combined rate of FFT followed by compression on one core (harmonic sum)."""
    return 1.0 / (1.0 / fft.throughput_msamps + 1.0 / compression.throughput_msamps)
