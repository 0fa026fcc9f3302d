"""Two-stage streaming runtime.

Stage A reads samples, renders one image per block (FFT plus compression),
encodes it as a frame and pushes it onto a bounded queue. Stage B decodes
frames, runs the baseline detector and hands results to a sink. The two
stages run on separate threads.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .detect import BaselineConfig, baseline_detect
from .errors import QueueOverflowPolicyViolation, SourceExhausted, ValidationError
from .frames import FrameMessage, decode_frame, encode_frame
from .spectral import PipelineConfig, fft_noise_floor_db, render_image

_DONE = object()


class FileSource:
    """Reads complex64 samples from a raw ``.iq`` file in fixed-size blocks."""

    def __init__(self, path, sample_rate_hz: float = 100e6):
        self.path = Path(path)
        self.sample_rate_hz = sample_rate_hz
        self._fh = None

    def read(self, count: int) -> np.ndarray:
        if self._fh is None:
            self._fh = open(self.path, "rb")
        data = np.fromfile(self._fh, dtype="<c8", count=count)
        if len(data) < count:
            self.close()
            raise SourceExhausted(f"{self.path}: {len(data)} trailing samples")
        return data

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None


class ArraySource:
    def __init__(self, samples, sample_rate_hz: float = 100e6):
        self.samples = np.asarray(samples, dtype=np.complex64)
        self.sample_rate_hz = sample_rate_hz
        self._pos = 0

    def read(self, count: int) -> np.ndarray:
        if self._pos + count > len(self.samples):
            raise SourceExhausted("array exhausted")
        out = self.samples[self._pos:self._pos + count]
        self._pos += count
        return out

    def close(self):
        pass


class NoiseSource:
    """White complex Gaussian noise at unit power, optionally limited to ``max_samples``.

    Noise is drawn once into a pool (at least twice the read size) and each
    read returns a window at a random offset, so the source is never the
    bottleneck of a benchmark.
    """

    def __init__(self, seed=0, max_samples: int | None = None, sample_rate_hz: float = 100e6,
                 pool_samples: int = 1 << 22):
        self.rng = np.random.default_rng(seed)
        self.pool_samples = pool_samples
        self.pool = np.empty(0, dtype=np.complex64)
        self.max_samples = max_samples
        self.sample_rate_hz = sample_rate_hz
        self._emitted = 0

    def read(self, count: int) -> np.ndarray:
        if self.max_samples is not None and self._emitted + count > self.max_samples:
            raise SourceExhausted("noise budget exhausted")
        self._emitted += count
        if len(self.pool) < 2 * count:
            size = max(self.pool_samples, 2 * count)
            x = self.rng.standard_normal((size, 2), dtype=np.float32) * np.float32(np.sqrt(0.5))
            self.pool = np.ascontiguousarray(x).view(np.complex64)[:, 0]
        start = int(self.rng.integers(len(self.pool) - count + 1))
        return self.pool[start:start + count]

    def close(self):
        pass


@dataclass
class StreamStats:
    """Counters and timings of one run.

    Busy times are wall-clock windows around each stage's work (stage A from
    the source read to the encoded frame, stage B from decode to the sink),
    so on shared cores they include slices taken by the other stage.
    """

    samples_read: int = 0
    frames_emitted: int = 0
    frames_detected: int = 0
    frames_dropped: int = 0
    detections: int = 0
    queue_capacity: int = 0
    queue_high_water: int = 0
    stage_a_busy_s: float = 0.0
    stage_b_busy_s: float = 0.0
    wall_s: float = 0.0
    samples_per_frame: int = 0

    @property
    def stage_a_msamps(self) -> float:
        return self.frames_emitted * self.samples_per_frame / self.stage_a_busy_s / 1e6 \
            if self.stage_a_busy_s > 0 else float("inf")

    @property
    def stage_b_msamps(self) -> float:
        return self.frames_detected * self.samples_per_frame / self.stage_b_busy_s / 1e6 \
            if self.stage_b_busy_s > 0 else float("inf")

    @property
    def end_to_end_msamps(self) -> float:
        return self.frames_detected * self.samples_per_frame / self.wall_s / 1e6 \
            if self.wall_s > 0 else float("inf")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(stage_a_msamps=self.stage_a_msamps, stage_b_msamps=self.stage_b_msamps,
                 end_to_end_msamps=self.end_to_end_msamps)
        return d


def as_source(src, sample_rate_hz: float = 100e6):
    if hasattr(src, "read"):
        return src
    if isinstance(src, (str, Path)):
        return FileSource(src, sample_rate_hz)
    return ArraySource(src, sample_rate_hz)


def run_stream(source, config: PipelineConfig = PipelineConfig(),
               sink: Callable | None = None, *, queue_depth: int = 4, policy: str = "block",
               max_frames: int | None = None, detector: BaselineConfig = BaselineConfig(),
               stall: Callable[[int], None] | None = None,
               on_frame: Callable[[bytes], None] | None = None,
               noise_power_db: float | None = 0.0) -> StreamStats:
    """Run the pipeline until the source is exhausted (or ``max_frames``).

    ``sink(frame_message, detections)`` receives every detection batch in frame
    order. ``policy`` is ``"block"`` (back-pressure stalls stage A) or
    ``"drop"`` (a full queue discards the new frame; the run then raises
    QueueOverflowPolicyViolation carrying the statistics). ``stall(index)`` is
    called by stage B before each frame, for tests and experiments.
    ``noise_power_db`` fixes N0 from the known time-domain noise power; pass
    None to estimate it per frame.
    """
    if policy not in ("block", "drop"):
        raise ValidationError(f"unknown queue policy {policy!r}")
    if queue_depth < 1:
        raise ValidationError("queue_depth must be >= 1")
    src = as_source(source, config.sample_rate_hz)
    fs = getattr(src, "sample_rate_hz", config.sample_rate_hz)
    if config.noise_floor_db is None and noise_power_db is not None:
        config = replace(config, noise_floor_db=fft_noise_floor_db(noise_power_db, config.fft_size))
    config = replace(config, sample_rate_hz=fs)
    geometry = config.geometry()
    per_frame = config.samples_per_image
    frame_ns = per_frame / fs * 1e9

    q: queue.Queue = queue.Queue(maxsize=queue_depth)
    stats = StreamStats(queue_capacity=queue_depth, samples_per_frame=per_frame)
    lock = threading.Lock()
    errors: list[BaseException] = []
    stop = threading.Event()

    def note_depth():
        with lock:
            stats.queue_high_water = max(stats.queue_high_water, q.qsize())

    def stage_a():
        index = 0
        try:
            while not stop.is_set() and (max_frames is None or index < max_frames):
                t = time.perf_counter()
                try:
                    block = src.read(per_frame)
                except SourceExhausted:
                    break
                stats.samples_read += len(block)
                img, _ = render_image(block, config)
                data = encode_frame(FrameMessage.from_image(img, index, int(round(index * frame_ns))))
                stats.stage_a_busy_s += time.perf_counter() - t
                if on_frame is not None:
                    on_frame(data)
                if policy == "block":
                    q.put(data)
                    stats.frames_emitted += 1
                else:
                    try:
                        q.put_nowait(data)
                        stats.frames_emitted += 1
                    except queue.Full:
                        stats.frames_dropped += 1
                note_depth()
                index += 1
        except BaseException as e:  # surfaced in the caller's thread
            errors.append(e)
        finally:
            src.close()
            q.put(_DONE)

    def stage_b():
        try:
            while True:
                data = q.get()
                if data is _DONE:
                    break
                t = time.perf_counter()
                msg = decode_frame(data)
                busy = time.perf_counter() - t
                if stall is not None:
                    stall(msg.frame_index)
                t = time.perf_counter()
                dets = baseline_detect(msg.image(), geometry=geometry, mapping=config.mapping,
                                       config=detector)
                stats.frames_detected += 1
                stats.detections += len(dets)
                if sink is not None:
                    sink(msg, dets)
                stats.stage_b_busy_s += busy + time.perf_counter() - t
        except BaseException as e:
            errors.append(e)
            stop.set()
            # drain so stage A never blocks forever on a dead consumer
            while q.get() is not _DONE:
                pass

    t0 = time.perf_counter()
    threads = [threading.Thread(target=stage_a, name="stage-a"),
               threading.Thread(target=stage_b, name="stage-b")]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    stats.wall_s = time.perf_counter() - t0
    if errors:
        raise errors[0]
    if stats.frames_dropped:
        raise QueueOverflowPolicyViolation(stats.frames_dropped, stats)
    return stats

