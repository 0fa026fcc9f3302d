"""Parametric complex-baseband emissions for the five emitter classes.

Waveforms are stand-ins: they reproduce bandwidth, duration and coarse
spectral texture, which is all the image pipeline and the detector see.
SNR is per frequency bin, averaged over the occupied band, relative to the
noise floor ``noise_power_db`` (0 dB unless overridden).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import BandExceedsNyquist, EmptyInput, NonPositiveDuration, SampleRateMismatch

DEFAULT_SAMPLE_RATE = 100e6
DEFAULT_CENTER_FREQ = 2.44e9


class EmissionClass(enum.IntEnum):
    WIFI = 0
    BLUETOOTH = 1
    ZIGBEE = 2
    LIGHTBRIDGE = 3
    XPD = 4

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def nominal_bandwidth_hz(self) -> float:
        return PROFILES[self].bandwidth_hz

    @property
    def typical_duration_range_s(self) -> tuple[float, float]:
        return PROFILES[self].duration_range_s

    @classmethod
    def parse(cls, value) -> "EmissionClass":
        if isinstance(value, EmissionClass):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for c in cls:
            if key in (c.name.lower(), _LABELS[c].lower().replace("-", "")):
                return c
        raise ValueError(f"unknown emission class {value!r}")


_LABELS = {
    EmissionClass.WIFI: "Wi-Fi",
    EmissionClass.BLUETOOTH: "Bluetooth",
    EmissionClass.ZIGBEE: "ZigBee",
    EmissionClass.LIGHTBRIDGE: "Lightbridge",
    EmissionClass.XPD: "XPD",
}

NUM_CLASSES = len(EmissionClass)


@dataclass(frozen=True)
class ClassProfile:
    bandwidth_hz: float
    duration_range_s: tuple[float, float]
    continuous: bool = False

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")
        lo, hi = self.duration_range_s
        if not 0 < lo <= hi:
            raise ValueError("bad duration range")


# Lightbridge and XPD bandwidths are not published; these are stand-ins.
PROFILES: dict[EmissionClass, ClassProfile] = {
    EmissionClass.WIFI: ClassProfile(20e6, (0.2e-3, 2.0e-3)),
    EmissionClass.BLUETOOTH: ClassProfile(1e6, (0.1e-3, 0.4e-3)),
    EmissionClass.ZIGBEE: ClassProfile(2e6, (0.4e-3, 2.0e-3)),
    EmissionClass.LIGHTBRIDGE: ClassProfile(10e6, (0.5e-3, 2.0e-3)),
    EmissionClass.XPD: ClassProfile(200e3, (1.0e-3, 10e-3), continuous=True),
}


def set_profile(cls: EmissionClass, profile: ClassProfile) -> None:
    """Override the bandwidth/duration stand-ins for one class."""
    PROFILES[EmissionClass.parse(cls)] = profile


class SnrBucket(enum.Enum):
    LOW = ("Low", 5.0, 15.0)
    MID = ("Mid", 15.0, 25.0)
    HIGH = ("High", 25.0, math.inf)

    def __init__(self, title, lo, hi):
        self.title = title
        self.lo = lo
        self.hi = hi

    @property
    def range_db(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def contains(self, snr_db: float) -> bool:
        return self.lo <= snr_db < self.hi

    @classmethod
    def of(cls, snr_db) -> "SnrBucket | None":
        if snr_db is None:
            return None
        for b in cls:
            if b.contains(snr_db):
                return b
        return None

    @classmethod
    def parse(cls, value) -> "SnrBucket":
        if isinstance(value, SnrBucket):
            return value
        for b in cls:
            if str(value).lower() in (b.name.lower(), b.title.lower()):
                return b
        raise ValueError(f"unknown SNR bucket {value!r}")


@dataclass(frozen=True)
class EmissionSpec:
    cls: EmissionClass
    center_offset_hz: float
    start_s: float
    duration_s: float
    snr_db: float

    @property
    def bandwidth_hz(self) -> float:
        return self.cls.nominal_bandwidth_hz

    @property
    def stop_s(self) -> float:
        return self.start_s + self.duration_s

    def to_dict(self) -> dict:
        return {
            "class": self.cls.label,
            "class_id": int(self.cls),
            "center_offset_hz": self.center_offset_hz,
            "start_s": self.start_s,
            "duration_s": self.duration_s,
            "snr_db": self.snr_db,
            "bandwidth_hz": self.bandwidth_hz,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmissionSpec":
        return cls(
            EmissionClass(int(d["class_id"])),
            float(d["center_offset_hz"]),
            float(d["start_s"]),
            float(d["duration_s"]),
            float(d["snr_db"]),
        )


@dataclass(frozen=True, eq=False)
class IqRecording:
    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE
    noise_power_db: float = 0.0
    ground_truth: tuple[EmissionSpec, ...] = ()
    center_frequency_hz: float = DEFAULT_CENTER_FREQ
    noise_added: bool = False

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.complex64))
        object.__setattr__(self, "ground_truth", tuple(self.ground_truth))

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    @property
    def classes(self) -> list[EmissionClass]:
        return sorted({g.cls for g in self.ground_truth})


# -- waveform stand-ins (unit mean power, baseband at DC) --------------------

def _band_limit(x: np.ndarray, fs: float, bw: float) -> np.ndarray:
    spec = np.fft.fft(x)
    freqs = np.fft.fftfreq(len(x), d=1.0 / fs)
    spec[np.abs(freqs) > bw / 2] = 0
    return np.fft.ifft(spec)


def _flat_burst(n, fs, bw, rng):
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return _band_limit(x, fs, bw)


def _gfsk_burst(n, fs, bw, rng, symbol_rate=1e6, bt=0.5, deviation=None):
    if deviation is None:
        deviation = 0.36 * bw
    n_sym = int(math.ceil(n * symbol_rate / fs)) + 1
    bits = rng.integers(0, 2, n_sym) * 2.0 - 1.0
    nrz = bits[(np.arange(n) * symbol_rate / fs).astype(np.int64)]
    sps = fs / symbol_rate
    sigma = sps * math.sqrt(math.log(2)) / (2 * math.pi * bt)
    freq = gaussian_filter1d(nrz, sigma, mode="nearest") * deviation
    phase = 2 * np.pi * np.cumsum(freq) / fs
    return _band_limit(np.exp(1j * phase), fs, bw)


def _oqpsk_burst(n, fs, bw, rng, chip_rate=None):
    if chip_rate is None:
        chip_rate = bw
    tc = 1.0 / chip_rate
    t = np.arange(n) / fs
    n_chips = int(math.ceil(n / (fs * tc))) + 4
    chips = rng.integers(0, 2, n_chips) * 2.0 - 1.0
    # I on even chip slots, Q delayed by one chip; half-sine spans two chips
    k_i = np.floor(t / (2 * tc)).astype(np.int64)
    k_q = np.floor((t - tc) / (2 * tc)).astype(np.int64) + 1
    ph_i = (t - 2 * tc * k_i) / (2 * tc)
    ph_q = (t - tc - 2 * tc * (k_q - 1)) / (2 * tc)
    i = chips[2 * k_i] * np.sin(np.pi * ph_i)
    q = chips[2 * k_q + 1] * np.sin(np.pi * ph_q)
    return _band_limit(i + 1j * q, fs, bw)


def _fm_carrier(n, fs, bw, rng):
    t = np.arange(n) / fs
    tones = rng.uniform(300.0, 12e3, 4)
    amps = rng.uniform(0.2, 1.0, 4)
    phases = rng.uniform(0, 2 * np.pi, 4)
    audio = (amps[:, None] * np.sin(2 * np.pi * tones[:, None] * t + phases[:, None])).sum(0)
    audio /= np.abs(audio).max() or 1.0
    phase = 2 * np.pi * np.cumsum(audio * 0.3 * bw) / fs
    return _band_limit(np.exp(1j * phase), fs, bw)


_GENERATORS = {
    EmissionClass.WIFI: _flat_burst,
    EmissionClass.BLUETOOTH: _gfsk_burst,
    EmissionClass.ZIGBEE: _oqpsk_burst,
    EmissionClass.LIGHTBRIDGE: _flat_burst,
    EmissionClass.XPD: _fm_carrier,
}


def check_band(spec: EmissionSpec, sample_rate_hz: float) -> None:
    edge = abs(spec.center_offset_hz) + spec.bandwidth_hz / 2
    if not sample_rate_hz > 2 * edge:
        raise BandExceedsNyquist(
            f"{spec.cls.label} at {spec.center_offset_hz:.0f} Hz exceeds Nyquist for {sample_rate_hz:.0f} Hz"
        )


def synthesize_emission(
    spec: EmissionSpec,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE,
    seed: int = 0,
    num_samples: int | None = None,
    noise_power_db: float = 0.0,
) -> IqRecording:
    """Render one noise-free emission.

    The burst is scaled so its mean PSD over the declared band sits
    ``spec.snr_db`` above a noise floor of ``noise_power_db`` (total power).
    Samples outside ``[start, start + duration)`` are zero.
    """
    if not spec.duration_s > 0:
        raise NonPositiveDuration(f"duration {spec.duration_s} s")
    if not math.isfinite(spec.snr_db):
        raise ValueError("snr_db must be finite")
    check_band(spec, sample_rate_hz)
    fs = sample_rate_hz
    start = max(int(round(spec.start_s * fs)), 0)
    length = max(int(round(spec.duration_s * fs)), 1)
    if num_samples is None:
        num_samples = start + length
    out = np.zeros(num_samples, dtype=np.complex64)
    length = min(length, num_samples - start)
    if length <= 0:
        return IqRecording(out, fs, noise_power_db, (spec,))

    rng = np.random.default_rng(seed)
    bw = spec.bandwidth_hz
    burst = _GENERATORS[spec.cls](length, fs, bw, rng)
    burst /= math.sqrt(np.mean(np.abs(burst) ** 2))
    # all energy lies inside the band, so band PSD = power / bw
    power = 10 ** ((spec.snr_db + noise_power_db) / 10) * bw / fs
    t = (start + np.arange(length)) / fs
    burst = burst * math.sqrt(power) * np.exp(2j * np.pi * spec.center_offset_hz * t)
    out[start:start + length] = burst
    return IqRecording(out, fs, noise_power_db, (spec,))


def add_awgn(rec: IqRecording, noise_power_db: float = 0.0, seed: int = 0) -> IqRecording:
    if len(rec.samples) == 0:
        raise EmptyInput("empty recording")
    if noise_power_db == -math.inf:
        return rec
    rng = np.random.default_rng(seed)
    n = len(rec.samples)
    scale = math.sqrt(10 ** (noise_power_db / 10) / 2)
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * scale
    return replace(
        rec,
        samples=(rec.samples + noise).astype(np.complex64),
        noise_power_db=noise_power_db,
        noise_added=True,
    )


def combine_recordings(recs: Sequence[IqRecording]) -> IqRecording:
    """Time-domain sum; shorter recordings are zero-padded at the tail."""
    recs = list(recs)
    if not recs:
        raise EmptyInput("no recordings to combine")
    fs = recs[0].sample_rate_hz
    if any(r.sample_rate_hz != fs for r in recs):
        raise SampleRateMismatch("recordings have different sample rates")
    if len(recs) == 1:
        return recs[0]
    n = max(len(r.samples) for r in recs)
    out = np.zeros(n, dtype=np.complex64)
    for r in recs:
        out[: len(r.samples)] += r.samples
    noisy = [r.noise_power_db for r in recs if r.noise_added]
    if noisy:
        floor = 10 * math.log10(sum(10 ** (p / 10) for p in noisy))
    else:
        floor = recs[0].noise_power_db
    truth = tuple(g for r in recs for g in r.ground_truth)
    return replace(recs[0], samples=out, noise_power_db=floor, ground_truth=truth,
                   noise_added=bool(noisy))


def scale_snr(rec: IqRecording, delta_db: float) -> IqRecording:
    if len(rec.samples) == 0:
        raise EmptyInput("empty recording")
    gain = np.float32(10 ** (delta_db / 20))
    truth = tuple(replace(g, snr_db=g.snr_db + delta_db) for g in rec.ground_truth)
    return replace(rec, samples=rec.samples * gain, ground_truth=truth)


# -- raw I&Q files: interleaved little-endian float32, I then Q ---------------

def write_iq(path, samples) -> int:
    data = np.asarray(samples).astype("<c8")
    data.tofile(path)
    return data.nbytes


def read_iq(path, offset_samples: int = 0, count: int = -1) -> np.ndarray:
    return np.fromfile(path, dtype="<c8", count=count, offset=8 * offset_samples).astype(np.complex64)
