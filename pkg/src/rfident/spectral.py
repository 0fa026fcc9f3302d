"""Sample stream -> SNR matrix -> 8-bit images.

Rows are time (one FFT chunk, or one compressed group of chunks), columns are
frequency after an FFT shift, lowest frequency on the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.fft
from PIL import Image

from .errors import EmptyInput, InsufficientSamples, WrongChunkLength


@dataclass(frozen=True)
class MappingConfig:
    a_min_db: float = 0.0
    a_max_db: float = 50.0

    def __post_init__(self):
        if not self.a_max_db > self.a_min_db:
            raise ValueError("a_max_db must exceed a_min_db")

    @property
    def gamma(self) -> float:
        return 255.0 / (self.a_max_db - self.a_min_db)


@dataclass(frozen=True)
class CompressionConfig:
    m1: int = 3
    m2: int = 4

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("compression factors must be >= 1")

    @property
    def factor(self) -> int:
        return self.m1 * self.m2


@dataclass(frozen=True)
class PipelineConfig:
    """``compression=None`` renders grayscale; ``noise_floor_db=None`` estimates N0.

    ``noise_floor_db`` is the per-bin energy reference in the FFT domain, i.e.
    what gets subtracted from ``10*log10(|m|^2)``.
    """

    fft_size: int = 512
    rows: int = 512
    mapping: MappingConfig = field(default_factory=MappingConfig)
    compression: CompressionConfig | None = field(default_factory=CompressionConfig)
    noise_floor_db: float | None = None
    sample_rate_hz: float = 100e6

    def __post_init__(self):
        n = self.fft_size
        if n < 8 or n & (n - 1):
            raise ValueError("fft_size must be a power of two >= 8")
        if self.rows < 1:
            raise ValueError("rows must be >= 1")

    @property
    def rows_per_output(self) -> int:
        return self.compression.factor if self.compression else 1

    @property
    def samples_per_image(self) -> int:
        return self.fft_size * self.rows * self.rows_per_output

    @property
    def channels(self) -> int:
        return 3 if self.compression else 1

    def geometry(self) -> "FrameGeometry":
        return FrameGeometry(self.sample_rate_hz, self.fft_size, self.rows, self.rows_per_output)

    def to_dict(self) -> dict:
        return {
            "fft_size": self.fft_size,
            "image_rows": self.rows,
            "image_size": [self.rows, self.fft_size],
            "a_min_db": self.mapping.a_min_db,
            "a_max_db": self.mapping.a_max_db,
            "compression": None if self.compression is None
            else {"m1": self.compression.m1, "m2": self.compression.m2},
            "compression_factor": self.rows_per_output,
            "noise_floor_db": self.noise_floor_db,
            "sample_rate_hz": self.sample_rate_hz,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        comp = d.get("compression")
        return cls(
            fft_size=int(d["fft_size"]),
            rows=int(d["image_rows"]),
            mapping=MappingConfig(float(d["a_min_db"]), float(d["a_max_db"])),
            compression=None if comp is None else CompressionConfig(int(comp["m1"]), int(comp["m2"])),
            noise_floor_db=d.get("noise_floor_db"),
            sample_rate_hz=float(d["sample_rate_hz"]),
        )


@dataclass(frozen=True)
class FrameGeometry:
    sample_rate_hz: float
    fft_size: int
    rows: int
    fft_rows_per_row: int = 1

    @property
    def seconds_per_row(self) -> float:
        return self.fft_size * self.fft_rows_per_row / self.sample_rate_hz

    @property
    def hz_per_column(self) -> float:
        return self.sample_rate_hz / self.fft_size

    @property
    def span_s(self) -> float:
        return self.rows * self.seconds_per_row

    def freq_to_u(self, offset_hz: float) -> float:
        """Baseband offset -> normalized x. Column k is centred on (k - N/2) bins."""
        return (offset_hz / self.hz_per_column + self.fft_size / 2 + 0.5) / self.fft_size

    def u_to_freq(self, u: float) -> float:
        return (u * self.fft_size - self.fft_size / 2 - 0.5) * self.hz_per_column

    def time_to_v(self, t_s: float) -> float:
        return t_s / self.span_s


def fft_noise_floor_db(noise_power_db: float, fft_size: int) -> float:
    """Per-bin |m|^2 level of white noise with the given total power."""
    return noise_power_db + 10 * math.log10(fft_size)


def fft_frame(samples, fft_size: int | None = None) -> np.ndarray:
    """Unnormalized DFT of one chunk, shifted so bin 0 is the lowest frequency."""
    x = np.asarray(samples, dtype=np.complex128)
    if x.ndim != 1 or (fft_size is not None and len(x) != fft_size):
        raise WrongChunkLength(f"expected {fft_size} samples, got {x.shape}")
    return np.fft.fftshift(np.fft.fft(x))


def fft_rows(samples, fft_size: int, shift: bool = True) -> np.ndarray:
    """Chunked FFT of a stream; a trailing partial chunk is dropped."""
    x = np.asarray(samples)
    if x.dtype != np.complex64:
        x = x.astype(np.complex64)
    n_rows = len(x) // fft_size
    spec = scipy.fft.fft(x[: n_rows * fft_size].reshape(n_rows, fft_size), axis=1)
    return scipy.fft.fftshift(spec, axes=1) if shift else spec


def energies(spec) -> np.ndarray:
    spec = np.asarray(spec)
    re = spec.real.astype(np.float64)
    im = spec.imag.astype(np.float64)
    return re * re + im * im


_RAYLEIGH_MEDIAN = math.log(2.0)


def estimate_noise_floor(rows, statistic: str = "rayleigh") -> float:
    """Noise floor in dB from the median per-bin energy.

    ``statistic="median"`` returns ``10*log10(median |m|^2)`` as is.
    ``"rayleigh"`` (default) divides the median by ln 2, which turns it into
    the mean energy when bins are complex-Gaussian noise.
    """
    arr = np.asarray(rows)
    if arr.size == 0:
        raise EmptyInput("no spectrum rows")
    e = energies(arr) if np.iscomplexobj(arr) else np.asarray(arr, dtype=np.float64) ** 2
    med = float(np.median(e))
    if statistic == "rayleigh":
        med /= _RAYLEIGH_MEDIAN
    elif statistic != "median":
        raise ValueError(f"unknown statistic {statistic!r}")
    with np.errstate(divide="ignore"):
        return 10 * math.log10(med) if med > 0 else -math.inf


def to_snr_matrix(spec, n0_db: float) -> np.ndarray:
    """A = 20*log10|m| - N0, computed as 10*log10(|m|^2) - N0; zero -> -inf."""
    if not math.isfinite(n0_db):
        raise ValueError("noise floor must be finite")
    return energy_to_db(energies(spec), n0_db)


def energy_to_db(e, n0_db: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10 * np.log10(e) - n0_db


def map_grayscale(a, mapping: MappingConfig = MappingConfig()) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    scaled = mapping.gamma * (np.clip(a, mapping.a_min_db, mapping.a_max_db) - mapping.a_min_db)
    # values are >= 0, so floor(x + 0.5) is round-half-away-from-zero
    return np.floor(scaled + 0.5).astype(np.uint8)


def pixel_to_db(p, mapping: MappingConfig = MappingConfig()) -> np.ndarray:
    """Inverse of map_grayscale on the unclamped range."""
    return np.asarray(p, dtype=np.float64) / mapping.gamma + mapping.a_min_db


# -- RF-centric compression ---------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _compress_kernel(f, m1, m2, emax, emin, eavg):
    # f is the complex spectrum viewed as interleaved (re, im) floats
    rows, n2 = f.shape
    n = n2 // 2
    k = m1 * m2
    acc = np.empty(n)
    for g in range(rows // k):
        for j in range(m2):
            for x in range(n):
                acc[x] = 0.0
            for i in range(m1):
                row = f[g * k + j * m1 + i]
                for x in range(n):
                    re = np.float64(row[2 * x])
                    im = np.float64(row[2 * x + 1])
                    acc[x] += re * re + im * im
            if j == 0:
                for x in range(n):
                    e = acc[x] / m1
                    emax[g, x] = e
                    emin[g, x] = e
                    eavg[g, x] = e
            else:
                for x in range(n):
                    e = acc[x] / m1
                    eavg[g, x] += e
                    emax[g, x] = max(emax[g, x], e)
                    emin[g, x] = min(emin[g, x], e)
        for x in range(n):
            eavg[g, x] = eavg[g, x] / m2


def _as_float_pairs(spec):
    spec = np.asarray(spec)
    if not np.iscomplexobj(spec):
        spec = spec.astype(np.complex128)
    if spec.dtype not in (np.complex64, np.complex128):
        spec = spec.astype(np.complex128)
    spec = np.ascontiguousarray(spec)
    return spec.view(np.float32 if spec.dtype == np.complex64 else np.float64)


def compress_energies(spec, m1: int, m2: int):
    """Two-stage reduction of complex FFT rows -> (E_max, E_min, E_avg).

    Stage one averages |m|^2 over groups of ``m1`` rows; stage two takes the
    max/min/mean over ``m2`` stage-one rows. Trailing partial groups are dropped.
    """
    f = _as_float_pairs(spec)
    groups = f.shape[0] // (m1 * m2)
    out = [np.empty((groups, f.shape[1] // 2)) for _ in range(3)]
    if groups:
        _compress_kernel(f, m1, m2, *out)
    return tuple(out)


def energies_to_rgb(emax, emin, eavg, n0_db: float, mapping: MappingConfig) -> np.ndarray:
    return np.stack(
        [map_grayscale(energy_to_db(e, n0_db), mapping) for e in (emax, emin, eavg)], axis=-1
    )


_TABLE_SHIFT = 44  # float64 bits kept as the table key: sign, exponent, 8 mantissa bits


@numba.njit(cache=True, nogil=True)
def _map_levels(e, bits, thresholds, kmin, base, cut, n0, amin, amax, gamma, out, roll):
    """Pixel = number of level boundaries at or below the energy.

    Energies within 1e-9 of a boundary take the exact log formula instead.
    Column x lands at (x + roll) % n in ``out``.
    """
    rows, n = e.shape
    nt = len(thresholds)
    nb = len(base)
    for r in range(rows):
        for x in range(n):
            v = e[r, x]
            p = 0
            if v > 0:
                key = (bits[r, x] >> _TABLE_SHIFT) - kmin
                if key >= nb:
                    p = nt
                elif key >= 0:
                    p = base[key] + (1 if v >= cut[key] else 0)
                if (p > 0 and v - thresholds[p - 1] <= 1e-9 * thresholds[p - 1]) or \
                        (p < nt and thresholds[p] - v <= 1e-9 * thresholds[p]):
                    a = min(max(10.0 * math.log10(v) - n0, amin), amax)
                    p = int(math.floor(gamma * (a - amin) + 0.5))
            out[r, (x + roll) % n] = p


def level_thresholds(n0_db: float, mapping: MappingConfig = MappingConfig()) -> np.ndarray:
    """Energies at which the mapped pixel value steps from k-1 to k, k = 1..255."""
    k = np.arange(1, 256, dtype=np.float64)
    return 10.0 ** (((k - 0.5) / mapping.gamma + mapping.a_min_db + n0_db) / 10.0)


def _level_table(thresholds):
    """Per float-bit-bucket pixel base and the single level boundary inside it.

    Buckets span a ratio of 2**(1/256) (about 0.012 dB), far below one grey
    level, so each holds at most one boundary.
    """
    keys = thresholds.view(np.int64) >> _TABLE_SHIFT
    kmin, kmax = int(keys[0]), int(keys[-1])
    starts = (np.arange(kmin, kmax + 2, dtype=np.int64) << _TABLE_SHIFT).view(np.float64)
    base = np.searchsorted(thresholds, starts[:-1], side="left")
    nxt = np.minimum(base, len(thresholds) - 1)
    inside = (base < len(thresholds)) & (thresholds[nxt] < starts[1:])
    cut = np.where(inside, thresholds[nxt], np.inf)
    return kmin, base.astype(np.int64), cut


def compress(spec, compression: CompressionConfig, n0_db: float,
             mapping: MappingConfig = MappingConfig(), shift: bool = False) -> np.ndarray:
    """RGB rows (R = max, G = min, B = avg) straight from complex FFT rows.

    Equal to ``energies_to_rgb(*compress_energies(...))``; the level mapping
    goes through a threshold table instead of a per-pixel logarithm.
    ``shift`` applies an FFT shift along frequency on the way out.
    """
    emax, emin, eavg = compress_energies(spec, compression.m1, compression.m2)
    groups, n = emax.shape
    out = np.empty((groups, n, 3), dtype=np.uint8)
    if groups:
        thr = level_thresholds(n0_db, mapping)
        kmin, base, cut = _level_table(thr)
        roll = n // 2 if shift else 0
        for c, e in enumerate((emax, emin, eavg)):
            _map_levels(e, e.view(np.int64), thr, kmin, base, cut, float(n0_db),
                        mapping.a_min_db, mapping.a_max_db, mapping.gamma, out[..., c], roll)
    return out


class Compressor:
    """Streaming form of :func:`compress`; output is identical to the batch call."""

    def __init__(self, compression: CompressionConfig, n0_db: float,
                 mapping: MappingConfig = MappingConfig()):
        self.compression = compression
        self.n0_db = n0_db
        self.mapping = mapping
        self._pending = []
        self._pending_rows = 0

    def push(self, rows) -> np.ndarray:
        rows = np.asarray(rows)
        if rows.ndim == 1:
            rows = rows[None, :]
        self._pending.append(rows)
        self._pending_rows += len(rows)
        k = self.compression.factor
        ready = (self._pending_rows // k) * k
        if ready == 0:
            width = rows.shape[1]
            return np.empty((0, width, 3), dtype=np.uint8)
        block = np.concatenate(self._pending) if len(self._pending) > 1 else self._pending[0]
        rest = block[ready:]
        self._pending = [rest] if len(rest) else []
        self._pending_rows = len(rest)
        return compress(block[:ready], self.compression, self.n0_db, self.mapping)

    @property
    def pending_rows(self) -> int:
        return self._pending_rows


# -- end to end -----------------------------------------------------------------

def render_image(rec_or_samples, config: PipelineConfig = PipelineConfig()):
    """Render the first image's worth of samples. Returns (image, FrameGeometry).

    Grayscale images are (rows, N) uint8; RGB images are (rows, N, 3).
    """
    samples = getattr(rec_or_samples, "samples", rec_or_samples)
    fs = getattr(rec_or_samples, "sample_rate_hz", config.sample_rate_hz)
    if fs != config.sample_rate_hz:
        config = _with_rate(config, fs)
    need = config.samples_per_image
    if len(samples) < need:
        raise InsufficientSamples(f"need {need} samples, have {len(samples)}")
    n = config.fft_size
    if config.compression is None:
        spec = fft_rows(samples[:need], n)
        e = energies(spec)
        n0 = config.noise_floor_db
        if n0 is None:
            n0 = _floor_from_energies(e)
        img = map_grayscale(energy_to_db(e, n0), config.mapping)
    else:
        spec = fft_rows(samples[:need], n, shift=False)
        n0 = config.noise_floor_db
        if n0 is None:
            n0 = _floor_from_energies(energies(spec))
        img = compress(spec, config.compression, n0, config.mapping, shift=True)
    return img, config.geometry()


def snr_matrix(rec_or_samples, config: PipelineConfig, n0_db: float | None = None) -> np.ndarray:
    """Uncompressed SNR matrix (rows x N) for the first ``rows`` FFT chunks."""
    samples = getattr(rec_or_samples, "samples", rec_or_samples)
    spec = fft_rows(samples, config.fft_size)
    e = energies(spec)
    if n0_db is None:
        n0_db = config.noise_floor_db if config.noise_floor_db is not None else _floor_from_energies(e)
    return energy_to_db(e, n0_db)


def _floor_from_energies(e) -> float:
    med = float(np.median(e)) / _RAYLEIGH_MEDIAN
    return 10 * math.log10(med) if med > 0 else 0.0


def _with_rate(config: PipelineConfig, fs: float) -> PipelineConfig:
    from dataclasses import replace

    return replace(config, sample_rate_hz=fs)


# -- image files ----------------------------------------------------------------

def save_image(path, img) -> None:
    img = np.asarray(img, dtype=np.uint8)
    Image.fromarray(img, mode="L" if img.ndim == 2 else "RGB").save(path)


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im)
