import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import minus3db_bandwidth, welch_band_snr_db
from rfident.errors import BandExceedsNyquist, EmptyInput, NonPositiveDuration, SampleRateMismatch
from rfident.spectral import PipelineConfig, snr_matrix
from rfident.synth import (NUM_CLASSES, PROFILES, EmissionClass, EmissionSpec, IqRecording,
                           SnrBucket, add_awgn, combine_recordings, read_iq, scale_snr,
                           synthesize_emission, write_iq)

FS = 100e6


def test_five_classes_with_fixed_ids():
    assert NUM_CLASSES == 5
    assert [c.label for c in EmissionClass] == ["Wi-Fi", "Bluetooth", "ZigBee", "Lightbridge", "XPD"]
    for c in EmissionClass:
        lo, hi = c.typical_duration_range_s
        assert c.nominal_bandwidth_hz > 0 and lo <= hi


@pytest.mark.parametrize("snr,bucket", [(4.99, None), (5, SnrBucket.LOW), (14.9, SnrBucket.LOW),
                                        (15, SnrBucket.MID), (24.99, SnrBucket.MID),
                                        (25, SnrBucket.HIGH), (90, SnrBucket.HIGH)])
def test_snr_bucket_edges(snr, bucket):
    assert SnrBucket.of(snr) is bucket


def test_zero_duration_rejected():
    with pytest.raises(NonPositiveDuration):
        synthesize_emission(EmissionSpec(EmissionClass.WIFI, 0, 0, 0.0, 20), FS)


def test_band_beyond_nyquist_rejected():
    with pytest.raises(BandExceedsNyquist):
        synthesize_emission(EmissionSpec(EmissionClass.WIFI, 45e6, 0, 1e-4, 20), FS)


def test_xpd_band_snr_matches_periodogram():
    spec = EmissionSpec(EmissionClass.XPD, 0.0, 0.0, 5e-3, 30.0)
    rec = synthesize_emission(spec, FS, seed=3)
    snr = welch_band_snr_db(rec.samples, FS, -100e3, 100e3)
    assert 28.5 <= snr <= 31.5


@pytest.mark.parametrize("cls", list(EmissionClass))
def test_band_snr_within_tolerance_for_every_class(cls):
    bw = PROFILES[cls].bandwidth_hz
    spec = EmissionSpec(cls, 5e6, 0.0, 2e-3, 20.0)
    rec = synthesize_emission(spec, FS, seed=1)
    snr = welch_band_snr_db(rec.samples, FS, 5e6 - bw / 2, 5e6 + bw / 2)
    assert abs(snr - 20.0) <= 1.5


def test_bluetooth_3db_bandwidth_about_1mhz():
    rec = synthesize_emission(EmissionSpec(EmissionClass.BLUETOOTH, 0, 0, 4e-3, 30), FS, seed=2)
    bw = minus3db_bandwidth(rec.samples, FS)
    assert 0.8e6 <= bw <= 1.2e6


def test_synthesis_is_deterministic():
    spec = EmissionSpec(EmissionClass.ZIGBEE, -3e6, 1e-4, 5e-4, 15)
    a = synthesize_emission(spec, FS, seed=9)
    b = synthesize_emission(spec, FS, seed=9)
    assert np.array_equal(a.samples, b.samples)


def test_emission_confined_to_its_time_window():
    spec = EmissionSpec(EmissionClass.LIGHTBRIDGE, 0, 1e-4, 2e-4, 20)
    rec = synthesize_emission(spec, FS, seed=0, num_samples=50_000)
    start, stop = 10_000, 30_000
    assert not rec.samples[:start].any() and not rec.samples[stop:].any()
    assert np.abs(rec.samples[start:stop]).min() >= 0  # occupied window
    assert np.mean(np.abs(rec.samples[start:stop]) ** 2) > 0


@pytest.mark.parametrize("cls", list(EmissionClass))
def test_energy_inside_declared_box(cls):
    cfg = PipelineConfig(compression=None, noise_floor_db=0.0)
    bw = PROFILES[cls].bandwidth_hz
    spec = EmissionSpec(cls, 10e6, 3e-4, 1e-3, 25)
    rec = synthesize_emission(spec, FS, seed=4, num_samples=cfg.samples_per_image)
    e = 10 ** (snr_matrix(rec, cfg, n0_db=0.0) / 10)
    e[~np.isfinite(e)] = 0
    geom = cfg.geometry()
    rows = np.arange(e.shape[0]) * geom.seconds_per_row
    cols = geom.u_to_freq((np.arange(e.shape[1]) + 0.5) / e.shape[1])
    t_in = (rows + geom.seconds_per_row > spec.start_s) & (rows < spec.stop_s)
    f_in = np.abs(cols - 10e6) <= bw / 2 + geom.hz_per_column
    assert e[np.ix_(t_in, f_in)].sum() >= 0.9 * e.sum()


def test_awgn_identity_at_minus_infinity():
    rec = IqRecording(np.ones(16, dtype=np.complex64))
    assert add_awgn(rec, -math.inf, 0) is rec


def test_awgn_power_oracle():
    rec = IqRecording(np.zeros(1_000_000, dtype=np.complex64))
    noisy = add_awgn(rec, 0.0, seed=5)
    assert abs(np.mean(np.abs(noisy.samples) ** 2) - 1.0) < 0.02


def test_awgn_deterministic():
    rec = IqRecording(np.zeros(1000, dtype=np.complex64))
    assert np.array_equal(add_awgn(rec, 3.0, 1).samples, add_awgn(rec, 3.0, 1).samples)


def test_awgn_empty_rejected():
    with pytest.raises(EmptyInput):
        add_awgn(IqRecording(np.zeros(0, dtype=np.complex64)), 0.0)


def _rec(n, seed, specs=()):
    r = np.random.default_rng(seed)
    x = (r.standard_normal(n) + 1j * r.standard_normal(n)).astype(np.complex64)
    return IqRecording(x, ground_truth=specs)


def test_combine_single_is_identity():
    a = _rec(100, 0)
    assert np.array_equal(combine_recordings([a]).samples, a.samples)


def test_combine_sums_and_pads():
    a, b = _rec(100, 0), _rec(60, 1)
    out = combine_recordings([a, b]).samples
    assert np.array_equal(out[:60], a.samples[:60] + b.samples)
    assert np.array_equal(out[60:], a.samples[60:])


def test_combine_concatenates_ground_truth():
    s = EmissionSpec(EmissionClass.WIFI, 0, 0, 1e-4, 10)
    a, b = _rec(10, 0, (s,) * 3), _rec(10, 1, (s,) * 5)
    assert len(combine_recordings([a, b]).ground_truth) == 8


def test_combine_errors():
    with pytest.raises(EmptyInput):
        combine_recordings([])
    with pytest.raises(SampleRateMismatch):
        combine_recordings([_rec(4, 0), IqRecording(np.zeros(4), sample_rate_hz=50e6)])


@given(st.integers(1, 200), st.integers(1, 200), st.integers(1, 200), st.integers(0, 2**31))
def test_combine_commutative_associative(na, nb, nc, seed):
    a, b, c = _rec(na, seed), _rec(nb, seed + 1), _rec(nc, seed + 2)
    ab_c = combine_recordings([combine_recordings([a, b]), c]).samples
    a_bc = combine_recordings([a, combine_recordings([b, c])]).samples
    ba = combine_recordings([b, a]).samples
    np.testing.assert_allclose(ab_c, a_bc, rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(ba, combine_recordings([a, b]).samples, rtol=1e-6)


def test_combine_power_adds():
    a, b = _rec(200_000, 10), _rec(200_000, 11)
    p = lambda r: np.mean(np.abs(r.samples.astype(np.complex128)) ** 2)
    assert abs(p(combine_recordings([a, b])) / (p(a) + p(b)) - 1) < 0.03


def test_scale_snr_examples():
    s = EmissionSpec(EmissionClass.WIFI, 0, 0, 1e-4, 10)
    rec = _rec(1000, 3, (s,))
    assert np.array_equal(scale_snr(rec, 0).samples, rec.samples)
    doubled = scale_snr(rec, 20 * math.log10(2))
    assert np.allclose(np.abs(doubled.samples) / np.abs(rec.samples), 2.0, atol=1e-6)
    assert scale_snr(rec, 10).ground_truth[0].snr_db == 20


@given(st.floats(-40, 40))
def test_scale_snr_round_trip(delta):
    rec = _rec(256, 7)
    back = scale_snr(scale_snr(rec, delta), -delta)
    np.testing.assert_allclose(back.samples, rec.samples, rtol=1e-5, atol=1e-6)


def test_iq_file_round_trip(tmp_path):
    x = _rec(1000, 0).samples
    path = tmp_path / "a.iq"
    assert write_iq(path, x) == 8000
    assert path.stat().st_size == 8000
    assert np.array_equal(read_iq(path), x)
    raw = np.fromfile(path, dtype="<f4")
    assert raw[0] == x[0].real and raw[1] == x[0].imag
