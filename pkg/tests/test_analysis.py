import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from conftest import FS, delta
from roomcomp import analysis
from roomcomp.analysis import StrictSample, Windowed
from roomcomp.dsp import ImpulseResponse, MagnitudeSpectrum, convolve, fractional_octave_smooth
from roomcomp.roomsim import simulate_components, simulate_rir


def ir(x, onset=None):
    return ImpulseResponse(np.asarray(x, dtype=float), FS, onset)


def decaying_noise(rng, n, t60=0.4, start=0):
    x = rng.standard_normal(n) * 10 ** (-3 * np.arange(n) / (t60 * FS))
    x[:start] = 0.0
    return x


# -- onset and split ---------------------------------------------------------

def test_onset_single_pulse():
    assert analysis.detect_direct_onset(ir(delta(1000, 100))) == 100


def test_onset_ignores_weak_later_pulse():
    x = delta(1000, 100) + delta(1000, 300, 0.05)
    assert analysis.detect_direct_onset(ir(x)) == 100


def test_onset_threshold_catches_earlier_pulse():
    # a pre-pulse above -20 dB of the peak wins over the peak
    x = delta(1000, 300) + delta(1000, 100, 0.2)
    assert analysis.detect_direct_onset(ir(x)) == 100


def test_onset_rejects_silence():
    with pytest.raises(ValueError):
        analysis.detect_direct_onset(ir(np.zeros(10)))


def test_onset_matches_simulator(short_room, omni_pair):
    sim = simulate_rir(short_room, *omni_pair, FS)
    found = analysis.detect_direct_onset(ImpulseResponse(sim.samples, FS))
    assert abs(found - sim.direct_onset_index) <= 2


def test_strict_split():
    s = analysis.split_direct_reverberant(ir(delta(500, 40), 40), StrictSample())
    np.testing.assert_array_equal(s.direct.samples, delta(500, 40))
    assert not s.reverberant.samples.any()


def test_windowed_split_isolates_late_pulse():
    x = delta(2000, 200) + delta(2000, 641, 0.5)
    s = analysis.split_direct_reverberant(ir(x, 200), Windowed(0.0025))
    np.testing.assert_array_equal(s.reverberant.samples, delta(2000, 641, 0.5))
    np.testing.assert_array_equal(s.direct.samples, delta(2000, 200))
    assert (s.direct_start, s.direct_stop) == (145, 256)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 999))
def test_split_parts_sum_exactly(seed, n1):
    x = np.random.default_rng(seed).standard_normal(1000)
    s = analysis.split_direct_reverberant(ir(x), onset=n1)
    np.testing.assert_array_equal(s.direct.samples + s.reverberant.samples, x)
    assert not np.any(s.direct.samples * s.reverberant.samples)


def test_split_energy_matches_simulator(short_room, omni_pair):
    d, r = simulate_components(short_room, *omni_pair, FS)
    full = ImpulseResponse(d.samples + r.samples, FS, d.direct_onset_index)
    s = analysis.split_direct_reverberant(full, Windowed())
    assert s.direct.energy() == pytest.approx(d.energy(), rel=0.05)


# -- DRR ---------------------------------------------------------------------

@pytest.mark.parametrize("fraction", [0.0, 1 / 3])
def test_drr_of_two_pulses(fraction):
    curve = analysis.drr_spectrum(ir(delta(64, 0)), ir(delta(700, 650, 0.5)),
                                  n_fft=1024, smoothing_fraction=fraction)
    np.testing.assert_allclose(curve.drr_db, 20 * np.log10(2.0), atol=1e-9)
    assert curve.drr_db[0] == pytest.approx(6.0206, abs=1e-4)


def test_drr_silent_reverberation_is_infinite():
    curve = analysis.drr_spectrum(ir(delta(64)), ir(np.zeros(64)), n_fft=256)
    assert np.all(np.isposinf(curve.drr_db))


def test_drr_rejects_rate_mismatch():
    with pytest.raises(ValueError):
        analysis.drr_spectrum(ir(delta(4)), ImpulseResponse(delta(4), 48000))


def test_drr_matches_band_energy_oracle(short_room, omni_pair):
    d, r = simulate_components(short_room, *omni_pair, FS)
    curve = analysis.drr_spectrum(d, r, smoothing_fraction=1.0)
    pad = np.zeros(FS // 4)
    for fc in (250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0):
        sos = signal.butter(4, [fc / np.sqrt(2), fc * np.sqrt(2)], "bandpass",
                            fs=FS, output="sos")
        ed = np.sum(signal.sosfilt(sos, np.concatenate([d.samples, pad])) ** 2)
        er = np.sum(signal.sosfilt(sos, np.concatenate([r.samples, pad])) ** 2)
        k = np.argmin(np.abs(curve.frequencies_hz - fc))
        assert curve.drr_db[k] == pytest.approx(10 * np.log10(ed / er), abs=1.5), fc


def test_drr_invariant_to_common_filter_bin_wise():
    rng = np.random.default_rng(8)
    d = ir(delta(300, 20))
    r = ir(decaying_noise(rng, 4000, 0.1, start=40))
    w = rng.standard_normal(512)
    base = analysis.drr_spectrum(d, r, n_fft=8192, smoothing_fraction=0)
    filt = analysis.drr_spectrum(ir(convolve(d.samples, w)), ir(convolve(r.samples, w)),
                                 n_fft=8192, smoothing_fraction=0)
    wmag = np.abs(np.fft.rfft(w, 8192))
    ok = wmag > wmag.max() * 1e-5
    np.testing.assert_allclose(filt.drr_db[ok], base.drr_db[ok], atol=1e-6)


def test_drr_proposed_without_support_reduces_to_plain():
    rng = np.random.default_rng(9)
    x = delta(3000, 10) + decaying_noise(rng, 3000, 0.05, start=200)
    s = analysis.split_direct_reverberant(ir(x, 10))
    plain = analysis.drr_spectrum(s.direct, s.reverberant)
    prop = analysis.drr_proposed(s, ir(np.zeros(5000)))
    np.testing.assert_array_equal(prop.drr_db, plain.drr_db)


def test_drr_proposed_equal_decorrelated_energy_drops_three_db():
    # a long delay leaves the power spectrum untouched and turns the cross
    # term into a fast ripple that the smoothing averages out
    rng = np.random.default_rng(10)
    n = 20000
    rev = decaying_noise(rng, n, 0.3, start=300)
    sup = np.concatenate([np.zeros(8000), rev])
    s = analysis.split_direct_reverberant(ir(delta(n, 10) + rev, 10))
    plain = analysis.drr_spectrum(s.direct, s.reverberant)
    prop = analysis.drr_proposed(s, ir(sup))
    f, a = plain.band(200.0, 10000.0)
    _, b = prop.band(200.0, 10000.0)
    assert np.abs((a - b) - 10 * np.log10(2.0)).max() < 1.0


# -- spectral deviation ------------------------------------------------------

def sd_oracle(values_db):
    m = sum(values_db) / len(values_db)
    return (sum((v - m) ** 2 for v in values_db) / (len(values_db) - 1)) ** 0.5


def test_spectral_deviation_flat_is_zero():
    spec = MagnitudeSpectrum(np.full(513, 3.0), 1024, FS)
    assert analysis.spectral_deviation(spec) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0))
def test_spectral_deviation_oracle_and_scale_invariance(seed, scale):
    rng = np.random.default_rng(seed)
    raw = MagnitudeSpectrum(10 ** (rng.normal(0, 5, 2049) / 20), 4096, FS)
    spec = fractional_octave_smooth(raw, 1 / 3)
    f = spec.frequencies
    band = [20 * np.log10(v) for v, fk in zip(spec.values, f) if 100 <= fk <= 20000]
    sd = analysis.spectral_deviation(spec)
    assert sd == pytest.approx(sd_oracle(band), abs=1e-9)
    scaled = spec.with_values(spec.values * scale)
    assert analysis.spectral_deviation(scaled) == pytest.approx(sd, abs=1e-9)


def test_spectral_deviation_needs_two_bins():
    spec = MagnitudeSpectrum(np.ones(9), 16, FS)
    with pytest.raises(ValueError):
        analysis.spectral_deviation(spec, 100.0, 200.0)


# -- decay -------------------------------------------------------------------

def test_decay_time_of_exponential():
    t60 = 0.5
    n = int(FS * 1.0)
    x = 10 ** (-3 * np.arange(n) / (t60 * FS))
    assert analysis.decay_time(ir(x)) == pytest.approx(t60, rel=0.01)


def test_schroeder_starts_at_zero_db():
    edc = analysis.schroeder_decay(ir(decaying_noise(np.random.default_rng(11), 5000)))
    assert edc[0] == 0.0
    assert np.all(np.diff(edc[np.isfinite(edc)]) <= 1e-12)
