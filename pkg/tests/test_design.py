import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FS
from roomcomp import design
from roomcomp.design import (
    DesignConfig,
    DesignError,
    Flat,
    Sloped,
    TargetSpec,
)
from roomcomp.dsp import (
    ImpulseResponse,
    MagnitudeSpectrum,
    dft_magnitude,
    fractional_octave_smooth,
    magnitude_to_db,
)

NFFT = 4096
SPEC = TargetSpec()


def mag(values, n_fft=NFFT):
    return MagnitudeSpectrum(np.asarray(values, dtype=float), n_fft, FS)


def const(value, n_fft=NFFT):
    return mag(np.full(n_fft // 2 + 1, float(value)), n_fft)


def bin_of(f_hz, n_fft=NFFT):
    return int(round(f_hz * n_fft / FS))


def random_triple(rng, n_fft=NFFT):
    """hp, hs and a d_mod satisfying the design preconditions."""
    n = n_fft // 2 + 1
    hp = mag(10 ** (rng.uniform(-30, 10, n) / 20), n_fft)
    hs = mag(10 ** (rng.uniform(-30, 10, n) / 20), n_fft)
    raw = mag(10 ** (rng.uniform(-30, 20, n) / 20), n_fft)
    return hp, hs, design.apply_target_constraints(raw, hp, SPEC)


def notched_primary(rng, n_fft=NFFT):
    f = np.arange(n_fft // 2 + 1) * FS / n_fft
    db = rng.normal(0.0, 3.0, f.size)
    for _ in range(4):
        fc = 10 ** rng.uniform(np.log10(80), np.log10(9000))
        db -= rng.uniform(6, 25) * np.exp(-0.5 * (np.log2(np.maximum(f, 1) / fc) / 0.05) ** 2)
    return mag(10 ** (db / 20), n_fft)


# -- average power response ------------------------------------------------

def test_average_power_single_ir_matches_magnitude():
    rng = np.random.default_rng(1)
    ir = ImpulseResponse(rng.standard_normal(300), FS)
    avg = design.average_power_response([ir], 1024)
    np.testing.assert_allclose(avg.values, dft_magnitude(ir, 1024).values,
                               rtol=1e-12)


def test_average_power_duplicates_and_power_mean():
    a = ImpulseResponse(np.array([1.0]), FS)
    z = ImpulseResponse(np.array([0.0, 0.0]), FS)
    np.testing.assert_allclose(design.average_power_response([a, a], 64).values, 1.0)
    np.testing.assert_allclose(design.average_power_response([a, z], 64).values,
                               np.sqrt(0.5))


def test_average_power_rejects_mixed_rates():
    with pytest.raises(DesignError):
        design.average_power_response(
            [ImpulseResponse(np.ones(3), FS), ImpulseResponse(np.ones(3), 48000)], 64)
    with pytest.raises(DesignError):
        design.average_power_response([], 64)


# -- targets ---------------------------------------------------------------

def test_sloped_target_endpoints_and_midpoint():
    n_fft = 2 ** 16
    f = np.arange(n_fft // 2 + 1) * FS / n_fft
    spec = TargetSpec(mode=Sloped(3.0, 20.0, 20000.0),
                      compensation_band_hz=(0.0, 22050.0),
                      precedence_thresholds=(((0.0, 22050.0), 6.0),))
    primary = mag(np.ones(f.size), n_fft)
    target = design.build_target(spec, primary, -4.0).db()

    lf = np.log10(np.clip(f, 20.0, 20000.0))
    expected = -4.0 - 3.0 * (lf - np.log10(20.0)) / 3.0
    np.testing.assert_allclose(target, expected, atol=1e-9)
    for f_hz, want in [(20.0, -4.0), (20000.0, -7.0), (632.5, -5.5)]:
        k = bin_of(f_hz, n_fft)
        slope = 1.0 * abs(np.log10(f[k] / f_hz))
        assert target[k] == pytest.approx(want, abs=slope + 1e-3)
    # clamped outside the slope range
    assert target[1] == pytest.approx(-4.0)
    assert target[-1] == pytest.approx(-7.0)


def test_flat_target_and_out_of_band_primary():
    rng = np.random.default_rng(2)
    primary = mag(rng.uniform(0.1, 2.0, NFFT // 2 + 1))
    target = design.build_target(SPEC, primary, 3.0)
    band = SPEC.in_band(primary.frequencies)
    np.testing.assert_allclose(target.db()[band], 3.0)
    np.testing.assert_array_equal(target.values[~band], primary.values[~band])


def test_sloped_rejects_inverted_range():
    with pytest.raises(DesignError):
        Sloped(3.0, 1000.0, 100.0)


def test_reference_level_log_weighted():
    # level 0 dB below 1 kHz and -6 dB above: log weighting favors neither
    # octave count, so the mean sits near the log-fraction average
    n_fft = 2 ** 16
    f = np.arange(n_fft // 2 + 1) * FS / n_fft
    db = np.where(f < 1000.0, 0.0, -6.0)
    level = design.reference_level_db(mag(10 ** (db / 20), n_fft), (100.0, 10000.0))
    assert level == pytest.approx(-3.0, abs=0.05)


# -- constraints -------------------------------------------------------------

def test_threshold_edge_belongs_to_lower_band():
    t = SPEC.threshold_db(np.array([70.0, 499.9, 500.0, 500.1, 20000.0, 30.0]))
    np.testing.assert_array_equal(t[:5], [10.0, 10.0, 10.0, 6.0, 6.0])
    assert np.isnan(t[5])


def test_constraints_fixed_point():
    hp = notched_primary(np.random.default_rng(3))
    np.testing.assert_array_equal(
        design.apply_target_constraints(hp, hp, SPEC).values, hp.values)


@pytest.mark.parametrize("f_hz, expected_db", [(1000.0, 6.0), (200.0, 10.0)])
def test_constraints_clip_at_precedence_limit(f_hz, expected_db):
    hp = const(1.0)
    d = const(10 ** (10 / 20))
    out = design.apply_target_constraints(d, hp, SPEC).db()
    assert out[bin_of(f_hz)] == pytest.approx(expected_db, abs=1e-12)


def test_constraints_out_of_band_equals_primary():
    rng = np.random.default_rng(4)
    hp = mag(rng.uniform(0.1, 1.0, NFFT // 2 + 1))
    d = mag(rng.uniform(0.1, 5.0, NFFT // 2 + 1))
    out = design.apply_target_constraints(d, hp, SPEC)
    outside = ~SPEC.in_band(hp.frequencies)
    assert outside.any()
    np.testing.assert_array_equal(out.values[outside], hp.values[outside])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_constraint_sandwich(seed):
    rng = np.random.default_rng(seed)
    n = NFFT // 2 + 1
    hp = mag(10 ** (rng.uniform(-60, 20, n) / 20))
    d = mag(10 ** (rng.uniform(-80, 40, n) / 20))
    out = design.apply_target_constraints(d, hp, SPEC).values
    band = SPEC.in_band(hp.frequencies)
    lim = hp.values * 10 ** (SPEC.threshold_db(hp.frequencies) / 20)
    assert np.all(out[band] >= hp.values[band])
    assert np.all(out[band] <= lim[band])


def test_constraints_reject_grid_mismatch():
    with pytest.raises(DesignError):
        design.apply_target_constraints(const(1.0, 1024), const(1.0, 2048), SPEC)


# -- equal-deficit optimizer -------------------------------------------------

def oracle_gain(d, hp, spec, step=0.001):
    """Grid search over the balance of the two dB deficits."""
    f = hp.frequencies
    lo, hi = spec.equal_deficit_band_hz
    m = (f >= lo) & (f <= hi)
    hp_db = 20 * np.log10(hp.values[m])
    d_db = 20 * np.log10(d.values[m])
    t = np.where(f[m] <= 500.0, 10.0, 6.0)
    grid = np.arange(-60.0, 60.0 + step / 2, step)
    lower = np.array([np.maximum(0, hp_db - d_db - g).sum() for g in grid])
    upper = np.array([np.maximum(0, d_db + g - hp_db - t).sum() for g in grid])
    gap = np.abs(lower - upper)
    best = np.flatnonzero(gap == gap.min())
    return grid[best[np.argmin(np.abs(grid[best]))]]


def test_optimizer_matches_grid_search_oracle():
    rng = np.random.default_rng(5)
    n_fft = 1024
    for _ in range(20):
        hp = notched_primary(rng, n_fft)
        d = mag(10 ** ((rng.normal(0, 6, n_fft // 2 + 1) + rng.uniform(-20, 20)) / 20),
                n_fft)
        g = design.optimize_target_gain(d, hp, SPEC)
        assert g == pytest.approx(oracle_gain(d, hp, SPEC), abs=0.01)


def test_optimizer_interior_target_returns_zero():
    hp = const(1.0)
    d = const(10 ** (2 / 20))
    assert design.optimize_target_gain(d, hp, SPEC) == 0.0


@pytest.mark.parametrize("c", [-12.0, -3.0, 9.0, 20.0])
def test_optimizer_flat_corridor(c):
    # hp 0 dB, limit 6 dB, d flat at c dB: every g in [-c, 6 - c] zeroes
    # both deficits; the smallest-magnitude member of that interval is chosen
    spec = TargetSpec(precedence_thresholds=(((0.0, 22050.0), 6.0),))
    g = design.optimize_target_gain(const(10 ** (c / 20)), const(1.0), spec)
    assert -c - 1e-9 <= g <= 6.0 - c + 1e-9
    assert g == pytest.approx(float(np.clip(0.0, -c, 6.0 - c)))
    lower, upper = design.deficits(g, *design.deficit_terms(
        const(10 ** (c / 20)), const(1.0), spec))
    assert lower == pytest.approx(0.0, abs=1e-9)
    assert upper == pytest.approx(0.0, abs=1e-9)


def test_optimizer_flat_corridor_with_notch_balances_midpoint():
    # hp alternates between 0 and 8 dB, so no gain satisfies every bin:
    # half the bins need g >= 8 and half need g <= 6; the balance is at 7
    spec = TargetSpec(precedence_thresholds=(((0.0, 22050.0), 6.0),))
    hp_db = np.zeros(NFFT // 2 + 1)
    f = np.arange(hp_db.size) * FS / NFFT
    m = (f >= 70) & (f <= 10000)
    idx = np.flatnonzero(m)
    hp_db[idx[::2]] = 8.0
    hp = mag(10 ** (hp_db / 20))
    g = design.optimize_target_gain(const(1.0), hp, spec)
    lower, upper = design.deficits(g, *design.deficit_terms(const(1.0), hp, spec))
    assert lower == pytest.approx(upper, abs=0.01 * idx.size)
    assert g == pytest.approx(7.0, abs=0.01)


def test_optimizer_unattainable_balance():
    # a 200 dB gap puts every zero-deficit gain outside the search range
    hp = const(10 ** (100 / 20))
    with pytest.raises(DesignError, match="unattainable"):
        design.optimize_target_gain(const(10 ** (-100 / 20)), hp, SPEC)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_deficits_monotone_in_gain(seed):
    rng = np.random.default_rng(seed)
    hp = notched_primary(rng, 1024)
    d = mag(10 ** (rng.normal(0, 8, 513) / 20), 1024)
    lower_gap, upper_gap = design.deficit_terms(d, hp, SPEC)
    vals = np.array([design.deficits(g, lower_gap, upper_gap)
                     for g in np.linspace(-40, 40, 161)])
    assert np.all(np.diff(vals[:, 0]) <= 0)
    assert np.all(np.diff(vals[:, 1]) >= 0)


# -- supporting filter -------------------------------------------------------

def test_supporting_magnitude_examples():
    n = NFFT // 2 + 1
    hp = np.ones(n)
    hs = np.full(n, 2.0)
    d = np.ones(n)
    d[10] = np.sqrt(5.0)
    w = design.supporting_magnitude(mag(hp), mag(hs), mag(d)).values
    assert w[10] == pytest.approx(1.0, rel=1e-15)
    assert np.all(w[np.arange(n) != 10] == 0.0)


def test_supporting_rejects_negative_radicand():
    with pytest.raises(DesignError, match="negative radicand"):
        design.supporting_magnitude(const(1.0), const(1.0), const(0.5))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_reconstruction_identity(seed):
    hp, hs, d_mod = random_triple(np.random.default_rng(seed))
    w = design.supporting_magnitude(hp, hs, d_mod)
    assert np.all(w.values >= 0)
    band = SPEC.in_band(hp.frequencies)
    rebuilt = np.sqrt(hp.values ** 2 + (w.values * hs.values) ** 2)
    rel = np.abs(rebuilt - d_mod.values) / d_mod.values
    assert rel[band].max() < 1e-9
    assert design.reconstruction_residual(hp, hs, d_mod, w) < 1e-9


def test_supporting_filter_has_requested_taps():
    hp, hs, d_mod = random_triple(np.random.default_rng(6), 2 ** 14)
    filt = design.design_supporting_filter(hp, hs, d_mod, DesignConfig(n_fft=2 ** 14))
    assert len(filt) == 8192
    assert filt.kind == design.PROPOSED
    assert filt.design_magnitude is not None


# -- traditional inverse -----------------------------------------------------

def test_inverse_magnitude_examples():
    cfg = DesignConfig()
    n = NFFT // 2 + 1
    h = np.ones(n)
    h[bin_of(1000.0)] = 0.01
    w = design.inverse_magnitude(mag(h), const(1.0), cfg).values
    assert w[bin_of(200.0)] == pytest.approx(1 / 1.001, rel=1e-12)
    assert w[bin_of(1000.0)] == pytest.approx(0.01 / (0.0001 + 0.00001), rel=1e-12)
    assert w[bin_of(1000.0)] == pytest.approx(90.909, abs=1e-3)
    assert w[bin_of(21000.0)] == pytest.approx(0.5, rel=1e-12)
    assert w[0] == pytest.approx(0.5, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100.0))
def test_inverse_without_regularization_is_exact(seed, scale):
    rng = np.random.default_rng(seed)
    n = 513
    h = mag(10 ** (rng.uniform(-40, 20, n) / 20), 1024)
    d = mag(10 ** (rng.uniform(-20, 20, n) / 20), 1024)
    cfg = DesignConfig(beta_in_band=0.0, beta_out_band=0.0, n_taps=512, n_fft=1024)
    w = design.inverse_magnitude(h, d, cfg).values
    np.testing.assert_allclose(w * h.values, d.values, rtol=1e-12)
    # common scaling of h and d leaves the beta-free inverse unchanged
    w2 = design.inverse_magnitude(h.with_values(h.values * scale),
                                  d.with_values(d.values * scale), cfg).values
    np.testing.assert_allclose(w2, w, rtol=1e-12)


def test_inverse_rejects_grid_mismatch():
    with pytest.raises(DesignError):
        design.inverse_magnitude(const(1.0, 1024), const(1.0, 2048), DesignConfig())


# -- configuration and realization -------------------------------------------

@pytest.mark.parametrize("kwargs", [
    {"n_taps": 1000},
    {"delay_s": 0.001},
    {"delay_s": 0.06},
    {"beta_in_band": -1.0},
    {"n_taps": 2 ** 17},
])
def test_design_config_validation(kwargs):
    with pytest.raises(DesignError):
        DesignConfig(**kwargs)


@pytest.mark.parametrize("kwargs", [
    {"compensation_band_hz": (500.0, 100.0)},
    {"precedence_thresholds": (((70.0, 500.0), 10.0),)},
    {"precedence_thresholds": (((70.0, 400.0), 10.0), ((500.0, 20000.0), 6.0))},
    {"precedence_thresholds": (((70.0, 500.0), 0.0), ((500.0, 20000.0), 6.0))},
])
def test_target_spec_validation(kwargs):
    with pytest.raises(DesignError):
        TargetSpec(**kwargs)


def test_filter_rejects_unknown_kind_and_nan():
    with pytest.raises(DesignError):
        design.CompensationFilter(np.ones(4), "other", FS)
    with pytest.raises(DesignError):
        design.CompensationFilter(np.array([np.nan]), design.PROPOSED, FS)


@pytest.mark.parametrize("method", ["proposed", "traditional"])
def test_realized_filter_tracks_design_magnitude(method):
    # d_mod sits strictly inside the corridor so w has no in-band zeros; the
    # check stays clear of the band edges where w drops to zero
    rng = np.random.default_rng(7)
    cfg = DesignConfig()
    n_fft = cfg.n_fft
    hp = fractional_octave_smooth(notched_primary(rng, n_fft), 1 / 3)
    hs = fractional_octave_smooth(notched_primary(rng, n_fft), 1 / 3)
    if method == "proposed":
        d_mod = design.apply_target_constraints(
            hp.with_values(hp.values * 10 ** (3 / 20)), hp, SPEC)
        filt = design.design_supporting_filter(hp, hs, d_mod, cfg)
    else:
        d = design.build_target(SPEC, hp, design.reference_level_db(hp))
        filt = design.design_traditional_inverse(hp, d, cfg)
    got = fractional_octave_smooth(
        dft_magnitude(ImpulseResponse(filt.taps, FS), n_fft), 1 / 3)
    want = fractional_octave_smooth(filt.design_magnitude, 1 / 3)
    f = hp.frequencies
    band = (f >= 100.0) & (f <= 16000.0)
    err = magnitude_to_db(got.values[band]) - magnitude_to_db(want.values[band])
    assert np.abs(err).max() < 0.5
