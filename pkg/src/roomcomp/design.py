"""Target construction, precedence constraints and the two filter designs."""

from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np

from roomcomp.dsp import (
    MagnitudeSpectrum,
    apply_floor,
    dft,
    magnitude_to_db,
    minimum_phase_fir,
)

PROPOSED = "proposed_supporting"
TRADITIONAL = "traditional_inverse"

SEARCH_RANGE_DB = 60.0
GAIN_TOLERANCE_DB = 1e-6


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class Flat:
    kind: str = field(default="flat", init=False)


@dataclass(frozen=True)
class Sloped:
    """Level falling linearly in log-frequency by ``total_drop_db``."""

    total_drop_db: float = 3.0
    f_lo_hz: float = 20.0
    f_hi_hz: float = 20000.0
    kind: str = field(default="sloped", init=False)

    def __post_init__(self):
        if self.f_lo_hz >= self.f_hi_hz:
            raise DesignError("sloped target needs f_lo_hz < f_hi_hz")


@dataclass(frozen=True)
class TargetSpec:
    mode: object = Flat()
    compensation_band_hz: Tuple[float, float] = (70.0, 20000.0)
    precedence_thresholds: Tuple[Tuple[Tuple[float, float], float], ...] = (
        ((70.0, 500.0), 10.0),
        ((500.0, 20000.0), 6.0),
    )
    equal_deficit_band_hz: Tuple[float, float] = (70.0, 10000.0)

    def __post_init__(self):
        bands = tuple((tuple(float(v) for v in b), float(t))
                      for b, t in self.precedence_thresholds)
        object.__setattr__(self, "precedence_thresholds", bands)
        object.__setattr__(self, "compensation_band_hz",
                           tuple(float(v) for v in self.compensation_band_hz))
        object.__setattr__(self, "equal_deficit_band_hz",
                           tuple(float(v) for v in self.equal_deficit_band_hz))
        lo, hi = self.compensation_band_hz
        if not 0 <= lo < hi:
            raise DesignError("compensation band must satisfy 0 <= low < high")
        if not bands:
            raise DesignError("at least one precedence threshold band is required")
        prev_hi = None
        for (b_lo, b_hi), t in bands:
            if b_lo >= b_hi:
                raise DesignError(f"threshold band ({b_lo}, {b_hi}) is empty")
            if t <= 0:
                raise DesignError("precedence thresholds must be > 0 dB")
            if prev_hi is not None and b_lo != prev_hi:
                raise DesignError("threshold bands must be contiguous and ascending")
            prev_hi = b_hi
        if bands[0][0][0] > lo or bands[-1][0][1] < hi:
            raise DesignError("threshold bands must cover the compensation band")

    def threshold_db(self, freqs):
        """Precedence limit per frequency; a shared edge belongs to the lower band."""
        freqs = np.asarray(freqs, dtype=np.float64)
        out = np.full(freqs.shape, np.nan)
        for (b_lo, b_hi), t in reversed(self.precedence_thresholds):
            out[(freqs >= b_lo) & (freqs <= b_hi)] = t
        return out

    def in_band(self, freqs):
        lo, hi = self.compensation_band_hz
        return (freqs >= lo) & (freqs <= hi)


@dataclass(frozen=True)
class DesignConfig:
    n_taps: int = 8192
    smoothing_fraction: float = 1.0 / 3.0
    delay_s: float = 0.010
    beta_in_band: float = 0.001
    beta_out_band: float = 1.0
    sample_rate_hz: int = 44100
    n_fft: int = 2 ** 16

    def __post_init__(self):
        n = int(self.n_taps)
        if n < 1 or n & (n - 1):
            raise DesignError(f"n_taps must be a power of two, got {self.n_taps}")
        if not 0.002 <= self.delay_s <= 0.050:
            raise DesignError("delay_s must lie within the 2-50 ms precedence window")
        if self.beta_in_band < 0 or self.beta_out_band < 0:
            raise DesignError("regularization must be non-negative")
        if n > self.n_fft:
            raise DesignError("n_taps exceeds the design grid n_fft")


@dataclass(frozen=True)
class CompensationFilter:
    taps: np.ndarray
    kind: str
    sample_rate_hz: int
    design_metadata: dict = field(default_factory=dict)
    design_magnitude: Optional[MagnitudeSpectrum] = None

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if not np.all(np.isfinite(taps)):
            raise DesignError("filter taps must be finite")
        if self.kind not in (PROPOSED, TRADITIONAL):
            raise DesignError(f"unknown filter kind {self.kind!r}")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    def __len__(self):
        return self.taps.size


def _metadata(spec, cfg, **extra):
    meta = {"design": asdict(cfg)}
    if spec is not None:
        meta["target"] = asdict(spec)
    meta.update(extra)
    return meta


def average_power_response(irs, n_fft):
    """Root-mean-square magnitude over several responses, per bin."""
    irs = list(irs)
    if not irs:
        raise DesignError("at least one impulse response is required")
    fs = irs[0].sample_rate_hz
    if any(ir.sample_rate_hz != fs for ir in irs):
        raise DesignError("impulse responses have mismatched sample rates")
    power = np.zeros(n_fft // 2 + 1)
    for ir in irs:
        power += np.abs(dft(ir, n_fft).values) ** 2
    return MagnitudeSpectrum(np.sqrt(power / len(irs)), n_fft, fs)


def reference_level_db(primary_mag, band_hz=(70.0, 20000.0)):
    """Mean level of ``primary_mag`` in dB, weighted uniformly over log-frequency."""
    f = primary_mag.frequencies
    m = (f >= band_hz[0]) & (f <= band_hz[1]) & (f > 0)
    if not np.any(m):
        raise DesignError("no bins inside the reference band")
    level = magnitude_to_db(apply_floor(primary_mag.values)[m])
    weights = 1.0 / f[m]
    return float(np.sum(level * weights) / np.sum(weights))


def build_target(spec, primary_mag, reference_level_db):
    """Unconstrained target magnitude on ``primary_mag``'s grid.

    Outside the compensation band the target is the primary response
    itself, so no correction is attempted there.
    """
    f = primary_mag.frequencies
    mode = spec.mode
    if isinstance(mode, Sloped):
        lf = np.log10(np.clip(f, mode.f_lo_hz, mode.f_hi_hz))
        frac = (lf - np.log10(mode.f_lo_hz)) / (
            np.log10(mode.f_hi_hz) - np.log10(mode.f_lo_hz))
        level = reference_level_db - mode.total_drop_db * frac
    else:
        level = np.full(f.shape, float(reference_level_db))
    target = 10.0 ** (level / 20.0)
    target = np.where(spec.in_band(f), target, primary_mag.values)
    return primary_mag.with_values(target)


def precedence_limit(hp, spec):
    """``hp`` raised by the precedence threshold; NaN outside the threshold bands."""
    t = spec.threshold_db(hp.frequencies)
    return hp.values * 10.0 ** (t / 20.0)


def apply_target_constraints(d, hp, spec):
    """Clamp ``d`` between ``hp`` and its precedence limit inside the band.

    Outside the compensation band the result equals ``hp``.
    """
    if not d.same_grid(hp):
        raise DesignError("target and primary response are on different grids")
    f = hp.frequencies
    band = spec.in_band(f)
    lim = precedence_limit(hp, spec)
    out = hp.values.copy()
    clamped = np.maximum(d.values[band], hp.values[band])
    out[band] = np.minimum(clamped, lim[band])
    return hp.with_values(out)


def deficit_terms(d_unscaled, hp, spec):
    """dB gaps used by the equal-deficit optimizer, restricted to its band.

    Returns ``(lower_gap, upper_gap)`` such that for a gain ``g``::

        lower_deficit(g) = sum(max(0, lower_gap - g))
        upper_deficit(g) = sum(max(0, g - upper_gap))
    """
    f = hp.frequencies
    lo, hi = spec.equal_deficit_band_hz
    m = (f >= lo) & (f <= hi)
    if not np.any(m):
        raise DesignError("no bins inside the equal-deficit band")
    hp_db = magnitude_to_db(apply_floor(hp.values)[m])
    d_db = magnitude_to_db(apply_floor(d_unscaled.values)[m])
    lim_db = hp_db + spec.threshold_db(f[m])
    return hp_db - d_db, lim_db - d_db


def deficits(g, lower_gap, upper_gap):
    return (float(np.sum(np.maximum(0.0, lower_gap - g))),
            float(np.sum(np.maximum(0.0, g - upper_gap))))


def optimize_target_gain(d_unscaled, hp, spec):
    """Gain in dB that equalizes the two constraint deficits.

    The lower deficit sums how far the scaled target falls below ``hp`` and
    the upper deficit how far it rises above the precedence limit, both in
    dB over the equal-deficit band. Their difference is monotone in the
    gain, so the balance point is found by bisection. If both deficits
    vanish over an interval, the gain of smallest magnitude in it is
    returned.
    """
    lower_gap, upper_gap = deficit_terms(d_unscaled, hp, spec)
    g_a = float(lower_gap.max())
    g_b = float(upper_gap.min())
    if g_a <= g_b:
        if g_a > SEARCH_RANGE_DB or g_b < -SEARCH_RANGE_DB:
            raise DesignError("deficit balance unattainable")
        return float(np.clip(0.0, g_a, g_b))

    def balance(g):
        lo, up = deficits(g, lower_gap, upper_gap)
        return lo - up

    a, b = -SEARCH_RANGE_DB, SEARCH_RANGE_DB
    fa, fb = balance(a), balance(b)
    if fa < 0 or fb > 0:
        raise DesignError("deficit balance unattainable")
    if fa == 0:
        return a
    if fb == 0:
        return b
    while b - a > GAIN_TOLERANCE_DB:
        mid = 0.5 * (a + b)
        fm = balance(mid)
        if fm == 0:
            return mid
        if fm > 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def supporting_magnitude(hp, hs, d_mod):
    """Magnitude that fills the energy gap between ``hp`` and ``d_mod``."""
    if not (hp.same_grid(hs) and hp.same_grid(d_mod)):
        raise DesignError("spectra are on different grids")
    radicand = d_mod.values ** 2 - hp.values ** 2
    if np.any(radicand < 0):
        raise DesignError("negative radicand")
    return hp.with_values(np.sqrt(radicand) / apply_floor(hs.values))


def design_supporting_filter(hp, hs, d_mod, cfg, spec=None, gain_db=None):
    """Supporting-source filter: energy difference over the supporting response.

    The design magnitude is kept on the filter as ``design_magnitude``; the
    taps are its minimum-phase realization.
    """
    w = supporting_magnitude(hp, hs, d_mod)
    taps = minimum_phase_fir(w, cfg.n_taps)
    meta = _metadata(spec, cfg, gain_db=gain_db)
    return CompensationFilter(taps, PROPOSED, hp.sample_rate_hz, meta, w)


def regularization(freqs, cfg, band_hz):
    in_band = (freqs >= band_hz[0]) & (freqs <= band_hz[1])
    return np.where(in_band, cfg.beta_in_band, cfg.beta_out_band)


def inverse_magnitude(h, d, cfg, band_hz=(70.0, 20000.0)):
    """Regularized magnitude inverse ``h d / (h^2 + beta h)``."""
    if not h.same_grid(d):
        raise DesignError("spectra are on different grids")
    hv = apply_floor(h.values)
    if np.any(hv <= 0):
        raise DesignError("non-positive magnitude")
    beta = regularization(h.frequencies, cfg, band_hz)
    return h.with_values(hv * d.values / (hv * hv + beta * hv))


def design_traditional_inverse(h, d, cfg, band_hz=(70.0, 20000.0), spec=None,
                               gain_db=None):
    """Regularized inverse filter applied to the primary loudspeaker."""
    w = inverse_magnitude(h, d, cfg, band_hz)
    taps = minimum_phase_fir(w, cfg.n_taps)
    meta = _metadata(spec, cfg, gain_db=gain_db)
    return CompensationFilter(taps, TRADITIONAL, h.sample_rate_hz, meta, w)


def reconstruction_residual(hp, hs, d_mod, w):
    """Largest relative error of ``sqrt(hp^2 + (w hs)^2)`` against ``d_mod``."""
    hs_f = apply_floor(hs.values)
    rebuilt = np.sqrt(hp.values ** 2 + (w.values * hs_f) ** 2)
    scale = np.maximum(np.abs(d_mod.values), np.finfo(float).tiny)
    return float(np.max(np.abs(rebuilt - d_mod.values) / scale))
