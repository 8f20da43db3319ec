"""Direct/reverberant splitting, DRR curves, spectral deviation and decay
analysis."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from roomcomp.dsp import (
    ImpulseResponse,
    dft,
    next_pow2,
    power_to_db,
    smooth_power,
)

ONSET_THRESHOLD_DB = -20.0
DEFAULT_DIRECT_WINDOW_S = 0.0025
REVERB_FLOOR_DB = -120.0


@dataclass(frozen=True)
class DrrCurve:
    """DRR in dB per frequency; ``+inf`` where the reverberant part is silent."""

    frequencies_hz: np.ndarray
    drr_db: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies_hz, dtype=np.float64)
        d = np.asarray(self.drr_db, dtype=np.float64)
        if f.shape != d.shape:
            raise ValueError("frequency and DRR arrays differ in length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ValueError("frequencies must be strictly ascending")
        object.__setattr__(self, "frequencies_hz", f)
        object.__setattr__(self, "drr_db", d)

    def band(self, f_low, f_high):
        m = (self.frequencies_hz >= f_low) & (self.frequencies_hz <= f_high)
        return self.frequencies_hz[m], self.drr_db[m]


@dataclass(frozen=True)
class StrictSample:
    """Direct part is the single onset sample."""


@dataclass(frozen=True)
class Windowed:
    """Direct part is a window of ``window_s`` seconds centered on the onset."""

    window_s: float = DEFAULT_DIRECT_WINDOW_S


@dataclass(frozen=True)
class SplitIR:
    direct: ImpulseResponse
    reverberant: ImpulseResponse
    split_mode: object
    direct_start: int
    direct_stop: int


def detect_direct_onset(ir, threshold_db=ONSET_THRESHOLD_DB):
    """First sample whose magnitude exceeds the peak by ``threshold_db``."""
    x = np.abs(ir.samples)
    peak = float(x.max()) if x.size else 0.0
    if peak == 0.0:
        raise ValueError("cannot detect onset of an all-zero response")
    return int(np.argmax(x > peak * 10.0 ** (threshold_db / 20.0)))


def direct_window(n1, sample_rate_hz, mode):
    """Half-open sample range ``[start, stop)`` owned by the direct sound."""
    if isinstance(mode, StrictSample):
        return n1, n1 + 1
    half = int(round(mode.window_s * sample_rate_hz / 2.0))
    return max(0, n1 - half), n1 + half + 1


def split_direct_reverberant(ir, mode=Windowed(), onset=None):
    """Partition ``ir`` into direct and reverberant parts.

    The onset is taken from ``onset``, then ``ir.direct_onset_index``, and
    is detected otherwise. The two parts sum to ``ir`` exactly.
    """
    n1 = onset
    if n1 is None:
        n1 = ir.direct_onset_index
    if n1 is None:
        n1 = detect_direct_onset(ir)
    start, stop = direct_window(int(n1), ir.sample_rate_hz, mode)
    stop = min(stop, len(ir))
    direct = np.zeros(len(ir))
    direct[start:stop] = ir.samples[start:stop]
    reverberant = ir.samples.copy()
    reverberant[start:stop] = 0.0
    fs = ir.sample_rate_hz
    return SplitIR(ImpulseResponse(direct, fs, n1),
                   ImpulseResponse(reverberant, fs, n1), mode, start, stop)


def _common_nfft(n_fft, *irs):
    need = max(len(ir) for ir in irs)
    return n_fft if n_fft is not None else max(2 ** 16, next_pow2(need))


def _pad_sum(*arrays):
    n = max(a.size for a in arrays)
    out = np.zeros(n)
    for a in arrays:
        out[:a.size] += a
    return out


def _ratio_curve(p_dir, p_rev, n_fft, fs):
    floor = float(p_rev.max()) * 10.0 ** (REVERB_FLOOR_DB / 10.0) if p_rev.size else 0.0
    silent = (p_rev <= floor) | (p_rev == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        drr = power_to_db(p_dir) - power_to_db(p_rev)
    drr = np.where(silent, np.inf, drr)
    freqs = np.arange(p_dir.size) * fs / n_fft
    return DrrCurve(freqs, drr)


def drr_spectrum(direct, reverberant, n_fft=None, smoothing_fraction=1.0 / 3.0):
    """Frequency-dependent DRR of a direct/reverberant pair.

    Both power spectra are fractional-octave smoothed before the ratio is
    taken. ``smoothing_fraction=0`` gives the bin-wise ratio.
    """
    if direct.sample_rate_hz != reverberant.sample_rate_hz:
        raise ValueError("sample rates differ")
    fs = direct.sample_rate_hz
    n_fft = _common_nfft(n_fft, direct, reverberant)
    p_dir = np.abs(dft(direct, n_fft).values) ** 2
    p_rev = np.abs(dft(reverberant, n_fft).values) ** 2
    p_dir = smooth_power(p_dir, n_fft, fs, smoothing_fraction)
    p_rev = smooth_power(p_rev, n_fft, fs, smoothing_fraction)
    if not np.any(p_rev > 0):
        return DrrCurve(np.arange(p_dir.size) * fs / n_fft,
                        np.full(p_dir.size, np.inf))
    return _ratio_curve(p_dir, p_rev, n_fft, fs)


def drr_proposed(primary_split, supporting_full, n_fft=None,
                 smoothing_fraction=1.0 / 3.0):
    """DRR with the supporting contribution counted as reverberant sound.

    The supporting response is added to the primary's reverberant part in
    the time domain before transforming.
    """
    rev = primary_split.reverberant
    if supporting_full.sample_rate_hz != rev.sample_rate_hz:
        raise ValueError("sample rates differ")
    total = ImpulseResponse(_pad_sum(rev.samples, supporting_full.samples),
                            rev.sample_rate_hz)
    return drr_spectrum(primary_split.direct, total, n_fft, smoothing_fraction)


def spectral_deviation(spec, f_low_hz=100.0, f_high_hz=20000.0):
    """RMS deviation in dB of a magnitude spectrum from its in-band mean.

    Bins with frequency in ``[f_low_hz, f_high_hz]`` are included. The mean
    divides by the bin count and the variance by the count minus one.
    """
    f = spec.frequencies
    m = (f >= f_low_hz) & (f <= f_high_hz)
    count = int(m.sum())
    if count < 2:
        raise ValueError(
            f"fewer than 2 bins between {f_low_hz} and {f_high_hz} Hz")
    level = 20.0 * np.log10(np.maximum(spec.values[m], np.finfo(float).tiny))
    mean = level.sum() / count
    return float(np.sqrt(np.sum((level - mean) ** 2) / (count - 1)))


def band_std_db(curve, f_low=100.0, f_high=10000.0):
    """Standard deviation of a DRR curve (finite bins only) over a band."""
    _, d = curve.band(f_low, f_high)
    d = d[np.isfinite(d)]
    return float(np.std(d))


def schroeder_decay(ir):
    """Backward-integrated energy decay curve in dB, normalized to 0 dB."""
    e = np.cumsum(ir.samples[::-1] ** 2)[::-1]
    if e[0] <= 0:
        raise ValueError("cannot integrate an all-zero response")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(e / e[0])


def decay_time(ir, start_db=-5.0, stop_db=-35.0):
    """Reverberation time from a line fit to the Schroeder curve.

    The fit spans ``start_db`` to ``stop_db`` and is extrapolated to 60 dB
    of decay (T30 with the defaults).
    """
    edc = schroeder_decay(ir)
    i0 = int(np.argmax(edc <= start_db))
    i1 = int(np.argmax(edc <= stop_db))
    if edc[i1] > stop_db or i1 - i0 < 2:
        raise ValueError(f"decay does not reach {stop_db} dB")
    t = np.arange(i0, i1) / ir.sample_rate_hz
    slope = np.polyfit(t, edc[i0:i1], 1)[0]
    return float(-60.0 / slope)


def band_energy_ratio(direct, reverberant, f_low, f_high, order=4):
    """Time-domain DRR in one band: Butterworth band-pass, then energy ratio."""
    from scipy import signal

    fs = direct.sample_rate_hz
    sos = signal.butter(order, [f_low, f_high], btype="bandpass", fs=fs,
                        output="sos")
    pad = int(fs * 0.25)
    d = signal.sosfilt(sos, np.concatenate([direct.samples, np.zeros(pad)]))
    r = signal.sosfilt(sos, np.concatenate([reverberant.samples, np.zeros(pad)]))
    return float(10.0 * np.log10(np.sum(d ** 2) / np.sum(r ** 2)))


def magnitude_of(ir, n_fft: Optional[int] = None):
    """Magnitude spectrum on an automatically sized grid."""
    n_fft = _common_nfft(n_fft, ir)
    return dft(ir, n_fft).magnitude()


__all__ = [
    "DrrCurve",
    "SplitIR",
    "StrictSample",
    "Windowed",
    "band_energy_ratio",
    "band_std_db",
    "decay_time",
    "detect_direct_onset",
    "drr_proposed",
    "drr_spectrum",
    "schroeder_decay",
    "spectral_deviation",
    "split_direct_reverberant",
]
