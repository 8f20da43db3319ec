"""Shoebox image-source simulator with separable direct and reverberant parts.

Each image contributes a 32-tap Hann-windowed sinc pulse at its exact
arrival time. Per-band reflection losses and directivity are applied by
accumulating one pulse train per octave band and passing the trains
through a zero-phase filter bank whose bands sum to a unit impulse, so an
image with equal gains in all bands stays an undistorted pulse and unequal
gains interpolate smoothly between band centers. The direct sound is
filtered separately with a minimum-phase equivalent so it stays causal.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple, Union

import numpy as np

from roomcomp import _kernels
from roomcomp.dsp import (
    ImpulseResponse,
    MagnitudeSpectrum,
    convolve,
    minimum_phase_fir,
)

BAND_CENTERS_HZ = (125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0)
SURFACES = ("x0", "x1", "y0", "y1", "floor", "ceiling")
_BANK_NFFT = 2 ** 15
_BANK_TAPS = 2 ** 13
_BANK_HALF_S = 4096 / 44100


class GeometryError(ValueError):
    """Invalid room, source or receiver geometry."""


@dataclass(frozen=True)
class Omni:
    kind: str = field(default="omni", init=False)


@dataclass(frozen=True)
class TwoWay:
    """Omni below ``transition_low_hz``, cardioid-like above ``transition_high_hz``."""

    transition_low_hz: float = 500.0
    transition_high_hz: float = 4000.0
    rear_attenuation_db: float = 20.0
    kind: str = field(default="two_way", init=False)

    def __post_init__(self):
        if not 0 < self.transition_low_hz < self.transition_high_hz:
            raise GeometryError("two_way transitions must satisfy 0 < low < high")
        if self.rear_attenuation_db < 0:
            raise GeometryError("rear_attenuation_db must be >= 0")


Directivity = Union[Omni, TwoWay]


@dataclass(frozen=True)
class RoomSpec:
    dimensions_m: Tuple[float, float, float] = (7.4, 4.6, 2.6)
    # rows follow SURFACES, columns follow BAND_CENTERS_HZ
    absorption: Tuple[Tuple[float, ...], ...] = ((0.3,) * 6,) * 6
    speed_of_sound_m_s: float = 343.0
    max_reflection_time_s: float = 1.0

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions_m)
        if len(dims) != 3 or min(dims) <= 0:
            raise GeometryError("room dimensions must be three positive lengths")
        alpha = np.asarray(self.absorption, dtype=np.float64)
        if alpha.shape != (len(SURFACES), len(BAND_CENTERS_HZ)):
            raise GeometryError(
                f"absorption must be {len(SURFACES)}x{len(BAND_CENTERS_HZ)}, "
                f"got {alpha.shape}")
        if np.any(alpha <= 0) or np.any(alpha > 1):
            raise GeometryError("absorption coefficients must lie in (0, 1]")
        if self.speed_of_sound_m_s <= 0 or self.max_reflection_time_s <= 0:
            raise GeometryError("speed of sound and reflection time must be positive")
        object.__setattr__(self, "dimensions_m", dims)
        object.__setattr__(self, "absorption",
                           tuple(tuple(float(a) for a in row) for row in alpha))

    @classmethod
    def uniform(cls, dimensions_m, alpha, **kw):
        return cls(dimensions_m, ((alpha,) * 6,) * 6, **kw)

    @property
    def volume(self):
        lx, ly, lz = self.dimensions_m
        return lx * ly * lz

    @property
    def surface_area(self):
        lx, ly, lz = self.dimensions_m
        return 2.0 * (lx * ly + lx * lz + ly * lz)

    def reflection_factors(self):
        return np.sqrt(1.0 - np.asarray(self.absorption))

    def contains(self, p):
        p = np.asarray(p, dtype=np.float64)
        return bool(np.all(p > 0) and np.all(p < np.asarray(self.dimensions_m)))


@dataclass(frozen=True)
class SourceSpec:
    position_m: Tuple[float, float, float]
    aim_azimuth_deg: float = 0.0
    directivity: Directivity = Omni()

    def __post_init__(self):
        object.__setattr__(self, "position_m",
                           tuple(float(v) for v in self.position_m))

    def aim_vector(self):
        az = np.deg2rad(self.aim_azimuth_deg)
        return np.array([np.cos(az), np.sin(az), 0.0])


@dataclass(frozen=True)
class ReceiverSpec:
    position_m: Tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "position_m",
                           tuple(float(v) for v in self.position_m))


def directivity_gain(src, emission_angle_deg, frequency_hz):
    """Linear gain of ``src`` at an angle off its aim axis.

    ``TwoWay`` sources are unity on axis. Off axis, the high-frequency
    pattern is ``r + (1 - r) * (1 + cos(theta)) / 2`` with ``r`` the rear
    attenuation as a linear factor; its dB value is faded in linearly over
    log-frequency between the two transition frequencies.
    """
    d = src.directivity
    if isinstance(d, Omni):
        return 1.0
    rear = 10.0 ** (-d.rear_attenuation_db / 20.0)
    theta = np.deg2rad(emission_angle_deg)
    hi_db = 20.0 * np.log10(rear + (1.0 - rear) * 0.5 * (1.0 + np.cos(theta)))
    if frequency_hz <= d.transition_low_hz:
        t = 0.0
    elif frequency_hz >= d.transition_high_hz:
        t = 1.0
    else:
        t = (np.log(frequency_hz / d.transition_low_hz)
             / np.log(d.transition_high_hz / d.transition_low_hz))
    return float(10.0 ** (t * hi_db / 20.0))


def _lowpass_mag(n_fft, fs, fc):
    # cos^2 roll-off spanning one octave centered on fc
    f = np.arange(n_fft // 2 + 1) * fs / n_fft
    with np.errstate(divide="ignore"):
        x = np.log2(np.maximum(f, 1e-12) / fc)
    t = np.clip(x + 0.5, 0.0, 1.0)
    return np.cos(0.5 * np.pi * t) ** 2


def bank_half_length(fs):
    """Half-length in samples of the zero-phase crossover kernels."""
    return int(round(_BANK_HALF_S * fs))


@lru_cache(maxsize=8)
def _crossover_lowpasses(fs):
    """Zero-phase lowpasses at the geometric band midpoints.

    Row ``k`` holds ``2K+1`` taps centered on index ``K``; the ideal
    cos^2 response is Hann-windowed to that length, so each kernel stays
    real and even and its frequency response stays real.
    """
    half = bank_half_length(fs)
    n_fft = max(_BANK_NFFT, 1 << int(8 * half).bit_length())
    centers = np.asarray(BAND_CENTERS_HZ)
    cuts = np.sqrt(centers[:-1] * centers[1:])
    window = np.hanning(2 * half + 3)[1:-1]
    lows = np.empty((cuts.size, 2 * half + 1))
    for i, fc in enumerate(cuts):
        h = np.fft.irfft(_lowpass_mag(n_fft, fs, fc), n_fft)
        lows[i] = np.roll(h, half)[:2 * half + 1] * window
    lows.setflags(write=False)
    return lows


def band_filter_bank(fs):
    """Zero-phase band filters ``H_b`` (centered on tap ``K``).

    They telescope to a unit impulse at ``K``, and each has a real,
    non-negative frequency response, so a weighted sum interpolates the
    band gains without phase interference between neighbouring bands.
    """
    lows = _crossover_lowpasses(int(fs))
    half = (lows.shape[1] - 1) // 2
    n_bands = len(BAND_CENTERS_HZ)
    delta = np.zeros(lows.shape[1])
    delta[half] = 1.0
    bank = np.empty((n_bands, lows.shape[1]))
    bank[0] = lows[0]
    for b in range(1, n_bands - 1):
        bank[b] = lows[b] - lows[b - 1]
    bank[-1] = delta - lows[-1]
    return bank


def band_interpolated_magnitude(gains, n_fft, fs):
    """Magnitude ``sum_b g_b |H_b(f)|`` on an ``n_fft`` grid."""
    bank = band_filter_bank(fs)
    half = (bank.shape[1] - 1) // 2
    out = np.zeros(n_fft // 2 + 1)
    for g, h in zip(gains, bank):
        # undo the centering shift so the response is real
        out += g * np.real(np.fft.rfft(np.roll(np.pad(h, (0, n_fft - h.size)),
                                                -half)))
    return np.maximum(out, 0.0)


def _apply_bank(acc, fs):
    # sum_b H_b * acc_b rewritten as acc_top + sum_k L_k * (acc_k - acc_{k+1})
    lows = _crossover_lowpasses(int(fs))
    half = (lows.shape[1] - 1) // 2
    n = acc.shape[1]
    out = acc[-1].copy()
    for k in range(lows.shape[0]):
        diff = acc[k] - acc[k + 1]
        if not np.any(diff):
            continue
        out += convolve(diff, lows[k])[half:half + n]
    return out


def _direct_response(direct_acc, fs):
    """Causal direct sound: the pulse through a minimum-phase band filter.

    The zeroth-order image is a single pulse scaled per band. Equal band
    gains return the pulse untouched; otherwise the interpolated band
    magnitude is realized as a minimum-phase FIR so nothing precedes the
    arrival time.
    """
    sums = direct_acc.sum(axis=1)
    ref = int(np.argmax(np.abs(sums)))
    if sums[ref] == 0.0:
        return np.zeros(direct_acc.shape[1])
    rel = sums / sums[ref]
    pulse = direct_acc[ref]
    if np.all(rel == 1.0):
        return pulse.copy()
    mag = band_interpolated_magnitude(rel, _BANK_NFFT, fs)
    fir = minimum_phase_fir(MagnitudeSpectrum(mag, _BANK_NFFT, fs), _BANK_TAPS)
    return convolve(pulse, fir)[:pulse.size]


def _validate(room, src, rcv):
    if not room.contains(src.position_m):
        raise GeometryError(f"source at {src.position_m} is outside the room")
    if not room.contains(rcv.position_m):
        raise GeometryError(f"receiver at {rcv.position_m} is outside the room")
    dist = float(np.linalg.norm(np.subtract(src.position_m, rcv.position_m)))
    if dist == 0.0:
        raise GeometryError("source and receiver coincide")
    if dist / room.speed_of_sound_m_s > room.max_reflection_time_s:
        raise GeometryError("max_reflection_time_s shorter than the direct path")
    return dist


def simulate_components(room, src, rcv, sample_rate_hz=44100, use_numba=None):
    """Direct and reverberant responses of one source-receiver pair.

    The direct part holds only the zeroth-order image; every other image up
    to ``room.max_reflection_time_s`` goes to the reverberant part.

    Returns
    -------
    direct, reverberant : ImpulseResponse
    """
    dist = _validate(room, src, rcv)
    fs = int(sample_rate_hz)
    c = room.speed_of_sound_m_s
    n_samples = int(np.ceil(room.max_reflection_time_s * fs)) + 1
    onset = int(round(fs * dist / c))
    if isinstance(src.directivity, TwoWay):
        kind = _kernels.DIR_TWO_WAY
        d = src.directivity
        params = (d.transition_low_hz, d.transition_high_hz, d.rear_attenuation_db)
    else:
        kind = _kernels.DIR_OMNI
        params = (1.0, 2.0, 0.0)
    direct_acc, rev_acc = _kernels.image_accumulate(
        src.position_m, rcv.position_m, room.dimensions_m,
        room.reflection_factors(), kind, src.aim_vector(), params,
        BAND_CENTERS_HZ, c, fs, n_samples, use_numba=use_numba)
    direct = _direct_response(direct_acc, fs)
    reverberant = _apply_bank(rev_acc, fs)
    # the zero-phase bank rings symmetrically; nothing may precede the
    # direct sound, so reflection pre-ringing before it is cut
    first = np.flatnonzero(direct)
    reverberant[:first[0] if first.size else onset] = 0.0
    return (ImpulseResponse(direct, fs, onset),
            ImpulseResponse(reverberant, fs, onset))


def simulate_rir(room, src, rcv, sample_rate_hz=44100, use_numba=None):
    """Full response: the sample-wise sum of :func:`simulate_components`."""
    direct, reverberant = simulate_components(room, src, rcv, sample_rate_hz,
                                              use_numba=use_numba)
    return ImpulseResponse(direct.samples + reverberant.samples,
                           direct.sample_rate_hz, direct.direct_onset_index)


def sabine_t60(room, band=None):
    """Sabine reverberation time ``0.161 V / A`` using mean surface absorption."""
    lx, ly, lz = room.dimensions_m
    areas = np.array([ly * lz, ly * lz, lx * lz, lx * lz, lx * ly, lx * ly])
    alpha = np.asarray(room.absorption)
    alpha = alpha.mean(axis=1) if band is None else alpha[:, band]
    return 0.161 * room.volume / float(np.dot(areas, alpha))
