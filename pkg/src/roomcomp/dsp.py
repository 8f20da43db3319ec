"""Core signal containers and operations: spectra, smoothing, minimum phase,
velvet noise and convolution."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import signal

from roomcomp import _kernels

MAG_FLOOR_DB = -100.0
DEFAULT_ANALYSIS_NFFT = 2 ** 16
DEFAULT_VELVET_DENSITY = 2205.0


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ImpulseResponse:
    """Time-domain loudspeaker-room response.

    ``direct_onset_index`` is the sample at which the first wavefront
    arrives, when known.
    """

    samples: np.ndarray
    sample_rate_hz: int
    direct_onset_index: Optional[int] = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("impulse response must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise ValueError("impulse response contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample rate must be positive")
        if self.direct_onset_index is not None:
            n1 = int(self.direct_onset_index)
            if n1 < 0 or n1 >= x.size:
                raise ValueError(
                    f"direct onset {n1} outside response of length {x.size}")
            object.__setattr__(self, "direct_onset_index", n1)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    def energy(self):
        return float(np.dot(self.samples, self.samples))


@dataclass(frozen=True)
class _Spectrum:
    values: np.ndarray
    n_fft: int
    sample_rate_hz: int

    def _check_grid(self):
        if not _is_pow2(int(self.n_fft)):
            raise ValueError(f"n_fft must be a power of two, got {self.n_fft}")
        if self.values.shape != (self.n_fft // 2 + 1,):
            raise ValueError(
                f"expected {self.n_fft // 2 + 1} bins, got {self.values.shape}")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample rate must be positive")

    @property
    def frequencies(self):
        """Bin center frequencies in Hz."""
        return np.arange(self.values.size) * (self.sample_rate_hz / self.n_fft)

    def same_grid(self, other):
        return (self.n_fft == other.n_fft
                and self.sample_rate_hz == other.sample_rate_hz)


@dataclass(frozen=True)
class ComplexSpectrum(_Spectrum):
    """One-sided complex DFT over bins ``0..n_fft/2``."""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        self._check_grid()

    def magnitude(self):
        return MagnitudeSpectrum(np.abs(self.values), self.n_fft,
                                 self.sample_rate_hz)


@dataclass(frozen=True)
class MagnitudeSpectrum(_Spectrum):
    """Non-negative linear magnitude over bins ``0..n_fft/2``."""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("magnitude spectrum contains non-finite values")
        if np.any(v < 0):
            raise ValueError("magnitude spectrum contains negative values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        self._check_grid()

    def with_values(self, values):
        return MagnitudeSpectrum(values, self.n_fft, self.sample_rate_hz)

    def db(self):
        return magnitude_to_db(self.values)


@dataclass(frozen=True)
class VelvetNoise:
    """Sparse ternary sequence with one signed pulse per grid interval."""

    samples: np.ndarray
    density_pulses_per_s: float
    seed: int
    sample_rate_hz: int = 44100
    grid_interval: int = field(default=0)

    def normalized(self):
        """Sequence scaled to unit total energy."""
        energy = float(np.dot(self.samples, self.samples))
        if energy == 0.0:
            raise ValueError("velvet sequence has no pulses")
        return self.samples / np.sqrt(energy)


def magnitude_to_db(mag):
    """``20*log10(|mag|)``; zeros map to ``-inf``."""
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(np.abs(mag))


def db_to_magnitude(db):
    return 10.0 ** (np.asarray(db, dtype=np.float64) / 20.0)


def power_to_db(power):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(power)


def apply_floor(mag, floor_db=MAG_FLOOR_DB):
    """Clamp magnitudes to ``max * 10**(floor_db/20)`` from below."""
    mag = np.asarray(mag, dtype=np.float64)
    peak = float(np.max(mag)) if mag.size else 0.0
    if peak <= 0.0:
        return mag.copy()
    return np.maximum(mag, peak * 10.0 ** (floor_db / 20.0))


def _fit(samples, n_fft, truncate):
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty signal")
    if not _is_pow2(int(n_fft)):
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    if x.size > n_fft and not truncate:
        raise ValueError(
            f"signal of length {x.size} exceeds n_fft={n_fft}; pass truncate=True")
    return x[:n_fft]


def dft(ir, n_fft, truncate=False):
    """One-sided DFT of ``ir`` zero-padded to ``n_fft``."""
    x = _fit(ir.samples, n_fft, truncate)
    return ComplexSpectrum(np.fft.rfft(x, n_fft), n_fft, ir.sample_rate_hz)


def dft_magnitude(ir, n_fft, truncate=False):
    """Magnitude of the one-sided DFT of ``ir``.

    The signal is zero-padded to ``n_fft``; longer signals raise unless
    ``truncate`` is set.
    """
    return dft(ir, n_fft, truncate).magnitude()


def fractional_octave_smooth(spec, fraction):
    """Smooth a magnitude spectrum over ``fraction``-octave windows.

    Each bin becomes the root of the mean power over all bins whose
    frequency lies within ``fraction/2`` octaves either side of it. The
    window is rectangular in log-frequency and clipped at DC and Nyquist.

    Parameters
    ----------
    spec : MagnitudeSpectrum
    fraction : float
        Window width in octaves, e.g. ``1/3``. Zero returns the input.
    """
    if fraction < 0:
        raise ValueError("fraction must be non-negative")
    if fraction == 0:
        return spec
    lo, hi = _kernels.window_bounds(spec.values.size, spec.n_fft,
                                    spec.sample_rate_hz, fraction)
    power = _kernels.window_mean(spec.values ** 2, lo, hi)
    return spec.with_values(np.sqrt(power))


def smooth_power(power, n_fft, sample_rate_hz, fraction):
    """Fractional-octave mean of a raw power array on the DFT grid."""
    power = np.asarray(power, dtype=np.float64)
    if fraction == 0:
        return power.copy()
    lo, hi = _kernels.window_bounds(power.size, n_fft, sample_rate_hz, fraction)
    return _kernels.window_mean(power, lo, hi)


def minimum_phase_fir(target_mag, n_taps, floor_db=MAG_FLOOR_DB):
    """Causal minimum-phase FIR realizing a magnitude response.

    Uses the real cepstrum on the spectrum's own DFT grid: log-magnitude,
    inverse transform, fold the anticausal half onto the causal half,
    exponentiate, and keep the first ``n_taps`` samples.

    Parameters
    ----------
    target_mag : MagnitudeSpectrum
        Desired magnitude. Floored at ``floor_db`` below its peak first.
    n_taps : int
        Output length, at most ``target_mag.n_fft``.

    Returns
    -------
    ndarray
        Filter taps of length ``n_taps``.
    """
    n_fft = target_mag.n_fft
    if n_taps < 1 or n_taps > n_fft:
        raise ValueError(f"n_taps must be in [1, {n_fft}], got {n_taps}")
    mag = apply_floor(target_mag.values, floor_db)
    if np.any(mag <= 0):
        raise ValueError("non-positive magnitude")
    cep = np.fft.irfft(np.log(mag), n_fft)
    fold = np.zeros(n_fft)
    fold[0] = cep[0]
    fold[1:n_fft // 2] = 2.0 * cep[1:n_fft // 2]
    fold[n_fft // 2] = cep[n_fft // 2]
    h = np.fft.irfft(np.exp(np.fft.rfft(fold)), n_fft)
    return h[:n_taps].copy()


def generate_velvet_noise(duration_s, density_pulses_per_s=DEFAULT_VELVET_DENSITY,
                          sample_rate_hz=44100, seed=0):
    """Velvet noise: one ``+-1`` pulse at a random offset in each grid cell.

    The cell length is ``round(sample_rate_hz / density_pulses_per_s)``
    samples. The generator is a fresh ``numpy.random.default_rng(seed)``.
    """
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    if density_pulses_per_s <= 0:
        raise ValueError("density must be positive")
    grid = int(round(sample_rate_hz / density_pulses_per_s))
    if grid < 1:
        raise ValueError(
            f"grid interval below one sample: density {density_pulses_per_s} "
            f"exceeds sample rate {sample_rate_hz}")
    n = int(round(duration_s * sample_rate_hz))
    n_pulses = n // grid
    if n_pulses < 1:
        raise ValueError("duration shorter than one grid interval")
    rng = np.random.default_rng(seed)
    offsets = rng.integers(0, grid, size=n_pulses)
    signs = 2.0 * rng.integers(0, 2, size=n_pulses) - 1.0
    x = np.zeros(n)
    x[np.arange(n_pulses) * grid + offsets] = signs
    x.setflags(write=False)
    return VelvetNoise(x, float(density_pulses_per_s), int(seed),
                       int(sample_rate_hz), grid)


def _support(x):
    nz = np.flatnonzero(x)
    if nz.size == 0:
        return None
    return int(nz[0]), int(nz[-1])


def convolve(a, b):
    """Full linear convolution via FFT; length ``len(a) + len(b) - 1``.

    Samples outside the structural support of the result (before the sum of
    the inputs' first nonzero indices, after the sum of their last) are set
    to exact zeros so FFT rounding noise never leaks into silent regions.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty signal")
    n = a.size + b.size - 1
    sa, sb = _support(a), _support(b)
    if sa is None or sb is None:
        return np.zeros(n)
    out = signal.fftconvolve(a, b)
    out[:sa[0] + sb[0]] = 0.0
    out[sa[1] + sb[1] + 1:] = 0.0
    return out


def sparse_convolve(x, kernel):
    """Convolve with a sparse kernel by summing shifted copies of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if x.size == 0 or kernel.size == 0:
        raise ValueError("empty signal")
    out = np.zeros(x.size + kernel.size - 1)
    for k in np.flatnonzero(kernel):
        out[k:k + x.size] += kernel[k] * x
    return out


def next_pow2(n):
    return 1 << max(0, int(n - 1).bit_length())
