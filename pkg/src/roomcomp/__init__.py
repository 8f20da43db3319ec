"""Room compensation with delayed, decorrelated supporting loudspeakers."""

from roomcomp.dsp import (
    ComplexSpectrum,
    ImpulseResponse,
    MagnitudeSpectrum,
    VelvetNoise,
    convolve,
    dft_magnitude,
    fractional_octave_smooth,
    generate_velvet_noise,
    minimum_phase_fir,
)

__version__ = "0.1.0"

__all__ = [
    "ComplexSpectrum",
    "ImpulseResponse",
    "MagnitudeSpectrum",
    "VelvetNoise",
    "convolve",
    "dft_magnitude",
    "fractional_octave_smooth",
    "generate_velvet_noise",
    "minimum_phase_fir",
]
