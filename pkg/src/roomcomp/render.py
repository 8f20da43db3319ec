"""Compose compensated system responses for both methods."""

from dataclasses import dataclass, field
from typing import List

import numpy as np

from roomcomp.design import PROPOSED, TRADITIONAL
from roomcomp.dsp import ImpulseResponse, convolve, sparse_convolve


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class SystemLayout:
    primary_distance_m: float
    supporting_distance_m: float
    speed_of_sound_m_s: float = 343.0
    precedence_delay_s: float = 0.010

    def __post_init__(self):
        if self.primary_distance_m <= 0 or self.supporting_distance_m <= 0:
            raise RenderError("loudspeaker distances must be positive")
        if self.speed_of_sound_m_s <= 0:
            raise RenderError("speed of sound must be positive")
        if not 0.002 <= self.precedence_delay_s <= 0.050:
            raise RenderError("precedence delay must lie within 2-50 ms")


def compute_supporting_delay_samples(layout, sample_rate_hz):
    """Delay that lands the supporting wavefront ``precedence_delay_s``
    after the primary one at the listening position."""
    travel = (layout.primary_distance_m - layout.supporting_distance_m) \
        / layout.speed_of_sound_m_s
    delay = int(round(sample_rate_hz * (layout.precedence_delay_s + travel)))
    if delay < 0:
        raise RenderError("supporting source cannot achieve precedence delay")
    return delay


def _check_rate(ir, filt):
    if ir.sample_rate_hz != filt.sample_rate_hz:
        raise RenderError(
            f"sample rate mismatch: response {ir.sample_rate_hz} Hz, "
            f"filter {filt.sample_rate_hz} Hz")


def render_traditional(primary_ir, filt):
    """Primary response through the inverse filter."""
    if filt.kind != TRADITIONAL:
        raise RenderError(f"expected a {TRADITIONAL} filter, got {filt.kind}")
    _check_rate(primary_ir, filt)
    out = convolve(filt.taps, primary_ir.samples)
    return ImpulseResponse(out, primary_ir.sample_rate_hz,
                           primary_ir.direct_onset_index)


def supporting_contribution(supporting_ir, filt, layout, velvet):
    """Filtered, decorrelated and delayed supporting response.

    Order is filter, then velvet noise scaled to unit energy, then an
    integer-sample delay.
    """
    if filt.kind != PROPOSED:
        raise RenderError(f"expected a {PROPOSED} filter, got {filt.kind}")
    _check_rate(supporting_ir, filt)
    fs = supporting_ir.sample_rate_hz
    delay = compute_supporting_delay_samples(layout, fs)
    filtered = convolve(supporting_ir.samples, filt.taps)
    decorrelated = sparse_convolve(filtered, velvet.normalized())
    out = np.zeros(delay + decorrelated.size)
    out[delay:] = decorrelated
    return ImpulseResponse(out, fs)


def _pad_add(a, b):
    out = np.zeros(max(a.size, b.size))
    out[:a.size] = a
    out[:b.size] += b
    return out


def render_proposed(primary_ir, supporting_ir, filt, layout, velvet):
    """Primary response plus the supporting contribution.

    Samples where the contribution is structurally silent, including the
    primary's direct sound, are copied from ``primary_ir`` unchanged. A
    silent supporting path returns the primary response as is, without
    trailing padding.
    """
    _check_rate(primary_ir, filt)
    contrib = supporting_contribution(supporting_ir, filt, layout, velvet)
    if not contrib.samples.any():
        return primary_ir
    out = _pad_add(primary_ir.samples, contrib.samples)
    return ImpulseResponse(out, primary_ir.sample_rate_hz,
                           primary_ir.direct_onset_index)


@dataclass
class PrecedenceReport:
    """Level of the lagging source relative to the precedence limit."""

    bands: List[dict] = field(default_factory=list)
    violations: int = 0
    min_margin_db: float = float("inf")

    def to_dict(self):
        return {"violations": self.violations,
                "min_margin_db": self.min_margin_db,
                "bands": self.bands}


def verify_precedence_margin(primary_mag, supporting_mag, spec):
    """Compare supporting/primary level against the threshold in every band.

    ``margin_db = T(f) - 20 log10(supporting / primary)``; a negative
    margin in the compensation band counts as a violation.
    """
    if not primary_mag.same_grid(supporting_mag):
        raise RenderError("spectra are on different grids")
    f = primary_mag.frequencies
    lo, hi = spec.compensation_band_hz
    tiny = np.finfo(float).tiny
    with np.errstate(divide="ignore"):
        rel = 20.0 * np.log10(np.maximum(supporting_mag.values, tiny)
                              / np.maximum(primary_mag.values, tiny))
    report = PrecedenceReport()
    for i, ((b_lo, b_hi), t) in enumerate(spec.precedence_thresholds):
        b_lo_c, b_hi_c = max(b_lo, lo), min(b_hi, hi)
        m = (f <= b_hi_c) & ((f >= b_lo_c) if i == 0 else (f > b_lo_c))
        if not np.any(m):
            continue
        margin = t - rel[m]
        n_bad = int(np.sum(margin < 0))
        worst = float(margin.min())
        report.bands.append({
            "band_hz": [b_lo_c, b_hi_c],
            "threshold_db": t,
            "min_margin_db": worst,
            "max_relative_level_db": float(rel[m].max()),
            "violations": n_bad,
            "worst_frequency_hz": float(f[m][np.argmin(margin)]),
        })
        report.violations += n_bad
        report.min_margin_db = min(report.min_margin_db, worst)
    return report
