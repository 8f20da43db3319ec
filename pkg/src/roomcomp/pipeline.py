"""End-to-end orchestration: simulate, design, render and analyze."""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from roomcomp import analysis, design, render
from roomcomp.config import pair_name, required_pairs
from roomcomp.dsp import (
    ImpulseResponse,
    fractional_octave_smooth,
    generate_velvet_noise,
    next_pow2,
)
from roomcomp.roomsim import simulate_rir

METHODS = ("proposed", "traditional")
SYSTEMS = ("uncompensated", "traditional", "proposed")


def simulate_all(cfg, use_numba=None):
    """Simulated response for every (source, receiver) pair the channels need."""
    out = {}
    for src_name, i in required_pairs(cfg):
        out[pair_name(src_name, i)] = simulate_rir(
            cfg.room, cfg.sources[src_name], cfg.receivers[i],
            cfg.sample_rate_hz, use_numba=use_numba)
    return out


def _pair_irs(irs, source):
    try:
        return [irs[pair_name(source, i)] for i in range(2)]
    except KeyError as exc:
        raise KeyError(f"missing impulse response {exc.args[0]}") from None


@dataclass
class ChannelDesign:
    hp: object
    hs: object
    target: object
    d_mod: object
    gain_db: float
    filters: Dict[str, design.CompensationFilter] = field(default_factory=dict)

    def report(self, spec):
        f = self.hp.frequencies
        band = spec.in_band(f)
        lim = design.precedence_limit(self.hp, spec)
        d_scaled = self.target.values * 10.0 ** (self.gain_db / 20.0)
        raised = int(np.sum(band & (d_scaled < self.hp.values)))
        capped = int(np.sum(band & (d_scaled > lim)))
        lower_gap, upper_gap = design.deficit_terms(self.target, self.hp, spec)
        lo, up = design.deficits(self.gain_db, lower_gap, upper_gap)
        rep = {
            "gain_db": self.gain_db,
            "in_band_bins": int(band.sum()),
            "bins_raised_to_primary": raised,
            "bins_capped_at_precedence_limit": capped,
            "lower_deficit_db": lo,
            "upper_deficit_db": up,
        }
        if "proposed" in self.filters:
            w = self.filters["proposed"].design_magnitude
            rep["reconstruction_residual"] = design.reconstruction_residual(
                self.hp, self.hs, self.d_mod, w)
        return rep


def design_channel(cfg, channel_name, irs, methods=METHODS):
    """Design the requested filters for one channel from simulated/measured IRs."""
    ch = cfg.channels[channel_name]
    dc = cfg.design
    spec = cfg.target
    frac = dc.smoothing_fraction
    hp = fractional_octave_smooth(
        design.average_power_response(_pair_irs(irs, ch.primary), dc.n_fft), frac)
    hs = fractional_octave_smooth(
        design.average_power_response(_pair_irs(irs, ch.supporting), dc.n_fft), frac)
    ref = design.reference_level_db(hp, spec.compensation_band_hz)
    target = design.build_target(spec, hp, ref)
    gain = design.optimize_target_gain(target, hp, spec)
    d = target.with_values(
        np.where(spec.in_band(hp.frequencies),
                 target.values * 10.0 ** (gain / 20.0), target.values))
    d_mod = design.apply_target_constraints(d, hp, spec)
    result = ChannelDesign(hp, hs, target, d_mod, gain)
    if "proposed" in methods:
        result.filters["proposed"] = design.design_supporting_filter(
            hp, hs, d_mod, dc, spec, gain)
    if "traditional" in methods:
        result.filters["traditional"] = design.design_traditional_inverse(
            hp, d, dc, spec.compensation_band_hz, spec, gain)
    return result


def velvet_for(cfg, channel_index):
    dec = cfg.decorrelator
    return generate_velvet_noise(dec.duration_s, dec.density_pulses_per_s,
                                 cfg.sample_rate_hz, cfg.seed + channel_index)


@dataclass
class RenderedSystem:
    full: ImpulseResponse
    direct: ImpulseResponse
    reverberant: ImpulseResponse


def _pad(x, n):
    out = np.zeros(n)
    out[:x.size] = x
    return out


def render_channel(cfg, channel_name, irs, filters, receiver_index):
    """Uncompensated, traditional and proposed responses at one receiver.

    The direct/reverberant parts use the windowed split of the primary
    response; filters and the supporting path act on those parts.
    """
    ch = cfg.channels[channel_name]
    ch_index = list(cfg.channels).index(channel_name)
    primary = irs[pair_name(ch.primary, receiver_index)]
    supporting = irs[pair_name(ch.supporting, receiver_index)]
    split = analysis.split_direct_reverberant(
        primary, analysis.Windowed(), onset=analysis.detect_direct_onset(primary))
    out = {"uncompensated": RenderedSystem(primary, split.direct, split.reverberant)}
    if "traditional" in filters:
        w = filters["traditional"]
        full = render.render_traditional(primary, w)
        d = render.render_traditional(split.direct, w)
        r = render.render_traditional(split.reverberant, w)
        out["traditional"] = RenderedSystem(full, d, r)
    if "proposed" in filters:
        layout = cfg.layout_for(channel_name)
        contrib = render.supporting_contribution(
            supporting, filters["proposed"], layout, velvet_for(cfg, ch_index))
        full = render.render_proposed(primary, supporting, filters["proposed"],
                                      layout, velvet_for(cfg, ch_index))
        n = max(len(full), len(contrib))
        rev = _pad(split.reverberant.samples, n) + _pad(contrib.samples, n)
        out["proposed"] = RenderedSystem(
            full, ImpulseResponse(_pad(split.direct.samples, n), primary.sample_rate_hz,
                                  split.direct.direct_onset_index),
            ImpulseResponse(rev, primary.sample_rate_hz))
        out["proposed_contribution"] = contrib
    return out


def analysis_nfft(*irs):
    return max(2 ** 16, next_pow2(max(len(ir) for ir in irs)))


def averaged_magnitude(irs, n_fft, fraction):
    return fractional_octave_smooth(design.average_power_response(irs, n_fft),
                                    fraction)


@dataclass
class ChannelResult:
    design: ChannelDesign
    rendered: list
    drr: Dict[str, analysis.DrrCurve]
    spectral_deviation: Dict[str, float]
    precedence: render.PrecedenceReport
    n_fft: int


def run_channel(cfg, channel_name, irs, drr_receiver=0):
    """Design, render and analyze one channel with both methods."""
    dsn = design_channel(cfg, channel_name, irs)
    rendered = [render_channel(cfg, channel_name, irs, dsn.filters, i)
                for i in range(2)]
    all_irs = [r[s].full for r in rendered for s in SYSTEMS]
    n_fft = analysis_nfft(*all_irs)
    frac = cfg.design.smoothing_fraction
    sd = {}
    for s in SYSTEMS:
        mag = averaged_magnitude([r[s].full for r in rendered], n_fft, frac)
        sd[s] = analysis.spectral_deviation(mag, 100.0, 20000.0)
    drr = {}
    sysr = rendered[drr_receiver]
    for s in SYSTEMS:
        drr[s] = analysis.drr_spectrum(sysr[s].direct, sysr[s].reverberant,
                                       n_fft, frac)
    ch = cfg.channels[channel_name]
    prim = averaged_magnitude(_pair_irs(irs, ch.primary), n_fft, frac)
    sup = averaged_magnitude([r["proposed_contribution"] for r in rendered],
                             n_fft, frac)
    prec = render.verify_precedence_margin(prim, sup, cfg.target)
    return ChannelResult(dsn, rendered, drr, sd, prec, n_fft)
