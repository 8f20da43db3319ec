"""Command-line interface: ``roomcomp simulate|design|render|analyze``.

Every subcommand works in an output directory. Inputs produced by an earlier
stage are looked up in that directory unless a separate one is given, so a
full run is::

    roomcomp simulate --out work
    roomcomp design --out work --method proposed
    roomcomp design --out work --method traditional
    roomcomp render --out work
    roomcomp analyze work/left.r0.proposed.wav --metrics drr,sd --out work/analysis
"""

import argparse
import dataclasses
import os
import sys

import numpy as np

from roomcomp import __version__, analysis, config, io, pipeline, render
from roomcomp.design import PROPOSED, TRADITIONAL, CompensationFilter, DesignError
from roomcomp.dsp import fractional_octave_smooth
from roomcomp.roomsim import GeometryError, simulate_components

EXIT_USAGE = 2
EXIT_IO = 1

METHOD_KINDS = {"proposed": PROPOSED, "traditional": TRADITIONAL}
KIND_METHODS = {v: k for k, v in METHOD_KINDS.items()}


class CliError(Exception):
    def __init__(self, field, message, code=EXIT_USAGE):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.code = code


def _load_config(args):
    if args.config is None:
        cfg = config.default_config()
    else:
        try:
            cfg = config.load(args.config)
        except FileNotFoundError:
            raise CliError("config", f"no such file {args.config}") from None
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CliError("out", f"cannot create {path}: {exc.strerror}", EXIT_IO) from None
    if not os.access(path, os.W_OK):
        raise CliError("out", f"{path} is not writable", EXIT_IO)


def ir_filename(pair):
    return f"{pair}.wav"


def filter_filename(channel, method):
    return f"{channel}.{method}.filter.wav"


def _load_pair_irs(cfg, ir_dir):
    irs = {}
    for src, i in config.required_pairs(cfg):
        name = config.pair_name(src, i)
        path = os.path.join(ir_dir, ir_filename(name))
        if not os.path.exists(path):
            raise CliError("irs", f"missing impulse response for pair {name} ({path})",
                           EXIT_IO)
        ir = _read_ir(path)
        if ir.sample_rate_hz != cfg.sample_rate_hz:
            raise CliError("irs", f"{path} has sample rate {ir.sample_rate_hz}, "
                                  f"config expects {cfg.sample_rate_hz}")
        irs[name] = ir
    return irs


def _read_ir(path):
    try:
        return io.read_ir(path)
    except io.AudioFileError as exc:
        raise CliError("input", str(exc), EXIT_IO) from None
    except FileNotFoundError:
        raise CliError("input", f"no such file {path}", EXIT_IO) from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    cfg = _load_config(args)
    _ensure_dir(args.out)
    manifest = {"sample_rate_hz": cfg.sample_rate_hz,
                "receiver_spacing_m": cfg.receiver_spacing_m,
                "files": {}}
    for src_name, i in config.required_pairs(cfg):
        src, rcv = cfg.sources[src_name], cfg.receivers[i]
        direct, rev = simulate_components(cfg.room, src, rcv, cfg.sample_rate_hz)
        full = direct.samples + rev.samples
        name = ir_filename(config.pair_name(src_name, i))
        io.write_wav(os.path.join(args.out, name), full, cfg.sample_rate_hz)
        manifest["files"][name] = {
            "source": src_name,
            "receiver": i,
            "onset_index": direct.direct_onset_index,
            "distance_m": float(np.linalg.norm(
                np.subtract(src.position_m, rcv.position_m))),
            "source_position_m": list(src.position_m),
            "receiver_position_m": list(rcv.position_m),
        }
    io.write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"wrote {len(manifest['files'])} impulse responses to {args.out}")
    return 0


def cmd_design(args):
    cfg = _load_config(args)
    _ensure_dir(args.out)
    irs = _load_pair_irs(cfg, args.irs or args.out)
    method = args.method
    report = {"method": method, "channels": {}}
    for ch in cfg.channels:
        dsn = pipeline.design_channel(cfg, ch, irs, methods=(method,))
        filt = dsn.filters[method]
        io.write_wav(os.path.join(args.out, filter_filename(ch, method)),
                     filt.taps, filt.sample_rate_hz)
        f = dsn.d_mod.frequencies
        io.write_curve_csv(os.path.join(args.out, f"{ch}.d_mod.csv"),
                           f, dsn.d_mod.db())
        entry = dsn.report(cfg.target)
        entry["kind"] = filt.kind
        entry["n_taps"] = len(filt)
        entry["filter_file"] = filter_filename(ch, method)
        report["channels"][ch] = entry
        print(f"{ch}: {method} filter, {len(filt)} taps, g* = {dsn.gain_db:.3f} dB")
    io.write_json(os.path.join(args.out, f"design_report.{method}.json"), report)
    return 0


def _load_filter(path, kind, fs):
    ir = _read_ir(path)
    if ir.sample_rate_hz != fs:
        raise CliError("filters", f"{path} has sample rate {ir.sample_rate_hz}, "
                                  f"config expects {fs}")
    return CompensationFilter(ir.samples, kind, ir.sample_rate_hz)


def _filter_kind(filter_dir, method):
    # the design report records what each filter file is
    path = os.path.join(filter_dir, f"design_report.{method}.json")
    if not os.path.exists(path):
        return None
    return io.read_json(path)


def cmd_render(args):
    cfg = _load_config(args)
    _ensure_dir(args.out)
    irs = _load_pair_irs(cfg, args.irs or args.out)
    filter_dir = args.filters or args.out
    reports = {m: _filter_kind(filter_dir, m) for m in METHOD_KINDS}
    if not any(reports.values()):
        raise CliError("filters", f"no design report found in {filter_dir}", EXIT_IO)
    precedence = {}
    for ch in cfg.channels:
        filters = {}
        for method, rep in reports.items():
            if rep is None:
                continue
            entry = rep["channels"].get(ch)
            if entry is None:
                raise CliError("filters", f"design report for {method} lacks channel {ch}")
            filt = _load_filter(os.path.join(filter_dir, entry["filter_file"]),
                                entry["kind"], cfg.sample_rate_hz)
            if filt.kind != METHOD_KINDS[method]:
                raise CliError("filters",
                               f"{entry['filter_file']} is a {filt.kind} filter, "
                               f"expected {METHOD_KINDS[method]}")
            filters[method] = filt
        contributions = []
        for i in range(2):
            systems = pipeline.render_channel(cfg, ch, irs, filters, i)
            for name in pipeline.SYSTEMS:
                if name not in systems:
                    continue
                sysr = systems[name]
                stem = os.path.join(args.out, f"{ch}.r{i}.{name}")
                io.write_ir(stem + ".wav", sysr.full)
                io.write_ir(stem + ".direct.wav", sysr.direct)
                io.write_ir(stem + ".reverberant.wav", sysr.reverberant)
            if "proposed_contribution" in systems:
                contributions.append(systems["proposed_contribution"])
        if contributions:
            prim = [irs[config.pair_name(cfg.channels[ch].primary, i)] for i in range(2)]
            n_fft = pipeline.analysis_nfft(*prim, *contributions)
            frac = cfg.design.smoothing_fraction
            rep = render.verify_precedence_margin(
                pipeline.averaged_magnitude(prim, n_fft, frac),
                pipeline.averaged_magnitude(contributions, n_fft, frac),
                cfg.target)
            precedence[ch] = rep.to_dict()
            print(f"{ch}: precedence violations {rep.violations}, "
                  f"min margin {rep.min_margin_db:.2f} dB")
    if precedence:
        io.write_json(os.path.join(args.out, "precedence_report.json"), precedence)
    return 0


def _sibling(path, part):
    base = path[:-4] if path.lower().endswith(".wav") else path
    candidate = f"{base}.{part}.wav"
    return candidate if os.path.exists(candidate) else None


def _parse_metrics(text):
    metrics = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in metrics if m not in ("drr", "sd")]
    if bad or not metrics:
        raise CliError("metrics", f"unknown metric {bad[0] if bad else text!r}; "
                                  "choose from drr,sd")
    return metrics


def cmd_analyze(args):
    metrics = _parse_metrics(args.metrics)
    frac = args.smoothing
    _ensure_dir(args.out)
    report = {}
    for path in args.inputs:
        ir = _read_ir(path)
        stem = os.path.splitext(os.path.basename(path))[0]
        entry = {}
        n_fft = pipeline.analysis_nfft(ir)
        if "sd" in metrics:
            mag = fractional_octave_smooth(analysis.magnitude_of(ir, n_fft), frac)
            sd = analysis.spectral_deviation(mag, args.f_low, args.f_high)
            entry["spectral_deviation_db"] = sd
            io.write_curve_csv(os.path.join(args.out, f"{stem}.magnitude.csv"),
                               mag.frequencies, mag.db())
            print(f"{stem}: S_D = {sd:.4f} dB")
        if "drr" in metrics:
            d_path, r_path = _sibling(path, "direct"), _sibling(path, "reverberant")
            if d_path and r_path:
                direct, rev = _read_ir(d_path), _read_ir(r_path)
                entry["split"] = "files"
            else:
                split = analysis.split_direct_reverberant(ir)
                direct, rev = split.direct, split.reverberant
                entry["split"] = "windowed"
            n_fft = pipeline.analysis_nfft(direct, rev)
            curve = analysis.drr_spectrum(direct, rev, n_fft, frac)
            io.write_curve_csv(os.path.join(args.out, f"{stem}.drr.csv"),
                               curve.frequencies_hz, curve.drr_db)
            entry["drr_std_db"] = analysis.band_std_db(curve, 100.0, 10000.0)
        report[stem] = entry
    io.write_json(os.path.join(args.out, "analysis_report.json"), report)
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="roomcomp",
        description="Room compensation with delayed, decorrelated supporting "
                    "loudspeakers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", help="YAML project file (default: built-in room)")
            sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("simulate", help="simulate all source/receiver responses")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("design", help="design compensation filters")
    common(sp)
    sp.add_argument("--method", required=True, choices=sorted(METHOD_KINDS))
    sp.add_argument("--irs", help="directory with simulated/measured responses "
                                  "(default: --out)")
    sp.set_defaults(func=cmd_design)

    sp = sub.add_parser("render", help="render compensated system responses")
    common(sp)
    sp.add_argument("--irs", help="response directory (default: --out)")
    sp.add_argument("--filters", help="filter directory (default: --out)")
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("analyze", help="DRR curves and spectral deviation")
    common(sp, needs_config=False)
    sp.add_argument("inputs", nargs="+", help="impulse response WAV files")
    sp.add_argument("--metrics", default="drr,sd")
    sp.add_argument("--smoothing", type=float, default=1.0 / 3.0,
                    help="smoothing width in octaves (default 1/3)")
    sp.add_argument("--f-low", type=float, default=100.0)
    sp.add_argument("--f-high", type=float, default=20000.0)
    sp.set_defaults(func=cmd_analyze)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except config.ConfigError as exc:
        code, msg = EXIT_USAGE, str(exc)
    except (GeometryError, DesignError, render.RenderError) as exc:
        code, msg = EXIT_USAGE, f"{args.command}: {exc}"
    except OSError as exc:
        code, msg = EXIT_IO, f"io: {exc}"
    print("error: " + " ".join(msg.split()), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
