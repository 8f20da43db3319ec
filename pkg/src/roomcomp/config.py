"""Project configuration: YAML schema, validation and defaults."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import yaml

from roomcomp.design import DesignConfig, DesignError, Flat, Sloped, TargetSpec
from roomcomp.dsp import DEFAULT_VELVET_DENSITY
from roomcomp.render import RenderError, SystemLayout
from roomcomp.roomsim import (
    SURFACES,
    GeometryError,
    Omni,
    ReceiverSpec,
    RoomSpec,
    SourceSpec,
    TwoWay,
)

SCHEMA_VERSION = 1
CHANNEL_ROLES = ("primary", "supporting")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_path, message):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass(frozen=True)
class DecorrelatorConfig:
    duration_s: float = 0.2
    density_pulses_per_s: float = DEFAULT_VELVET_DENSITY


@dataclass(frozen=True)
class ChannelConfig:
    primary: str
    supporting: str
    layout: Optional[SystemLayout] = None


@dataclass(frozen=True)
class ProjectConfig:
    room: RoomSpec
    sources: Dict[str, SourceSpec]
    receivers: Tuple[ReceiverSpec, ...]
    channels: Dict[str, ChannelConfig]
    target: TargetSpec = TargetSpec()
    design: DesignConfig = DesignConfig()
    decorrelator: DecorrelatorConfig = DecorrelatorConfig()
    seed: int = 0
    sample_rate_hz: int = 44100
    schema_version: int = SCHEMA_VERSION

    @property
    def receiver_spacing_m(self):
        a, b = (np.asarray(r.position_m) for r in self.receivers[:2])
        return float(np.linalg.norm(a - b))

    def listener_position(self):
        pts = np.array([r.position_m for r in self.receivers[:2]])
        return pts.mean(axis=0)

    def layout_for(self, channel_name):
        """Explicit layout of a channel, or one derived from the geometry."""
        ch = self.channels[channel_name]
        if ch.layout is not None:
            return ch.layout
        listener = self.listener_position()
        dist = {role: float(np.linalg.norm(
            np.asarray(self.sources[getattr(ch, role)].position_m) - listener))
            for role in CHANNEL_ROLES}
        return SystemLayout(dist["primary"], dist["supporting"],
                            self.room.speed_of_sound_m_s, self.design.delay_s)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _get(d, key, path, default=None, required=False):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a mapping")
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}" if path else key, "missing")
        return default
    return d[key]


def _vec3(v, path):
    try:
        arr = tuple(float(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected three numbers") from None
    if len(arr) != 3:
        raise ConfigError(path, "expected three numbers")
    return arr


def _pair(v, path):
    try:
        lo, hi = (float(x) for x in v)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected [low, high]") from None
    return lo, hi


def _wrap(path, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (GeometryError, DesignError, RenderError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_room(d):
    absorption = _get(d, "absorption", "room", required=True)
    if isinstance(absorption, dict):
        missing = [s for s in SURFACES if s not in absorption]
        if missing:
            raise ConfigError(f"room.absorption.{missing[0]}", "missing")
        rows = tuple(tuple(float(a) for a in absorption[s]) for s in SURFACES)
    else:
        rows = tuple(tuple(float(a) for a in row) for row in absorption)
    return _wrap("room", RoomSpec,
                 _vec3(_get(d, "dimensions_m", "room", required=True),
                       "room.dimensions_m"),
                 rows,
                 float(_get(d, "speed_of_sound_m_s", "room", 343.0)),
                 float(_get(d, "max_reflection_time_s", "room", 1.0)))


def _parse_directivity(d, path):
    if d is None or d == "omni":
        return Omni()
    kind = _get(d, "kind", path, required=True)
    if kind == "omni":
        return Omni()
    if kind == "two_way":
        return _wrap(path, TwoWay,
                     float(_get(d, "transition_low_hz", path, 500.0)),
                     float(_get(d, "transition_high_hz", path, 4000.0)),
                     float(_get(d, "rear_attenuation_db", path, 20.0)))
    raise ConfigError(f"{path}.kind", f"unknown directivity {kind!r}")


def _parse_target(d):
    if d is None:
        return TargetSpec()
    mode_d = _get(d, "mode", "target", {"kind": "flat"})
    kind = _get(mode_d, "kind", "target.mode", "flat")
    if kind == "flat":
        mode = Flat()
    elif kind == "sloped":
        mode = _wrap("target.mode", Sloped,
                     float(_get(mode_d, "total_drop_db", "target.mode", 3.0)),
                     float(_get(mode_d, "f_lo_hz", "target.mode", 20.0)),
                     float(_get(mode_d, "f_hi_hz", "target.mode", 20000.0)))
    else:
        raise ConfigError("target.mode.kind", f"unknown target mode {kind!r}")
    defaults = TargetSpec()
    thresholds = _get(d, "precedence_thresholds", "target", None)
    if thresholds is None:
        bands = defaults.precedence_thresholds
    else:
        bands = tuple(
            (_pair(_get(t, "band_hz", f"target.precedence_thresholds[{i}]",
                        required=True), f"target.precedence_thresholds[{i}]"),
             float(_get(t, "threshold_db", f"target.precedence_thresholds[{i}]",
                        required=True)))
            for i, t in enumerate(thresholds))
    return _wrap("target", TargetSpec, mode,
                 _pair(_get(d, "compensation_band_hz", "target",
                            defaults.compensation_band_hz),
                       "target.compensation_band_hz"),
                 bands,
                 _pair(_get(d, "equal_deficit_band_hz", "target",
                            defaults.equal_deficit_band_hz),
                       "target.equal_deficit_band_hz"))


def _parse_design(d, fs):
    d = d or {}
    base = DesignConfig()
    return _wrap("design", DesignConfig,
                 int(_get(d, "n_taps", "design", base.n_taps)),
                 float(_get(d, "smoothing_fraction", "design",
                            base.smoothing_fraction)),
                 float(_get(d, "delay_s", "design", base.delay_s)),
                 float(_get(d, "beta_in_band", "design", base.beta_in_band)),
                 float(_get(d, "beta_out_band", "design", base.beta_out_band)),
                 int(fs),
                 int(_get(d, "n_fft", "design", base.n_fft)))


def _parse_layout(d, path):
    if d is None:
        return None
    return _wrap(path, SystemLayout,
                 float(_get(d, "primary_distance_m", path, required=True)),
                 float(_get(d, "supporting_distance_m", path, required=True)),
                 float(_get(d, "speed_of_sound_m_s", path, 343.0)),
                 float(_get(d, "precedence_delay_s", path, 0.010)))


def config_from_dict(d):
    """Build and validate a :class:`ProjectConfig` from plain data."""
    if not isinstance(d, dict):
        raise ConfigError("<root>", "expected a mapping")
    version = _get(d, "schema_version", "", required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version",
                          f"unsupported version {version!r}, expected {SCHEMA_VERSION}")
    fs = int(_get(d, "sample_rate_hz", "", 44100))
    room = _parse_room(_get(d, "room", "", required=True))

    sources = {}
    for name, s in (_get(d, "sources", "", required=True) or {}).items():
        path = f"sources.{name}"
        src = SourceSpec(_vec3(_get(s, "position_m", path, required=True),
                               f"{path}.position_m"),
                         float(_get(s, "aim_azimuth_deg", path, 0.0)),
                         _parse_directivity(_get(s, "directivity", path),
                                            f"{path}.directivity"))
        if not room.contains(src.position_m):
            raise ConfigError(f"{path}.position_m",
                              f"source {name} at {src.position_m} is outside the room")
        sources[name] = src

    receivers = []
    for i, r in enumerate(_get(d, "receivers", "", required=True) or []):
        path = f"receivers[{i}]"
        rcv = ReceiverSpec(_vec3(_get(r, "position_m", path, required=True),
                                 f"{path}.position_m"))
        if not room.contains(rcv.position_m):
            raise ConfigError(f"{path}.position_m",
                              f"receiver at {rcv.position_m} is outside the room")
        receivers.append(rcv)
    if len(receivers) < 2:
        raise ConfigError("receivers", "two receivers are required for design")

    channels = {}
    for name, c in (_get(d, "channels", "", required=True) or {}).items():
        path = f"channels.{name}"
        refs = {}
        for role in CHANNEL_ROLES:
            ref = _get(c, role, path, required=True)
            if ref not in sources:
                raise ConfigError(f"{path}.{role}", f"unknown source {ref!r}")
            refs[role] = ref
        channels[name] = ChannelConfig(refs["primary"], refs["supporting"],
                                       _parse_layout(_get(c, "layout", path),
                                                     f"{path}.layout"))
    if not channels:
        raise ConfigError("channels", "at least one channel is required")

    dec = _get(d, "decorrelator", "", {}) or {}
    decorrelator = DecorrelatorConfig(
        float(_get(dec, "duration_s", "decorrelator", 0.2)),
        float(_get(dec, "density_pulses_per_s", "decorrelator",
                   DEFAULT_VELVET_DENSITY)))
    if decorrelator.duration_s <= 0:
        raise ConfigError("decorrelator.duration_s", "must be positive")
    if not 0 < decorrelator.density_pulses_per_s <= fs:
        raise ConfigError("decorrelator.density_pulses_per_s",
                          "must be positive and at most the sample rate")
    seed = _get(d, "seed", "", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed", "expected an integer")

    return ProjectConfig(room, sources, tuple(receivers), channels,
                         _parse_target(_get(d, "target", "")),
                         _parse_design(_get(d, "design", ""), fs),
                         decorrelator, seed, fs, version)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _directivity_dict(dv):
    if isinstance(dv, TwoWay):
        return {"kind": "two_way",
                "transition_low_hz": dv.transition_low_hz,
                "transition_high_hz": dv.transition_high_hz,
                "rear_attenuation_db": dv.rear_attenuation_db}
    return {"kind": "omni"}


def config_to_dict(cfg):
    t = cfg.target
    if isinstance(t.mode, Sloped):
        mode = {"kind": "sloped", "total_drop_db": t.mode.total_drop_db,
                "f_lo_hz": t.mode.f_lo_hz, "f_hi_hz": t.mode.f_hi_hz}
    else:
        mode = {"kind": "flat"}
    channels = {}
    for name, ch in cfg.channels.items():
        entry = {"primary": ch.primary, "supporting": ch.supporting}
        if ch.layout is not None:
            entry["layout"] = {
                "primary_distance_m": ch.layout.primary_distance_m,
                "supporting_distance_m": ch.layout.supporting_distance_m,
                "speed_of_sound_m_s": ch.layout.speed_of_sound_m_s,
                "precedence_delay_s": ch.layout.precedence_delay_s}
        channels[name] = entry
    dc = cfg.design
    return {
        "schema_version": cfg.schema_version,
        "sample_rate_hz": cfg.sample_rate_hz,
        "seed": cfg.seed,
        "room": {
            "dimensions_m": list(cfg.room.dimensions_m),
            "speed_of_sound_m_s": cfg.room.speed_of_sound_m_s,
            "max_reflection_time_s": cfg.room.max_reflection_time_s,
            "absorption": {s: list(row) for s, row in
                           zip(SURFACES, cfg.room.absorption)},
        },
        "sources": {name: {"position_m": list(s.position_m),
                           "aim_azimuth_deg": s.aim_azimuth_deg,
                           "directivity": _directivity_dict(s.directivity)}
                    for name, s in cfg.sources.items()},
        "receivers": [{"position_m": list(r.position_m)} for r in cfg.receivers],
        "channels": channels,
        "target": {
            "mode": mode,
            "compensation_band_hz": list(t.compensation_band_hz),
            "precedence_thresholds": [{"band_hz": list(b), "threshold_db": th}
                                      for b, th in t.precedence_thresholds],
            "equal_deficit_band_hz": list(t.equal_deficit_band_hz),
        },
        "design": {"n_taps": dc.n_taps,
                   "smoothing_fraction": dc.smoothing_fraction,
                   "delay_s": dc.delay_s,
                   "beta_in_band": dc.beta_in_band,
                   "beta_out_band": dc.beta_out_band,
                   "n_fft": dc.n_fft},
        "decorrelator": {"duration_s": cfg.decorrelator.duration_s,
                         "density_pulses_per_s":
                             cfg.decorrelator.density_pulses_per_s},
    }


def dumps(cfg):
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def loads(text):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<root>", f"not valid YAML: {exc}") from None
    return config_from_dict(data)


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


# ---------------------------------------------------------------------------
# defaults
# ---------------------------------------------------------------------------

def _aim_at(src, dst):
    v = np.asarray(dst) - np.asarray(src)
    return round(float(np.degrees(np.arctan2(v[1], v[0]))), 3)


def default_config(seed=0):
    """Stereo setup in a 7.4 x 4.6 x 2.6 m room with two receivers 17 cm apart."""
    listener = (3.7, 2.9, 1.2)
    half = 0.085
    receivers = (ReceiverSpec((listener[0], listener[1] - half, listener[2])),
                 ReceiverSpec((listener[0], listener[1] + half, listener[2])))
    two_way = TwoWay(500.0, 4000.0, 20.0)
    positions = {
        "primary_left": (1.2, 1.1, 1.2),
        "primary_right": (0.9, 4.15, 1.2),
        "supporting_left": (5.9, 0.7, 1.0),
        "supporting_right": (5.9, 4.0, 1.0),
    }
    sources = {name: SourceSpec(p, _aim_at(p, listener), two_way)
               for name, p in positions.items()}
    walls = (0.22, 0.18, 0.14, 0.12, 0.12, 0.12)
    absorption = (walls, walls, walls, walls,
                  (0.08, 0.15, 0.30, 0.45, 0.55, 0.60),
                  (0.45, 0.40, 0.30, 0.25, 0.25, 0.30))
    room = RoomSpec((7.4, 4.6, 2.6), absorption, 343.0, 1.0)
    channels = {"left": ChannelConfig("primary_left", "supporting_left"),
                "right": ChannelConfig("primary_right", "supporting_right")}
    return ProjectConfig(room, sources, receivers, channels, seed=seed)


def pair_name(source, receiver_index):
    return f"{source}__r{receiver_index}"


def required_pairs(cfg) -> List[Tuple[str, int]]:
    names = []
    for ch in cfg.channels.values():
        for src in (ch.primary, ch.supporting):
            if src not in names:
                names.append(src)
    return [(s, i) for s in names for i in range(2)]


__all__ = [
    "ChannelConfig",
    "ConfigError",
    "DecorrelatorConfig",
    "ProjectConfig",
    "config_from_dict",
    "config_to_dict",
    "default_config",
    "dumps",
    "load",
    "loads",
    "pair_name",
    "required_pairs",
]
