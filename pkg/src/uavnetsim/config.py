"""Scenario definition, TOML loading and validation.

Defaults reproduce the reference scenario (10 agents, 500 x 500 x 250 m,
controlled waypoint mobility at 50 km/h, alpha 7, 15 prediction steps,
buffer size 8). Two desk-scale reductions apply by default: the video stream
runs at 200 kbit/s and experiments use 20 seeds. Use ``reference_preset()``
for the full 2 Mbit/s, 50-seed setting.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import tomli
import tomli_w

MOBILITY_MODELS = ("random-walk", "waypoint", "swarm", "dispersion", "static")
CHANNEL_MODELS = ("friis", "nakagami")
PROTOCOLS = ("batmobile", "batman-baseline")
PRED_DISTANCE = ("endpoint", "min")


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending key."""


@dataclass(frozen=True)
class AreaConfig:
    x: float = 500.0
    y: float = 500.0
    z: float = 250.0


@dataclass(frozen=True)
class MobilityConfig:
    model: str = "waypoint"
    velocity_kmh: float = 50.0
    update_interval: float = 0.25
    waypoint_radius: float = 10.0
    # swarm exploration
    w_explore: float = 1.0
    w_avoid: float = 1.5
    w_cohere: float = 1.0
    avoid_radius: float = 25.0
    chain_spacing: float = 60.0
    centroid_radius: float = 50.0
    # dispersion mesh
    mesh_spacing: float = 80.0
    interaction_radius: float = 240.0
    w_spacing: float = 1.0
    w_noise: float = 0.5
    # static placement, one [x, y, z] per agent
    positions: tuple = ()

    @property
    def velocity(self) -> float:
        return self.velocity_kmh / 3.6


@dataclass(frozen=True)
class ChannelConfig:
    model: str = "friis"
    tx_power_dbm: float = 20.0
    frequency_hz: float = 2.4e9
    sensitivity_dbm: float = -83.0
    path_loss_exponent: float = 2.75
    nakagami_m: float = 2.0
    phy_bitrate: float = 24e6


@dataclass(frozen=True)
class RoutingConfig:
    protocol: str = "batmobile"
    alpha: float = 7.0
    p_trend_max: float = 0.1
    trend_sign: int = 1
    buffer_size: int = 8
    ogm_interval: float = 0.5
    update_phase: float = 0.5
    ttl: int = 10
    pred_distance: str = "endpoint"
    echo_suppression: bool = True


@dataclass(frozen=True)
class PredictionSettings:
    horizon_steps: int = 15
    extrapolation_window: int = 5
    step_interval: float = 0.0  # 0 means: same as the mobility update interval
    use_steering: bool = True
    use_waypoints: bool = True


@dataclass(frozen=True)
class GnssConfig:
    max_error: float = 0.0
    resample_interval: float = 0.0  # 0 means: same as the mobility update interval


@dataclass(frozen=True)
class TrafficConfig:
    video_bitrate: float = 200e3
    mtu: int = 1460
    telemetry_interval: float = 0.25
    telemetry_size: int = 1000
    source: int = 0  # 0 picks a random agent per run
    start: float = 0.0
    pdr_window: float = 1.0

    @property
    def packet_interval(self) -> float:
        return self.mtu * 8.0 / self.video_bitrate


@dataclass(frozen=True)
class ScenarioConfig:
    agents: int = 10
    duration: float = 300.0
    seeds: int = 20
    base_position: tuple = ()  # empty means: centre of the area at ground level
    area: AreaConfig = field(default_factory=AreaConfig)
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    prediction: PredictionSettings = field(default_factory=PredictionSettings)
    gnss: GnssConfig = field(default_factory=GnssConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)

    @property
    def step_interval(self) -> float:
        return self.prediction.step_interval or self.mobility.update_interval

    @property
    def gnss_resample(self) -> float:
        return self.gnss.resample_interval or self.mobility.update_interval

    def validate(self) -> ScenarioConfig:
        validate(self)
        return self

    def to_dict(self) -> dict:
        return to_dict(self)

    def digest(self) -> str:
        blob = json.dumps(to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTION_TYPES = {"area": AreaConfig, "mobility": MobilityConfig, "channel": ChannelConfig,
                  "routing": RoutingConfig, "prediction": PredictionSettings,
                  "gnss": GnssConfig, "traffic": TrafficConfig}


def _require(cond: bool, key: str, constraint: str, value: Any) -> None:
    if not cond:
        raise ConfigError(f"{key}: must satisfy {constraint} (got {value!r})")


def validate(cfg: ScenarioConfig) -> None:
    r = _require
    r(isinstance(cfg.agents, int) and cfg.agents >= 1, "agents", "integer >= 1", cfg.agents)
    r(cfg.duration >= 0, "duration", ">= 0", cfg.duration)
    r(isinstance(cfg.seeds, int) and cfg.seeds >= 1, "seeds", "integer >= 1", cfg.seeds)
    r(len(cfg.base_position) in (0, 3), "base_position", "empty or [x, y, z]", cfg.base_position)
    for name in ("x", "y", "z"):
        v = getattr(cfg.area, name)
        r(v > 0 and math.isfinite(v), f"area.{name}", "finite and > 0", v)

    m = cfg.mobility
    r(m.model in MOBILITY_MODELS, "mobility.model", f"one of {MOBILITY_MODELS}", m.model)
    r(m.velocity_kmh >= 0, "mobility.velocity_kmh", ">= 0", m.velocity_kmh)
    r(m.update_interval > 0, "mobility.update_interval", "> 0", m.update_interval)
    r(m.waypoint_radius > 0, "mobility.waypoint_radius", "> 0", m.waypoint_radius)
    for name in ("w_explore", "w_avoid", "w_cohere", "w_spacing", "w_noise"):
        r(getattr(m, name) >= 0, f"mobility.{name}", ">= 0", getattr(m, name))
    for name in ("avoid_radius", "chain_spacing", "centroid_radius", "mesh_spacing",
                 "interaction_radius"):
        r(getattr(m, name) > 0, f"mobility.{name}", "> 0", getattr(m, name))
    if m.model == "static":
        r(len(m.positions) == cfg.agents, "mobility.positions",
          "one [x, y, z] per agent for the static model", m.positions)
    for p in m.positions:
        r(len(p) == 3 and all(math.isfinite(c) for c in p), "mobility.positions",
          "list of [x, y, z]", p)

    c = cfg.channel
    r(c.model in CHANNEL_MODELS, "channel.model", f"one of {CHANNEL_MODELS}", c.model)
    r(c.frequency_hz > 0, "channel.frequency_hz", "> 0", c.frequency_hz)
    r(c.model != "nakagami" or c.path_loss_exponent >= 2, "channel.path_loss_exponent",
      ">= 2 for nakagami", c.path_loss_exponent)
    r(c.nakagami_m >= 0.5, "channel.nakagami_m", ">= 0.5", c.nakagami_m)
    r(c.phy_bitrate > 0, "channel.phy_bitrate", "> 0", c.phy_bitrate)

    rt = cfg.routing
    r(rt.protocol in PROTOCOLS, "routing.protocol", f"one of {PROTOCOLS}", rt.protocol)
    r(rt.alpha >= 1, "routing.alpha", ">= 1", rt.alpha)
    r(0 <= rt.p_trend_max < 1, "routing.p_trend_max", "0 <= value < 1", rt.p_trend_max)
    r(rt.trend_sign in (1, -1), "routing.trend_sign", "+1 or -1", rt.trend_sign)
    r(isinstance(rt.buffer_size, int) and rt.buffer_size >= 1, "routing.buffer_size",
      "integer >= 1", rt.buffer_size)
    r(rt.ogm_interval > 0, "routing.ogm_interval", "> 0", rt.ogm_interval)
    r(rt.update_phase > 0, "routing.update_phase", "> 0", rt.update_phase)
    r(isinstance(rt.ttl, int) and rt.ttl >= 1, "routing.ttl", "integer >= 1", rt.ttl)
    r(rt.pred_distance in PRED_DISTANCE, "routing.pred_distance", f"one of {PRED_DISTANCE}",
      rt.pred_distance)

    p = cfg.prediction
    r(isinstance(p.horizon_steps, int) and p.horizon_steps >= 0, "prediction.horizon_steps",
      "integer >= 0", p.horizon_steps)
    r(isinstance(p.extrapolation_window, int) and p.extrapolation_window >= 2,
      "prediction.extrapolation_window", "integer >= 2", p.extrapolation_window)
    r(p.step_interval >= 0, "prediction.step_interval", ">= 0 (0 = update interval)",
      p.step_interval)

    r(cfg.gnss.max_error >= 0, "gnss.max_error", ">= 0", cfg.gnss.max_error)
    r(cfg.gnss.resample_interval >= 0, "gnss.resample_interval", ">= 0 (0 = update interval)",
      cfg.gnss.resample_interval)

    t = cfg.traffic
    r(t.video_bitrate > 0, "traffic.video_bitrate", "> 0", t.video_bitrate)
    r(isinstance(t.mtu, int) and t.mtu > 0, "traffic.mtu", "integer > 0", t.mtu)
    r(t.telemetry_interval > 0, "traffic.telemetry_interval", "> 0", t.telemetry_interval)
    r(isinstance(t.telemetry_size, int) and t.telemetry_size > 0, "traffic.telemetry_size",
      "integer > 0", t.telemetry_size)
    r(isinstance(t.source, int) and 0 <= t.source <= cfg.agents, "traffic.source",
      f"0 (random) or an agent id in 1..{cfg.agents}", t.source)
    r(t.start >= 0, "traffic.start", ">= 0", t.start)
    r(t.pdr_window > 0, "traffic.pdr_window", "> 0", t.pdr_window)

    # the sensitivity has to be reachable at some distance beyond 1 m
    from .channel import max_range
    try:
        max_range(channel_params(cfg))
    except ValueError as exc:
        raise ConfigError(f"channel.sensitivity_dbm: {exc}") from None


def channel_params(cfg: ScenarioConfig):
    from .channel import ChannelParams
    c = cfg.channel
    return ChannelParams(model=c.model, tx_power=c.tx_power_dbm, frequency=c.frequency_hz,
                         sensitivity=c.sensitivity_dbm, path_loss_exponent=c.path_loss_exponent,
                         nakagami_m=c.nakagami_m, phy_bitrate=c.phy_bitrate)


def _coerce(section: str, key: str, default: Any, value: Any) -> Any:
    full = f"{section}.{key}" if section else key
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{full}: must be a boolean (got {value!r})")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{full}: must be an integer (got {value!r})")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{full}: must be a number (got {value!r})")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{full}: must be a string (got {value!r})")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{full}: must be a list (got {value!r})")
        return tuple(tuple(float(c) for c in v) if isinstance(v, (list, tuple)) else float(v)
                     for v in value)
    return value


def _build(cls, section: str, data: dict):
    defaults = cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            where = f"{section}.{key}" if section else key
            raise ConfigError(f"{where}: unknown key")
        kwargs[key] = _coerce(section, key, getattr(defaults, key), value)
    return replace(defaults, **kwargs)


def from_dict(data: dict) -> ScenarioConfig:
    top = {}
    sections = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: must be a table")
            sections[key] = _build(_SECTION_TYPES[key], key, value)
        elif key in {f.name for f in fields(ScenarioConfig)}:
            top[key] = value
        else:
            raise ConfigError(f"{key}: unknown key")
    base = _build(ScenarioConfig, "", top)
    cfg = replace(base, **sections)
    validate(cfg)
    return cfg


def to_dict(cfg: ScenarioConfig) -> dict:
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        return v
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out[f.name] = {g.name: plain(getattr(v, g.name)) for g in fields(v)}
        else:
            out[f.name] = plain(v)
    return out


def loads(text: str) -> ScenarioConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None
    return from_dict(data)


def load_config(path) -> ScenarioConfig:
    return loads(Path(path).read_text())


def dumps(cfg: ScenarioConfig) -> str:
    data = to_dict(cfg)
    # TOML cannot hold empty nested arrays of unknown type cleanly; drop empties
    if not data["base_position"]:
        del data["base_position"]
    if not data["mobility"]["positions"]:
        del data["mobility"]["positions"]
    return tomli_w.dumps(data)


def dump_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps(cfg))


def set_field(cfg: ScenarioConfig, dotted: str, value: Any) -> ScenarioConfig:
    """Return a copy with ``section.key`` (or a top-level key) replaced and validated."""
    parts = dotted.split(".")
    if len(parts) == 1:
        name = parts[0]
        if name not in {f.name for f in fields(cfg)} or name in _SECTION_TYPES:
            raise ConfigError(f"{dotted}: not a configuration field")
        new = replace(cfg, **{name: _coerce("", name, getattr(ScenarioConfig(), name), value)})
    elif len(parts) == 2 and parts[0] in _SECTION_TYPES:
        section, key = parts
        sub = getattr(cfg, section)
        if key not in {f.name for f in fields(sub)}:
            raise ConfigError(f"{dotted}: not a configuration field")
        coerced = _coerce(section, key, getattr(type(sub)(), key), value)
        new = replace(cfg, **{section: replace(sub, **{key: coerced})})
    else:
        raise ConfigError(f"{dotted}: not a configuration field")
    validate(new)
    return new


def get_field(cfg: ScenarioConfig, dotted: str) -> Any:
    obj = cfg
    for part in dotted.split("."):
        obj = getattr(obj, part)
    return obj


def reference_preset() -> ScenarioConfig:
    """Full reference parameters: 2 Mbit/s video and 50 runs."""
    cfg = ScenarioConfig()
    return replace(cfg, seeds=50, traffic=replace(cfg.traffic, video_bitrate=2e6))
