"""Simulation configuration: defaults, TOML loading, validation and dumping.

Configuration files are sectioned ``key = value`` TOML.  Every key has a
default, so an empty file yields the reference parameter set (50 UAVs in a
1000 m x 300 m cylinder, 250 m radio range, 207792 J batteries, ...).
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

BASELINES = ("iqmr", "plain-q")
BETA_MODES = ("exp-decay", "paper-literal", "fixed")
GAMMA_MODES = ("adaptive", "fixed")
EXPIRY_MODES = ("after-next-hello", "since-last-heard")
INTERFERER_SETS = ("airborne", "transmitting")
EVENT_KINDS = ("deplete-energy", "fragment", "sweep-param")
SELECTORS = ("random-fraction", "top-q-half", "bottom-q-half", "explicit-ids")
REJOIN_POLICIES = ("all-at-once", "staggered-quarters")


class ConfigError(ValueError):
    """Invalid configuration. ``key`` names the offending dotted key."""

    def __init__(self, message: str, key: str | None = None, location: str | None = None):
        self.key = key
        self.location = location
        self.message = message
        where = []
        if location:
            where.append(str(location))
        if key:
            where.append(key)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class SimSection:
    num_uavs: int = 50
    episodes: int = 8000
    seed: int = 0
    tick_ms: float = 100.0
    baseline: str = "iqmr"
    tick_budget: int = 600
    burst_size: int = 1
    l2_retry_limit: int = 3
    check_invariants: bool = False


@dataclass(frozen=True)
class DomainSection:
    radius_m: float = 1000.0
    height_range_m: tuple[float, float] = (100.0, 300.0)


@dataclass(frozen=True)
class MobilitySection:
    alpha: float = 0.75
    mean_speed: float = 15.0
    speed_range: tuple[float, float] = (10.0, 20.0)
    direction_range: tuple[float, float] = (-math.pi / 2, math.pi / 2)
    pitch_range: tuple[float, float] = (0.0, math.pi / 4)
    pause_time_s: float = 1.0
    leg_time_s: float = 1.0
    static: bool = False


@dataclass(frozen=True)
class ChannelSection:
    zeta: float = 2.7
    rician_k: float = 1.0
    sir_threshold_db: float = 0.0
    coverage_samples: int = 200
    noise_floor: float | None = None
    p_cov_threshold: float = 0.1
    deterministic: bool = False
    interferers: str = "airborne"


@dataclass(frozen=True)
class EnergySection:
    initial_j: float = 207792.0
    threshold_j: float = 100.0
    eps_elec: float = 50e-9
    eps_amp_fs: float = 41e-6
    eps_amp_mp: float = 100e-12
    r0_m: float = 100.0
    payload_kw_per_kg: float = 0.217
    mass_kg: float = 2.0
    charge_rate_j_per_s: float = 2000.0


@dataclass(frozen=True)
class CollisionSection:
    xi_x_m: float = 3.0
    xi_y_m: float = 3.0
    r_min_m: float = 1.0
    p_coll_threshold: float = 0.9
    radius_scale: float = 1.0


@dataclass(frozen=True)
class DiscoverySection:
    base_hello_interval_ms: float = 100.0
    max_hello_interval_ms: float = 5000.0
    expiry_ms: float = 300.0
    sector_half_angle_rad: float = math.pi / 4
    expiry_mode: str = "after-next-hello"


@dataclass(frozen=True)
class RlSection:
    weights: tuple[float, ...] = tuple(w / 31 for w in (16, 8, 4, 2, 1))
    lambda_: float = 0.9
    epsilon: float = 0.1
    beta_mode: str = "exp-decay"
    beta_min: float = 0.01
    beta_max: float = 1.0
    gamma_mode: str = "adaptive"
    gamma_min: float = 0.1
    gamma_max: float = 0.9
    beta_fixed: float = 0.5
    gamma_fixed: float = 0.9
    max_hops: int = 25


@dataclass(frozen=True)
class ScenarioEvent:
    """One scheduled perturbation, fired at the start of ``episode``."""

    episode: int
    kind: str
    selector: str = "random-fraction"
    fraction: float = 0.2
    duration_ms: float = 200.0
    rejoin: str = "all-at-once"
    rejoin_window_ms: float = 10.0
    ids: tuple[int, ...] = ()
    param: str = ""
    value: Any = None


SECTIONS = {
    "sim": SimSection,
    "domain": DomainSection,
    "mobility": MobilitySection,
    "channel": ChannelSection,
    "energy": EnergySection,
    "collision": CollisionSection,
    "discovery": DiscoverySection,
    "rl": RlSection,
}


@dataclass(frozen=True)
class SimConfig:
    radio_range_m: float = 250.0
    sim: SimSection = field(default_factory=SimSection)
    domain: DomainSection = field(default_factory=DomainSection)
    mobility: MobilitySection = field(default_factory=MobilitySection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    energy: EnergySection = field(default_factory=EnergySection)
    collision: CollisionSection = field(default_factory=CollisionSection)
    discovery: DiscoverySection = field(default_factory=DiscoverySection)
    rl: RlSection = field(default_factory=RlSection)
    scenario: tuple[ScenarioEvent, ...] = ()

    @property
    def noise_floor(self) -> float:
        """Noise power used when a receiver has no interferers.

        Defaults to 20 dB below the path gain of a maximum-range link.
        """
        if self.channel.noise_floor is not None:
            return self.channel.noise_floor
        return 0.01 * self.radio_range_m ** (-self.channel.zeta)

    def get(self, key: str) -> Any:
        if key == "radio_range_m":
            return self.radio_range_m
        section, attr = _split_key(key)
        return getattr(getattr(self, section), attr)

    def replace(self, key: str, value: Any) -> "SimConfig":
        """Return a validated copy with one dotted key overridden."""
        if key == "radio_range_m":
            new = dataclasses.replace(self, radio_range_m=_coerce(key, float, value))
        else:
            section, attr = _split_key(key)
            sec = getattr(self, section)
            ftype = _field_types(type(sec))[attr]
            new_sec = dataclasses.replace(sec, **{attr: _coerce(key, ftype, value)})
            new = dataclasses.replace(self, **{section: new_sec})
        validate(new)
        return new


def _split_key(key: str) -> tuple[str, str]:
    parts = key.split(".")
    if len(parts) != 2 or parts[0] not in SECTIONS:
        raise ConfigError("unknown key", key=key)
    section, name = parts
    attr = "lambda_" if name == "lambda" else name
    if attr not in _field_types(SECTIONS[section]):
        raise ConfigError("unknown key", key=key)
    return section, attr


def all_keys() -> list[str]:
    keys = ["radio_range_m"]
    for name, cls in SECTIONS.items():
        keys.extend(f"{name}.{_toml_name(f.name)}" for f in fields(cls))
    return keys


def _toml_name(attr: str) -> str:
    return "lambda" if attr == "lambda_" else attr


def _field_types(cls) -> dict[str, str]:
    return {f.name: f.type for f in fields(cls)}


def _coerce(key: str, ftype: str, value: Any) -> Any:
    """Convert a raw TOML/CLI value to the field's declared type."""
    try:
        if ftype == "bool":
            if isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    return True
                if value.lower() in ("false", "0", "no"):
                    return False
                raise ValueError(value)
            if not isinstance(value, bool):
                raise ValueError(value)
            return value
        if ftype == "int":
            if isinstance(value, bool):
                raise ValueError(value)
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if ftype == "float":
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if ftype == "float | None":
            return None if value is None else float(value)
        if ftype == "str":
            if not isinstance(value, str):
                raise ValueError(value)
            return value
        if ftype.startswith("tuple"):
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split()]
            return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"expected {ftype}, got {value!r}", key=key) from None
    raise ConfigError(f"unsupported field type {ftype}", key=key)  # pragma: no cover


def _check(ok: bool, key: str, message: str) -> None:
    if not ok:
        raise ConfigError(message, key=key)


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


def validate(cfg: SimConfig) -> None:
    """Raise ConfigError naming the first out-of-range key."""
    s = cfg.sim
    _check(s.num_uavs >= 1, "sim.num_uavs", "must be >= 1")
    _check(s.episodes >= 1, "sim.episodes", "must be >= 1")
    _check(s.seed >= 0, "sim.seed", "must be >= 0")
    _check(s.tick_ms > 0 and _finite(s.tick_ms), "sim.tick_ms", "must be > 0")
    _check(s.baseline in BASELINES, "sim.baseline", f"must be one of {BASELINES}")
    _check(s.tick_budget >= 1, "sim.tick_budget", "must be >= 1")
    _check(s.burst_size >= 1, "sim.burst_size", "must be >= 1")
    _check(s.l2_retry_limit >= 1, "sim.l2_retry_limit", "must be >= 1")
    _check(cfg.radio_range_m > 0 and _finite(cfg.radio_range_m), "radio_range_m", "must be > 0")

    d = cfg.domain
    _check(d.radius_m > 0 and _finite(d.radius_m), "domain.radius_m", "must be > 0")
    _check(len(d.height_range_m) == 2 and 0 <= d.height_range_m[0] < d.height_range_m[1],
           "domain.height_range_m", "must be [low, high] with 0 <= low < high")

    m = cfg.mobility
    _check(0 < m.alpha < 1, "mobility.alpha", "must lie in (0, 1)")
    for key, rng in (("mobility.speed_range", m.speed_range),
                     ("mobility.direction_range", m.direction_range),
                     ("mobility.pitch_range", m.pitch_range)):
        _check(len(rng) == 2 and _finite(*rng) and rng[0] <= rng[1], key, "must be an ordered [min, max] pair")
    _check(m.speed_range[0] >= 0, "mobility.speed_range", "speeds must be >= 0")
    _check(m.speed_range[0] <= m.mean_speed <= m.speed_range[1], "mobility.mean_speed",
           "must lie inside mobility.speed_range")
    _check(0 <= m.pitch_range[0] and m.pitch_range[1] <= math.pi / 2, "mobility.pitch_range",
           "pitch magnitudes must lie in [0, pi/2]")
    _check(m.pause_time_s >= 0, "mobility.pause_time_s", "must be >= 0")
    _check(m.leg_time_s > 0, "mobility.leg_time_s", "must be > 0")

    c = cfg.channel
    _check(c.zeta > 0 and _finite(c.zeta), "channel.zeta", "must be > 0")
    _check(c.rician_k >= 0 and _finite(c.rician_k), "channel.rician_k", "must be >= 0")
    _check(_finite(c.sir_threshold_db), "channel.sir_threshold_db", "must be finite")
    _check(c.coverage_samples >= 1, "channel.coverage_samples", "must be >= 1")
    _check(c.noise_floor is None or c.noise_floor > 0, "channel.noise_floor", "must be > 0")
    _check(0 <= c.p_cov_threshold <= 1, "channel.p_cov_threshold", "must lie in [0, 1]")
    _check(c.interferers in INTERFERER_SETS, "channel.interferers", f"must be one of {INTERFERER_SETS}")

    e = cfg.energy
    for name in ("initial_j", "eps_elec", "eps_amp_fs", "eps_amp_mp", "r0_m",
                 "payload_kw_per_kg", "mass_kg", "charge_rate_j_per_s"):
        v = getattr(e, name)
        _check(v > 0 and _finite(v), f"energy.{name}", "must be > 0")
    _check(0 <= e.threshold_j < e.initial_j, "energy.threshold_j", "must lie in [0, energy.initial_j)")

    k = cfg.collision
    _check(k.xi_x_m > 0 and k.xi_y_m > 0, "collision.xi_x_m" if k.xi_x_m <= 0 else "collision.xi_y_m",
           "must be > 0")
    _check(k.r_min_m > 0, "collision.r_min_m", "must be > 0")
    _check(0 <= k.p_coll_threshold <= 1, "collision.p_coll_threshold", "must lie in [0, 1]")
    _check(k.radius_scale > 0 and _finite(k.radius_scale), "collision.radius_scale", "must be > 0")

    n = cfg.discovery
    _check(n.base_hello_interval_ms > 0, "discovery.base_hello_interval_ms", "must be > 0")
    _check(n.max_hello_interval_ms >= n.base_hello_interval_ms, "discovery.max_hello_interval_ms",
           "must be >= discovery.base_hello_interval_ms")
    _check(n.expiry_ms > 0, "discovery.expiry_ms", "must be > 0")
    _check(0 < n.sector_half_angle_rad <= math.pi / 2, "discovery.sector_half_angle_rad",
           "must lie in (0, pi/2]")
    _check(n.expiry_mode in EXPIRY_MODES, "discovery.expiry_mode", f"must be one of {EXPIRY_MODES}")

    r = cfg.rl
    w = r.weights
    _check(len(w) == 5 and all(x > 0 for x in w), "rl.weights", "must be five positive weights")
    _check(all(a > b for a, b in zip(w, w[1:])), "rl.weights", "must be strictly decreasing")
    _check(abs(sum(w) - 1.0) <= 1e-9, "rl.weights", "must sum to 1")
    _check(0 <= r.lambda_ <= 1, "rl.lambda", "must lie in [0, 1]")
    _check(0 <= r.epsilon <= 1, "rl.epsilon", "must lie in [0, 1]")
    _check(r.beta_mode in BETA_MODES, "rl.beta_mode", f"must be one of {BETA_MODES}")
    _check(r.gamma_mode in GAMMA_MODES, "rl.gamma_mode", f"must be one of {GAMMA_MODES}")
    _check(0 < r.beta_min <= r.beta_max <= 1, "rl.beta_min", "need 0 < beta_min <= beta_max <= 1")
    _check(0 <= r.gamma_min <= r.gamma_max < 1, "rl.gamma_min", "need 0 <= gamma_min <= gamma_max < 1")
    _check(0 < r.beta_fixed <= 1, "rl.beta_fixed", "must lie in (0, 1]")
    _check(0 <= r.gamma_fixed < 1, "rl.gamma_fixed", "must lie in [0, 1)")
    _check(r.max_hops >= 1, "rl.max_hops", "must be >= 1")

    for i, ev in enumerate(cfg.scenario):
        _validate_event(ev, f"scenario.event[{i}]", cfg)


def _validate_event(ev: ScenarioEvent, where: str, cfg: SimConfig) -> None:
    _check(ev.episode >= 0, f"{where}.episode", "must be >= 0")
    _check(ev.kind in EVENT_KINDS, f"{where}.kind", f"must be one of {EVENT_KINDS}")
    _check(ev.selector in SELECTORS, f"{where}.selector", f"must be one of {SELECTORS}")
    _check(0 < ev.fraction <= 1, f"{where}.fraction", "must lie in (0, 1]")
    _check(ev.duration_ms > 0, f"{where}.duration_ms", "must be > 0")
    _check(ev.rejoin in REJOIN_POLICIES, f"{where}.rejoin", f"must be one of {REJOIN_POLICIES}")
    _check(ev.rejoin_window_ms >= 0, f"{where}.rejoin_window_ms", "must be >= 0")
    if ev.selector == "explicit-ids":
        _check(len(ev.ids) > 0 and all(0 <= i < cfg.sim.num_uavs for i in ev.ids), f"{where}.ids",
               "explicit-ids needs ids within [0, sim.num_uavs)")
    if ev.kind == "sweep-param":
        _check(ev.param in all_keys() and not ev.param.startswith("sim."), f"{where}.param",
               "must name a non-sim config key")
        try:
            cfg.replace(ev.param, ev.value)
        except ConfigError as exc:
            raise ConfigError(f"invalid override value ({exc})", key=f"{where}.value") from None


def _parse_event(raw: dict, where: str) -> ScenarioEvent:
    known = {f.name: f.type for f in fields(ScenarioEvent)}
    kwargs = {}
    for name, value in raw.items():
        if name not in known:
            raise ConfigError("unknown key", key=f"{where}.{name}")
        if name == "value":
            kwargs[name] = value
        elif name == "ids":
            kwargs[name] = tuple(int(v) for v in value)
        else:
            kwargs[name] = _coerce(f"{where}.{name}", known[name], value)
    if "episode" not in kwargs or "kind" not in kwargs:
        raise ConfigError("events need 'episode' and 'kind'", key=where)
    return ScenarioEvent(**kwargs)


def from_dict(data: dict, location: str | None = None) -> SimConfig:
    """Build a validated SimConfig from parsed TOML data."""
    try:
        kwargs: dict[str, Any] = {}
        for top, value in data.items():
            if top == "radio_range_m":
                kwargs["radio_range_m"] = _coerce(top, "float", value)
            elif top == "scenario":
                if not isinstance(value, dict) or set(value) - {"event"}:
                    raise ConfigError("only [[scenario.event]] tables are allowed", key="scenario")
                events = value.get("event", [])
                kwargs["scenario"] = tuple(
                    _parse_event(ev, f"scenario.event[{i}]") for i, ev in enumerate(events))
            elif top in SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError("expected a [section] table", key=top)
                ftypes = _field_types(SECTIONS[top])
                sec_kwargs = {}
                for name, raw in value.items():
                    attr = "lambda_" if name == "lambda" else name
                    if attr not in ftypes:
                        raise ConfigError("unknown key", key=f"{top}.{name}")
                    sec_kwargs[attr] = _coerce(f"{top}.{name}", ftypes[attr], raw)
                kwargs[top] = SECTIONS[top](**sec_kwargs)
            else:
                raise ConfigError("unknown key", key=top)
        cfg = SimConfig(**kwargs)
        validate(cfg)
    except ConfigError as exc:
        if location and exc.location is None:
            raise ConfigError(exc.message, key=exc.key, location=location) from None
        raise
    return resolve(cfg)


def resolve(cfg: SimConfig) -> SimConfig:
    """Apply baseline overrides so the config reflects what actually runs."""
    if cfg.sim.baseline == "plain-q":
        rl = dataclasses.replace(cfg.rl, lambda_=0.0, beta_mode="fixed", beta_fixed=0.5,
                                 gamma_mode="fixed", gamma_fixed=0.9)
        cfg = dataclasses.replace(cfg, rl=rl)
    return cfg


def loads(text: str, location: str | None = None) -> SimConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}", location=location) from None
    return from_dict(data, location=location)


def load_config(path: str | Path, scenario: str | Path | None = None) -> SimConfig:
    """Load and validate a config file; absent keys take their defaults.

    ``scenario`` optionally names a second file whose ``[[scenario.event]]``
    tables replace the config's own event list.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", location=str(path)) from None
    cfg = loads(text, location=str(path))
    if scenario is not None:
        events = load_config(scenario).scenario
        cfg = dataclasses.replace(cfg, scenario=events)
        validate(cfg)
    return cfg


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot format {value!r}")  # pragma: no cover


def dumps(cfg: SimConfig) -> str:
    """Serialise the full effective config (every key written explicitly)."""
    lines = [f"radio_range_m = {_fmt(cfg.radio_range_m)}", ""]
    for name in SECTIONS:
        sec = getattr(cfg, name)
        lines.append(f"[{name}]")
        for f in fields(sec):
            value = getattr(sec, f.name)
            if name == "channel" and f.name == "noise_floor":
                value = cfg.noise_floor
            lines.append(f"{_toml_name(f.name)} = {_fmt(value)}")
        lines.append("")
    for ev in cfg.scenario:
        lines.append("[[scenario.event]]")
        for f in fields(ev):
            value = getattr(ev, f.name)
            if f.name == "value" and value is None:
                continue
            if f.name in ("ids", "param") and not value:
                continue
            lines.append(f"{f.name} = {_fmt(value)}")
        lines.append("")
    return "\n".join(lines)
