"""Scenario configuration: flat ``section.key = value`` text, SI-ish units.

Defaults mirror the usual DSRC evaluation setup (10 km road, 3 lanes,
30-50 mph, 300 m range, 256 B messages at 2 Mbit/s, CW 31/1023). Keys without
a section are general run settings.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from .engine import ConfigError, MacParams, Message, Scenario
from .geometry import MapError, ObstacleMap, load_map, manhattan_grid
from .mobility import MPH, TraceError, VehicleTrace, generate_trace, load_trace
from .protocols import DECISION_RULES, PROTOCOLS, FogNode, fog_along_road
from .radio import AttenuationParams, LinkBudget


@dataclass(frozen=True)
class Key:
    type: type
    default: object
    unit: str
    help: str


KEYS: dict[str, Key] = {
    "seed": Key(int, 1, "-", "random seed for traces, schedule and MAC"),
    "protocol": Key(str, "hybrid_vehfog", "-", "one of " + ", ".join(PROTOCOLS)),
    "decision_rule": Key(str, "per_receiver_shadowing", "-", "one of " + ", ".join(DECISION_RULES)),
    "dmax_ms": Key(float, 100.0, "ms", "delay deadline used to normalise delay in m_success"),
    "duration_s": Key(float, 0.0, "s", "beacon horizon; 0 means the trace duration"),
    "map.file": Key(str, "", "path", "obstacle map file; empty for a generated grid or no buildings"),
    "map.grid_cols": Key(int, 0, "-", "Manhattan grid columns (0 disables the grid)"),
    "map.grid_rows": Key(int, 0, "-", "Manhattan grid rows"),
    "map.block_m": Key(float, 80.0, "m", "grid block edge"),
    "map.street_m": Key(float, 20.0, "m", "grid street width"),
    "map.inset_m": Key(float, 0.0, "m", "building inset from the block edge"),
    "map.margin_m": Key(float, 50.0, "m", "padding around the road when no map is given"),
    "trace.file": Key(str, "", "path", "trace CSV; mutually exclusive with generator keys"),
    "trace.n_vehicles": Key(int, 100, "-", "generated vehicle count"),
    "trace.road_length_m": Key(float, 10_000.0, "m", "road length"),
    "trace.lanes": Key(int, 3, "-", "lane count"),
    "trace.lane_y0_m": Key(float, 10.0, "m", "y of lane 0"),
    "trace.lane_spacing_m": Key(float, 3.5, "m", "distance between lane centre-lines"),
    "trace.speed_min_mps": Key(float, round(30 * MPH, 2), "m/s", "minimum speed (30 mph)"),
    "trace.speed_max_mps": Key(float, round(50 * MPH, 2), "m/s", "maximum speed (50 mph)"),
    "trace.duration_s": Key(float, 10.0, "s", "generated trace length"),
    "trace.dt_s": Key(float, 1.0, "s", "trace sample interval"),
    "radio.range_m": Key(float, 300.0, "m", "transmission range"),
    "radio.tx_power_dbm": Key(float, 20.0, "dBm", "transmit power"),
    "radio.tx_gain_dbi": Key(float, 0.0, "dBi", "transmit antenna gain"),
    "radio.rx_gain_dbi": Key(float, 0.0, "dBi", "receive antenna gain"),
    "radio.freq_mhz": Key(float, 5900.0, "MHz", "carrier frequency"),
    "radio.sensitivity_dbm": Key(float, -85.0, "dBm", "minimum decodable power"),
    "radio.margin_db": Key(float, 3.0, "dB", "uncertainty band above sensitivity counted as shadowed"),
    "radio.alpha_db": Key(float, 9.0, "dB", "loss per exterior wall crossing"),
    "radio.beta_db_per_m": Key(float, 0.4, "dB/m", "loss per metre inside buildings"),
    "mac.data_rate_bps": Key(float, 2e6, "bit/s", "data rate"),
    "mac.cw_min": Key(int, 31, "slots", "minimum contention window"),
    "mac.cw_max": Key(int, 1023, "slots", "maximum contention window"),
    "mac.slot_us": Key(float, 13.0, "us", "backoff slot time"),
    "mac.max_attempts": Key(int, 3, "-", "transmissions per frame including retries"),
    "mac.contention": Key(bool, True, "-", "random backoff on/off"),
    "mac.collisions": Key(bool, True, "-", "overlapping frames destroy each other"),
    "mac.proc_relay_ms": Key(float, 0.1, "ms", "processing delay at a relaying vehicle"),
    "mac.beacon_interval_ms": Key(float, 0.0, "ms", "background beacon period (0 disables)"),
    "mac.beacon_size_bytes": Key(int, 300, "B", "background beacon size"),
    "message.size_bytes": Key(int, 256, "B", "critical message size"),
    "message.count": Key(int, 10, "-", "messages from randomly chosen senders"),
    "message.start_s": Key(float, 0.0, "s", "first message time"),
    "message.interval_ms": Key(float, 10.0, "ms", "spacing between messages"),
    "message.senders": Key(str, "", "ids", "explicit comma-separated sender ids (overrides count)"),
    "message.times_s": Key(str, "", "s", "explicit comma-separated emission times, one per sender"),
    "fog.spacing_m": Key(float, 1000.0, "m", "fog node spacing along the road"),
    "fog.coverage_m": Key(float, 600.0, "m", "fog node coverage radius"),
    "fog.y_m": Key(str, "", "m", "fog node y (empty: centre lane)"),
    "fog.positions": Key(str, "", "m", "explicit fog positions 'x:y;x:y' (overrides spacing)"),
    "fog.proc_ms": Key(float, 1.0, "ms", "processing delay at a fog node"),
    "fog.backhaul_ms": Key(float, 0.5, "ms", "wired latency between fog nodes"),
    "cloud.rtt_ms": Key(float, 50.0, "ms", "cloud round trip added by the cloud relay"),
    "cloud.gateway_fraction": Key(float, 0.3, "-", "share of vehicles acting as cellular gateways"),
    "flood.jitter_ms": Key(float, 5.0, "ms", "maximum random rebroadcast delay in flooding"),
}

_GENERATOR_KEYS = [k for k in KEYS if k.startswith("trace.") and k != "trace.file"]

_POSITIVE = {"trace.n_vehicles", "trace.road_length_m", "trace.lanes", "trace.duration_s",
             "trace.dt_s", "radio.range_m", "radio.freq_mhz", "mac.data_rate_bps", "mac.slot_us",
             "mac.max_attempts", "message.size_bytes", "fog.spacing_m", "fog.coverage_m",
             "dmax_ms", "map.block_m"}
_NON_NEGATIVE = {"radio.margin_db", "radio.alpha_db", "radio.beta_db_per_m", "mac.cw_min",
                 "mac.proc_relay_ms", "mac.beacon_interval_ms", "message.count",
                 "message.start_s", "message.interval_ms", "fog.proc_ms", "fog.backhaul_ms",
                 "cloud.rtt_ms", "flood.jitter_ms", "map.grid_cols", "map.grid_rows",
                 "map.street_m", "map.inset_m", "map.margin_m", "duration_s",
                 "trace.speed_min_mps", "mac.beacon_size_bytes"}


def _parse(key: str, raw: str):
    kind = KEYS[key].type
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None


@dataclass
class Config:
    values: dict[str, object] = field(default_factory=lambda: {k: v.default for k, v in KEYS.items()})
    explicit: set[str] = field(default_factory=set)
    base_dir: Path = Path(".")

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, value) -> None:
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _parse(key, value) if isinstance(value, str) else value
        self.explicit.add(key)

    def dumps(self) -> str:
        lines = []
        for k in KEYS:
            v = self.values[k]
            line = f"{k} = {str(v).lower() if isinstance(v, bool) else v}"
            if self["trace.file"] and k in _GENERATOR_KEYS:
                line = "# " + line + "  (unused with trace.file)"
            lines.append(line)
        return "\n".join(lines) + "\n"

    def validate(self) -> None:
        for k in _POSITIVE:
            if not self.values[k] > 0:
                raise ConfigError(f"{k}: must be positive, got {self.values[k]}")
        for k in _NON_NEGATIVE:
            if self.values[k] < 0:
                raise ConfigError(f"{k}: must be non-negative, got {self.values[k]}")
        if self["protocol"] not in PROTOCOLS:
            raise ConfigError(f"protocol: unknown {self['protocol']!r}; choose from {', '.join(PROTOCOLS)}")
        if self["decision_rule"] not in DECISION_RULES:
            raise ConfigError(f"decision_rule: unknown {self['decision_rule']!r}")
        if self["mac.cw_max"] < self["mac.cw_min"]:
            raise ConfigError("mac.cw_max: must be >= mac.cw_min")
        if self["trace.speed_max_mps"] < self["trace.speed_min_mps"]:
            raise ConfigError("trace.speed_max_mps: must be >= trace.speed_min_mps")
        if not 0 <= self["cloud.gateway_fraction"] <= 1:
            raise ConfigError("cloud.gateway_fraction: must lie in [0, 1]")
        if self["trace.file"]:
            clash = sorted(k for k in _GENERATOR_KEYS if k in self.explicit)
            if clash:
                raise ConfigError(f"{clash[0]}: trace.file and trace generator keys are mutually exclusive")
        for k in ("map.file", "trace.file"):
            if self[k] and not self.path(k).is_file():
                raise ConfigError(f"{k}: file not found: {self.path(k)}")

    def path(self, key: str) -> Path:
        p = Path(str(self[key]))
        return p if p.is_absolute() else self.base_dir / p


def parse_config(text: str, base_dir: str | Path = ".") -> Config:
    cfg = Config(base_dir=Path(base_dir))
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {ln}: expected 'key = value'")
        cfg.set(key.strip(), value.strip())
    return cfg


def load_config(path: str | Path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)


def _floats(key: str, text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers") from None


def build_trace(cfg: Config) -> VehicleTrace:
    if cfg["trace.file"]:
        try:
            return load_trace(cfg.path("trace.file").read_text())
        except TraceError as exc:
            raise ConfigError(f"trace.file: {exc}") from None
    return generate_trace(
        cfg["trace.n_vehicles"], cfg["trace.road_length_m"], cfg["trace.lanes"],
        (cfg["trace.speed_min_mps"], cfg["trace.speed_max_mps"]), cfg["trace.duration_s"],
        cfg["trace.dt_s"], seed=cfg["seed"], lane_y0=cfg["trace.lane_y0_m"],
        lane_spacing=cfg["trace.lane_spacing_m"])


def build_map(cfg: Config, trace: VehicleTrace) -> ObstacleMap:
    if cfg["map.file"]:
        try:
            return load_map(cfg.path("map.file").read_text())
        except MapError as exc:
            raise ConfigError(f"map.file: {exc}") from None
    if cfg["map.grid_cols"] > 0 and cfg["map.grid_rows"] > 0:
        try:
            return manhattan_grid(cfg["map.grid_cols"], cfg["map.grid_rows"], cfg["map.block_m"],
                                  cfg["map.street_m"], cfg["map.inset_m"])
        except MapError as exc:
            raise ConfigError(f"map.grid_cols: {exc}") from None
    pad = cfg["map.margin_m"]
    xs = [s.pos[0] for snap in trace.snapshots for s in snap]
    ys = [s.pos[1] for snap in trace.snapshots for s in snap]
    x_hi = max(max(xs), cfg["trace.road_length_m"]) if not cfg["trace.file"] else max(xs)
    return ObstacleMap.empty((min(0.0, min(xs)) - pad, min(ys) - pad, x_hi + pad, max(ys) + pad))


def build_fog(cfg: Config, trace: VehicleTrace) -> list[FogNode]:
    cov, proc = cfg["fog.coverage_m"], cfg["fog.proc_ms"] / 1e3
    if cfg["fog.positions"]:
        nodes = []
        for k, item in enumerate(p for p in cfg["fog.positions"].split(";") if p.strip()):
            try:
                x, y = (float(v) for v in item.split(":"))
            except ValueError:
                raise ConfigError(f"fog.positions: bad entry {item!r}, want x:y") from None
            nodes.append(FogNode(k, (x, y), cov, proc))
        return nodes
    if cfg["fog.y_m"]:
        y = _floats("fog.y_m", cfg["fog.y_m"])[0]
    else:
        lanes = sorted({s.pos[1] for s in trace.snapshots[0]})
        y = (lanes[0] + lanes[-1]) / 2 if lanes else 0.0
    x0, length = 0.0, cfg["trace.road_length_m"]
    if cfg["trace.file"]:
        xs = [s.pos[0] for snap in trace.snapshots for s in snap]
        x0, length = min(xs), max(xs) - min(xs)
    return fog_along_road(length, y, cfg["fog.spacing_m"], cov, proc, x0=x0)


def build_messages(cfg: Config, trace: VehicleTrace) -> list[Message]:
    size = cfg["message.size_bytes"]
    if cfg["message.senders"]:
        try:
            senders = [int(v) for v in cfg["message.senders"].split(",") if v.strip()]
        except ValueError:
            raise ConfigError("message.senders: expected comma-separated integer ids") from None
        times = _floats("message.times_s", cfg["message.times_s"]) if cfg["message.times_s"] else None
        if times is None:
            times = [cfg["message.start_s"] + k * cfg["message.interval_ms"] / 1e3
                     for k in range(len(senders))]
        if len(times) != len(senders):
            raise ConfigError("message.times_s: need one time per sender")
        return [Message(k, s, size, t) for k, (s, t) in enumerate(zip(senders, times))]
    rng = random.Random(f"{cfg['seed']}:messages")
    msgs = []
    for k in range(cfg["message.count"]):
        t = cfg["message.start_s"] + k * cfg["message.interval_ms"] / 1e3
        ids = sorted(s.id for s in trace.at(t))
        msgs.append(Message(k, rng.choice(ids), size, t))
    return msgs


def build_scenario(cfg: Config) -> Scenario:
    cfg.validate()
    trace = build_trace(cfg)
    obstacles = build_map(cfg, trace)
    link = LinkBudget(cfg["radio.tx_power_dbm"], cfg["radio.tx_gain_dbi"], cfg["radio.rx_gain_dbi"],
                      cfg["radio.freq_mhz"], cfg["radio.sensitivity_dbm"], cfg["radio.margin_db"])
    mac = MacParams(cfg["mac.data_rate_bps"], cfg["mac.cw_min"], cfg["mac.cw_max"],
                    cfg["mac.slot_us"] / 1e6, cfg["mac.max_attempts"], cfg["mac.contention"],
                    cfg["mac.collisions"], cfg["mac.proc_relay_ms"] / 1e3,
                    cfg["mac.beacon_interval_ms"] / 1e3, cfg["mac.beacon_size_bytes"])
    return Scenario(
        obstacles=obstacles, trace=trace, messages=build_messages(cfg, trace),
        protocol=cfg["protocol"], decision_rule=cfg["decision_rule"], link=link,
        attenuation=AttenuationParams(cfg["radio.alpha_db"], cfg["radio.beta_db_per_m"]),
        mac=mac, trans_range=cfg["radio.range_m"], fog_nodes=build_fog(cfg, trace),
        seed=cfg["seed"], dmax=cfg["dmax_ms"] / 1e3, cloud_rtt=cfg["cloud.rtt_ms"] / 1e3,
        gateway_fraction=cfg["cloud.gateway_fraction"], fog_backhaul=cfg["fog.backhaul_ms"] / 1e3,
        flood_jitter=cfg["flood.jitter_ms"] / 1e3,
        duration=cfg["duration_s"] or trace.times[-1])


def keys_help() -> str:
    width = max(len(k) for k in KEYS)
    lines = ["config keys (key = default [unit]: meaning):"]
    for k, spec in KEYS.items():
        default = str(spec.default).lower() if isinstance(spec.default, bool) else spec.default
        lines.append(f"  {k:<{width}} = {default!s:<22} [{spec.unit}] {spec.help}")
    return "\n".join(lines)
