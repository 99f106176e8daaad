"""Scenario configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .mac import DupMode, MacConfig
from .metrics import Metric, MetricKind
from .routing import Mode
from .topology import SynthParams


class TrafficPattern(Enum):
    DOWNWARD = "downward"
    ANY_TO_ANY = "any_to_any"


class AddressMode(Enum):
    HOMOGENEOUS = "homogeneous"
    HETEROGENEOUS = "heterogeneous"


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    mode: Mode = Mode.STORING
    metric: MetricKind = MetricKind.ETX
    exponent_n: float = 2.0
    hysteresis: float | None = None
    probing: bool = False
    probe_period_s: float = 60.0
    probe_retries: int | None = None

    # MAC
    dup_mode: DupMode = DupMode.NAIVE
    retries_r: int = 8
    queue_capacity: int = 24
    seq_lifetime_ms: int = 30_000
    per_attempt_delay_ms: int = 40
    naive_ring_size: int = 8
    ack_sender_addr: bool = True
    same_slot_rate: float = 0.0

    # link estimator
    ewma_alpha: float = 0.15
    freshness_max: float = 16.0
    freshness_half_life_s: float = 240.0
    freshness_threshold: float = 2.0
    neighbor_capacity: int = 32

    # control plane
    beacon_period_s: float = 4.0
    dao_period_s: float = 60.0
    timer_jitter: float = 0.1
    storing_capacity: int = 64
    address_mode: AddressMode = AddressMode.HOMOGENEOUS

    # traffic
    traffic_pattern: TrafficPattern = TrafficPattern.DOWNWARD
    rate_hz: float = 4.0
    payload_bytes: int = 16
    source_fraction: float = 0.1
    source_interval_s: float = 20.0
    max_rate_hz: float = 50.0

    # run
    duration_s: float = 3600.0
    warmup_s: float = 300.0
    seed: int = 0
    snapshot_interval_s: float = 10.0
    saturation_window_s: float = 60.0
    record_journeys: bool = False
    max_hops: int = 64

    # topology: a trace path, or synthetic parameters
    trace: str | None = None
    trace_window_ms: int = 60_000
    trace_root: int = 0
    node_count: int = 50
    topology_seed: int = 1
    area_side_m: float = 100.0
    d_max_m: float = 35.0
    asymmetry_sigma: float = 0.15
    connectivity_floor: float = 0.3
    topology_windows: int = 1
    topology_window_ms: int = 60_000
    temporal_sigma: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.warmup_s >= self.duration_s:
            raise ConfigError("warmup_s must be shorter than duration_s")
        if self.rate_hz <= 0 or self.rate_hz > self.max_rate_hz:
            raise ConfigError(f"rate_hz must lie in (0, {self.max_rate_hz}]")
        if self.retries_r < 0:
            raise ConfigError("retries_r must be >= 0")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity must be >= 1")
        if not 0 <= self.same_slot_rate <= 1:
            raise ConfigError("same_slot_rate must lie in [0, 1]")
        if self.exponent_n < 1:
            raise ConfigError("exponent_n must be >= 1")

    @property
    def metric_obj(self) -> Metric:
        if self.metric is MetricKind.ETXN:
            return Metric.etxn(self.exponent_n)
        if self.metric is MetricKind.LR:
            return Metric.lr(self.retries_r)
        return Metric.etx()

    @property
    def effective_hysteresis(self) -> float:
        if self.hysteresis is not None:
            return self.hysteresis
        return self.metric_obj.default_hysteresis()

    @property
    def mac(self) -> MacConfig:
        return MacConfig(
            retries_r=self.retries_r,
            queue_capacity=self.queue_capacity,
            dup_mode=self.dup_mode,
            seq_lifetime_ms=self.seq_lifetime_ms,
            per_attempt_delay_ms=self.per_attempt_delay_ms,
            naive_ring_size=self.naive_ring_size,
            ack_sender_addr=self.ack_sender_addr,
        )

    @property
    def synth_params(self) -> SynthParams:
        return SynthParams(
            area_side_m=self.area_side_m,
            d_max_m=self.d_max_m,
            asymmetry_sigma=self.asymmetry_sigma,
            connectivity_floor=self.connectivity_floor,
            windows=self.topology_windows,
            window_ms=self.topology_window_ms,
            temporal_sigma=self.temporal_sigma,
        )

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, Enum) else v
        return out


_ENUMS = {
    "mode": Mode,
    "metric": MetricKind,
    "dup_mode": DupMode,
    "traffic_pattern": TrafficPattern,
    "address_mode": AddressMode,
}
_ALIASES = {
    "pattern": "traffic_pattern",
    "traffic.pattern": "traffic_pattern",
    "traffic.rate_hz": "rate_hz",
    "traffic.payload_bytes": "payload_bytes",
    "r": "retries_r",
    "n": "exponent_n",
}


def _coerce(name: str, raw: str):
    fields = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    if name not in fields:
        raise ConfigError(f"unknown key {name!r}")
    text = raw.strip()
    if name in _ENUMS:
        try:
            return _ENUMS[name](text.lower())
        except ValueError as exc:
            raise ConfigError(f"bad value {text!r} for {name}") from exc
    default = fields[name].default
    if text.lower() in ("none", "null", ""):
        return None
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean {text!r} for {name}")
    if name in ("hysteresis",):
        return float(text)
    if name in ("probe_retries",):
        return int(text)
    if name == "trace":
        return text
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad number {text!r} for {name}") from exc
    return text


def parse_config_text(text: str, **overrides) -> ScenarioConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key == "metric" and ":" in value:
            # allow "metric = etxn:2" as shorthand
            kind, _, arg = value.partition(":")
            values["exponent_n" if kind.strip().lower() == "etxn" else "retries_r"] = _coerce(
                "exponent_n" if kind.strip().lower() == "etxn" else "retries_r", arg
            )
            value = kind
        try:
            values[key] = _coerce(key, value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
    values.update(overrides)
    return ScenarioConfig(**values)


def load_config(path: str | Path, **overrides) -> ScenarioConfig:
    return parse_config_text(Path(path).read_text(), **overrides)


def dump_config(config: ScenarioConfig) -> str:
    lines = []
    for k, v in config.to_dict().items():
        lines.append(f"{k} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"
