"""Reliability-oriented RPL downward routing: metrics, link probing, routing state and a simulator."""

from .config import ScenarioConfig, TrafficPattern, load_config
from .engine import Simulation, run
from .estimator import (
    NeighborEntry,
    NeighborTable,
    decay_freshness,
    schedule_immediate_probe,
    seed_from_rssi,
    select_probe_target,
    update_on_tx,
)
from .mac import DupMode, MacConfig, check_duplicate, transmit
from .metrics import Metric, MetricKind, RankValue, path_delivery, path_delivery_down, rank_etxn, rank_lr, select_parent
from .report import RunReport, emit_report, rule_of_three
from .routing import Mode, compute_source_route, header_size, nonstoring_update, snapshot_consistency
from .studies import parent_switch_experiment, replay_metric_study
from .topology import SynthParams, Topology, generate_synthetic, load_trace, prr_at

__version__ = "0.1.0"

__all__ = [
    "check_duplicate",
    "compute_source_route",
    "decay_freshness",
    "DupMode",
    "emit_report",
    "generate_synthetic",
    "header_size",
    "load_config",
    "load_trace",
    "MacConfig",
    "Metric",
    "MetricKind",
    "Mode",
    "NeighborEntry",
    "NeighborTable",
    "nonstoring_update",
    "parent_switch_experiment",
    "path_delivery",
    "path_delivery_down",
    "prr_at",
    "rank_etxn",
    "rank_lr",
    "RankValue",
    "replay_metric_study",
    "rule_of_three",
    "run",
    "RunReport",
    "ScenarioConfig",
    "schedule_immediate_probe",
    "seed_from_rssi",
    "select_parent",
    "select_probe_target",
    "Simulation",
    "snapshot_consistency",
    "SynthParams",
    "Topology",
    "TrafficPattern",
    "transmit",
    "update_on_tx",
]
