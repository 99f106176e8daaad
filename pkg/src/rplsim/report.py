"""Run reports: loss accounting, confidence bounds, CSV/JSON output."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .mac import CORE_CAUSES, Cause

RULE_OF_THREE_CONFIDENCE = 0.95


def rule_of_three(n_sent: int, losses: int) -> float:
    """95% upper bound on the loss rate when nothing was lost, else the observed rate."""
    if n_sent < 1:
        raise ValueError("n_sent must be >= 1")
    if losses < 0 or losses > n_sent:
        raise ValueError("losses must lie in [0, n_sent]")
    if losses == 0:
        return 3 / n_sent
    return losses / n_sent


def quantiles(values: Iterable[float]) -> dict[str, float | int | None]:
    vals = sorted(values)
    if not vals:
        return {"count": 0, "min": None, "p50": None, "p90": None, "p99": None, "max": None, "mean": None}

    def q(p):
        return vals[min(len(vals) - 1, int(math.floor(p * (len(vals) - 1) + 0.5)))]

    return {
        "count": len(vals),
        "min": vals[0],
        "p50": statistics.median(vals),
        "p90": q(0.90),
        "p99": q(0.99),
        "max": vals[-1],
        "mean": statistics.fmean(vals),
    }


@dataclass
class RunReport:
    config: dict
    node_count: int
    root: int
    packets_sent: int
    delivered: int
    losses: dict[str, int]
    loss_rate: float
    loss_rate_bound: float | None
    latency_ms: dict
    link_prr_up: dict
    link_prr_down: dict
    hop_count: dict
    radius: int
    parent_switches: int
    switches_per_node_hour: float
    consistency: dict[str, int]
    parent_staleness_ms: dict
    neighbor_staleness_ms: dict
    control: dict
    ambiguous_acks: int
    srh_bytes: dict
    max_queue_depth: int
    saturated: bool
    timeline: list = dataclasses.field(default_factory=list, repr=False)
    staleness_series: list = dataclasses.field(default_factory=list, repr=False)
    journeys: list | None = dataclasses.field(default=None, repr=False)

    @property
    def lost(self) -> int:
        return sum(self.losses.values())

    def conserved(self) -> bool:
        return self.packets_sent == self.delivered + self.lost

    def summary(self) -> dict:
        """Everything except the bulky per-snapshot and per-packet series."""
        d = dataclasses.asdict(self)
        for k in ("timeline", "staleness_series", "journeys"):
            d.pop(k)
        return d

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=2)

    def cause_rows(self) -> list[tuple[str, int, float]]:
        sent = self.packets_sent
        rows = []
        names = [c.value for c in CORE_CAUSES]
        names += sorted(k for k in self.losses if k not in names)
        for name in names:
            count = self.losses.get(name, 0)
            rows.append((name, count, count / sent if sent else 0.0))
        return rows


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def emit_report(report: RunReport, out_dir: str | Path, formats: Sequence[str] = ("json", "csv")) -> list[Path]:
    """Write ``report.json``, ``causes.csv``, ``consistency.csv`` (and ``journeys.csv``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out / "report.json"
        p.write_text(report.to_json() + "\n")
        written.append(p)
    if "csv" in formats:
        p = out / "causes.csv"
        _write_csv(p, ("cause", "count", "rate"), report.cause_rows())
        written.append(p)
        p = out / "consistency.csv"
        _write_csv(p, ("time_ms", "node_id", "status"), report.timeline)
        written.append(p)
        if report.journeys is not None:
            p = out / "journeys.csv"
            _write_csv(
                p,
                ("packet_id", "src", "dst", "send_time_ms", "counted", "terminal", "latency_ms", "hops"),
                (
                    (
                        j["packet_id"], j["src"], j["dst"], j["send_time_ms"], int(j["counted"]),
                        j["terminal"], "" if j["latency_ms"] is None else j["latency_ms"],
                        ";".join("/".join(str(x) for x in h) for h in j["hops"]),
                    )
                    for j in report.journeys
                ),
            )
            written.append(p)
    return written


def read_causes_csv(path: str | Path) -> dict[str, int]:
    with open(path, newline="") as fh:
        return {row["cause"]: int(row["count"]) for row in csv.DictReader(fh)}


def analyze_runs(runs_dir: str | Path) -> dict:
    """Aggregate every ``report.json`` below ``runs_dir`` into one loss summary."""
    reports = sorted(Path(runs_dir).rglob("report.json"))
    if not reports:
        raise FileNotFoundError(f"no report.json under {runs_dir}")
    sent = delivered = 0
    losses: dict[str, int] = {c.value: 0 for c in CORE_CAUSES}
    per_run = []
    for p in reports:
        data = json.loads(p.read_text())
        sent += data["packets_sent"]
        delivered += data["delivered"]
        for k, v in data["losses"].items():
            losses[k] = losses.get(k, 0) + v
        per_run.append(
            {
                "run": str(p.parent.relative_to(runs_dir)) if p.parent != Path(runs_dir) else ".",
                "seed": data["config"].get("seed"),
                "packets_sent": data["packets_sent"],
                "lost": sum(data["losses"].values()),
                "loss_rate": data["loss_rate"],
            }
        )
    lost = sum(losses.values())
    return {
        "runs": len(reports),
        "packets_sent": sent,
        "delivered": delivered,
        "losses": losses,
        "loss_rate": lost / sent if sent else 0.0,
        "loss_rate_bound": rule_of_three(sent, lost) if sent else None,
        "bound_kind": "rule_of_three_95" if sent and lost == 0 else "observed",
        "per_run": per_run,
    }


__all__ = [
    "Cause",
    "RunReport",
    "analyze_runs",
    "emit_report",
    "quantiles",
    "read_causes_csv",
    "rule_of_three",
]
