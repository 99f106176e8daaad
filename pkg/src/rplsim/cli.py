"""Command line front end: ``rplsim simulate | replay | analyze | gen-trace``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .config import ConfigError, ScenarioConfig, load_config
from .engine import run
from .metrics import Metric
from .report import analyze_runs, emit_report
from .studies import replay_metric_study
from .topology import (
    GenerationError,
    SynthParams,
    generate_synthetic,
    load_trace,
    topology_to_events,
    write_trace,
)

log = logging.getLogger("rplsim")


def _json_safe(obj):
    if isinstance(obj, float) and (math.isnan(obj) or math.isinf(obj)):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _write_or_print(payload: dict, out: str | None) -> None:
    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
        log.info("wrote %s", out)
    else:
        print(text)


def cmd_simulate(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.journeys:
        overrides["record_journeys"] = True
    cfg = load_config(args.config, **overrides) if args.config else ScenarioConfig(**overrides)
    report = run(cfg)
    formats = ("json", "csv") if args.format == "both" else (args.format,)
    for p in emit_report(report, args.out, formats):
        log.info("wrote %s", p)
    lost = report.lost
    print(
        f"seed={cfg.seed} sent={report.packets_sent} delivered={report.delivered} "
        f"lost={lost} loss_rate={report.loss_rate:.3g} bound={report.loss_rate_bound}"
        + (" SATURATED" if report.saturated else "")
    )
    return 0


def cmd_replay(args) -> int:
    topo = load_trace(args.trace, args.window_ms, root=args.root)
    metrics = [Metric.parse(m, retries_r=args.retries) for m in args.metrics.split(",") if m.strip()]
    studies = replay_metric_study(topo, metrics, r=args.retries, hysteresis=args.hysteresis)
    payload = {
        "trace": str(args.trace),
        "nodes": len(topo.nodes),
        "root": topo.root,
        "retries": args.retries,
        "metrics": {label: s.summary() for label, s in studies.items()},
    }
    _write_or_print(payload, args.out)
    return 0


def cmd_analyze(args) -> int:
    _write_or_print(analyze_runs(args.runs), args.out)
    return 0


def cmd_gen_trace(args) -> int:
    params = SynthParams(
        asymmetry_sigma=args.sigma,
        windows=args.windows,
        temporal_sigma=args.temporal_sigma,
    )
    topo = generate_synthetic(args.nodes, args.seed, params)
    write_trace(topology_to_events(topo, tx_per_window=args.tx_per_window), args.out)
    print(f"root={topo.root} nodes={len(topo.nodes)} links={len(topo.links)} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rplsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario and write its report")
    p.add_argument("--config", type=Path, help="key = value scenario file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--format", choices=("json", "csv", "both"), default="both")
    p.add_argument("--journeys", action="store_true", help="also write journeys.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="compare gradient metrics over a link trace")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--metrics", default="etx,etxn:2,lr")
    p.add_argument("--retries", type=int, default=8)
    p.add_argument("--hysteresis", type=float, default=None)
    p.add_argument("--window-ms", type=int, default=60_000)
    p.add_argument("--root", type=int, default=0)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("analyze", help="aggregate report.json files of a seed sweep")
    p.add_argument("--runs", type=Path, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("gen-trace", help="write a synthetic topology as a TX/RX trace")
    p.add_argument("--nodes", type=int, default=50)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--sigma", type=float, default=0.15, help="per-direction PRR noise")
    p.add_argument("--windows", type=int, default=1)
    p.add_argument("--temporal-sigma", type=float, default=0.0)
    p.add_argument("--tx-per-window", type=int, default=20)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, GenerationError, FileNotFoundError, ValueError) as exc:
        print(f"rplsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
