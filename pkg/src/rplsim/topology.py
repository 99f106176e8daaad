"""Ground-truth network: nodes and directional, time-varying link qualities.

Links are stored per ordered pair so that up- and downward quality can differ.
A link's PRR is a right-continuous step function of time; queries before the
first sample return the first sample, and an absent link has PRR 0.
"""

from __future__ import annotations

import bisect
import math
import random
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

DEFAULT_WINDOW_MS = 60_000
DEFAULT_RSSI_DBM = -75


class TraceParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class TraceValidationError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DirectionalLink:
    src: int
    dst: int
    prr_series: tuple[tuple[int, float], ...]
    rssi_dbm: int | None = None

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("link endpoints must differ")
        if not self.prr_series:
            raise ValueError("a link needs at least one PRR sample")
        last = None
        for t, prr in self.prr_series:
            if not 0.0 <= prr <= 1.0:
                raise ValueError(f"prr {prr} outside [0, 1]")
            if last is not None and t <= last:
                raise ValueError("sample times must be strictly increasing")
            last = t
        object.__setattr__(self, "_times", tuple(t for t, _ in self.prr_series))

    def prr_at(self, time_ms: float) -> float:
        i = bisect.bisect_right(self._times, time_ms) - 1
        return self.prr_series[max(i, 0)][1]


@dataclass(frozen=True)
class Topology:
    nodes: tuple[int, ...]
    root: int
    links: Mapping[tuple[int, int], DirectionalLink]
    positions: Mapping[int, tuple[float, float]] | None = None

    def __post_init__(self):
        if tuple(self.nodes) != tuple(range(len(self.nodes))):
            raise ValueError("node ids must be dense in [0, node_count)")
        if self.root not in self.nodes:
            raise ValueError(f"root {self.root} is not a node")
        object.__setattr__(self, "links", MappingProxyType(dict(self.links)))
        out_nbrs: dict[int, list[int]] = defaultdict(list)
        in_nbrs: dict[int, list[int]] = defaultdict(list)
        for src, dst in sorted(self.links):
            out_nbrs[src].append(dst)
            in_nbrs[dst].append(src)
        object.__setattr__(self, "_out", {n: tuple(v) for n, v in out_nbrs.items()})
        object.__setattr__(self, "_in", {n: tuple(v) for n, v in in_nbrs.items()})

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def link(self, src: int, dst: int) -> DirectionalLink | None:
        return self.links.get((src, dst))

    def prr_at(self, src: int, dst: int, time_ms: float) -> float:
        return prr_at(self, src, dst, time_ms)

    def out_neighbors(self, node: int) -> tuple[int, ...]:
        """Nodes that ``node`` can reach with non-zero probability at some time."""
        return self._out.get(node, ())

    def in_neighbors(self, node: int) -> tuple[int, ...]:
        return self._in.get(node, ())

    def sample_times(self) -> list[int]:
        times = {t for link in self.links.values() for t, _ in link.prr_series}
        return sorted(times)


def prr_at(topology: Topology, src: int, dst: int, time_ms: float) -> float:
    link = topology.links.get((src, dst))
    if link is None:
        return 0.0
    return link.prr_at(time_ms)


# --------------------------------------------------------------------- traces


class EventKind(Enum):
    TX = "TX"
    RX = "RX"


@dataclass(frozen=True)
class TraceEvent:
    time_ms: int
    kind: EventKind
    sender: int
    seqno: int
    receiver: int | None = None
    rssi_dbm: int | None = None

    def to_line(self) -> str:
        if self.kind is EventKind.TX:
            return f"TX {self.time_ms} {self.sender} {self.seqno}"
        line = f"RX {self.time_ms} {self.sender} {self.receiver} {self.seqno}"
        if self.rssi_dbm is not None:
            line += f" {self.rssi_dbm}"
        return line


def parse_trace_line(line: str, lineno: int) -> TraceEvent | None:
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    parts = text.split()
    kind = parts[0]
    try:
        values = [int(p) for p in parts[1:]]
    except ValueError as exc:
        raise TraceParseError(lineno, f"non-integer field in {text!r}") from exc
    if kind == "TX":
        if len(values) != 3:
            raise TraceParseError(lineno, "TX expects <time_ms> <sender_id> <seqno>")
        time_ms, sender, seqno = values
        receiver = rssi = None
    elif kind == "RX":
        if len(values) not in (4, 5):
            raise TraceParseError(
                lineno, "RX expects <time_ms> <sender_id> <receiver_id> <seqno> [rssi_dbm]"
            )
        time_ms, sender, receiver, seqno = values[:4]
        rssi = values[4] if len(values) == 5 else None
    else:
        raise TraceParseError(lineno, f"unknown record type {kind!r}")
    if time_ms < 0:
        raise TraceParseError(lineno, "negative time")
    if sender < 0 or (receiver is not None and receiver < 0):
        raise TraceParseError(lineno, "negative node id")
    return TraceEvent(time_ms, EventKind(kind), sender, seqno, receiver, rssi)


def read_trace_events(path: str | Path) -> list[TraceEvent]:
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            event = parse_trace_line(line, lineno)
            if event is not None:
                events.append(event)
    return events


def write_trace(events: Iterable[TraceEvent], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("# rplsim trace\n")
        for event in events:
            fh.write(event.to_line() + "\n")


def topology_from_events(
    events: Iterable[TraceEvent],
    window_ms: int = DEFAULT_WINDOW_MS,
    root: int = 0,
    node_count: int | None = None,
) -> Topology:
    """Window the events and turn RX/TX counts into per-link PRR samples."""
    if window_ms <= 0:
        raise ValueError("window_ms must be positive")
    tx_keys = set()
    tx_count: dict[tuple[int, int], int] = defaultdict(int)  # (sender, window)
    rx_count: dict[tuple[int, int, int], int] = defaultdict(int)  # (sender, receiver, window)
    rssi_sum: dict[tuple[int, int], list[int]] = defaultdict(list)
    rx_events = []
    max_id = root
    for ev in events:
        max_id = max(max_id, ev.sender, ev.receiver if ev.receiver is not None else 0)
        if ev.kind is EventKind.TX:
            tx_keys.add((ev.time_ms, ev.sender, ev.seqno))
            tx_count[(ev.sender, ev.time_ms // window_ms)] += 1
        else:
            rx_events.append(ev)
    for ev in rx_events:
        if (ev.time_ms, ev.sender, ev.seqno) not in tx_keys:
            raise TraceValidationError(
                f"RX at {ev.time_ms} from {ev.sender} seqno {ev.seqno} has no matching TX"
            )
        if ev.sender == ev.receiver:
            raise TraceValidationError(f"node {ev.sender} received its own frame")
        rx_count[(ev.sender, ev.receiver, ev.time_ms // window_ms)] += 1
        rssi_sum[(ev.sender, ev.receiver)].append(
            DEFAULT_RSSI_DBM if ev.rssi_dbm is None else ev.rssi_dbm
        )

    n = node_count if node_count is not None else max_id + 1
    windows_by_sender: dict[int, list[int]] = defaultdict(list)
    for sender, w in sorted(tx_count):
        windows_by_sender[sender].append(w)

    links = {}
    for src, dst in sorted(rssi_sum):
        series = []
        for w in windows_by_sender[src]:
            received = rx_count.get((src, dst, w), 0)
            series.append((w * window_ms, received / tx_count[(src, w)]))
        rssis = rssi_sum[(src, dst)]
        links[(src, dst)] = DirectionalLink(
            src, dst, tuple(series), rssi_dbm=round(sum(rssis) / len(rssis))
        )
    return Topology(tuple(range(n)), root, links)


def load_trace(
    path: str | Path,
    window_ms: int = DEFAULT_WINDOW_MS,
    root: int = 0,
    node_count: int | None = None,
) -> Topology:
    return topology_from_events(read_trace_events(path), window_ms, root, node_count)


def topology_to_events(
    topology: Topology, tx_per_window: int = 20, window_ms: int = DEFAULT_WINDOW_MS
) -> list[TraceEvent]:
    """Render a topology as a trace whose windowed PRRs round to the topology's.

    Each node broadcasts ``tx_per_window`` frames per sample window; a link
    with PRR p receives the first ``round(p * tx_per_window)`` of them.
    Useful for feeding synthetic topologies to the trace replay path.
    """
    times = topology.sample_times() or [0]
    spacing = window_ms // (tx_per_window * topology.node_count + 1)
    if spacing < 1:
        raise ValueError("window too short for the requested broadcast count")
    events = []
    for w_index, t0 in enumerate(times):
        base = (t0 // window_ms) * window_ms
        for k in range(tx_per_window):
            for sender in topology.nodes:
                t = base + spacing * (k * topology.node_count + sender + 1)
                seqno = (w_index * tx_per_window + k) % 256
                events.append(TraceEvent(t, EventKind.TX, sender, seqno))
                for dst in topology.out_neighbors(sender):
                    link = topology.links[(sender, dst)]
                    if k < round(link.prr_at(t0) * tx_per_window):
                        events.append(
                            TraceEvent(t, EventKind.RX, sender, seqno, dst, link.rssi_dbm)
                        )
    return events


# ------------------------------------------------------------------ synthetic


@dataclass(frozen=True)
class SynthParams:
    area_side_m: float = 100.0
    d_max_m: float = 35.0
    asymmetry_sigma: float = 0.0
    connectivity_floor: float = 0.3
    windows: int = 1
    window_ms: int = DEFAULT_WINDOW_MS
    # Shared by both directions of a pair, so zero asymmetry stays symmetric.
    temporal_sigma: float = 0.0
    max_retries: int = 200


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _base_prr(distance: float, d_max: float) -> float:
    return _clamp01(1.0 - (distance / d_max) ** 2)


def _rssi_for(prr: float) -> int:
    # Inverse of the estimator's RSSI prior over its linear range.
    return round(-90 + 30 * prr)


def _connected(node_count: int, root: int, usable: set[tuple[int, int]]) -> bool:
    adj: dict[int, list[int]] = defaultdict(list)
    for a, b in usable:
        adj[a].append(b)
    seen = {root}
    stack = [root]
    while stack:
        x = stack.pop()
        for y in adj[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == node_count


def generate_synthetic(node_count: int, seed: int, params: SynthParams = SynthParams()) -> Topology:
    """Random geometric network with per-direction PRR noise.

    The root is the node closest to the centre of the square.  The graph is
    regenerated (from the same seeded stream) until every node can reach the
    root over pairs whose PRR is at least ``connectivity_floor`` both ways.
    """
    if node_count < 2:
        raise ValueError("node_count must be at least 2")
    if params.asymmetry_sigma < 0 or params.temporal_sigma < 0:
        raise ValueError("noise sigmas must be non-negative")
    if params.windows < 1:
        raise ValueError("need at least one window")
    rng = random.Random(seed)
    side = params.area_side_m
    for _ in range(params.max_retries):
        pos = [(rng.uniform(0, side), rng.uniform(0, side)) for _ in range(node_count)]
        centre = (side / 2, side / 2)
        root = min(range(node_count), key=lambda i: math.dist(pos[i], centre))
        links = {}
        usable = set()
        for a in range(node_count):
            for b in range(a + 1, node_count):
                base = _base_prr(math.dist(pos[a], pos[b]), params.d_max_m)
                if base <= 0.0:
                    continue
                ab = _clamp01(base + rng.gauss(0.0, params.asymmetry_sigma)) if params.asymmetry_sigma else base
                ba = _clamp01(base + rng.gauss(0.0, params.asymmetry_sigma)) if params.asymmetry_sigma else base
                shared = [
                    rng.gauss(0.0, params.temporal_sigma) if params.temporal_sigma else 0.0
                    for _ in range(params.windows)
                ]
                for src, dst, static in ((a, b, ab), (b, a, ba)):
                    series = tuple(
                        (w * params.window_ms, _clamp01(static + shared[w]))
                        for w in range(params.windows)
                    )
                    if all(p == 0.0 for _, p in series):
                        continue
                    links[(src, dst)] = DirectionalLink(src, dst, series, _rssi_for(static))
                if min(ab, ba) >= params.connectivity_floor:
                    usable.add((a, b))
                    usable.add((b, a))
        if _connected(node_count, root, usable):
            return Topology(tuple(range(node_count)), root, links, MappingProxyType(dict(enumerate(pos))))
    raise GenerationError(
        f"no connected topology after {params.max_retries} attempts; "
        "increase d_max_m or lower connectivity_floor"
    )


def asymmetry_pairs(topology: Topology, time_ms: float = 0) -> list[tuple[int, int, float]]:
    """(a, b, |PRR a->b - PRR b->a|) for every unordered pair with a link."""
    out = []
    seen = set()
    for a, b in topology.links:
        key = (min(a, b), max(a, b))
        if key in seen:
            continue
        seen.add(key)
        lo, hi = key
        out.append((lo, hi, abs(topology.prr_at(lo, hi, time_ms) - topology.prr_at(hi, lo, time_ms))))
    return out
