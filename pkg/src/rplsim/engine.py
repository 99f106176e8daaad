"""Deterministic discrete-event simulation of RPL downward traffic.

One run is a single-threaded event loop over integer milliseconds.  Every
random draw comes from a per-node (or per-purpose) ``random.Random`` seeded
from the run seed, so a configuration and seed fully determine the report.

Control traffic is abstracted: beacons, probes and route registrations are
sent instantly with the MAC retry model but bypass the data queues.  Data
packets are queued per node and served FIFO, each hop taking
``attempts * per_attempt_delay_ms``.
"""

from __future__ import annotations

import heapq
import logging
import math
import random
import statistics
from dataclasses import dataclass, field
from typing import Callable

from .config import AddressMode, ScenarioConfig, TrafficPattern
from .estimator import (
    EstimatorConfig,
    NeighborTable,
    TableFullError,
    decay_freshness,
    freshness_at,
    schedule_immediate_probe,
    select_probe_target,
    update_on_tx,
)
from .mac import (
    CORE_CAUSES,
    Cause,
    EnqueueResult,
    MacQueue,
    SeqnoCounter,
    Verdict,
    check_duplicate,
    make_dup_state,
    transmit,
)
from .metrics import Candidate, select_parent, would_be_rank
from .report import RunReport, quantiles, rule_of_three
from .routing import (
    Lookup,
    Mode,
    RootTopologyView,
    Status,
    StoringTable,
    UpdateVerdict,
    compute_source_route,
    heterogeneous_addresses,
    homogeneous_addresses,
    nonstoring_update,
    snapshot_consistency,
    storing_deregister,
    storing_lookup,
    storing_register,
    true_path,
)
from .topology import Topology, generate_synthetic, load_trace

log = logging.getLogger(__name__)


@dataclass
class HopRecord:
    node: int
    next_hop: int
    delivered: bool
    attempts: int


@dataclass
class PacketJourney:
    packet_id: int
    src: int
    dst: int
    send_time_ms: int
    counted: bool
    hops: list[HopRecord] = field(default_factory=list)
    terminal: str | None = None  # "DELIVERED" or a Cause value
    end_time_ms: int | None = None
    source_route: tuple[int, ...] | None = None
    srh_bytes: int = 0

    @property
    def latency_ms(self) -> int | None:
        if self.terminal != "DELIVERED":
            return None
        return self.end_time_ms - self.send_time_ms


class Node:
    def __init__(self, node_id: int, cfg: ScenarioConfig, seed: int):
        self.id = node_id
        self.rng = random.Random(f"rplsim/{seed}/node/{node_id}")
        # Probing draws from its own stream so that switching it on does not
        # shift every other random draw of the node.
        self.probe_rng = random.Random(f"rplsim/{seed}/node/{node_id}/probe")
        self.table = NeighborTable(
            node_id,
            EstimatorConfig(
                alpha=cfg.ewma_alpha,
                f_max=cfg.freshness_max,
                half_life_ms=cfg.freshness_half_life_s * 1000,
                f_thresh=cfg.freshness_threshold,
                capacity=cfg.neighbor_capacity,
                retries_r=cfg.retries_r,
            ),
        )
        self.parent: int | None = None
        self.rank = math.inf
        self.seq = SeqnoCounter(self.rng.randrange(256))
        self.queue = MacQueue(cfg.queue_capacity)
        self.busy = False
        self.dup = make_dup_state(cfg.mac)
        self.storing = StoringTable(node_id, cfg.storing_capacity)
        self.depth_samples: list[int] = []


def build_topology(cfg: ScenarioConfig) -> Topology:
    if cfg.trace:
        return load_trace(cfg.trace, cfg.trace_window_ms, root=cfg.trace_root)
    return generate_synthetic(cfg.node_count, cfg.topology_seed, cfg.synth_params)


class Simulation:
    def __init__(self, cfg: ScenarioConfig, topology: Topology | None = None):
        self.cfg = cfg
        self.topo = topology if topology is not None else build_topology(cfg)
        self.metric = cfg.metric_obj
        self.hysteresis = cfg.effective_hysteresis
        self.mac = cfg.mac
        self.probe_retries = cfg.retries_r if cfg.probe_retries is None else cfg.probe_retries
        self.root = self.topo.root
        self.nodes = {n: Node(n, cfg, cfg.seed) for n in self.topo.nodes}
        self.nodes[self.root].rank = self.metric.root_rank().value
        self.traffic_rng = random.Random(f"rplsim/{cfg.seed}/traffic")
        self.view = RootTopologyView(self.root)
        if cfg.address_mode is AddressMode.HETEROGENEOUS:
            self.addresses = heterogeneous_addresses(self.topo.nodes, self.root, cfg.seed)
        else:
            self.addresses = homogeneous_addresses(self.topo.nodes)
        self.warmup_ms = int(cfg.warmup_s * 1000)
        self.duration_ms = int(cfg.duration_s * 1000)
        self.now = 0
        self._events: list = []
        self._order = 0
        self._next_packet = 0
        self.in_flight = 0
        self.journeys: list[PacketJourney] = []
        self.stats = {
            "sent": 0,
            "delivered": 0,
            "losses": {c.value: 0 for c in CORE_CAUSES},
            "latencies": [],
            "parent_switches": 0,
            "beacons": 0,
            "probes": 0,
            "registrations": 0,
            "registrations_lost": 0,
            "root_rejections": 0,
            "table_overflows": 0,
            "control_duplicates_dropped": 0,
            "ambiguous_acks": 0,
            "srh_bytes": [],
            "max_queue_depth": 0,
        }
        self.timeline: list[tuple[int, int, str]] = []
        self.status_counts = {s.value: 0 for s in Status}
        self.staleness: list[tuple[int, float, float, float]] = []
        self.neighbor_age = {"sum": 0.0, "count": 0, "max": 0.0}
        self.per_node = {n: {"up_prr": [], "down_prr": [], "hops": []} for n in self.topo.nodes if n != self.root}
        self.radius = 0
        self.saturated = False

    # ------------------------------------------------------------ plumbing

    def schedule(self, at: int, handler: Callable, *args) -> None:
        self._order += 1
        heapq.heappush(self._events, (at, self._order, handler, args))

    def jittered(self, node: Node, period_ms: float) -> int:
        j = self.cfg.timer_jitter
        return max(1, int(round(period_ms * (1 + node.rng.uniform(-j, j)))))

    def prr(self, src: int, dst: int) -> float:
        return self.topo.prr_at(src, dst, self.now)

    def measuring(self) -> bool:
        return self.now >= self.warmup_ms

    # ------------------------------------------------------ neighbor state

    def _note_tx(self, node: Node, neighbor: int, attempts: int, delivered: bool) -> None:
        try:
            update_on_tx(node.table, neighbor, attempts, delivered, self.now)
        except TableFullError:
            pass

    def _unicast(self, sender: Node, dst: int, retries: int, rng: random.Random | None = None) -> bool:
        """One control frame over the MAC; returns True if accepted by ``dst``."""
        seq = sender.seq.next()
        out = transmit(self.prr(sender.id, dst), retries, rng or sender.rng)
        self._note_tx(sender, dst, out.attempts_used, out.delivered)
        if not out.delivered:
            return False
        verdict = check_duplicate(self.nodes[dst].dup, sender.id, seq, False, self.now)
        if verdict is Verdict.DROP_DUPLICATE:
            self.stats["control_duplicates_dropped"] += 1
            return False
        return True

    def reselect(self, node: Node, allow_probe: bool = True) -> None:
        if node.id == self.root:
            return
        table = node.table
        decay_freshness(table, self.now)
        cands = []
        for e in table.entries.values():
            if math.isinf(e.advertised_rank):
                e.is_potential_parent = False
                continue
            prr = 1.0 / e.etx_estimate
            e.would_be_rank = would_be_rank(self.metric, e.advertised_rank, prr)
            e.is_potential_parent = e.advertised_rank < node.rank or math.isinf(node.rank)
            usable = table.is_fresh(e) or e.seeded_only or e.neighbor == node.parent
            if usable:
                cands.append(Candidate(e.neighbor, e.advertised_rank, prr))
        own = None if math.isinf(node.rank) else node.rank
        choice = select_parent(cands, node.parent, self.metric, self.hysteresis, own)
        if choice != node.parent and choice is not None and allow_probe and self.cfg.probing:
            if schedule_immediate_probe(table, choice, self.now):
                self.stats["probes"] += 1
                self._unicast(node, choice, self.probe_retries, node.probe_rng)
                self.reselect(node, allow_probe=False)
                return
        if choice != node.parent:
            self.switch_parent(node, choice)
        if node.parent is None:
            node.rank = math.inf
        else:
            e = table.entries[node.parent]
            node.rank = would_be_rank(self.metric, e.advertised_rank, 1.0 / e.etx_estimate)

    def switch_parent(self, node: Node, new: int | None) -> None:
        old = node.parent
        old_path = self.upward_path(node.id) if old is not None else None
        node.parent = new
        node.table.set_preferred_parent(new)
        if old is not None and new is not None and self.measuring():
            self.stats["parent_switches"] += 1
        if self.cfg.mode is Mode.STORING and old_path is not None:
            self.send_registration(node, old_path, deregister=True)
        if new is not None:
            self.send_registration(node, self.upward_path(node.id))

    def upward_path(self, node_id: int) -> list[int]:
        """Node ids from ``node_id`` following current parents, stopping at root or a loop."""
        path = [node_id]
        seen = {node_id}
        x = self.nodes[node_id].parent
        while x is not None and x not in seen:
            path.append(x)
            seen.add(x)
            if x == self.root:
                break
            x = self.nodes[x].parent
        return path

    # -------------------------------------------------------- registrations

    def send_registration(self, node: Node, path: list[int], deregister: bool = False) -> None:
        if len(path) < 2:
            return
        self.stats["registrations"] += 1
        delivery = []
        for a, b in zip(path, path[1:]):
            if delivery and not delivery[-1]:
                delivery.append(False)
                continue
            delivery.append(self._unicast(self.nodes[a], b, self.probe_retries))
        if not all(delivery):
            self.stats["registrations_lost"] += 1
        if self.cfg.mode is Mode.STORING:
            tables = {n: self.nodes[n].storing for n in path}
            targets = [node.id, *sorted(node.storing.routes)]
            for d in targets:
                if deregister:
                    storing_deregister(tables, path, d, delivery)
                else:
                    res = storing_register(tables, path, d, delivery)
                    self.stats["table_overflows"] += len(res.overflowed)
        elif all(delivery) and path[-1] == self.root:
            if nonstoring_update(self.view, node.id, node.parent) is UpdateVerdict.REJECTED:
                self.stats["root_rejections"] += 1

    def on_dao_timer(self, node_id: int) -> None:
        node = self.nodes[node_id]
        if node.parent is not None:
            self.send_registration(node, self.upward_path(node_id))
        self.schedule(self.now + self.jittered(node, self.cfg.dao_period_s * 1000), self.on_dao_timer, node_id)

    # ------------------------------------------------------ beacons, probes

    def on_beacon(self, node_id: int) -> None:
        node = self.nodes[node_id]
        self.stats["beacons"] += 1
        naive = self.mac.dup_mode.value == "naive"
        # Broadcasts only consume a sequence number when suppression is off.
        seq = node.seq.next() if naive else None
        for dst in self.topo.out_neighbors(node_id):
            if node.rng.random() >= self.prr(node_id, dst):
                continue
            receiver = self.nodes[dst]
            if check_duplicate(receiver.dup, node_id, seq, True, self.now) is Verdict.DROP_DUPLICATE:
                self.stats["control_duplicates_dropped"] += 1
                continue
            if dst == self.root:
                continue
            entry = receiver.table.get(node_id)
            if entry is None:
                link = self.topo.link(node_id, dst)
                rssi = link.rssi_dbm if link.rssi_dbm is not None else -75
                try:
                    entry = receiver.table.add_from_rssi(node_id, rssi, self.now).entry
                except TableFullError:
                    continue
                entry.advertised_rank = node.rank
                self.reselect(receiver)
            elif entry.advertised_rank != node.rank:
                entry.advertised_rank = node.rank
                self.reselect(receiver)
        self.schedule(self.now + self.jittered(node, self.cfg.beacon_period_s * 1000), self.on_beacon, node_id)

    def on_probe_timer(self, node_id: int) -> None:
        node = self.nodes[node_id]
        target = select_probe_target(node.table, node.parent, node.probe_rng.randrange(2), self.now)
        if target is not None:
            self.stats["probes"] += 1
            self._unicast(node, target, self.probe_retries, node.probe_rng)
            self.reselect(node)
        self.schedule(self.now + self.jittered(node, self.cfg.probe_period_s * 1000), self.on_probe_timer, node_id)

    # ---------------------------------------------------------- data plane

    def on_generate(self, src: int | None = None) -> None:
        if self.now >= self.duration_ms:
            return
        cfg = self.cfg
        non_root = [n for n in self.topo.nodes if n != self.root]
        if cfg.traffic_pattern is TrafficPattern.DOWNWARD:
            self.originate(self.root, self.traffic_rng.choice(non_root))
            period = 1000.0 / cfg.rate_hz
            self.schedule(self.now + self.jittered(self.nodes[self.root], period), self.on_generate)
        else:
            dst = self.traffic_rng.choice([n for n in self.topo.nodes if n != src])
            self.originate(src, dst)
            period = cfg.source_interval_s * 1000
            self.schedule(self.now + self.jittered(self.nodes[src], period), self.on_generate, src)

    def originate(self, src: int, dst: int) -> None:
        j = PacketJourney(self._next_packet, src, dst, self.now, counted=self.measuring())
        self._next_packet += 1
        self.in_flight += 1
        if j.counted:
            self.stats["sent"] += 1
        if self.cfg.record_journeys:
            self.journeys.append(j)
        self.forward(src, j, came_from_below=True)

    def terminate(self, j: PacketJourney, outcome: str) -> None:
        j.terminal = outcome
        j.end_time_ms = self.now
        self.in_flight -= 1
        if not j.counted:
            return
        if outcome == "DELIVERED":
            self.stats["delivered"] += 1
            self.stats["latencies"].append(j.latency_ms)
        else:
            self.stats["losses"][outcome] = self.stats["losses"].get(outcome, 0) + 1

    def next_hop(self, x: int, j: PacketJourney, came_from_below: bool) -> int | None:
        node = self.nodes[x]
        if self.cfg.mode is Mode.STORING:
            nh = storing_lookup(node.storing, j.dst, node.parent is not None, came_from_below)
            if nh is Lookup.UP:
                return node.parent
            return None if nh is Lookup.NO_ROUTE else nh
        if j.source_route is None:
            if x != self.root:
                return node.parent
            srh = compute_source_route(self.view, j.dst, self.addresses)
            if srh is Lookup.NO_ROUTE:
                return None
            j.source_route = srh.hops
            j.srh_bytes = srh.byte_size
            if j.counted:
                self.stats["srh_bytes"].append(srh.byte_size)
            return srh.hops[0]
        hops = j.source_route
        if x not in hops:
            return None
        i = hops.index(x)
        return hops[i + 1] if i + 1 < len(hops) else None

    def forward(self, x: int, j: PacketJourney, came_from_below: bool) -> None:
        if x == j.dst:
            self.terminate(j, "DELIVERED")
            return
        if len(j.hops) >= self.cfg.max_hops:
            self.terminate(j, Cause.NO_ROUTE.value)
            return
        nh = self.next_hop(x, j, came_from_below)
        if nh is None:
            self.terminate(j, Cause.NO_ROUTE.value)
            return
        node = self.nodes[x]
        if node.queue.enqueue((j, nh)) is EnqueueResult.QUEUE_OVERFLOW:
            self.terminate(j, Cause.QUEUE_OVERFLOW.value)
            return
        self.stats["max_queue_depth"] = max(self.stats["max_queue_depth"], len(node.queue))
        if not node.busy:
            self.start_tx(node)

    def start_tx(self, node: Node) -> None:
        j, nh = node.queue.peek()
        node.busy = True
        seq = node.seq.next()
        out = transmit(self.prr(node.id, nh), self.mac, node.rng)
        false_ack = False
        if out.delivered and not self.mac.ack_sender_addr and self.cfg.same_slot_rate > 0:
            # Another sender used the same seqno in this slot and its frame won.
            false_ack = node.rng.random() < self.cfg.same_slot_rate
        done = self.now + out.attempts_used * self.mac.per_attempt_delay_ms
        self.schedule(done, self.on_tx_done, node.id, seq, out.delivered, out.attempts_used, false_ack)

    def on_tx_done(self, node_id: int, seq: int, delivered: bool, attempts: int, false_ack: bool) -> None:
        node = self.nodes[node_id]
        j, nh = node.queue.dequeue()
        self._note_tx(node, nh, attempts, delivered)
        j.hops.append(HopRecord(node_id, nh, delivered and not false_ack, attempts))
        if false_ack:
            if j.counted:
                self.stats["ambiguous_acks"] += 1
            self.terminate(j, Cause.AMBIGUOUS_ACK.value)
        elif not delivered:
            self.terminate(j, Cause.MAC_DROP.value)
        else:
            receiver = self.nodes[nh]
            verdict = check_duplicate(receiver.dup, node_id, seq, False, self.now)
            if verdict is Verdict.DROP_DUPLICATE:
                self.terminate(j, Cause.SPURIOUS_DUPLICATE.value)
            else:
                self.forward(nh, j, came_from_below=(node.parent == nh))
        if node.queue:
            self.start_tx(node)
        else:
            node.busy = False
        self.reselect(node)

    # ----------------------------------------------------------- sampling

    def on_snapshot(self) -> None:
        parents = {n: self.nodes[n].parent for n in self.topo.nodes}
        if self.cfg.mode is Mode.STORING:
            state = {n: self.nodes[n].storing for n in self.topo.nodes}
        else:
            state = self.view
        snap = snapshot_consistency(self.cfg.mode, state, parents, self.root, self.now, self.topo.nodes)
        self.timeline.extend(snap.rows())
        measuring = self.measuring()
        if measuring:
            for s in snap.status.values():
                self.status_counts[s.value] += 1
        ages = []
        stale_parents = 0
        for n, node in self.nodes.items():
            if measuring:
                acc = self.neighbor_age
                for e in node.table.entries.values():
                    age = self.now - _last_sample_ms(e)
                    acc["sum"] += age
                    acc["count"] += 1
                    acc["max"] = max(acc["max"], float(age))
            if node.parent is None:
                continue
            e = node.table.entries[node.parent]
            ages.append(self.now - _last_sample_ms(e))
            if freshness_at(node.table, e, self.now) < node.table.config.f_thresh:
                stale_parents += 1
            if measuring:
                rec = self.per_node[n]
                rec["up_prr"].append(self.prr(n, node.parent))
                rec["down_prr"].append(self.prr(node.parent, n))
                path = true_path(parents, self.root, n)
                if path is not None:
                    rec["hops"].append(len(path) - 1)
                    self.radius = max(self.radius, len(path) - 1)
        if ages:
            self.staleness.append((self.now, statistics.fmean(ages), float(max(ages)), stale_parents / len(ages)))
        if self.now + 1 <= self.duration_ms:
            self.schedule(self.now + int(self.cfg.snapshot_interval_s * 1000), self.on_snapshot)

    def on_queue_sample(self) -> None:
        window = max(1, int(self.cfg.saturation_window_s))
        limit = 0.8 * self.cfg.queue_capacity
        for node in self.nodes.values():
            node.depth_samples.append(len(node.queue))
            if len(node.depth_samples) >= window:
                if statistics.fmean(node.depth_samples[-window:]) > limit:
                    self.saturated = True
                node.depth_samples = node.depth_samples[-window + 1:]
        if self.now < self.duration_ms:
            self.schedule(self.now + 1000, self.on_queue_sample)

    # ----------------------------------------------------------------- run

    def run(self) -> RunReport:
        cfg = self.cfg
        for n, node in self.nodes.items():
            self.schedule(self.jittered(node, cfg.beacon_period_s * 1000) // 4, self.on_beacon, n)
            if n == self.root:
                continue
            self.schedule(self.jittered(node, cfg.dao_period_s * 1000), self.on_dao_timer, n)
            if cfg.probing:
                self.schedule(self.jittered(node, cfg.probe_period_s * 1000), self.on_probe_timer, n)
        if cfg.traffic_pattern is TrafficPattern.DOWNWARD:
            self.schedule(self.jittered(self.nodes[self.root], 1000.0 / cfg.rate_hz), self.on_generate)
        else:
            non_root = [n for n in self.topo.nodes if n != self.root]
            k = max(1, round(cfg.source_fraction * len(self.topo.nodes)))
            for src in sorted(self.traffic_rng.sample(non_root, min(k, len(non_root)))):
                first = self.jittered(self.nodes[src], cfg.source_interval_s * 1000)
                self.schedule(first, self.on_generate, src)
        self.schedule(0, self.on_snapshot)
        self.schedule(1000, self.on_queue_sample)

        while self._events:
            at, _, handler, args = heapq.heappop(self._events)
            if at > self.duration_ms and self.in_flight == 0:
                break
            self.now = at
            handler(*args)
        return self.build_report()

    def build_report(self) -> RunReport:
        s = self.stats
        measured_hours = (self.duration_ms - self.warmup_ms) / 3_600_000
        non_root = len(self.topo.nodes) - 1
        losses = {k: v for k, v in s["losses"].items()}
        lost = sum(losses.values())
        up = [statistics.fmean(r["up_prr"]) for r in self.per_node.values() if r["up_prr"]]
        down = [statistics.fmean(r["down_prr"]) for r in self.per_node.values() if r["down_prr"]]
        hops = [statistics.fmean(r["hops"]) for r in self.per_node.values() if r["hops"]]
        measured_staleness = [row for row in self.staleness if row[0] >= self.warmup_ms]
        return RunReport(
            config=self.cfg.to_dict(),
            node_count=len(self.topo.nodes),
            root=self.root,
            packets_sent=s["sent"],
            delivered=s["delivered"],
            losses=losses,
            loss_rate=lost / s["sent"] if s["sent"] else 0.0,
            loss_rate_bound=rule_of_three(s["sent"], lost) if s["sent"] else None,
            latency_ms=quantiles(s["latencies"]),
            link_prr_up=quantiles(up),
            link_prr_down=quantiles(down),
            hop_count=quantiles(hops),
            radius=self.radius,
            parent_switches=s["parent_switches"],
            switches_per_node_hour=(
                s["parent_switches"] / (non_root * measured_hours) if non_root and measured_hours else 0.0
            ),
            consistency=dict(self.status_counts),
            parent_staleness_ms={
                "mean": statistics.fmean(row[1] for row in measured_staleness) if measured_staleness else 0.0,
                "max": max((row[2] for row in measured_staleness), default=0.0),
                "stale_fraction": (
                    statistics.fmean(row[3] for row in measured_staleness) if measured_staleness else 0.0
                ),
            },
            neighbor_staleness_ms={
                "mean": self.neighbor_age["sum"] / self.neighbor_age["count"] if self.neighbor_age["count"] else 0.0,
                "max": self.neighbor_age["max"],
            },
            control={
                "beacons": s["beacons"],
                "probes": s["probes"],
                "registrations": s["registrations"],
                "registrations_lost": s["registrations_lost"],
                "root_rejections": s["root_rejections"],
                "table_overflows": s["table_overflows"],
                "control_duplicates_dropped": s["control_duplicates_dropped"],
            },
            ambiguous_acks=s["ambiguous_acks"],
            srh_bytes=quantiles(s["srh_bytes"]),
            max_queue_depth=s["max_queue_depth"],
            saturated=self.saturated,
            timeline=list(self.timeline),
            staleness_series=[list(t) for t in self.staleness],
            journeys=[journey_row(j) for j in self.journeys] if self.cfg.record_journeys else None,
        )


def _last_sample_ms(e) -> float:
    return e.first_heard_ms if e.last_update_ms is None else e.last_update_ms


def journey_row(j: PacketJourney) -> dict:
    return {
        "packet_id": j.packet_id,
        "src": j.src,
        "dst": j.dst,
        "send_time_ms": j.send_time_ms,
        "counted": j.counted,
        "terminal": j.terminal,
        "latency_ms": j.latency_ms,
        "hops": [[h.node, h.next_hop, int(h.delivered), h.attempts] for h in j.hops],
    }


def run(config: ScenarioConfig, topology: Topology | None = None) -> RunReport:
    return Simulation(config, topology).run()
