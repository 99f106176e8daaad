"""Offline studies that drive the routing library without the packet engine.

``replay_metric_study`` is a deliberately small RPL model: for every sample
window of a topology it refreshes link estimates, lets every node re-run
parent selection until ranks settle, and records the analytic end-to-end
delivery of the resulting up- and downward paths.

``parent_switch_experiment`` applies a random sequence of parent switches
to storing or non-storing routing state with lossy registrations and
snapshots the resulting consistency after every step.
"""

from __future__ import annotations

import math
import random
import statistics
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .estimator import ALPHA
from .metrics import Candidate, Metric, path_delivery, path_delivery_down, select_parent, would_be_rank
from .routing import (
    ConsistencySnapshot,
    Mode,
    RootTopologyView,
    Status,
    StoringTable,
    UpdateVerdict,
    nonstoring_update,
    snapshot_consistency,
    storing_deregister,
    storing_register,
    true_path,
)
from .topology import Topology


def _quantiles(values: Sequence[float]) -> dict[str, float]:
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return {"min": math.nan, "median": math.nan, "max": math.nan, "mean": math.nan}
    return {
        "min": min(vals),
        "median": statistics.median(vals),
        "max": max(vals),
        "mean": statistics.fmean(vals),
    }


@dataclass
class MetricStudy:
    metric: Metric
    up_pdr: dict[int, float] = field(default_factory=dict)
    down_pdr: dict[int, float] = field(default_factory=dict)
    up_link_prr: dict[int, float] = field(default_factory=dict)
    down_link_prr: dict[int, float] = field(default_factory=dict)
    hops: dict[int, float] = field(default_factory=dict)
    switches: dict[int, int] = field(default_factory=dict)
    hours: float = 0.0
    unconverged_windows: int = 0

    def switches_per_node_hour(self) -> float:
        if not self.switches or self.hours <= 0:
            return 0.0
        return sum(self.switches.values()) / (len(self.switches) * self.hours)

    def summary(self) -> dict:
        return {
            "metric": self.metric.label,
            "up_pdr": _quantiles(list(self.up_pdr.values())),
            "down_pdr": _quantiles(list(self.down_pdr.values())),
            "up_link_prr": _quantiles(list(self.up_link_prr.values())),
            "down_link_prr": _quantiles(list(self.down_link_prr.values())),
            "hops": _quantiles(list(self.hops.values())),
            "radius": max(self.hops.values(), default=0.0),
            "switches_per_node_hour": self.switches_per_node_hour(),
            "unconverged_windows": self.unconverged_windows,
        }


def _settle_ranks(topology, metric, est, t, parents, ranks, hysteresis):
    """Repeat parent selection over all nodes until nothing changes."""
    root = topology.root
    order = [n for n in topology.nodes if n != root]
    for _ in range(4 * len(order) + 4):
        changed = False
        for x in order:
            cands = []
            for y in topology.out_neighbors(x):
                prr_est = est.get((x, y), 0.0)
                # A parent is only known if its advertisements reach us.
                if prr_est <= 0.0 or topology.prr_at(y, x, t) <= 0.0:
                    continue
                cands.append(Candidate(y, ranks.get(y, math.inf), prr_est))
            current = parents.get(x)
            own = ranks.get(x, math.inf)
            choice = select_parent(cands, current, metric, hysteresis, None if math.isinf(own) else own)
            if choice is None:
                new_rank = math.inf
            else:
                new_rank = would_be_rank(metric, ranks.get(choice, math.inf), est[(x, choice)])
            if choice != current or new_rank != own:
                changed = True
            parents[x] = choice
            ranks[x] = new_rank
        if not changed:
            return True
    return False


def replay_metric_study(
    topology: Topology,
    metrics: Sequence[Metric],
    r: int = 8,
    hysteresis: float | None = None,
    alpha: float = ALPHA,
) -> dict[str, MetricStudy]:
    """Per-metric, per-node averages of path delivery, link PRR, hops and churn.

    Selection uses EWMA-smoothed PRR estimates; delivery figures use the true
    PRRs of the window.  The first window converges without hysteresis.
    """
    times = topology.sample_times() or [0]
    window_ms = (times[1] - times[0]) if len(times) > 1 else 60_000
    results = {}
    for metric in metrics:
        study = MetricStudy(metric, hours=len(times) * window_ms / 3_600_000)
        est: dict[tuple[int, int], float] = {}
        parents: dict[int, int | None] = {}
        ranks: dict[int, float] = {topology.root: metric.root_rank().value}
        sums: dict[str, dict[int, list[float]]] = {
            k: {} for k in ("up_pdr", "down_pdr", "up_link_prr", "down_link_prr", "hops")
        }
        switches = {n: 0 for n in topology.nodes if n != topology.root}
        for w, t in enumerate(times):
            for (src, dst), link in topology.links.items():
                sample = link.prr_at(t)
                prev = est.get((src, dst))
                est[(src, dst)] = sample if prev is None else alpha * sample + (1 - alpha) * prev
            before = dict(parents)
            h = 0.0 if w == 0 else hysteresis
            if not _settle_ranks(topology, metric, est, t, parents, ranks, h):
                study.unconverged_windows += 1
            if w > 0:
                for n in switches:
                    if parents.get(n) != before.get(n):
                        switches[n] += 1
            for n in switches:
                path = true_path(parents, topology.root, n)
                if path is None:
                    vals = {"up_pdr": 0.0, "down_pdr": 0.0, "up_link_prr": 0.0,
                            "down_link_prr": 0.0, "hops": math.nan}
                else:
                    up = [topology.prr_at(b, a, t) for a, b in zip(path, path[1:])]
                    down = [topology.prr_at(a, b, t) for a, b in zip(path, path[1:])]
                    p = parents[n]
                    vals = {
                        "up_pdr": path_delivery(up, r),
                        "down_pdr": path_delivery_down(down, r),
                        "up_link_prr": topology.prr_at(n, p, t),
                        "down_link_prr": topology.prr_at(p, n, t),
                        "hops": float(len(path) - 1),
                    }
                for k, v in vals.items():
                    sums[k].setdefault(n, []).append(v)
        for k, per_node in sums.items():
            target = getattr(study, k)
            for n, vs in per_node.items():
                good = [v for v in vs if not math.isnan(v)]
                target[n] = statistics.fmean(good) if good else math.nan
        study.switches = switches
        results[metric.label] = study
    return results


# ------------------------------------------------------------ switch churn


@dataclass
class SwitchStudy:
    mode: Mode
    snapshots: list[ConsistencySnapshot] = field(default_factory=list)
    switches: int = 0
    accepted: int = 0
    rejected: int = 0
    lost_registrations: int = 0

    def snapshots_with(self, status: Status) -> int:
        return sum(1 for s in self.snapshots if s.count(status) > 0)

    def node_status_total(self, status: Status) -> int:
        return sum(s.count(status) for s in self.snapshots)


def _bfs_tree(topology: Topology) -> dict[int, int | None]:
    parents: dict[int, int | None] = {topology.root: None}
    queue = deque([topology.root])
    while queue:
        x = queue.popleft()
        for y in topology.in_neighbors(x):
            if y not in parents and topology.prr_at(x, y, 0) > 0:
                parents[y] = x
                queue.append(y)
    return parents


def _subtree(parents: dict[int, int | None], node: int) -> set[int]:
    children: dict[int, list[int]] = {}
    for c, p in parents.items():
        if p is not None:
            children.setdefault(p, []).append(c)
    out = {node}
    stack = [node]
    while stack:
        for c in children.get(stack.pop(), ()):
            if c not in out:
                out.add(c)
                stack.append(c)
    return out


def parent_switch_experiment(
    topology: Topology,
    mode: Mode,
    switches: int = 1000,
    registration_loss: float = 0.1,
    seed: int = 0,
    refresh_every: int = 50,
    table_capacity: int = 1 << 16,
) -> SwitchStudy:
    """Random parent switches on a converged tree, snapshotting after each one.

    Switch targets are real neighbors outside the switching node's subtree,
    so the true parent graph stays a tree.  Every registration hop (storing)
    or end-to-end report (non-storing) is lost with ``registration_loss``.
    Every ``refresh_every`` switches all nodes re-register, top-down.
    """
    rng = random.Random(seed)
    root = topology.root
    parents = _bfs_tree(topology)
    nodes = [n for n in topology.nodes if n in parents]
    order = sorted((n for n in nodes if n != root), key=lambda n: len(true_path(parents, root, n)))
    tables = {n: StoringTable(n, capacity=table_capacity) for n in nodes}
    view = RootTopologyView(root)
    study = SwitchStudy(mode)

    def up_path(n):
        return true_path(parents, root, n)[::-1]

    def lossy(hops):
        out = [rng.random() >= registration_loss for _ in range(hops)]
        if not all(out):
            study.lost_registrations += 1
        return out

    def register(n, path, loss=True):
        if mode is Mode.STORING:
            targets = [n, *sorted(tables[n].routes)]
            delivery = lossy(len(path) - 1) if loss else [True] * (len(path) - 1)
            for d in targets:
                storing_register(tables, path, d, delivery)
        else:
            ok = (not loss) or all(lossy(len(path) - 1))
            if ok:
                if nonstoring_update(view, n, parents[n]) is UpdateVerdict.ACCEPTED:
                    study.accepted += 1
                else:
                    study.rejected += 1

    def deregister(n, old_path):
        targets = [n, *sorted(tables[n].routes)]
        delivery = lossy(len(old_path) - 1)
        for d in targets:
            storing_deregister(tables, old_path, d, delivery)

    for n in reversed(order):
        register(n, up_path(n), loss=False)
    for n in order:
        register(n, up_path(n), loss=False)
    study.accepted = 0

    def snap(i):
        state = tables if mode is Mode.STORING else view
        study.snapshots.append(snapshot_consistency(mode, state, parents, root, i, nodes))

    eligible = [n for n in order]
    for i in range(1, switches + 1):
        for _ in range(100):
            n = rng.choice(eligible)
            sub = _subtree(parents, n)
            options = [
                m
                for m in topology.out_neighbors(n)
                if m in parents
                and m not in sub
                and m != parents[n]
                and topology.prr_at(m, n, 0) > 0
            ]
            if options:
                break
        else:
            continue
        new = rng.choice(options)
        old_path = up_path(n)
        parents[n] = new
        study.switches += 1
        if mode is Mode.STORING:
            deregister(n, old_path)
        register(n, up_path(n))
        if refresh_every and i % refresh_every == 0:
            for m in sorted(eligible, key=lambda m: len(true_path(parents, root, m)), reverse=True):
                register(m, up_path(m))
        snap(i)
    return study
