"""Per-node neighbor table: EWMA ETX estimates, freshness decay, probe targeting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

F_MAX = 16.0
T_HALF_MS = 240_000
F_THRESH = 2.0
ALPHA = 0.15
PROBE_PERIOD_MS = 60_000
PENALTY_CAP = 12.0

RSSI_MIN, RSSI_MAX = -100, 0


def failure_penalty(retries_r: int) -> float:
    """ETX sample charged for a frame dropped after exhausting its retries."""
    return min(1.5 * (1 + retries_r), PENALTY_CAP)


def seed_from_rssi(rssi_dbm: int) -> float:
    """Initial ETX guess from the RSSI of the first frame heard from a neighbor."""
    rssi = min(RSSI_MAX, max(RSSI_MIN, rssi_dbm))
    guess_prr = min(1.0, max(0.25, (rssi + 90) / 30))
    return 1.0 / guess_prr


@dataclass
class EstimatorConfig:
    alpha: float = ALPHA
    f_max: float = F_MAX
    half_life_ms: float = T_HALF_MS
    f_thresh: float = F_THRESH
    capacity: int = 32
    retries_r: int = 8

    @property
    def penalty(self) -> float:
        return failure_penalty(self.retries_r)


@dataclass
class NeighborEntry:
    neighbor: int
    etx_estimate: float
    freshness: float = 0.0
    # None until the first real transmission sample (RSSI-seeded entries).
    last_update_ms: float | None = None
    is_potential_parent: bool = False
    advertised_rank: float = math.inf
    would_be_rank: float = math.inf
    first_heard_ms: float = 0.0
    decayed_at_ms: float = 0.0

    @property
    def seeded_only(self) -> bool:
        return self.last_update_ms is None

    @property
    def prr_estimate(self) -> float:
        return 1.0 / self.etx_estimate


@dataclass
class UpdateResult:
    entry: NeighborEntry
    evicted: int | None = None


class TableFullError(RuntimeError):
    pass


@dataclass
class NeighborTable:
    owner: int
    config: EstimatorConfig = field(default_factory=EstimatorConfig)
    entries: dict[int, NeighborEntry] = field(default_factory=dict)
    preferred_parent: int | None = None

    @property
    def capacity(self) -> int:
        return self.config.capacity

    def __contains__(self, neighbor: int) -> bool:
        return neighbor in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, neighbor: int) -> NeighborEntry | None:
        return self.entries.get(neighbor)

    def is_fresh(self, entry: NeighborEntry) -> bool:
        return entry.freshness >= self.config.f_thresh

    def set_preferred_parent(self, neighbor: int | None) -> None:
        if neighbor is not None and neighbor not in self.entries:
            raise KeyError(f"node {self.owner}: parent {neighbor} not in neighbor table")
        self.preferred_parent = neighbor

    def _make_room(self, now_ms: float) -> int | None:
        if len(self.entries) < self.capacity:
            return None
        decay_freshness(self, now_ms)
        victims = [e for e in self.entries.values() if e.neighbor != self.preferred_parent]
        if not victims:
            raise TableFullError(f"node {self.owner}: table full of unevictable entries")
        victim = min(victims, key=lambda e: (e.freshness, e.neighbor))
        del self.entries[victim.neighbor]
        return victim.neighbor

    def add_from_rssi(self, neighbor: int, rssi_dbm: int, now_ms: float) -> UpdateResult:
        """Insert a neighbor heard for the first time; existing entries are untouched."""
        if neighbor in self.entries:
            return UpdateResult(self.entries[neighbor])
        evicted = self._make_room(now_ms)
        entry = NeighborEntry(
            neighbor,
            seed_from_rssi(rssi_dbm),
            first_heard_ms=now_ms,
            decayed_at_ms=now_ms,
        )
        self.entries[neighbor] = entry
        return UpdateResult(entry, evicted)


def update_on_tx(
    table: NeighborTable, neighbor: int, attempts: int, delivered: bool, now_ms: float
) -> UpdateResult:
    """Fold one unicast transmission outcome into the neighbor's ETX estimate."""
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    cfg = table.config
    sample = float(attempts) if delivered else cfg.penalty
    evicted = None
    entry = table.entries.get(neighbor)
    if entry is None:
        evicted = table._make_room(now_ms)
        entry = NeighborEntry(neighbor, sample, first_heard_ms=now_ms)
        table.entries[neighbor] = entry
    else:
        entry.etx_estimate = cfg.alpha * sample + (1 - cfg.alpha) * entry.etx_estimate
    entry.etx_estimate = max(1.0, entry.etx_estimate)
    entry.freshness = cfg.f_max
    entry.last_update_ms = now_ms
    entry.decayed_at_ms = now_ms
    return UpdateResult(entry, evicted)


def decay_freshness(table: NeighborTable, now_ms: float) -> None:
    half_life = table.config.half_life_ms
    for entry in table.entries.values():
        dt = now_ms - entry.decayed_at_ms
        if dt > 0:
            entry.freshness *= 2.0 ** (-dt / half_life)
            entry.decayed_at_ms = now_ms


def freshness_at(table: NeighborTable, entry: NeighborEntry, now_ms: float) -> float:
    """Freshness ``entry`` would have at ``now_ms``, without mutating it."""
    dt = max(0.0, now_ms - entry.decayed_at_ms)
    return entry.freshness * 2.0 ** (-dt / table.config.half_life_ms)


def _age_key(entry: NeighborEntry) -> tuple[float, int]:
    last = -math.inf if entry.last_update_ms is None else entry.last_update_ms
    return (last, entry.neighbor)


def select_probe_target(
    table: NeighborTable,
    preferred_parent: int | None,
    coin: int,
    now_ms: float | None = None,
) -> int | None:
    """Pick the neighbor to probe this period.

    Stale preferred parent first; otherwise, on ``coin == 0`` the stale
    potential parent with the lowest would-be rank, and on ``coin == 1`` (or
    when there is no such candidate) the least-recently updated neighbor.
    """
    if now_ms is not None:
        decay_freshness(table, now_ms)
    if not table.entries:
        return None
    if preferred_parent is not None:
        parent = table.entries.get(preferred_parent)
        if parent is not None and not table.is_fresh(parent):
            return preferred_parent
    if coin == 0:
        stale = [
            e for e in table.entries.values() if e.is_potential_parent and not table.is_fresh(e)
        ]
        if stale:
            return min(stale, key=lambda e: (e.would_be_rank, e.neighbor)).neighbor
    return min(table.entries.values(), key=_age_key).neighbor


def schedule_immediate_probe(
    table: NeighborTable, new_parent: int, now_ms: float | None = None
) -> bool:
    """True when switching to ``new_parent`` should wait for a fresh probe."""
    if new_parent not in table.entries:
        raise KeyError(f"node {table.owner}: unknown neighbor {new_parent}")
    if now_ms is not None:
        decay_freshness(table, now_ms)
    return not table.is_fresh(table.entries[new_parent])
