"""Gradient metrics (ETX, ETX^N, LR), path delivery formulas and parent selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

INFINITE_RANK = math.inf
LR_WIRE_SCALE = 1 << 16


class MetricKind(Enum):
    ETX = "etx"
    ETXN = "etxn"
    LR = "lr"


@dataclass(frozen=True)
class Metric:
    kind: MetricKind
    exponent_n: float | None = None
    retries_r: int | None = None

    def __post_init__(self):
        if (self.kind is MetricKind.ETXN) != (self.exponent_n is not None):
            raise ValueError("exponent_n is required for ETXN and only for ETXN")
        if (self.kind is MetricKind.LR) != (self.retries_r is not None):
            raise ValueError("retries_r is required for LR and only for LR")
        if self.exponent_n is not None and self.exponent_n < 1:
            raise ValueError("exponent_n must be >= 1")
        if self.retries_r is not None and self.retries_r < 0:
            raise ValueError("retries_r must be >= 0")

    @classmethod
    def etx(cls) -> "Metric":
        return cls(MetricKind.ETX)

    @classmethod
    def etxn(cls, n: float) -> "Metric":
        return cls(MetricKind.ETXN, exponent_n=float(n))

    @classmethod
    def lr(cls, r: int) -> "Metric":
        return cls(MetricKind.LR, retries_r=int(r))

    @classmethod
    def parse(cls, text: str, retries_r: int = 8) -> "Metric":
        """Parse ``etx``, ``etxn:<n>`` or ``lr`` (``lr:<r>`` overrides the retries)."""
        name, _, arg = text.strip().lower().partition(":")
        if name == "etx":
            return cls.etx()
        if name == "etxn":
            return cls.etxn(float(arg) if arg else 2.0)
        if name == "lr":
            return cls.lr(int(arg) if arg else retries_r)
        raise ValueError(f"unknown metric {text!r}")

    @property
    def n(self) -> float:
        return self.exponent_n if self.kind is MetricKind.ETXN else 1.0

    @property
    def label(self) -> str:
        if self.kind is MetricKind.ETXN:
            return f"etxn:{self.exponent_n:g}"
        if self.kind is MetricKind.LR:
            return f"lr:{self.retries_r}"
        return "etx"

    def root_rank(self) -> "RankValue":
        return RankValue(0.0 if self.kind is MetricKind.LR else 1.0, self)

    def default_hysteresis(self) -> float:
        # LR ranks live in [0, 1); half an ETX unit would freeze every choice.
        return 0.01 if self.kind is MetricKind.LR else 0.5


@dataclass(frozen=True)
class RankValue:
    value: float
    metric: Metric

    def _check(self, other: "RankValue") -> None:
        if not isinstance(other, RankValue):
            raise TypeError(f"cannot compare RankValue with {type(other).__name__}")
        if other.metric != self.metric:
            raise TypeError(f"cannot compare {self.metric.label} and {other.metric.label} ranks")

    def __lt__(self, other):
        self._check(other)
        return self.value < other.value

    def __le__(self, other):
        self._check(other)
        return self.value <= other.value

    def __gt__(self, other):
        self._check(other)
        return self.value > other.value

    def __ge__(self, other):
        self._check(other)
        return self.value >= other.value

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)

    def wire_value(self) -> int:
        """Integer encoding; LR ranks are fixed point scaled by 2^16."""
        if self.is_infinite:
            return 0xFFFF
        if self.metric.kind is MetricKind.LR:
            return min(int(round(self.value * LR_WIRE_SCALE)), 0xFFFF)
        return int(round(self.value))


def hop_delivery(prr: float, r: int) -> float:
    """Probability that at least one of 1 + r attempts gets through."""
    return 1.0 - (1.0 - prr) ** (1 + r)


def link_cost(prr: float, n: float) -> float:
    if prr <= 0.0:
        return INFINITE_RANK
    try:
        return (1.0 / prr) ** n
    except OverflowError:
        return INFINITE_RANK


def rank_etxn(parent_rank: RankValue, prr: float, n: float) -> RankValue:
    if not 0.0 <= prr <= 1.0:
        raise ValueError(f"prr {prr} outside [0, 1]")
    return RankValue(parent_rank.value + link_cost(prr, n), parent_rank.metric)


def rank_etx(parent_rank: RankValue, prr: float) -> RankValue:
    return rank_etxn(parent_rank, prr, 1.0)


def rank_lr(parent_lr: RankValue, prr: float, r: int) -> RankValue:
    if not 0.0 <= parent_lr.value <= 1.0:
        raise ValueError("parent LR must lie in [0, 1]")
    if not 0.0 <= prr <= 1.0:
        raise ValueError(f"prr {prr} outside [0, 1]")
    value = 1.0 - (1.0 - parent_lr.value) * hop_delivery(prr, r)
    return RankValue(value, parent_lr.metric)


def would_be_rank(metric: Metric, parent_rank: float, prr: float) -> float:
    """Rank obtained through a parent advertising ``parent_rank`` over a link of ``prr``."""
    if math.isinf(parent_rank) or prr <= 0.0:
        return INFINITE_RANK
    if metric.kind is MetricKind.LR:
        return rank_lr(RankValue(parent_rank, metric), prr, metric.retries_r).value
    return parent_rank + link_cost(prr, metric.n)


def path_delivery(prrs: Iterable[float], r: int) -> float:
    pdr = 1.0
    for prr in prrs:
        if not 0.0 <= prr <= 1.0:
            raise ValueError(f"prr {prr} outside [0, 1]")
        pdr *= hop_delivery(prr, r)
    return pdr


def path_delivery_down(down_prrs: Iterable[float], r: int) -> float:
    """Same product as :func:`path_delivery`, fed parent-to-child PRRs."""
    return path_delivery(down_prrs, r)


def path_loss(prrs: Iterable[float], r: int) -> float:
    return 1.0 - path_delivery(prrs, r)


@dataclass(frozen=True)
class Candidate:
    node: int
    advertised_rank: float
    prr: float


def select_parent(
    candidates: Sequence[Candidate],
    current: int | None,
    metric: Metric,
    hysteresis: float | None = None,
    own_rank: float | None = None,
) -> int | None:
    """MRHOF-style choice with hysteresis and a rank-based loop guard.

    Dead links (prr 0) and candidates advertising a rank at or above
    ``own_rank`` are discarded.  The current parent is kept unless the best
    candidate beats it by more than ``hysteresis``.  Ties go to the lowest id.
    """
    if hysteresis is None:
        hysteresis = metric.default_hysteresis()
    ranked = []
    current_rank = INFINITE_RANK
    for c in candidates:
        if c.prr <= 0.0 or math.isinf(c.advertised_rank):
            continue
        if own_rank is not None and c.node != current and c.advertised_rank >= own_rank:
            continue
        rank = would_be_rank(metric, c.advertised_rank, c.prr)
        if math.isinf(rank):
            continue
        ranked.append((rank, c.node))
        if c.node == current:
            current_rank = rank
    if not ranked:
        return None
    best_rank, best = min(ranked)
    if current is not None and not math.isinf(current_rank):
        if current_rank - best_rank <= hysteresis:
            return current
    return best
