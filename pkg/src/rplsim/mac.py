"""Abstract MAC: Bernoulli attempts with retries, FIFO queues, duplicate filters."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

SEQNO_MODULO = 256
ACK_SENDER_ADDR_BYTES = 8


class DupMode(Enum):
    NAIVE = "naive"
    ENHANCED = "enhanced"


class Cause(Enum):
    MAC_DROP = "MAC_DROP"
    NO_ROUTE = "NO_ROUTE"
    SPURIOUS_DUPLICATE = "SPURIOUS_DUPLICATE"
    QUEUE_OVERFLOW = "QUEUE_OVERFLOW"
    # Only produced when ambiguous ACKs are modelled (off by default).
    AMBIGUOUS_ACK = "AMBIGUOUS_ACK"


CORE_CAUSES = (Cause.MAC_DROP, Cause.NO_ROUTE, Cause.SPURIOUS_DUPLICATE, Cause.QUEUE_OVERFLOW)


class Verdict(Enum):
    ACCEPT = "accept"
    DROP_DUPLICATE = "drop_duplicate"


class EnqueueResult(Enum):
    OK = "ok"
    QUEUE_OVERFLOW = "queue_overflow"


@dataclass(frozen=True)
class MacConfig:
    retries_r: int = 8
    queue_capacity: int = 24
    dup_mode: DupMode = DupMode.ENHANCED
    seq_lifetime_ms: int = 30_000
    per_attempt_delay_ms: int = 40
    naive_ring_size: int = 8
    ack_sender_addr: bool = True

    def __post_init__(self):
        if self.retries_r < 0:
            raise ValueError("retries_r must be >= 0")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")
        if self.naive_ring_size < 1:
            raise ValueError("naive_ring_size must be >= 1")


@dataclass(frozen=True)
class TxOutcome:
    delivered: bool
    attempts_used: int
    terminal_cause: Cause | None = None


def transmit(prr: float, config: MacConfig | int, rng: random.Random) -> TxOutcome:
    """Up to 1 + R independent attempts, each succeeding with probability ``prr``."""
    retries = config if isinstance(config, int) else config.retries_r
    budget = 1 + retries
    if prr >= 1.0:
        return TxOutcome(True, 1)
    if prr > 0.0:
        for attempt in range(1, budget + 1):
            if rng.random() < prr:
                return TxOutcome(True, attempt)
    return TxOutcome(False, budget, Cause.MAC_DROP)


# -------------------------------------------------------------------- queues


class MacQueue:
    def __init__(self, capacity: int = 24):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque = deque()

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)

    def __iter__(self):
        return iter(self._items)

    @property
    def full(self) -> bool:
        return len(self._items) >= self.capacity

    def enqueue(self, packet: Any) -> EnqueueResult:
        if self.full:
            return EnqueueResult.QUEUE_OVERFLOW
        self._items.append(packet)
        return EnqueueResult.OK

    def peek(self) -> Any:
        return self._items[0]

    def dequeue(self) -> Any:
        return self._items.popleft()


def enqueue(queue: MacQueue, packet: Any) -> EnqueueResult:
    return queue.enqueue(packet)


# ------------------------------------------------------- duplicate detection


@dataclass
class NaiveDupState:
    """Recent (sender, seqno) pairs, kept regardless of their age."""

    ring_size: int = 8
    recent: deque = field(init=False)

    def __post_init__(self):
        self.recent = deque(maxlen=self.ring_size)

    def check(self, sender: int, seqno: int | None, is_broadcast: bool, now_ms: float) -> Verdict:
        key = (sender, seqno)
        if key in self.recent:
            return Verdict.DROP_DUPLICATE
        self.recent.append(key)
        return Verdict.ACCEPT


@dataclass
class EnhancedDupState:
    """Last unicast seqno per neighbor, expiring after ``lifetime_ms``."""

    lifetime_ms: float = 30_000
    last: dict[int, tuple[int, float]] = field(default_factory=dict)

    def check(self, sender: int, seqno: int | None, is_broadcast: bool, now_ms: float) -> Verdict:
        if is_broadcast:
            return Verdict.ACCEPT
        prev = self.last.get(sender)
        if prev is not None and prev[0] == seqno and now_ms - prev[1] <= self.lifetime_ms:
            return Verdict.DROP_DUPLICATE
        self.last[sender] = (seqno, now_ms)
        return Verdict.ACCEPT


DupState = NaiveDupState | EnhancedDupState


def make_dup_state(config: MacConfig) -> DupState:
    if config.dup_mode is DupMode.NAIVE:
        return NaiveDupState(config.naive_ring_size)
    return EnhancedDupState(config.seq_lifetime_ms)


def check_duplicate(
    state: DupState, sender: int, seqno: int | None, is_broadcast: bool, now_ms: float
) -> Verdict:
    if seqno is not None and not 0 <= seqno < SEQNO_MODULO:
        raise ValueError(f"seqno {seqno} outside [0, 255]")
    return state.check(sender, seqno, is_broadcast, now_ms)


class SeqnoCounter:
    """Per-node 8-bit sequence number shared by every frame the node sends."""

    def __init__(self, start: int = 0):
        self.value = start % SEQNO_MODULO

    def next(self) -> int:
        v = self.value
        self.value = (v + 1) % SEQNO_MODULO
        return v


# ------------------------------------------------------ ACK disambiguation


class AckResolution(Enum):
    ACKED = "acked"
    NOT_ACKED = "not_acked"
    FALSE_ACK = "false_ack"  # sender believes it was acked, the frame was not received


@dataclass(frozen=True)
class AckOutcome:
    per_sender: dict[int, AckResolution]
    ack_overhead_bytes: int

    @property
    def false_positives(self) -> int:
        return sum(1 for r in self.per_sender.values() if r is AckResolution.FALSE_ACK)


def ack_disambiguation(
    concurrent_senders: Iterable[int],
    ack_carries_sender_addr: bool,
    received_from: int | None = None,
) -> AckOutcome:
    """Resolve one ACK heard by several senders that used the same seqno.

    ``received_from`` is the sender whose frame was actually received (the
    lowest id by default).  Without a sender address in the ACK every
    sender takes it as its own.
    """
    senders = sorted(set(concurrent_senders))
    if not senders:
        raise ValueError("need at least one sender")
    winner = senders[0] if received_from is None else received_from
    if winner not in senders:
        raise ValueError("received_from must be one of the senders")
    per_sender = {}
    for s in senders:
        if s == winner:
            per_sender[s] = AckResolution.ACKED
        elif ack_carries_sender_addr:
            per_sender[s] = AckResolution.NOT_ACKED
        else:
            per_sender[s] = AckResolution.FALSE_ACK
    overhead = ACK_SENDER_ADDR_BYTES if ack_carries_sender_addr else 0
    return AckOutcome(per_sender, overhead)
