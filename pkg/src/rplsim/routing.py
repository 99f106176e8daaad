"""Downward routing state for storing and non-storing RPL.

Storing mode keeps a table per node, maintained by hop-by-hop registrations
that can be lost in transit.  Non-storing mode keeps one parent map at the
root, refuses updates that would close a loop, and builds source routes from
it.  :func:`snapshot_consistency` grades either kind of state against the
nodes' true parents.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

SRH_FIXED_BYTES = 6
ADDRESS_BYTES = 8
PREFIX_BYTES = 8
DEFAULT_TABLE_CAPACITY = 64
HOMOGENEOUS_PREFIX = bytes([0x02, 0x12, 0x4B, 0x00, 0x06, 0x0D])


class Mode(Enum):
    STORING = "storing"
    NONSTORING = "nonstoring"


class Lookup(Enum):
    UP = "up"
    NO_ROUTE = "no_route"


class UpdateVerdict(Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class Status(Enum):
    REACHABLE = "REACHABLE"
    OUTDATED = "OUTDATED"
    UNREACHABLE = "UNREACHABLE"


# ------------------------------------------------------------------- storing


@dataclass
class StoringTable:
    owner: int
    capacity: int = DEFAULT_TABLE_CAPACITY
    routes: dict[int, int] = field(default_factory=dict)
    overflows: int = 0

    def install(self, dest: int, next_hop: int) -> bool:
        if dest not in self.routes and len(self.routes) >= self.capacity:
            self.overflows += 1
            return False
        self.routes[dest] = next_hop
        return True

    def remove(self, dest: int, via: int | None = None) -> bool:
        """Drop the route to ``dest``; with ``via``, only if it points there."""
        if dest not in self.routes:
            return False
        if via is not None and self.routes[dest] != via:
            return False
        del self.routes[dest]
        return True


@dataclass
class RegistrationResult:
    installed: list[int] = field(default_factory=list)
    overflowed: list[int] = field(default_factory=list)
    reached: int = 0  # number of hops the message crossed

    @property
    def complete(self) -> bool:
        return not self.overflowed and self.reached > 0


def _walk_registration(path_nodes, delivery):
    if len(delivery) != len(path_nodes) - 1:
        raise ValueError("need one delivery outcome per hop")
    for hop, ok in enumerate(delivery):
        if not ok:
            return
        yield path_nodes[hop], path_nodes[hop + 1]


def storing_register(
    tables: Mapping[int, StoringTable],
    path_nodes: Sequence[int],
    dest: int,
    delivery: Sequence[bool],
) -> RegistrationResult:
    """Propagate a route registration for ``dest`` up ``path_nodes``.

    ``path_nodes`` runs from the registering child to the root and
    ``delivery[i]`` says whether hop ``path_nodes[i] -> path_nodes[i+1]``
    got through.  Each ancestor reached installs ``dest`` via the node that
    forwarded the message; the first lost hop stops propagation.
    """
    result = RegistrationResult()
    for child, ancestor in _walk_registration(path_nodes, delivery):
        result.reached += 1
        if tables[ancestor].install(dest, child):
            result.installed.append(ancestor)
        else:
            result.overflowed.append(ancestor)
    return result


def storing_deregister(
    tables: Mapping[int, StoringTable],
    path_nodes: Sequence[int],
    dest: int,
    delivery: Sequence[bool],
) -> RegistrationResult:
    """No-path registration along the old route; removes only matching entries."""
    result = RegistrationResult()
    for child, ancestor in _walk_registration(path_nodes, delivery):
        result.reached += 1
        if tables[ancestor].remove(dest, via=child):
            result.installed.append(ancestor)
    return result


def storing_lookup(
    table: StoringTable, dest: int, has_parent: bool, came_from_below: bool = True
) -> int | Lookup:
    """Next hop for ``dest``, ``Lookup.UP`` or ``Lookup.NO_ROUTE``.

    A packet that arrived from above has nowhere to go if this node has no
    entry; bouncing it back up would loop, so that is a missing route too.
    """
    if dest in table.routes:
        return table.routes[dest]
    if has_parent and came_from_below:
        return Lookup.UP
    return Lookup.NO_ROUTE


# --------------------------------------------------------------- non-storing


@dataclass
class RootTopologyView:
    root: int
    parent_of: dict[int, int] = field(default_factory=dict)
    version: int = 0

    def chain(self, node: int) -> list[int] | None:
        """Nodes from ``node`` up to (excluding) the root, or None if detached."""
        out = []
        seen = set()
        x = node
        while x != self.root:
            if x in seen or x not in self.parent_of:
                return None
            seen.add(x)
            out.append(x)
            x = self.parent_of[x]
        return out

    def is_acyclic(self) -> bool:
        state: dict[int, int] = {}
        for start in self.parent_of:
            path = []
            x = start
            while x in self.parent_of and x not in state:
                state[x] = 1
                path.append(x)
                x = self.parent_of[x]
            if state.get(x) == 1 and x in path:
                return False
            for y in path:
                state[y] = 2
        return True


def _creates_cycle(view: RootTopologyView, child: int, new_parent: int) -> bool:
    x = new_parent
    seen = set()
    while x in view.parent_of and x not in seen:
        if x == child:
            return True
        seen.add(x)
        x = view.parent_of[x]
    return x == child


def nonstoring_update(view: RootTopologyView, child: int, new_parent: int) -> UpdateVerdict:
    if child == view.root:
        raise ValueError("the root has no parent")
    if new_parent == child or _creates_cycle(view, child, new_parent):
        return UpdateVerdict.REJECTED
    if view.parent_of.get(child) != new_parent:
        view.parent_of[child] = new_parent
        view.version += 1
    return UpdateVerdict.ACCEPTED


def nonstoring_remove(view: RootTopologyView, child: int) -> None:
    if view.parent_of.pop(child, None) is not None:
        view.version += 1


@dataclass(frozen=True)
class SourceRouteHeader:
    hops: tuple[int, ...]
    byte_size: int


def homogeneous_addresses(nodes: Sequence[int]) -> dict[int, bytes]:
    """Interface ids sharing six leading bytes plus a 2-byte short id.

    Both short-id bytes are distinct per node (for fewer than 255 nodes), so
    any two addresses share exactly the six-byte prefix.
    """
    out = {}
    for n in nodes:
        if n < 255:
            short = bytes([n + 1, n + 1])
        else:
            short = (n + 1).to_bytes(2, "big")
        out[n] = HOMOGENEOUS_PREFIX + short
    return out


def heterogeneous_addresses(nodes: Sequence[int], root: int, seed: int = 0) -> dict[int, bytes]:
    """Random interface ids; the root's first byte differs from everyone else's."""
    rng = random.Random(seed)
    out = {}
    for n in nodes:
        first = 0 if n == root else rng.randrange(1, 256)
        out[n] = bytes([first]) + bytes(rng.randrange(256) for _ in range(ADDRESS_BYTES - 1))
    return out


def _common_prefix_len(addrs: Sequence[bytes]) -> int:
    first = addrs[0]
    n = 0
    for i in range(len(first)):
        if all(a[i] == first[i] for a in addrs):
            n += 1
        else:
            break
    return n


def header_size(
    hops: Sequence[int],
    addresses: Mapping[int, bytes],
    root: int | None = None,
    prefix_shared: bool = True,
) -> int:
    """Source routing header bytes: 6 fixed plus one compressed address per hop.

    Leading interface-id bytes shared by every hop (and the root, when given)
    are elided.  The network prefix is elided too unless ``prefix_shared`` is
    false, in which case it is carried in full for each hop.
    """
    if not hops:
        return 0
    group = [addresses[h] for h in hops]
    if root is not None:
        group.append(addresses[root])
    for a in group:
        if len(a) != ADDRESS_BYTES:
            raise ValueError("interface ids must be 8 bytes")
    per_hop = ADDRESS_BYTES - _common_prefix_len(group)
    if not prefix_shared:
        per_hop += PREFIX_BYTES
    return SRH_FIXED_BYTES + len(hops) * per_hop


def compute_source_route(
    view: RootTopologyView,
    dest: int,
    addresses: Mapping[int, bytes] | None = None,
) -> SourceRouteHeader | Lookup:
    if dest == view.root:
        return SourceRouteHeader((), 0)
    chain = view.chain(dest)
    if chain is None:
        return Lookup.NO_ROUTE
    hops = tuple(reversed(chain))
    if addresses is None:
        addresses = homogeneous_addresses(list(hops) + [view.root])
    return SourceRouteHeader(hops, header_size(hops, addresses, view.root))


# --------------------------------------------------------------- consistency


@dataclass(frozen=True)
class ConsistencySnapshot:
    time_ms: int
    status: Mapping[int, Status]

    def count(self, status: Status) -> int:
        return sum(1 for s in self.status.values() if s is status)

    def rows(self):
        for node in sorted(self.status):
            yield self.time_ms, node, self.status[node].value


def true_path(parents: Mapping[int, int | None], root: int, dest: int) -> list[int] | None:
    """Root-to-dest node list following the true parents, or None."""
    out = [dest]
    seen = {dest}
    x = dest
    while x != root:
        p = parents.get(x)
        if p is None or p in seen:
            return None
        out.append(p)
        seen.add(p)
        x = p
    return out[::-1]


def _storing_status(tables, root, dest, parents, max_hops) -> Status:
    x = root
    for _ in range(max_hops):
        if x == dest:
            break
        nh = storing_lookup(tables[x], dest, has_parent=parents.get(x) is not None, came_from_below=(x == root))
        if not isinstance(nh, int) or isinstance(nh, bool):
            return Status.UNREACHABLE
        x = nh
    else:
        return Status.UNREACHABLE
    path = true_path(parents, root, dest)
    expected = {}
    if path is not None:
        for a, b in zip(path, path[1:]):
            expected[a] = b
    for node, table in tables.items():
        if node == dest:
            continue
        if table.routes.get(dest) != expected.get(node):
            return Status.OUTDATED
    return Status.REACHABLE


def _nonstoring_status(view, dest, parents) -> Status:
    chain = view.chain(dest)
    if chain is None:
        return Status.UNREACHABLE
    path = true_path(parents, view.root, dest)
    believed = [view.root] + chain[::-1]
    return Status.REACHABLE if path == believed else Status.OUTDATED


def snapshot_consistency(
    mode: Mode,
    state: Mapping[int, StoringTable] | RootTopologyView,
    parents: Mapping[int, int | None],
    root: int,
    time_ms: int = 0,
    nodes: Sequence[int] | None = None,
) -> ConsistencySnapshot:
    """Grade every non-root node's downward reachability.

    A zero-loss packet is walked from the root over the routing state.  If it
    never arrives the node is UNREACHABLE; if it arrives but some state about
    the node disagrees with the true parents it is OUTDATED.
    """
    if nodes is None:
        nodes = sorted(set(parents) | ({*state} if mode is Mode.STORING else set(state.parent_of)))
    status = {}
    for dest in nodes:
        if dest == root:
            continue
        if mode is Mode.STORING:
            status[dest] = _storing_status(state, root, dest, parents, len(nodes) + 1)
        else:
            status[dest] = _nonstoring_status(state, dest, parents)
    return ConsistencySnapshot(time_ms, status)
