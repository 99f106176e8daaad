import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rplsim.routing import (
    Lookup,
    Mode,
    RootTopologyView,
    SourceRouteHeader,
    Status,
    StoringTable,
    UpdateVerdict,
    compute_source_route,
    header_size,
    heterogeneous_addresses,
    homogeneous_addresses,
    nonstoring_remove,
    nonstoring_update,
    snapshot_consistency,
    storing_deregister,
    storing_lookup,
    storing_register,
    true_path,
)


def tables_for(nodes, capacity=64):
    return {n: StoringTable(n, capacity) for n in nodes}


class TestStoringRegistration:
    def test_all_hops_succeed(self):
        t = tables_for(range(4))
        res = storing_register(t, [3, 2, 1, 0], 3, [True, True, True])
        assert res.installed == [2, 1, 0]
        assert t[2].routes[3] == 3 and t[1].routes[3] == 2 and t[0].routes[3] == 1

    def test_first_hop_lost(self):
        t = tables_for(range(4))
        res = storing_register(t, [3, 2, 1, 0], 3, [False, True, True])
        assert res.installed == [] and res.reached == 0
        assert all(not tb.routes for tb in t.values())

    def test_middle_hop_lost(self):
        t = tables_for(range(4))
        storing_register(t, [3, 2, 1, 0], 3, [True, False, True])
        assert 3 in t[2].routes and 3 not in t[1].routes

    def test_overflow_counted(self):
        t = tables_for(range(3), capacity=1)
        storing_register(t, [1, 0], 1, [True])
        res = storing_register(t, [2, 0], 2, [True])
        assert res.overflowed == [0] and t[0].overflows == 1
        assert not res.complete

    def test_delivery_length_checked(self):
        with pytest.raises(ValueError):
            storing_register(tables_for(range(3)), [2, 1, 0], 2, [True])

    def test_deregister_only_matching(self):
        t = tables_for(range(4))
        t[0].routes[3] = 2
        storing_deregister(t, [3, 1, 0], 3, [True, True])
        assert t[0].routes[3] == 2  # installed via 2, not via 1


class TestStoringLookup:
    def test_present(self):
        t = StoringTable(1, routes={5: 4})
        assert storing_lookup(t, 5, has_parent=True) == 4

    def test_absent_goes_up(self):
        assert storing_lookup(StoringTable(1), 5, has_parent=True) is Lookup.UP

    def test_absent_at_root(self):
        assert storing_lookup(StoringTable(0), 5, has_parent=False) is Lookup.NO_ROUTE

    def test_absent_from_above(self):
        t = StoringTable(1)
        assert storing_lookup(t, 5, has_parent=True, came_from_below=False) is Lookup.NO_ROUTE


class TestNonStoring:
    def test_join_and_accept(self):
        v = RootTopologyView(0)
        assert nonstoring_update(v, 1, 0) is UpdateVerdict.ACCEPTED
        assert v.version == 1
        assert nonstoring_update(v, 2, 1) is UpdateVerdict.ACCEPTED
        assert v.version == 2 and v.is_acyclic()

    def test_repeat_does_not_bump_version(self):
        v = RootTopologyView(0, {1: 0})
        nonstoring_update(v, 1, 0)
        assert v.version == 0

    def test_two_cycle_rejected(self):
        v = RootTopologyView(0, {1: 0, 2: 1})
        assert nonstoring_update(v, 1, 2) is UpdateVerdict.REJECTED
        assert v.parent_of == {1: 0, 2: 1} and v.version == 0

    def test_self_parent_rejected(self):
        v = RootTopologyView(0)
        assert nonstoring_update(v, 4, 4) is UpdateVerdict.REJECTED

    def test_root_cannot_have_parent(self):
        with pytest.raises(ValueError):
            nonstoring_update(RootTopologyView(0), 0, 1)

    def test_remove(self):
        v = RootTopologyView(0, {1: 0})
        nonstoring_remove(v, 1)
        nonstoring_remove(v, 1)
        assert v.parent_of == {} and v.version == 1

    def test_random_updates_stay_acyclic(self):
        rng = random.Random(8)
        v = RootTopologyView(0)
        for _ in range(5000):
            child = rng.randrange(1, 40)
            parent = rng.randrange(0, 40)
            before = dict(v.parent_of)
            verdict = nonstoring_update(v, child, parent)
            assert v.is_acyclic()
            if verdict is UpdateVerdict.REJECTED:
                assert v.parent_of == before


class TestSourceRoute:
    def test_chain(self):
        v = RootTopologyView(0, {5: 0, 7: 5})
        assert compute_source_route(v, 7).hops == (5, 7)

    def test_never_registered(self):
        assert compute_source_route(RootTopologyView(0, {1: 0}), 9) is Lookup.NO_ROUTE

    def test_root(self):
        assert compute_source_route(RootTopologyView(0), 0) == SourceRouteHeader((), 0)

    def test_random_view_against_upward_walk(self):
        rng = random.Random(352)
        parent = {n: rng.randrange(0, n) for n in range(1, 352)}
        v = RootTopologyView(0, dict(parent))
        for dest in range(1, 352):
            walk = []
            x = dest
            while x != 0:
                walk.append(x)
                x = parent[x]
            srh = compute_source_route(v, dest)
            assert list(srh.hops) == walk[::-1]
            assert srh.byte_size == 6 + 2 * len(walk)


class TestHeaderSize:
    def test_one_hop_homogeneous(self):
        addrs = homogeneous_addresses([0, 1])
        assert header_size([1], addrs, root=0) == 8

    def test_three_hops_homogeneous(self):
        addrs = homogeneous_addresses(range(4))
        assert header_size([1, 2, 3], addrs, root=0) == 12

    def test_no_shared_bytes(self):
        addrs = {
            0: bytes(8),
            1: bytes([1] * 8),
            2: bytes([2] * 8),
            3: bytes([3] * 8),
        }
        assert header_size([1, 2, 3], addrs, root=0) == 30

    def test_heterogeneous_worst_case(self):
        addrs = heterogeneous_addresses(range(10), root=0, seed=4)
        assert header_size([3, 6, 9], addrs, root=0) == 30

    def test_empty(self):
        assert header_size([], {}) == 0

    def test_unshared_prefix(self):
        addrs = homogeneous_addresses(range(2))
        assert header_size([1], addrs, root=0, prefix_shared=False) == 6 + 2 + 8

    def test_bad_address_length(self):
        with pytest.raises(ValueError):
            header_size([1], {1: b"\x00" * 4})

    @settings(max_examples=100, deadline=None)
    @given(st.permutations(range(1, 7)))
    def test_permutation_invariant(self, perm):
        addrs = homogeneous_addresses(range(7))
        shuffled = {0: addrs[0]}
        for src, dst in zip(range(1, 7), perm):
            shuffled[src] = addrs[dst]
        assert header_size(list(range(1, 7)), shuffled, root=0) == header_size(list(range(1, 7)), addrs, root=0)


class TestTruePath:
    def test_path(self):
        assert true_path({1: 0, 2: 1}, 0, 2) == [0, 1, 2]

    def test_detached(self):
        assert true_path({1: None}, 0, 1) is None

    def test_loop(self):
        assert true_path({1: 2, 2: 1}, 0, 1) is None


class TestSnapshot:
    def test_converged_nonstoring(self):
        parents = {1: 0, 2: 1, 3: 1}
        v = RootTopologyView(0, dict(parents))
        snap = snapshot_consistency(Mode.NONSTORING, v, parents, 0, nodes=[0, 1, 2, 3])
        assert snap.count(Status.REACHABLE) == 3

    def test_nonstoring_outdated(self):
        v = RootTopologyView(0, {1: 0, 2: 1, 3: 1})
        parents = {1: 0, 2: 1, 3: 2}
        snap = snapshot_consistency(Mode.NONSTORING, v, parents, 0)
        assert snap.status[3] is Status.OUTDATED
        assert snap.status[2] is Status.REACHABLE

    def test_never_joined(self):
        v = RootTopologyView(0, {1: 0})
        snap = snapshot_consistency(Mode.NONSTORING, v, {1: 0, 2: None}, 0)
        assert snap.status[2] is Status.UNREACHABLE

    def test_storing_line_lost_deregistration(self):
        # line 0 - 1 - 2 - 3; node 3 switches from 2 to 1
        t = tables_for(range(4))
        storing_register(t, [2, 1, 0], 2, [True, True])
        storing_register(t, [3, 2, 1, 0], 3, [True, True, True])
        parents = {1: 0, 2: 1, 3: 1}
        # no-path towards the old parent 2 is lost on its first hop
        storing_deregister(t, [3, 2, 1, 0], 3, [False, True, True])
        # new registration via 1 only reaches 1; the walk 0 -> 1 -> 3 still works
        storing_register(t, [3, 1, 0], 3, [True, False])
        snap = snapshot_consistency(Mode.STORING, t, parents, 0)
        assert snap.status[3] is Status.OUTDATED  # 2 still holds a stale route

        t2 = tables_for(range(4))
        storing_register(t2, [2, 1, 0], 2, [True, True])
        storing_register(t2, [3, 2, 1, 0], 3, [True, True, True])
        # the old parent 2 is told to forget 3, but the new registration is lost
        storing_deregister(t2, [3, 2, 1, 0], 3, [True, False, False])
        storing_register(t2, [3, 1, 0], 3, [False, False])
        snap = snapshot_consistency(Mode.STORING, t2, parents, 0)
        assert snap.status[3] is Status.UNREACHABLE
        assert snap.status[2] is Status.REACHABLE

    def test_rows_sorted(self):
        v = RootTopologyView(0, {2: 0, 1: 0})
        snap = snapshot_consistency(Mode.NONSTORING, v, {1: 0, 2: 0}, 0, time_ms=10)
        assert list(snap.rows()) == [(10, 1, "REACHABLE"), (10, 2, "REACHABLE")]
