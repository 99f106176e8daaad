import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rplsim.topology import (
    DirectionalLink,
    EventKind,
    GenerationError,
    SynthParams,
    Topology,
    TraceEvent,
    TraceParseError,
    TraceValidationError,
    asymmetry_pairs,
    generate_synthetic,
    load_trace,
    prr_at,
    read_trace_events,
    topology_from_events,
    topology_to_events,
    write_trace,
)


def tx(t, s, q):
    return TraceEvent(t, EventKind.TX, s, q)


def rx(t, s, r, q, rssi=None):
    return TraceEvent(t, EventKind.RX, s, q, r, rssi)


class TestLoadTrace:
    def test_half_received(self):
        events = [tx(i, 0, i) for i in range(10)] + [rx(i, 0, 1, i) for i in range(5)]
        topo = topology_from_events(events)
        assert topo.links[(0, 1)].prr_series == ((0, 0.5),)

    def test_never_received_pair_has_no_link(self):
        events = [tx(i, 0, i) for i in range(10)] + [rx(i, 0, 1, i) for i in range(10)]
        events.append(tx(50, 2, 0))
        topo = topology_from_events(events)
        assert topo.links[(0, 1)].prr_series == ((0, 1.0),)
        assert (0, 2) not in topo.links
        assert prr_at(topo, 0, 2, 0) == 0.0

    def test_two_window_fixture(self, data_dir):
        topo = load_trace(data_dir / "two_windows.trace", window_ms=60_000)
        assert topo.links[(0, 1)].prr_series == ((0, 0.8), (60_000, 0.2))
        # only the first window carried RSSI; the second defaults to -75
        assert topo.links[(0, 1)].rssi_dbm == round((8 * -70 + 2 * -75) / 10)

    def test_parse_error_has_line_number(self, data_dir):
        with pytest.raises(TraceParseError) as exc:
            load_trace(data_dir / "bad_line.trace")
        assert exc.value.lineno == 3
        assert "line 3" in str(exc.value)

    def test_rx_without_tx(self, data_dir):
        with pytest.raises(TraceValidationError):
            load_trace(data_dir / "orphan_rx.trace")

    @pytest.mark.parametrize(
        "line", ["TX 1 2", "RX 1 2 3", "FOO 1 2 3", "TX -5 0 1", "RX 1 2 3 4 5 6"]
    )
    def test_malformed_lines(self, tmp_path, line):
        p = tmp_path / "t.trace"
        p.write_text("# header\n" + line + "\n")
        with pytest.raises(TraceParseError):
            load_trace(p)

    def test_empty_window_after_reception_gives_zero(self):
        events = [tx(0, 0, 0), rx(0, 0, 1, 0), tx(60_000, 0, 1)]
        topo = topology_from_events(events)
        assert topo.links[(0, 1)].prr_series == ((0, 1.0), (60_000, 0.0))

    def test_roundtrip_is_idempotent(self, data_dir, tmp_path):
        events = read_trace_events(data_dir / "two_windows.trace")
        first = topology_from_events(events)
        out = tmp_path / "copy.trace"
        write_trace(events, out)
        again = load_trace(out)
        assert again.links == first.links
        assert again.nodes == first.nodes


@settings(max_examples=60, deadline=None)
@given(
    counts=st.lists(
        st.tuples(st.integers(1, 12), st.integers(0, 12)), min_size=1, max_size=4
    )
)
def test_prr_equals_rx_over_tx(counts):
    events = []
    seq = 0
    expected = []
    for w, (n_tx, n_rx) in enumerate(counts):
        n_rx = min(n_rx, n_tx)
        for k in range(n_tx):
            t = w * 60_000 + k
            events.append(tx(t, 0, seq % 256))
            if k < n_rx:
                events.append(rx(t, 0, 1, seq % 256))
            seq += 1
        expected.append((w * 60_000, Fraction(n_rx, n_tx)))
    topo = topology_from_events(events)
    link = topo.links.get((0, 1))
    if link is None:
        assert all(f == 0 for _, f in expected)
        return
    for (t, prr), (te, fe) in zip(link.prr_series, expected):
        assert t == te
        assert 0.0 <= prr <= 1.0
        assert abs(prr - float(fe)) <= 1e-12


class TestPrrAt:
    link = DirectionalLink(0, 1, ((0, 0.8), (60_000, 0.2)))

    def test_step_semantics(self):
        assert self.link.prr_at(59_999) == 0.8
        assert self.link.prr_at(60_000) == 0.2
        assert self.link.prr_at(10**9) == 0.2

    def test_before_first_sample(self):
        late = DirectionalLink(0, 1, ((1000, 0.3), (2000, 0.9)))
        assert late.prr_at(0) == 0.3

    def test_absent_link(self):
        topo = Topology((0, 1, 2), 0, {(0, 1): self.link})
        assert prr_at(topo, 1, 0, 0) == 0.0
        assert topo.prr_at(0, 1, 0) == 0.8

    @pytest.mark.parametrize(
        "series",
        [((0, 1.2),), ((0, -0.1),), ((5, 0.5), (5, 0.6)), ()],
    )
    def test_invalid_series(self, series):
        with pytest.raises(ValueError):
            DirectionalLink(0, 1, series)

    def test_self_link_rejected(self):
        with pytest.raises(ValueError):
            DirectionalLink(2, 2, ((0, 1.0),))


class TestSynthetic:
    def test_two_nodes_symmetric(self):
        topo = generate_synthetic(2, 7, SynthParams(asymmetry_sigma=0.0))
        assert topo.prr_at(0, 1, 0) == topo.prr_at(1, 0, 0) > 0

    def test_deterministic(self):
        p = SynthParams(asymmetry_sigma=0.15, windows=3, temporal_sigma=0.05)
        assert generate_synthetic(30, 11, p) == generate_synthetic(30, 11, p)
        assert generate_synthetic(30, 11, p) != generate_synthetic(30, 12, p)

    def test_asymmetric_pair_exists(self, asym50):
        assert max(d for _, _, d in asymmetry_pairs(asym50)) > 0.2

    @pytest.mark.parametrize("seed", range(5))
    def test_zero_sigma_is_symmetric(self, seed):
        topo = generate_synthetic(40, seed, SynthParams(asymmetry_sigma=0.0, windows=4, temporal_sigma=0.1))
        for (a, b), link in topo.links.items():
            assert topo.links[(b, a)].prr_series == link.prr_series

    def test_connected_at_floor(self, asym50):
        floor = SynthParams().connectivity_floor
        reach = {asym50.root}
        frontier = [asym50.root]
        while frontier:
            x = frontier.pop()
            for y in asym50.out_neighbors(x):
                if y not in reach and min(asym50.prr_at(x, y, 0), asym50.prr_at(y, x, 0)) >= floor:
                    reach.add(y)
                    frontier.append(y)
        assert reach == set(asym50.nodes)

    def test_distance_law(self):
        topo = generate_synthetic(20, 3, SynthParams(asymmetry_sigma=0.0, connectivity_floor=0.0, d_max_m=80))
        p = topo.positions
        for (a, b), link in topo.links.items():
            d = math.dist(p[a], p[b])
            assert link.prr_at(0) == pytest.approx(max(0.0, 1 - (d / 80) ** 2))

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_synthetic(1, 0)
        with pytest.raises(ValueError):
            generate_synthetic(5, 0, SynthParams(asymmetry_sigma=-1))

    def test_disconnected_raises(self):
        with pytest.raises(GenerationError):
            generate_synthetic(10, 0, SynthParams(d_max_m=1.0, max_retries=3))

    def test_export_to_trace_and_back(self, tmp_path):
        topo = generate_synthetic(12, 4, SynthParams(asymmetry_sigma=0.1))
        path = tmp_path / "s.trace"
        write_trace(topology_to_events(topo, tx_per_window=20), path)
        back = load_trace(path, root=topo.root)
        for (a, b), link in topo.links.items():
            want = round(link.prr_at(0) * 20) / 20
            assert back.prr_at(a, b, 0) == pytest.approx(want)
