import pytest

from rplsim import Metric, generate_synthetic, SynthParams
from rplsim.metrics import path_delivery
from rplsim.routing import Mode, Status
from rplsim.studies import parent_switch_experiment, replay_metric_study
from rplsim.topology import DirectionalLink, Topology

METRICS = [Metric.etx(), Metric.etxn(2), Metric.lr(8)]


def star(prrs):
    links = {}
    for n, (up, down) in enumerate(prrs, start=1):
        links[(n, 0)] = DirectionalLink(n, 0, ((0, up),))
        links[(0, n)] = DirectionalLink(0, n, ((0, down),))
    return Topology(tuple(range(len(prrs) + 1)), 0, links)


class TestReplay:
    def test_star_is_one_hop(self):
        topo = star([(0.9, 0.8), (0.5, 0.6), (0.7, 0.7)])
        res = replay_metric_study(topo, METRICS, r=2)
        for study in res.values():
            assert set(study.hops.values()) == {1.0}
            assert study.up_pdr[2] == path_delivery([0.5], 2)
            assert study.down_pdr[2] == path_delivery([0.6], 2)
            assert study.down_link_prr[1] == 0.8

    def test_keys_are_labels(self):
        res = replay_metric_study(star([(1.0, 1.0)]), METRICS)
        assert list(res) == ["etx", "etxn:2", "lr:8"]

    def test_metric_direction(self, asym50):
        res = replay_metric_study(asym50, METRICS, r=8)
        etx, etx2, lr = (res[k].summary() for k in ("etx", "etxn:2", "lr:8"))
        assert etx2["up_link_prr"]["min"] >= etx["up_link_prr"]["min"]
        assert etx2["down_link_prr"]["min"] >= etx["down_link_prr"]["min"]
        assert lr["up_pdr"]["median"] >= max(etx["up_pdr"]["median"], etx2["up_pdr"]["median"])
        assert all(s["unconverged_windows"] == 0 for s in (etx, etx2, lr))

    def test_every_node_attached(self, asym50):
        res = replay_metric_study(asym50, [Metric.etx()])
        assert len(res["etx"].hops) == len(asym50.nodes) - 1
        assert all(h >= 1 for h in res["etx"].hops.values())

    def test_churn_over_windows(self):
        topo = generate_synthetic(
            30, 2, SynthParams(asymmetry_sigma=0.1, windows=6, temporal_sigma=0.15)
        )
        res = replay_metric_study(topo, [Metric.etx()], hysteresis=0.0)
        low = replay_metric_study(topo, [Metric.etx()], hysteresis=5.0)
        assert res["etx"].switches_per_node_hour() >= low["etx"].switches_per_node_hour()
        assert res["etx"].hours == pytest.approx(0.1)


class TestSwitchExperiment:
    def test_nonstoring_never_unreachable(self, asym50):
        study = parent_switch_experiment(asym50, Mode.NONSTORING, switches=300, registration_loss=0.0)
        assert study.switches == 300
        assert study.snapshots_with(Status.UNREACHABLE) == 0
        assert study.snapshots_with(Status.OUTDATED) == 0

    def test_storing_goes_inconsistent(self, asym50):
        study = parent_switch_experiment(asym50, Mode.STORING, switches=300, registration_loss=0.1)
        assert study.snapshots_with(Status.OUTDATED) >= 1
        assert study.snapshots_with(Status.UNREACHABLE) >= 1

    def test_lossless_storing_stays_consistent(self, asym50):
        study = parent_switch_experiment(asym50, Mode.STORING, switches=200, registration_loss=0.0)
        assert study.snapshots_with(Status.UNREACHABLE) == 0
        assert study.snapshots_with(Status.OUTDATED) == 0

    def test_deterministic(self, asym50):
        a = parent_switch_experiment(asym50, Mode.STORING, switches=100, seed=3)
        b = parent_switch_experiment(asym50, Mode.STORING, switches=100, seed=3)
        assert [s.status for s in a.snapshots] == [s.status for s in b.snapshots]
