import numpy as np
import pytest
from conftest import P2C, P2P

from hijackimpact.bgpsim import HijackScenario, random_scenarios, simulate_hijack
from hijackimpact.monitors import (
    DEFAULT_FAILURE_TABLE,
    MeasurementVector,
    MonitorError,
    MonitorSet,
    PingModel,
    clustered_pool,
    load_monitor_set,
    observe_control_plane,
    observe_ping,
    sample_clustered_monitors,
    sample_random_monitors,
)
from hijackimpact.topology import AsGraph, Edge


@pytest.fixture
def outcome4():
    # decisions H, V, H, V at ASNs 2, 1, 4, 3 (two stubs below each origin)
    g = AsGraph([Edge(1, 3, P2C), Edge(2, 4, P2C), Edge(1, 2, P2P)])
    return simulate_hijack(g, HijackScenario(1, 2, seed=0))


def test_random_full_and_deterministic(mid_graph):
    full = sample_random_monitors(mid_graph, len(mid_graph), 1)
    assert sorted(full.members.tolist()) == mid_graph.asns.tolist()
    a, b = sample_random_monitors(mid_graph, 30, 5), sample_random_monitors(mid_graph, 30, 5)
    assert a == b
    with pytest.raises(MonitorError):
        sample_random_monitors(mid_graph, len(mid_graph) + 1, 0)


def test_random_uniformity():
    g = AsGraph([Edge(i, i + 1, P2C) for i in range(1, 10)])
    rng = np.random.default_rng(3)
    counts = np.zeros(10)
    for _ in range(10_000):
        counts[sample_random_monitors(g, 1, rng).members[0] - 1] += 1
    freq = counts / counts.sum()
    assert np.all(np.abs(freq - 0.1) <= 0.02)


def test_clustered_inside_cones(mid_graph):
    ms = sample_clustered_monitors(mid_graph, 100, 4)
    assert len(ms) == 100
    pool = clustered_pool(mid_graph, 100, np.random.default_rng(4))
    assert len(pool) >= 100
    with pytest.raises(MonitorError):
        sample_clustered_monitors(mid_graph, len(mid_graph), 0)


def test_load_monitor_set():
    assert len(load_monitor_set("65001\n65002", "x")) == 2
    ms = load_monitor_set("65001\n# c\n65001\n", "x")
    assert ms.members.tolist() == [65001] and ms.duplicates == 1
    assert len(load_monitor_set("", "x")) == 0
    with pytest.raises(MonitorError) as ei:
        load_monitor_set("1\nfoo\n", "x")
    assert ei.value.lineno == 2


def test_monitor_set_rejects_duplicates():
    with pytest.raises(MonitorError):
        MonitorSet("x", [1, 1])


def test_control_plane(outcome4):
    ms = MonitorSet("m", [2, 1, 4, 3])
    mv = observe_control_plane(outcome4, ms)
    assert mv.m.tolist() == [1, 0, 1, 0] and not mv.corrupted
    with pytest.raises(MonitorError):
        observe_control_plane(outcome4, MonitorSet("m", [99]))


def test_control_plane_unreachable_is_zero():
    g = AsGraph([Edge(1, 2, P2P)], nodes=[7])
    oc = simulate_hijack(g, HijackScenario(1, 2))
    mv = observe_control_plane(oc, MonitorSet("m", [7, 2]))
    assert mv.m.tolist() == [0, 1] and mv.unreachable == 1


def test_subset_consistency(mid_graph):
    oc = simulate_hijack(mid_graph, random_scenarios(mid_graph, 1, 8)[0])
    ms = sample_random_monitors(mid_graph, 200, 1)
    full = observe_control_plane(oc, ms)
    pos = np.arange(0, 200, 3)
    assert np.array_equal(observe_control_plane(oc, ms.subset(pos)).m, full.m[pos])


def test_ping_limits(mid_graph):
    oc = simulate_hijack(mid_graph, random_scenarios(mid_graph, 1, 8)[0])
    ms = sample_random_monitors(mid_graph, 500, 2)
    cp = observe_control_plane(oc, ms)
    assert np.array_equal(observe_ping(oc, ms, PingModel.constant(0.0, seed=1)).m, cp.m)
    all_fail = observe_ping(oc, ms, PingModel.constant(1.0, seed=1))
    assert all_fail.m.tolist() == [1] * 500 and all_fail.corrupted


def test_ping_mitm(outcome4):
    mv = observe_ping(outcome4, MonitorSet("m", [2, 4]), PingModel.constant(0.0, mitm=True))
    assert mv.m.tolist() == [0, 0]


def test_ping_failure_rate():
    # 10^5 clean monitors behind one victim
    n = 100_000
    g = AsGraph([Edge(1, i, P2C) for i in range(3, n + 3)] + [Edge(1, 2, P2P)])
    oc = simulate_hijack(g, HijackScenario(1, 2, seed=0))
    clean = MonitorSet("m", np.arange(3, n + 3))
    mv = observe_ping(oc, clean, PingModel(n_ip=1, seed=5))
    assert abs(mv.m.mean() - 0.128) <= 0.005


def test_ping_deterministic(outcome4):
    ms = MonitorSet("m", [1, 3])
    a = observe_ping(outcome4, ms, PingModel.constant(0.5, seed=9))
    b = observe_ping(outcome4, ms, PingModel.constant(0.5, seed=9))
    assert a == b


def test_failure_table():
    assert PingModel(n_ip=1).p == 0.128
    assert PingModel(n_ip=3).p == 0.021
    assert PingModel(n_ip=10).p == 0.0 and PingModel(n_ip=50).p == 0.0
    assert PingModel(n_ip=5).p == pytest.approx(0.021 * (1 - 2 / 7))
    assert DEFAULT_FAILURE_TABLE[2] == 0.042
    with pytest.raises(ValueError):
        PingModel(table={1: 0.1, 2: 0.2})
    with pytest.raises(ValueError):
        PingModel(table={1: 1.5})
    with pytest.raises(ValueError):
        PingModel(n_ip=0)


def test_per_as_override():
    m = PingModel(per_as={5: 0.7})
    assert m.probabilities(np.array([5, 6])).tolist() == [0.7, 0.128]


def test_measurement_vector_json():
    mv = MeasurementVector([1, 2], [0, 1], corrupted=True)
    assert mv.to_dict() == {"monitors": [1, 2], "m": [0, 1], "corrupted": True}
    assert MeasurementVector.from_dict(mv.to_dict()) == mv
    with pytest.raises(MonitorError):
        MeasurementVector([1], [0, 1])
    with pytest.raises(MonitorError):
        MeasurementVector([1], [2])
