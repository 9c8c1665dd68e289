import ipaddress
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hijackimpact.bgpsim import PrefixMode, random_scenarios, simulate_hijack
from hijackimpact.ingest import (
    EventSpec,
    IngestError,
    PrefixToAsMap,
    build_ping_targets,
    classify_bgp_paths,
    classify_traceroutes,
    merge_pfx2as_snapshots,
    parse_pfx2as,
    read_path_records,
    read_traceroute_records,
)
from hijackimpact.monitors import MonitorSet, observe_control_plane


def test_parse_and_lookup_examples():
    pm = parse_pfx2as("10.0.0.0/8|65001\n")
    assert pm.lookup("10.1.2.3") == {65001}
    nested = parse_pfx2as(["10.0.0.0/8|1", "10.0.0.0/9|2"])
    assert nested.lookup("10.0.0.1") == {2}
    assert nested.lookup("10.200.0.1") == {1}
    assert nested.lookup("11.0.0.1") == frozenset()


def test_parse_formats_and_multi_origin():
    pm = parse_pfx2as(["# header", "192.0.2.0/24 64500", "198.51.100.0\t24\t64501_64502", "203.0.113.0/24|AS7,8  # x"])
    assert pm.lookup("192.0.2.9") == {64500}
    assert pm.lookup("198.51.100.1") == {64501, 64502}
    assert pm.lookup("203.0.113.200") == {7, 8}
    assert len(pm) == 3


@pytest.mark.parametrize("line", ["10.0.0.0/33|1", "10.0.0.1/8|1", "10.0.0.0/8|x", "10.0.0.0/8", "10.0.0.0/8|0"])
def test_parse_errors_carry_line(line):
    with pytest.raises(IngestError) as exc:
        parse_pfx2as(["1.0.0.0/8|1", line])
    assert exc.value.lineno == 2


def test_lpm_against_linear_scan():
    rng = random.Random(0)
    entries = []
    for _ in range(300):
        plen = rng.randint(0, 28) if rng.random() < 0.1 else rng.randint(8, 24)
        base = rng.choice([0x0A000000, 0xC0A80000, rng.getrandbits(32)])
        net = ipaddress.IPv4Network((base & ((0xFFFFFFFF << (32 - plen)) & 0xFFFFFFFF), plen))
        entries.append((net, frozenset({rng.randint(1, 500)})))
    pm = PrefixToAsMap(entries)
    merged = {}
    for net, o in entries:
        merged[net] = merged.get(net, frozenset()) | o

    def oracle(addr):
        best = None
        for net, o in merged.items():
            if addr in net and (best is None or net.prefixlen > best[0].prefixlen):
                best = (net, o)
        return best[1] if best else frozenset()

    for _ in range(10_000):
        base = rng.choice([0x0A000000, 0xC0A80000, rng.getrandbits(32)])
        addr = ipaddress.IPv4Address(base | rng.getrandbits(16) if base != 0 else rng.getrandbits(32))
        assert pm.lookup(addr) == oracle(addr)


def _snap(*pairs):
    return PrefixToAsMap((p, [a]) for p, a in pairs)


def test_merge_examples():
    one = _snap(("10.0.0.0/8", 1), ("11.0.0.0/8", 2))
    assert list(merge_pfx2as_snapshots([one]).pairs()) == list(one.pairs())
    x, y = ("10.0.0.0/8", 1), ("11.0.0.0/8", 2)
    snaps = [_snap(x, y), _snap(x, y), _snap(x, y), _snap(x)]
    assert merge_pfx2as_snapshots(snaps).lookup("11.1.1.1") == {2}
    half = [_snap(x, y), _snap(x, y), _snap(x), _snap(x)]
    assert merge_pfx2as_snapshots(half).lookup("11.1.1.1") == frozenset()
    assert merge_pfx2as_snapshots(half, strict=False).lookup("11.1.1.1") == {2}
    with pytest.raises(ValueError):
        merge_pfx2as_snapshots([])
    with pytest.raises(ValueError):
        merge_pfx2as_snapshots([one], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.tuples(st.integers(0, 5), st.integers(1, 4)), max_size=8), min_size=1, max_size=6),
       st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_merge_threshold_monotone(raw, t1, t2):
    snaps = [_snap(*((f"10.{k}.0.0/16", a) for k, a in s)) for s in raw]
    lo, hi = sorted((t1, t2))
    kept_lo = set(merge_pfx2as_snapshots(snaps, lo).pairs())
    kept_hi = set(merge_pfx2as_snapshots(snaps, hi).pairs())
    assert kept_hi <= kept_lo


PFX = parse_pfx2as(["192.0.2.0/24|65001", "198.51.100.0/24|65002", "203.0.113.0/24|65003"])


def test_ping_targets_examples():
    t = build_ping_targets(["192.0.2.7 0.95"], PFX)
    assert t.to_dict() == {"65001": ["192.0.2.7"]}
    assert build_ping_targets(["192.0.2.7 0.80"], PFX).targets == {}
    lines = [f"192.0.2.{k} {0.90 + k / 1000:.3f}" for k in range(15)]
    t = build_ping_targets(lines, PFX)
    assert [ip for ip, _ in t.targets[65001]] == [f"192.0.2.{k}" for k in range(14, 4, -1)]
    assert all(s >= 0.9 for _, s in t.targets[65001])
    assert t.ases_without_targets == 2


def test_ping_targets_skip_and_count():
    t = build_ping_targets(["garbage", "1.2.3.4 2.0", "192.0.2.1", "8.8.8.8 0.99", "192.0.2.1 0.9"], PFX)
    assert t.malformed == 3 and t.unmapped == 1 and t.n_ip(65001) == 1


EV = EventSpec(victim=1, hijacker=2, prefix="203.0.113.0/24", victim_upstreams={65001, 65003}, hijacker_upstreams={65002, 65003})


def test_classify_bgp_examples():
    mv, diag = classify_bgp_paths([(10, [10, 11, 2]), (20, [20, 21, 1]), (30, [30, 2, 1]), (40, [40, 9]), (50, [])], EV)
    assert dict(zip(mv.monitors.tolist(), mv.m.tolist())) == {10: 1, 20: 0, 30: 1}
    assert [a for a, _ in diag.no_inference] == [40]
    assert diag.errors and diag.errors[0][0] == 4
    origin_only, _ = classify_bgp_paths([(30, [30, 2, 1])], EV, origin_only=True)
    assert origin_only.m.tolist() == [0]


def test_classify_traceroute_examples():
    recs = [
        (10, ["10.0.0.1", "198.51.100.9", "203.0.113.1"]),
        (20, ["192.0.2.1", "*", "203.0.113.1"]),
        (30, ["203.0.113.254", "203.0.113.1"]),
        (40, ["*", "*"]),
        (50, ["192.0.2.1", "203.0.113.250", "203.0.113.1"]),
    ]
    ev = EventSpec(1, 2, "203.0.113.0/25", {65001, 65003}, {65002, 65003})
    mv, diag = classify_traceroutes(recs, ev, PFX)
    assert dict(zip(mv.monitors.tolist(), mv.m.tolist())) == {10: 1, 20: 0}
    reasons = dict(diag.no_inference)
    assert "shared" in reasons[30] and "no resolvable" in reasons[40]
    assert 50 in reasons


def test_record_readers():
    assert read_path_records('{"monitor": 1, "path": [1, 2]}\n\n') == [(1, [1, 2])]
    assert read_traceroute_records(['{"monitor": 3, "hops": ["1.1.1.1", "*"]}']) == [(3, ["1.1.1.1", "*"])]
    with pytest.raises(IngestError) as exc:
        read_path_records(['{"monitor": 1, "path": [1]}', '{"path": []}'])
    assert exc.value.lineno == 2


@pytest.mark.parametrize("htype,mode", [(0, PrefixMode.EXACT), (1, PrefixMode.EXACT), (2, PrefixMode.EXACT), (1, PrefixMode.SUBPREFIX), (0, PrefixMode.SUBPREFIX)])
def test_bgp_classification_matches_control_plane(mid_graph, htype, mode):
    for sc in random_scenarios(mid_graph, 5, 40 + htype, htype, mode):
        oc = simulate_hijack(mid_graph, sc)
        ms = MonitorSet("all", mid_graph.asns.tolist())
        recs = [(int(a), oc.route(int(a)).path) for a in mid_graph.asns if oc.route(int(a)) is not None]
        mv, diag = classify_bgp_paths(recs, EventSpec(sc.victim, sc.hijacker))
        ref = observe_control_plane(oc, ms)
        reach = {int(a) for a, _ in recs}
        keep = np.isin(ref.monitors, list(reach))
        assert not diag.no_inference and not diag.errors
        assert mv.monitors.tolist() == ref.monitors[keep].tolist()
        assert mv.m.tolist() == ref.m[keep].tolist()
