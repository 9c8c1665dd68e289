import json

import numpy as np
import pytest
from conftest import P2C, P2P
from hypothesis import given, settings
from hypothesis import strategies as st

from hijackimpact.bgpsim import HijackScenario, batch_simulate, propagate_single_origin, random_scenarios, simulate_hijack
from hijackimpact.estimators import (
    FeatureKind,
    FeatureLreModel,
    ImpactEstimate,
    LreModel,
    SingularDesignError,
    compute_f_dist,
    compute_f_pref,
    feature_preset,
    fit_feature_lre,
    fit_lre,
    nie,
    ping_ie,
    predict_feature_lre,
    predict_lre,
)
from hijackimpact.monitors import MeasurementVector, MonitorSet, PingModel, observe_control_plane, sample_clustered_monitors
from hijackimpact.topology import AsGraph, Edge


def test_nie_examples():
    assert nie(MeasurementVector([1, 2, 3, 4], [1, 0, 1, 0])).value == 0.5
    assert nie([0, 0, 0]).value == 0.0
    assert nie([1, 1]).value == 1.0
    with pytest.raises(ValueError):
        nie([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=50), st.randoms())
def test_nie_range_and_permutation(bits, rnd):
    v = nie(bits).value
    assert 0.0 <= v <= 1.0
    shuffled = bits[:]
    rnd.shuffle(shuffled)
    assert nie(shuffled).value == v


def test_estimate_range():
    with pytest.raises(ValueError):
        ImpactEstimate(1.2, "x")


def test_ping_ie_limits(mid_graph):
    oc = simulate_hijack(mid_graph, random_scenarios(mid_graph, 1, 3)[0])
    census = ping_ie(oc, mid_graph, len(mid_graph), PingModel.constant(0.0), seed=1)
    assert census.value == pytest.approx(oc.impact)
    assert ping_ie(oc, mid_graph, 50, PingModel(), seed=4) == ping_ie(oc, mid_graph, 50, PingModel(), seed=4)


def test_ping_ie_saturated(mid_graph):
    # with every probe failing, each clean AS also reads infected
    oc = simulate_hijack(mid_graph, random_scenarios(mid_graph, 1, 8)[0])
    assert ping_ie(oc, mid_graph, 200, PingModel.constant(1.0), seed=2).value == 1.0


def test_fit_lre_single_perfect_predictor():
    X = np.array([[0], [1], [1], [0]])
    model = fit_lre(X, X[:, 0].astype(float), alpha=0)
    assert model.weights == pytest.approx([1.0])


def test_fit_lre_zero_matrix():
    model = fit_lre(np.zeros((5, 3)), np.linspace(0, 1, 5), alpha=50)
    assert np.all(model.weights == 0)


def test_fit_lre_collinear_columns_equal_weights():
    rng = np.random.default_rng(0)
    col = rng.integers(0, 2, 40)
    X = np.column_stack([col, col, rng.integers(0, 2, 40)])
    y = rng.random(40)
    w = fit_lre(X, y, alpha=50).weights
    assert abs(w[0] - w[1]) < 1e-9


def test_fit_lre_singular_without_alpha():
    X = np.array([[1, 1], [0, 0], [1, 1]])
    with pytest.raises(SingularDesignError, match="alpha > 0"):
        fit_lre(X, np.array([1.0, 0.0, 1.0]), alpha=0)


def test_fit_lre_dimension_errors():
    with pytest.raises(ValueError):
        fit_lre(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(ValueError):
        fit_lre(np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        fit_lre(np.zeros((3, 2)), np.zeros(3), alpha=-1)


def _objective(X, y, w, alpha):
    r = X @ w - y
    return r @ r + alpha * w @ w


def test_fit_lre_local_optimality_and_alpha_monotonicity():
    rng = np.random.default_rng(5)
    X = rng.integers(0, 2, (60, 8)).astype(float)
    y = np.clip(X.mean(1) + rng.normal(0, 0.05, 60), 0, 1)
    w = fit_lre(X, y, alpha=3.0).weights
    base = _objective(X, y, w, 3.0)
    for k in range(8):
        for d in (1e-4, -1e-4):
            w2 = w.copy()
            w2[k] += d
            assert _objective(X, y, w2, 3.0) >= base
    norms = [np.linalg.norm(fit_lre(X, y, a).weights) for a in (0.0, 0.5, 5, 50, 500)]
    assert all(a >= b for a, b in zip(norms, norms[1:]))


def test_fit_lre_interpolates_tiny_full_rank():
    X = np.eye(4)
    y = np.array([0.1, 0.5, 0.2, 0.9])
    model = fit_lre(X, y, alpha=1e-12)
    for row, target in zip(X, y):
        assert predict_lre(model, row).value == pytest.approx(target, abs=1e-9)


def test_predict_lre_examples():
    m1 = LreModel([7], [1.0], 50, 10)
    assert predict_lre(m1, [1]).value == 1.0
    m2 = LreModel([7, 8], [0.3, 0.4], 50, 10)
    assert predict_lre(m2, [1, 1]).value == pytest.approx(0.7)
    clamped = predict_lre(LreModel([7, 8], [0.9, 0.9], 50, 10), MeasurementVector([7, 8], [1, 1]))
    assert clamped.value == 1.0 and clamped.clamped
    with pytest.raises(ValueError):
        predict_lre(m2, [1])
    with pytest.raises(ValueError):
        predict_lre(m2, MeasurementVector([8, 7], [1, 1]))


def test_lre_json_roundtrip():
    m = LreModel([7, 8], [0.3, -0.4], 50.0, 12)
    d = json.loads(m.to_json())
    assert set(d) == {"monitor_asns", "weights", "alpha", "trained_on"}
    back = LreModel.from_json(m.to_json())
    assert back.weights.tolist() == [0.3, -0.4] and back.monitor_asns.tolist() == [7, 8]


# feature graph: 10 provides for V=1 and H=2; 11 provides for 2 and 3; 3 provides for 4; 10 peers 11
@pytest.fixture
def feat_graph():
    return AsGraph(
        [Edge(10, 1, P2C), Edge(10, 2, P2C), Edge(11, 2, P2C), Edge(11, 3, P2C), Edge(3, 4, P2C), Edge(10, 11, P2P)]
    )


def test_f_dist_hand_computed(feat_graph):
    rv = propagate_single_origin(feat_graph, 1, 0)
    rh = propagate_single_origin(feat_graph, 2, 0)
    # path lengths to V / H: 10: 2/2, 11: 3/2, 3: 4/3, 4: 5/4, 1: 1/3
    ms = MonitorSet("m", [10, 11, 3, 4, 1])
    assert compute_f_dist(rv, rh, ms) == pytest.approx(-0.4)
    assert compute_f_dist(rh, rv, ms) == pytest.approx(0.4)
    assert compute_f_dist(rv, rh, MonitorSet("m", [1])) == 1.0
    assert compute_f_dist(rv, rh, MonitorSet("m", [10])) == 0.0


def test_f_pref_hand_computed(feat_graph):
    rv = propagate_single_origin(feat_graph, 1, 0)
    rh = propagate_single_origin(feat_graph, 2, 0)
    # classes V / H: 10: cust/cust, 11: peer/cust, 3: prov/prov, 4: prov/prov, 1: self/prov
    ms = MonitorSet("m", [10, 11, 3, 4, 1])
    assert compute_f_pref(rv, rh, ms) == 0.0
    assert compute_f_pref(rv, rh, MonitorSet("m", [11])) == -1.0
    assert compute_f_pref(rv, rh, MonitorSet("m", [1, 10])) == 0.5


def test_features_skip_unreachable():
    g = AsGraph([Edge(1, 2, P2P), Edge(3, 4, P2C)])
    rv = propagate_single_origin(g, 1, 0)
    rh = propagate_single_origin(g, 3, 0)
    d = compute_f_dist(rv, rh, MonitorSet("m", [1, 2, 4]), diagnostics=True)
    assert d.skipped == 3 and d.value == 0.0


def test_feature_antisymmetry(mid_graph):
    ms = sample_clustered_monitors(mid_graph, 60, 1)
    for s in random_scenarios(mid_graph, 5, 2):
        rv = propagate_single_origin(mid_graph, s.victim, s.seed)
        rh = propagate_single_origin(mid_graph, s.hijacker, s.seed)
        for fn in (compute_f_dist, compute_f_pref):
            assert fn(rv, rh, ms) == -fn(rh, rv, ms)


def test_feature_lre_noiseless_plane():
    rng = np.random.default_rng(1)
    nie_v, f = rng.random(30), rng.uniform(-1, 1, 30)
    y = 0.1 + 0.8 * nie_v + 0.1 * f
    m = fit_feature_lre(list(zip(nie_v, f, y)), "dist")
    assert (m.w0, m.w_nie, m.w_f) == pytest.approx((0.1, 0.8, 0.1), abs=1e-9)


def test_feature_lre_constant_f_is_simple_regression():
    x = np.array([0.1, 0.4, 0.5, 0.9])
    y = np.array([0.2, 0.35, 0.5, 0.8])
    m = fit_feature_lre(list(zip(x, np.zeros(4), y)), FeatureKind.PREF)
    slope, icpt = np.polyfit(x, y, 1)
    assert m.w_f == 0.0 and m.w_nie == pytest.approx(slope) and m.w0 == pytest.approx(icpt)


def test_feature_lre_degenerate():
    with pytest.raises(SingularDesignError):
        fit_feature_lre([(0.5, 0.1, 0.2), (0.5, 0.3, 0.3), (0.5, 0.2, 0.1)], "dist")
    with pytest.raises(SingularDesignError):
        fit_feature_lre([(0.1, 0.1, 0.2), (0.2, 0.2, 0.3), (0.3, 0.3, 0.1)], "dist")
    with pytest.raises(ValueError):
        fit_feature_lre([(0.1, 0.1, 0.2)], "dist")


def test_feature_predict_and_json():
    m = FeatureLreModel(FeatureKind.DIST, 0.12, 0.77, 0.08)
    assert predict_feature_lre(m, 0.5, 1.0).value == pytest.approx(0.585)
    assert predict_feature_lre(m, 1.0, 1.0).value == pytest.approx(0.97)
    lo = predict_feature_lre(m, 0.0, -1.0)
    assert lo.value == pytest.approx(0.04) and not lo.clamped
    hi = predict_feature_lre(FeatureLreModel(FeatureKind.DIST, 0.3, 0.9, 0.1), 1.0, 1.0)
    assert hi.value == 1.0 and hi.clamped
    assert json.loads(m.to_json()) == {"kind": "dist", "w0": 0.12, "w_nie": 0.77, "w_f": 0.08}
    assert FeatureLreModel.from_json(m.to_json()) == m


def test_presets_warn():
    with pytest.warns(UserWarning):
        assert feature_preset("pref").w_nie == 0.92


@pytest.mark.slow
def test_feature_lre_nie_dominates(mid_graph):
    ms = sample_clustered_monitors(mid_graph, 100, 3)
    outs = batch_simulate(mid_graph, random_scenarios(mid_graph, 1000, 17))
    rows = []
    for oc in outs:
        s = oc.scenario
        rv = propagate_single_origin(mid_graph, s.victim, s.seed)
        rh = propagate_single_origin(mid_graph, s.hijacker, s.seed)
        rows.append((nie(observe_control_plane(oc, ms)).value, compute_f_dist(rv, rh, ms), oc.impact))
    m = fit_feature_lre(rows, "dist")
    assert m.w_nie > m.w0 and m.w_nie > abs(m.w_f)
