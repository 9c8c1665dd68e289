"""Impact estimators: naive fraction, ping campaign, ridge and feature regressions."""

from __future__ import annotations

import dataclasses
import enum
import json
import warnings
from collections.abc import Sequence

import numpy as np
import scipy.linalg

from .bgpsim import RibSnapshot, RoutingOutcome
from .monitors import MeasurementVector, MonitorSet, PingModel, observe_ping, sample_random_monitors
from .topology import AsGraph

DEFAULT_ALPHA = 50.0


class SingularDesignError(np.linalg.LinAlgError):
    pass


@dataclasses.dataclass(frozen=True)
class ImpactEstimate:
    value: float
    estimator: str
    clamped: bool = False

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"estimate {self.value} outside [0, 1]")


def _clamp(x: float) -> tuple[float, bool]:
    y = min(max(float(x), 0.0), 1.0)
    return y, y != x


def nie(measurements: MeasurementVector | Sequence[int]) -> ImpactEstimate:
    """Fraction of monitors observed infected."""
    m = measurements.m if isinstance(measurements, MeasurementVector) else np.asarray(measurements)
    if len(m) == 0:
        raise ValueError("NIE needs at least one monitor")
    return ImpactEstimate(float(np.mean(m)), "nie")


def ping_ie(outcome: RoutingOutcome, graph: AsGraph, m: int, model: PingModel, seed) -> ImpactEstimate:
    """Ping ``m`` random ASes and take the NIE of the (failure-prone) replies."""
    pick_seed, fail_seed = np.random.SeedSequence(seed).spawn(2)
    monitors = sample_random_monitors(graph, m, pick_seed)
    probe = dataclasses.replace(model, seed=fail_seed.generate_state(2, np.uint64)[0].item())
    return dataclasses.replace(nie(observe_ping(outcome, monitors, probe)), estimator="ping-ie")


# ---------------------------------------------------------------- ridge LRE


@dataclasses.dataclass(frozen=True, eq=False)
class LreModel:
    monitor_asns: np.ndarray
    weights: np.ndarray
    alpha: float
    trained_on: int

    def __post_init__(self):
        mon = np.asarray(self.monitor_asns, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if mon.shape != w.shape:
            raise ValueError(f"{len(w)} weights for {len(mon)} monitors")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        object.__setattr__(self, "monitor_asns", mon)
        object.__setattr__(self, "weights", w)

    def to_json(self) -> str:
        return json.dumps(
            {
                "monitor_asns": self.monitor_asns.tolist(),
                "weights": self.weights.tolist(),
                "alpha": self.alpha,
                "trained_on": self.trained_on,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> LreModel:
        d = json.loads(text)
        return cls(d["monitor_asns"], d["weights"], float(d["alpha"]), int(d["trained_on"]))


def fit_lre(
    observations, impacts, alpha: float = DEFAULT_ALPHA, monitor_asns: Sequence[int] | None = None
) -> LreModel:
    """Ridge fit of impact on per-monitor bits; rows are events, columns monitors."""
    X = np.asarray(observations, dtype=np.float64)
    y = np.asarray(impacts, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("observations must be a 2-D event x monitor matrix")
    if y.shape != (X.shape[0],):
        raise ValueError(f"{X.shape[0]} events but {y.size} impacts")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    n_mon = X.shape[1]
    if monitor_asns is None:
        monitor_asns = np.arange(1, n_mon + 1)
    if len(monitor_asns) != n_mon:
        raise ValueError(f"{len(monitor_asns)} monitor ASNs for {n_mon} columns")
    gram = X.T @ X
    if alpha == 0 and np.linalg.matrix_rank(gram) < n_mon:
        raise SingularDesignError("X^T X is rank deficient; use alpha > 0")
    gram[np.diag_indices_from(gram)] += alpha
    try:
        factor = scipy.linalg.cho_factor(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError(f"normal equations not positive definite ({exc}); use alpha > 0") from None
    w = scipy.linalg.cho_solve(factor, X.T @ y)
    return LreModel(monitor_asns, w, float(alpha), X.shape[0])


def predict_lre(model: LreModel, measurements: MeasurementVector | Sequence[int]) -> ImpactEstimate:
    if isinstance(measurements, MeasurementVector):
        if not np.array_equal(measurements.monitors, model.monitor_asns):
            raise ValueError("measurement monitors do not match the model's monitors")
        m = measurements.m
    else:
        m = np.asarray(measurements)
        if m.shape != model.weights.shape:
            raise ValueError(f"{m.size} measurements for {model.weights.size} weights")
    value, clamped = _clamp(float(m @ model.weights))
    return ImpactEstimate(value, "lre", clamped)


def predict_lre_batch(model: LreModel, observations) -> np.ndarray:
    """Clamped predictions for an event x monitor matrix."""
    X = np.asarray(observations, dtype=np.float64)
    return np.clip(X @ model.weights, 0.0, 1.0)


# ---------------------------------------------------------------- feature LRE


class FeatureKind(str, enum.Enum):
    DIST = "dist"
    PREF = "pref"


@dataclasses.dataclass(frozen=True)
class FeatureDiagnostics:
    value: float
    skipped: int  # monitors unreachable in at least one snapshot


def _aligned(rib_v: RibSnapshot, rib_h: RibSnapshot, monitors: MonitorSet):
    if rib_v.graph is not rib_h.graph and not np.array_equal(rib_v.graph.asns, rib_h.graph.asns):
        raise ValueError("snapshots are over different graphs")
    if len(monitors) == 0:
        raise ValueError("empty monitor set")
    idx = monitors.indices(rib_v.graph)
    ok = (rib_v.src[idx] >= 0) & (rib_h.src[idx] >= 0)
    return idx, ok


def _signed_mean(a: np.ndarray, b: np.ndarray, ok: np.ndarray) -> FeatureDiagnostics:
    # +1 where V's side wins (smaller value), -1 where H's side does
    s = np.where(ok, np.sign(b.astype(np.int64) - a.astype(np.int64)), 0)
    return FeatureDiagnostics(float(s.sum()) / len(s), int(np.count_nonzero(~ok)))


def compute_f_dist(rib_v: RibSnapshot, rib_h: RibSnapshot, monitors: MonitorSet, diagnostics: bool = False):
    """(1/M) * sum over monitors of [closer to V] - [closer to H]."""
    idx, ok = _aligned(rib_v, rib_h, monitors)
    out = _signed_mean(rib_v.length[idx], rib_h.length[idx], ok)
    return out if diagnostics else out.value


def compute_f_pref(rib_v: RibSnapshot, rib_h: RibSnapshot, monitors: MonitorSet, diagnostics: bool = False):
    """Like f_dist, comparing the route class (self > customer > peer > provider)."""
    idx, ok = _aligned(rib_v, rib_h, monitors)
    out = _signed_mean(rib_v.cls[idx], rib_h.cls[idx], ok)
    return out if diagnostics else out.value


@dataclasses.dataclass(frozen=True)
class FeatureLreModel:
    kind: FeatureKind
    w0: float
    w_nie: float
    w_f: float

    def to_json(self) -> str:
        return json.dumps({"kind": FeatureKind(self.kind).value, "w0": self.w0, "w_nie": self.w_nie, "w_f": self.w_f})

    @classmethod
    def from_json(cls, text: str) -> FeatureLreModel:
        d = json.loads(text)
        return cls(FeatureKind(d["kind"]), float(d["w0"]), float(d["w_nie"]), float(d["w_f"]))


# Weights reported for early RC-monitor experiments. The two source tables
# disagree on the sign of w_f, so these are starting points only.
FEATURE_PRESETS = {
    FeatureKind.PREF: FeatureLreModel(FeatureKind.PREF, 0.04, 0.92, 0.11),
    FeatureKind.DIST: FeatureLreModel(FeatureKind.DIST, 0.12, 0.77, 0.08),
}


def feature_preset(kind: FeatureKind | str) -> FeatureLreModel:
    warnings.warn("feature LRE presets are not authoritative; refit on your own data", stacklevel=2)
    return FEATURE_PRESETS[FeatureKind(kind)]


def fit_feature_lre(samples: Sequence[tuple[float, float, float]], kind: FeatureKind | str) -> FeatureLreModel:
    """Ordinary least squares of impact on (1, nie, f).

    A feature that never varies gets weight 0 (for f) or is rejected (for nie).
    """
    kind = FeatureKind(kind)
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("samples must be (nie, f, impact) triples")
    if len(arr) < 3:
        raise ValueError(f"need at least 3 samples, got {len(arr)}")
    x_nie, x_f, y = arr.T
    if np.ptp(x_nie) == 0:
        raise SingularDesignError("NIE is constant across samples; design is singular")
    cols = [np.ones_like(y), x_nie] + ([x_f] if np.ptp(x_f) > 0 else [])
    A = np.column_stack(cols)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise SingularDesignError("NIE and f are collinear; design is singular")
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    w_f = float(coef[2]) if len(coef) == 3 else 0.0
    return FeatureLreModel(kind, float(coef[0]), float(coef[1]), w_f)


def predict_feature_lre(model: FeatureLreModel, nie_value: float, f: float) -> ImpactEstimate:
    value, clamped = _clamp(model.w0 + model.w_nie * nie_value + model.w_f * f)
    return ImpactEstimate(value, f"lre-{FeatureKind(model.kind).value}", clamped)
