"""Error metrics, scenario datasets and estimator experiments."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from typing import IO

import numpy as np

from . import theory
from .bgpsim import Decision, HijackScenario, PrefixMode, RoutingOutcome, batch_simulate, random_scenarios
from .estimators import DEFAULT_ALPHA, fit_lre, predict_lre_batch
from .monitors import MonitorSet, PingModel, sample_clustered_monitors, sample_random_monitors
from .topology import AsGraph

CSV_HEADER = ["estimator", "monitor_set", "M", "bias", "rmse", "mae", "relmae", "n"]


class DatasetError(ValueError):
    def __init__(self, msg: str, lineno: int | None = None):
        super().__init__(f"line {lineno}: {msg}" if lineno is not None else msg)
        self.lineno = lineno


# ---------------------------------------------------------------- metrics


@dataclasses.dataclass(frozen=True)
class EvalReport:
    """Error summary of one estimator.

    ``rmse`` pools all squared errors. ``rmse_cond`` first takes the RMSE
    within each group (e.g. repeated monitor draws on one scenario) and then
    averages over groups; without groups it equals ``rmse``.
    """

    bias: float
    rmse: float
    mae: float
    relmae: float
    n_events: int
    estimator: str = ""
    monitor_set: str = ""
    m: int | None = None
    relmae_skipped: int = 0
    rmse_cond: float | None = None

    def csv_row(self) -> list:
        return [
            self.estimator,
            self.monitor_set,
            "" if self.m is None else self.m,
            f"{self.bias:.10g}",
            f"{self.rmse:.10g}",
            f"{self.mae:.10g}",
            f"{self.relmae:.10g}",
            self.n_events,
        ]


def evaluate(
    estimates,
    truths,
    estimator: str = "",
    monitor_set: str = "",
    m: int | None = None,
    groups=None,
) -> EvalReport:
    est = np.asarray(estimates, dtype=np.float64).reshape(-1)
    tru = np.asarray(truths, dtype=np.float64).reshape(-1)
    if est.shape != tru.shape:
        raise ValueError(f"{est.size} estimates for {tru.size} truths")
    if est.size == 0:
        raise ValueError("nothing to evaluate")
    err = est - tru
    sq = err * err
    rmse = math.sqrt(float(np.mean(sq)))
    mae = float(np.mean(np.abs(err)))
    pos = tru > 0
    with np.errstate(over="ignore"):
        relmae = float(np.mean(np.abs(err[pos]) / tru[pos])) if pos.any() else 0.0
    if groups is None:
        rmse_cond = rmse
    else:
        g = np.unique(np.asarray(groups).reshape(-1), return_inverse=True)[1]
        if g.size != est.size:
            raise ValueError("groups must align with estimates")
        counts = np.bincount(g)
        rmse_cond = float(np.mean(np.sqrt(np.bincount(g, weights=sq) / counts)))
    return EvalReport(
        bias=float(np.mean(err)),
        rmse=rmse,
        mae=mae,
        relmae=relmae,
        n_events=int(est.size),
        estimator=estimator,
        monitor_set=monitor_set,
        m=m,
        relmae_skipped=int(np.count_nonzero(~pos)),
        rmse_cond=rmse_cond,
    )


def write_reports_csv(reports: Iterable[EvalReport], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.csv_row())


# ---------------------------------------------------------------- datasets


@dataclasses.dataclass(frozen=True)
class Observation:
    asns: tuple[int, ...]
    m: tuple[int, ...]
    corrupted: bool = False

    def __post_init__(self):
        if len(self.asns) != len(self.m):
            raise ValueError(f"{len(self.m)} values for {len(self.asns)} monitors")
        if any(x not in (0, 1) for x in self.m):
            raise ValueError("observation values must be 0 or 1")


@dataclasses.dataclass(frozen=True)
class ScenarioRecord:
    id: int
    scenario: HijackScenario
    impact: float
    monitor_sets: Mapping[str, Observation] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.impact <= 1.0:
            raise ValueError(f"impact {self.impact} outside [0, 1]")

    def to_dict(self) -> dict:
        d = {"id": self.id}
        d.update(self.scenario.to_dict())
        d["impact"] = self.impact
        sets = {}
        for label, ob in self.monitor_sets.items():
            entry = {"asns": list(ob.asns), "m": list(ob.m)}
            if ob.corrupted:
                entry["corrupted"] = True
            sets[label] = entry
        d["monitor_sets"] = sets
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> ScenarioRecord:
        sets = {
            str(label): Observation(
                tuple(int(a) for a in e["asns"]), tuple(int(x) for x in e["m"]), bool(e.get("corrupted", False))
            )
            for label, e in d.get("monitor_sets", {}).items()
        }
        return cls(int(d["id"]), HijackScenario.from_dict(d), float(d["impact"]), sets)


def make_records(
    outcomes: Sequence[RoutingOutcome], monitor_sets: Mapping[str, MonitorSet] = (), start_id: int = 0
) -> list[ScenarioRecord]:
    """Dataset records with control-plane observations for each monitor set."""
    out = []
    sets = dict(monitor_sets)
    for k, oc in enumerate(outcomes):
        obs = {}
        for label, ms in sets.items():
            d = oc.decision[ms.indices(oc.graph)]
            obs[label] = Observation(tuple(ms.members.tolist()), tuple((d == Decision.HIJACKER).astype(int).tolist()))
        out.append(ScenarioRecord(start_id + k, oc.scenario, oc.impact, obs))
    return out


def write_dataset(records: Iterable[ScenarioRecord], fh: IO[str]) -> None:
    for r in records:
        fh.write(json.dumps(r.to_dict(), separators=(",", ":")) + "\n")


def read_dataset(fh: IO[str] | Iterable[str]) -> list[ScenarioRecord]:
    out = []
    for lineno, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            out.append(ScenarioRecord.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise DatasetError(str(exc), lineno) from None
    return out


# ---------------------------------------------------------------- experiments


def _infected_matrix(outcomes: Sequence[RoutingOutcome]) -> np.ndarray:
    return np.stack([oc.decision == Decision.HIJACKER for oc in outcomes]).astype(np.int8)


def _outcomes_for(graph, outcomes, n_scenarios, hijack_type, seed, jobs, symmetric=True):
    if outcomes is not None:
        return list(outcomes)
    sc = random_scenarios(graph, n_scenarios, seed, hijack_type, PrefixMode.EXACT, symmetric=symmetric)
    return batch_simulate(graph, sc, jobs=jobs)


def fixed_monitor_set(graph: AsGraph, source, m: int, seed) -> MonitorSet:
    """``m`` monitors from a named source ('random', 'clustered') or a given set."""
    if isinstance(source, MonitorSet):
        if m > len(source):
            raise ValueError(f"monitor set {source.label!r} has {len(source)} members, asked for {m}")
        rng = np.random.default_rng(seed)
        return source.subset(np.sort(rng.choice(len(source), m, replace=False)))
    if source == "random":
        return sample_random_monitors(graph, m, seed)
    if source == "clustered":
        return sample_clustered_monitors(graph, m, seed)
    raise ValueError(f"unknown monitor source {source!r}")


def _source_label(source) -> str:
    return source.label if isinstance(source, MonitorSet) else str(source)


def run_nie_experiment(
    graph: AsGraph,
    n_scenarios: int = 1000,
    hijack_type: int = 0,
    monitor_source="random",
    m_grid: Sequence[int] = (10, 100, 1000),
    seed: int = 0,
    *,
    draws: int = 16,
    ping: PingModel | None = None,
    outcomes: Sequence[RoutingOutcome] | None = None,
    jobs: int = 1,
) -> list[EvalReport]:
    """NIE error for each M.

    'random' monitors are redrawn ``draws`` times per scenario (the setting of
    the random-placement theory); any other source yields one fixed set per M
    shared by all scenarios. ``ping`` switches to failure-prone observations.
    """
    ocs = _outcomes_for(graph, outcomes, n_scenarios, hijack_type, seed, jobs)
    inf = _infected_matrix(ocs)
    truth = np.array([oc.impact for oc in ocs])
    n_nodes = len(graph)
    p_node = ping.probabilities(graph.asns) if ping is not None else None
    label = _source_label(monitor_source)
    est_name = "nie" if ping is None else "ping-nie"
    reports = []
    for m in m_grid:
        rng = np.random.default_rng([seed, int(m), 0x6E6965])
        if monitor_source == "random":
            est = np.empty((len(ocs), draws))
            for s in range(len(ocs)):
                for k in range(draws):
                    idx = rng.choice(n_nodes, m, replace=False)
                    est[s, k] = _observe_nie(inf[s, idx], p_node, idx, rng)
            reports.append(
                evaluate(est.ravel(), np.repeat(truth, draws), est_name, label, m, groups=np.repeat(np.arange(len(ocs)), draws))
            )
        else:
            ms = fixed_monitor_set(graph, monitor_source, m, rng)
            idx = ms.indices(graph)
            est = np.array([_observe_nie(inf[s, idx], p_node, idx, rng) for s in range(len(ocs))])
            reports.append(evaluate(est, truth, est_name, label, m))
    return reports


def _observe_nie(bits: np.ndarray, p_node, idx, rng) -> float:
    if p_node is None:
        return float(bits.mean())
    silent = rng.random(len(idx)) < p_node[idx]
    return float(np.mean(bits.astype(bool) | silent))


def theory_reference(truths, m: int, p: float = 0.0, n_nodes: int | None = None) -> tuple[float, float]:
    """(bias, rmse) expected for uniformly drawn monitors.

    With ``n_nodes`` the sampling-without-replacement factor (N-M)/(N-1) is
    applied to the placement part of the variance; failures stay independent.
    """
    v = theory.ImpactSamples(truths).values
    fpc = 1.0 if n_nodes is None or n_nodes <= 1 else max(n_nodes - m, 0) / (n_nodes - 1)
    var = ((1 - p) ** 2 * v * (1 - v) * fpc + (1 - v) * p * (1 - p)) / m
    return theory.bias_with_failures(p, v), float(np.mean(np.sqrt(var + ((1 - v) * p) ** 2)))


@dataclasses.dataclass(frozen=True)
class LreRow:
    m: int
    lre: EvalReport
    nie: EvalReport


def run_lre_experiment(
    graph: AsGraph,
    n_train: int = 1000,
    n_test: int = 1000,
    monitor_source="clustered",
    alpha: float = DEFAULT_ALPHA,
    m_grid: Sequence[int] = (50, 100, 200, 500),
    seed: int = 0,
    *,
    hijack_type: int = 0,
    leave_pair_out: bool = False,
    train_outcomes: Sequence[RoutingOutcome] | None = None,
    test_outcomes: Sequence[RoutingOutcome] | None = None,
    jobs: int = 1,
) -> list[LreRow]:
    """Fit ridge LRE on a training split and compare it with NIE on the test split.

    With ``leave_pair_out`` each test event is predicted by a model that never
    saw the same {V,H} pair in either direction.
    """
    ss = np.random.SeedSequence(seed)
    s_train, s_test, s_mon = (int(x.generate_state(1, np.uint64)[0]) for x in ss.spawn(3))
    train = _outcomes_for(graph, train_outcomes, n_train, hijack_type, s_train, jobs, symmetric=False)
    test = _outcomes_for(graph, test_outcomes, n_test, hijack_type, s_test, jobs, symmetric=False)
    if {oc.scenario.seed for oc in train} & {oc.scenario.seed for oc in test}:
        raise ValueError("train and test scenarios share tie-break seeds")
    inf_tr, inf_te = _infected_matrix(train), _infected_matrix(test)
    y_tr = np.array([oc.impact for oc in train])
    y_te = np.array([oc.impact for oc in test])
    pair_tr = [frozenset((oc.scenario.victim, oc.scenario.hijacker)) for oc in train]
    label = _source_label(monitor_source)
    rows = []
    for m in m_grid:
        ms = fixed_monitor_set(graph, monitor_source, m, [s_mon, int(m)])
        idx = ms.indices(graph)
        X_tr = inf_tr[:, idx].astype(np.float64)
        X_te = inf_te[:, idx].astype(np.float64)
        model = fit_lre(X_tr, y_tr, alpha, ms.members)
        pred = predict_lre_batch(model, X_te)
        if leave_pair_out:
            pred = pred.copy()
            for t, oc in enumerate(test):
                key = frozenset((oc.scenario.victim, oc.scenario.hijacker))
                keep = np.array([p != key for p in pair_tr])
                if not keep.all():
                    sub = fit_lre(X_tr[keep], y_tr[keep], alpha, ms.members)
                    pred[t] = predict_lre_batch(sub, X_te[t : t + 1])[0]
        rows.append(
            LreRow(
                m,
                evaluate(pred, y_te, "lre", label, m),
                evaluate(X_te.mean(axis=1), y_te, "nie", label, m),
            )
        )
    return rows
