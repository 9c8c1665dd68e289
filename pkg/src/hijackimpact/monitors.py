"""Monitor sets and infection observations."""

from __future__ import annotations

import bisect
import dataclasses
from collections.abc import Iterable, Mapping
from typing import IO

import numpy as np

from .bgpsim import Decision, RoutingOutcome
from .topology import AsGraph, Role

# no-reply rate of a non-infected AS as a function of IPs probed per AS
DEFAULT_FAILURE_TABLE: dict[int, float] = {1: 0.128, 2: 0.042, 3: 0.021, 10: 0.0}


class MonitorError(ValueError):
    def __init__(self, msg: str, lineno: int | None = None):
        super().__init__(f"line {lineno}: {msg}" if lineno is not None else msg)
        self.lineno = lineno


@dataclasses.dataclass(frozen=True, eq=False)
class MonitorSet:
    label: str
    members: np.ndarray
    duplicates: int = 0

    def __post_init__(self):
        arr = np.array(self.members, dtype=np.int64).reshape(-1)
        if len(np.unique(arr)) != len(arr):
            raise MonitorError(f"monitor set {self.label!r} has duplicate members")
        arr.setflags(write=False)
        object.__setattr__(self, "members", arr)

    def __len__(self) -> int:
        return len(self.members)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MonitorSet)
            and self.label == other.label
            and np.array_equal(self.members, other.members)
        )

    def indices(self, graph: AsGraph) -> np.ndarray:
        try:
            return graph.indices(self.members)
        except KeyError as exc:
            raise MonitorError(f"monitor {exc.args[0]} not in graph") from None

    def subset(self, positions, label: str | None = None) -> MonitorSet:
        return MonitorSet(label or self.label, self.members[np.asarray(positions, dtype=np.int64)])


@dataclasses.dataclass(frozen=True, eq=False)
class MeasurementVector:
    monitors: np.ndarray
    m: np.ndarray
    corrupted: bool = False
    unreachable: int = 0

    def __post_init__(self):
        mon = np.asarray(self.monitors, dtype=np.int64).reshape(-1)
        val = np.asarray(self.m, dtype=np.int8).reshape(-1)
        if len(mon) != len(val):
            raise MonitorError(f"{len(val)} values for {len(mon)} monitors")
        if np.any((val != 0) & (val != 1)):
            raise MonitorError("measurement values must be 0 or 1")
        object.__setattr__(self, "monitors", mon)
        object.__setattr__(self, "m", val)

    def __len__(self) -> int:
        return len(self.m)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, MeasurementVector)
            and self.corrupted == other.corrupted
            and np.array_equal(self.monitors, other.monitors)
            and np.array_equal(self.m, other.m)
        )

    def to_dict(self) -> dict:
        return {"monitors": self.monitors.tolist(), "m": self.m.tolist(), "corrupted": bool(self.corrupted)}

    @classmethod
    def from_dict(cls, d: Mapping) -> MeasurementVector:
        return cls(d["monitors"], d["m"], bool(d.get("corrupted", False)))


@dataclasses.dataclass(frozen=True)
class PingModel:
    """Per-AS probability that every probed IP of a non-infected AS stays silent.

    ``per_as`` overrides the table for listed ASes. With ``mitm`` set the
    hijacker relays traffic onward, so infected ASes are read as 0.
    ``unreachable_silent`` scores ASes with no route at all as non-responsive.
    """

    n_ip: int = 1
    table: Mapping[int, float] = dataclasses.field(default_factory=lambda: dict(DEFAULT_FAILURE_TABLE))
    per_as: Mapping[int, float] | None = None
    seed: int = 0
    mitm: bool = False
    unreachable_silent: bool = False

    def __post_init__(self):
        if self.n_ip < 1:
            raise ValueError(f"n_ip must be >= 1, got {self.n_ip}")
        if not self.table:
            raise ValueError("failure table is empty")
        keys = sorted(self.table)
        vals = [float(self.table[k]) for k in keys]
        if any(k < 1 for k in keys):
            raise ValueError("failure table keys must be >= 1")
        if any(not 0.0 <= p <= 1.0 for p in vals):
            raise ValueError("failure probabilities must lie in [0, 1]")
        if any(b > a for a, b in zip(vals, vals[1:])):
            raise ValueError("failure table must be non-increasing in n_ip")
        for asn, p in (self.per_as or {}).items():
            if not 0.0 <= float(p) <= 1.0:
                raise ValueError(f"failure probability for AS{asn} outside [0, 1]")

    @classmethod
    def constant(cls, p: float, seed: int = 0, **kw) -> PingModel:
        """A model whose failure probability is ``p`` regardless of n_ip."""
        return cls(n_ip=1, table={1: p}, seed=seed, **kw)

    @property
    def p(self) -> float:
        keys = sorted(self.table)
        vals = [float(self.table[k]) for k in keys]
        if self.n_ip <= keys[0]:
            return vals[0]
        if self.n_ip >= keys[-1]:
            return vals[-1]
        j = bisect.bisect_right(keys, self.n_ip)
        k0, k1 = keys[j - 1], keys[j]
        t = (self.n_ip - k0) / (k1 - k0)
        return vals[j - 1] + t * (vals[j] - vals[j - 1])

    def probabilities(self, asns: np.ndarray) -> np.ndarray:
        out = np.full(len(asns), self.p)
        if self.per_as:
            for k, a in enumerate(asns.tolist()):
                if a in self.per_as:
                    out[k] = float(self.per_as[a])
        return out


def sample_random_monitors(graph: AsGraph, m: int, seed, label: str = "random") -> MonitorSet:
    """Uniform sample of ``m`` distinct ASes."""
    if not 0 < m <= len(graph):
        raise MonitorError(f"cannot sample {m} monitors from {len(graph)} ASes")
    rng = np.random.default_rng(seed)
    return MonitorSet(label, graph.asns[rng.choice(len(graph), m, replace=False)])


def _ranked_providers(graph: AsGraph, top: int) -> list[int]:
    """Transit ASes that have providers themselves, largest customer cone first."""
    cache = graph.__dict__.setdefault("_cone_rank_cache", {})
    if top not in cache:
        has = np.zeros((len(graph), 3), dtype=bool)
        rows = np.repeat(np.arange(len(graph)), np.diff(graph.indptr))
        has[rows, graph.role] = True
        cand = graph.asns[has[:, Role.CUSTOMER] & has[:, Role.PROVIDER]]
        sizes = {int(a): len(graph.customer_cone(int(a))) for a in cand}
        cache[top] = sorted(sizes, key=lambda a: (-sizes[a], a))[:top]
    return cache[top]


def clustered_pool(graph: AsGraph, size: int, seed, n_providers: int = 2, top: int = 200) -> np.ndarray:
    """ASNs in the customer cones of a few random large non-tier-1 providers.

    Providers are drawn from the ``top`` largest cones; more are added until
    the pool holds at least ``size`` ASes.
    """
    rng = np.random.default_rng(seed)
    ranked = _ranked_providers(graph, max(top, n_providers))
    pool: set[int] = set()
    used = 0
    for k in rng.permutation(len(ranked)):
        if used >= n_providers and len(pool) >= size:
            break
        pool.update(graph.customer_cone(ranked[k]).tolist())
        used += 1
    if len(pool) < size:
        raise MonitorError(f"customer cones hold only {len(pool)} ASes, need {size}")
    return np.array(sorted(pool), dtype=np.int64)


def sample_clustered_monitors(
    graph: AsGraph, m: int, seed, n_providers: int = 2, top: int = 200, label: str = "clustered"
) -> MonitorSet:
    """``m`` monitors packed inside a few customer cones (correlated placement)."""
    rng = np.random.default_rng(seed)
    pool = clustered_pool(graph, m, rng, n_providers, top)
    return MonitorSet(label, pool[rng.choice(len(pool), m, replace=False)])


def load_monitor_set(lines: str | IO[str] | Iterable[str], label: str) -> MonitorSet:
    """One ASN per line, ``#`` comments. First occurrence wins."""
    if isinstance(lines, str):
        lines = lines.splitlines()
    seen: dict[int, None] = {}
    dups = 0
    for lineno, raw in enumerate(lines, 1):
        s = raw.split("#", 1)[0].strip()
        if not s:
            continue
        try:
            asn = int(s)
        except ValueError:
            raise MonitorError(f"not an AS number: {s!r}", lineno) from None
        if asn <= 0:
            raise MonitorError(f"AS number must be positive: {asn}", lineno)
        if asn in seen:
            dups += 1
        else:
            seen[asn] = None
    return MonitorSet(label, list(seen), duplicates=dups)


def observe_control_plane(outcome: RoutingOutcome, monitors: MonitorSet) -> MeasurementVector:
    """m_i = 1 iff the monitor routes to the hijacker. Unreachable monitors read 0."""
    d = outcome.decision[monitors.indices(outcome.graph)]
    return MeasurementVector(
        monitors.members,
        (d == Decision.HIJACKER).astype(np.int8),
        corrupted=False,
        unreachable=int(np.count_nonzero(d == Decision.UNREACHABLE)),
    )


def observe_ping(outcome: RoutingOutcome, monitors: MonitorSet, model: PingModel) -> MeasurementVector:
    """Ping-based reading: silence is taken as infection."""
    d = outcome.decision[monitors.indices(outcome.graph)]
    rng = np.random.default_rng(model.seed)
    silent = rng.random(len(d)) < model.probabilities(monitors.members)
    infected = d == Decision.HIJACKER
    unreachable = d == Decision.UNREACHABLE
    m = np.where(infected, not model.mitm, silent)
    if model.unreachable_silent:
        m = np.where(unreachable, True, m)
    return MeasurementVector(
        monitors.members, m.astype(np.int8), corrupted=True, unreachable=int(np.count_nonzero(unreachable))
    )
