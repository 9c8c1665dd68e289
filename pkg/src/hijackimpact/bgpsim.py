"""Hijack simulation: competing announcements over a Gao-Rexford topology."""

from __future__ import annotations

import dataclasses
import enum
import json
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import IO

import numpy as np

from . import _kernels as K
from .topology import AsGraph


class PrefixMode(str, enum.Enum):
    EXACT = "exact"
    SUBPREFIX = "subprefix"


class Source(enum.IntEnum):
    VICTIM = 0
    HIJACKER = 1


class Decision(enum.IntEnum):
    UNREACHABLE = -1
    VICTIM = 0
    HIJACKER = 1


class LearnedFrom(enum.IntEnum):
    """Route class; lower values are preferred."""

    SELF = K.CLS_SELF
    CUSTOMER = K.CLS_CUSTOMER
    PEER = K.CLS_PEER
    PROVIDER = K.CLS_PROVIDER


class ScenarioError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class HijackScenario:
    victim: int
    hijacker: int
    hijack_type: int = 0
    prefix_mode: PrefixMode = PrefixMode.EXACT
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "prefix_mode", PrefixMode(self.prefix_mode))
        if self.victim == self.hijacker:
            raise ScenarioError(f"victim and hijacker are the same AS ({self.victim})")
        if self.hijack_type < 0:
            raise ScenarioError(f"hijack_type must be >= 0, got {self.hijack_type}")

    def check(self, graph: AsGraph) -> None:
        for role, asn in (("victim", self.victim), ("hijacker", self.hijacker)):
            if asn not in graph:
                raise ScenarioError(f"{role} AS{asn} not in graph")

    def swapped(self) -> HijackScenario:
        return dataclasses.replace(self, victim=self.hijacker, hijacker=self.victim)

    def to_dict(self) -> dict:
        return {
            "victim": self.victim,
            "hijacker": self.hijacker,
            "type": self.hijack_type,
            "prefix_mode": self.prefix_mode.value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> HijackScenario:
        return cls(int(d["victim"]), int(d["hijacker"]), int(d["type"]), PrefixMode(d["prefix_mode"]), int(d["seed"]))


@dataclasses.dataclass(frozen=True)
class Route:
    source: Source
    path: tuple[int, ...]
    learned_from: LearnedFrom
    effective_length: int


def placeholder_asns(graph: AsGraph, hijack_type: int) -> tuple[int, ...]:
    """Fake hops inserted between the hijacker and the victim for Type-N (N >= 2)."""
    base = int(graph.asns[-1]) if len(graph) else 0
    return tuple(base + 1 + k for k in range(max(hijack_type - 1, 0)))


class _RouteTable:
    """Per-AS route arrays produced by a propagation run."""

    def __init__(self, graph: AsGraph, src, length, cls, nexthop, tails: dict[int, tuple[int, ...]], chains=None):
        self.graph = graph
        self.src = src
        self.length = length
        self.cls = cls
        self.nexthop = nexthop
        self._tails = tails  # origin-announced path beyond the origin AS, keyed by src code
        # next-hop arrays to walk per src code; differs from nexthop only for sub-prefix outcomes
        self._chains = chains or {}

    def _route_at(self, i: int, source: Source) -> Route | None:
        if self.src[i] < 0:
            return None
        path = [int(self.graph.asns[i])]
        walk = self._chains.get(int(self.src[i]), self.nexthop)
        j = int(self.nexthop[i])
        while j >= 0:
            path.append(int(self.graph.asns[j]))
            j = int(walk[j])
        path.extend(self._tails.get(int(self.src[i]), ()))
        return Route(source, tuple(path), LearnedFrom(int(self.cls[i])), int(self.length[i]))


class RibSnapshot(_RouteTable):
    """Best route of every AS towards a single announced prefix."""

    def __init__(self, graph: AsGraph, origin: int, src, length, cls, nexthop, tail=()):
        super().__init__(graph, src, length, cls, nexthop, {0: tuple(tail)})
        self.origin = origin

    def route(self, asn: int) -> Route | None:
        return self._route_at(self.graph.index(asn), Source.VICTIM)

    def reachable(self) -> np.ndarray:
        return self.src >= 0


class RoutingOutcome(_RouteTable):
    """Per-AS decision after a hijack, plus the chosen routes."""

    def __init__(self, graph: AsGraph, scenario: HijackScenario, decision, length, cls, nexthop, tails, chains=None):
        super().__init__(graph, decision, length, cls, nexthop, tails, chains)
        self.scenario = scenario
        self.decision = decision

    @property
    def infected_count(self) -> int:
        return int(np.count_nonzero(self.decision == Decision.HIJACKER))

    @property
    def reachable_count(self) -> int:
        return int(np.count_nonzero(self.decision != Decision.UNREACHABLE))

    @property
    def impact(self) -> float:
        reach = self.reachable_count
        return self.infected_count / reach if reach else 0.0

    def decision_of(self, asn: int) -> Decision:
        return Decision(int(self.decision[self.graph.index(asn)]))

    def route(self, asn: int) -> Route | None:
        i = self.graph.index(asn)
        d = int(self.decision[i])
        if d < 0:
            return None
        return self._route_at(i, Source(d))

    def same_decisions(self, other: RoutingOutcome) -> bool:
        return bool(np.array_equal(self.decision, other.decision))

    def to_record(self, include_decisions: bool = False) -> dict:
        rec = self.scenario.to_dict()
        rec.update(impact=self.impact, infected_count=self.infected_count, reachable_count=self.reachable_count)
        if include_decisions:
            code = {Decision.VICTIM: "V", Decision.HIJACKER: "H", Decision.UNREACHABLE: "U"}
            rec["decisions"] = {str(int(a)): code[Decision(int(d))] for a, d in zip(self.graph.asns, self.decision)}
        return rec


def propagate_single_origin(
    graph: AsGraph, origin: int, seed: int, initial_length: int = 1, backend: str | None = None
) -> RibSnapshot:
    """Best routes of all ASes towards a prefix announced only by ``origin``."""
    if origin not in graph:
        raise ValueError(f"origin AS{origin} not in graph")
    o = graph.index(origin)
    src, length, cls, nexthop = K.propagate(graph, seed, [o], [initial_length], backend)
    return RibSnapshot(graph, origin, src, length, cls, nexthop)


def _hijacker_tail(graph: AsGraph, scenario: HijackScenario) -> tuple[int, ...]:
    if scenario.hijack_type == 0:
        return ()
    return placeholder_asns(graph, scenario.hijack_type) + (scenario.victim,)


def simulate_hijack(graph: AsGraph, scenario: HijackScenario, backend: str | None = None) -> RoutingOutcome:
    scenario.check(graph)
    v = graph.index(scenario.victim)
    h = graph.index(scenario.hijacker)
    tails = {int(Source.VICTIM): (), int(Source.HIJACKER): _hijacker_tail(graph, scenario)}
    h_len = scenario.hijack_type + 1

    if scenario.prefix_mode == PrefixMode.EXACT:
        src, length, cls, nexthop = K.propagate(graph, scenario.seed, [v, h], [1, h_len], backend)
        return RoutingOutcome(graph, scenario, src, length, cls, nexthop, tails)

    # sub-prefix: the more specific route wins wherever it reaches, except at the victim
    # for Type-N the victim is on the announced path and drops it (loop prevention)
    blocked = [v] if scenario.hijack_type > 0 else []
    h_src, h_length, h_cls, h_nh = K.propagate(graph, scenario.seed, [h], [h_len], backend, blocked)
    v_src, v_length, v_cls, v_nh = K.propagate(graph, scenario.seed, [v], [1], backend)
    use_h = h_src >= 0
    use_h[v] = False
    decision = np.where(use_h, Decision.HIJACKER, np.where(v_src >= 0, Decision.VICTIM, Decision.UNREACHABLE))
    decision = decision.astype(np.int8)
    length = np.where(use_h, h_length, v_length)
    cls = np.where(use_h, h_cls, v_cls)
    nexthop = np.where(use_h, h_nh, v_nh)
    chains = {int(Source.VICTIM): v_nh, int(Source.HIJACKER): h_nh}
    return RoutingOutcome(graph, scenario, decision, length, cls, nexthop, tails, chains)


class BatchError(RuntimeError):
    def __init__(self, index: int, cause: BaseException):
        self.index = index
        super().__init__(f"scenario #{index}: {cause}")


def batch_simulate(
    graph: AsGraph, scenarios: Sequence[HijackScenario], jobs: int = 1, backend: str | None = None
) -> list[RoutingOutcome]:
    """Simulate many scenarios; output order and content do not depend on ``jobs``."""

    def run(item):
        i, sc = item
        try:
            return simulate_hijack(graph, sc, backend)
        except Exception as exc:
            raise BatchError(i, exc) from exc

    items = list(enumerate(scenarios))
    if jobs <= 1 or len(items) <= 1:
        return [run(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run, items))


def random_scenarios(
    graph: AsGraph,
    n: int,
    seed: int,
    hijack_type: int = 0,
    prefix_mode: PrefixMode = PrefixMode.EXACT,
    victims: Sequence[int] | None = None,
    hijackers: Sequence[int] | None = None,
    symmetric: bool = False,
) -> list[HijackScenario]:
    """Random {V,H} pairs with per-scenario tie-break seeds.

    With ``symmetric=True`` every pair is followed by its swap (same seed),
    so ``n`` must be even.
    """
    rng = np.random.default_rng(seed)
    v_pool = np.asarray(victims if victims is not None else graph.asns, dtype=np.int64)
    h_pool = np.asarray(hijackers if hijackers is not None else graph.asns, dtype=np.int64)
    if symmetric and n % 2:
        raise ValueError("symmetric scenario sets need an even count")
    out: list[HijackScenario] = []
    while len(out) < n:
        v = int(v_pool[rng.integers(len(v_pool))])
        h = int(h_pool[rng.integers(len(h_pool))])
        if v == h:
            continue
        s = int(rng.integers(2**63 - 1))
        sc = HijackScenario(v, h, hijack_type, prefix_mode, s)
        out.append(sc)
        if symmetric:
            out.append(sc.swapped())
    return out


def write_outcomes_jsonl(outcomes: Sequence[RoutingOutcome], fh: IO[str], include_decisions: bool = False) -> None:
    for oc in outcomes:
        fh.write(json.dumps(oc.to_record(include_decisions), sort_keys=False) + "\n")
