"""Exhaustive reference implementation of hijack outcomes for tiny graphs.

Every loop-free valley-free path towards each origin is enumerated, then the
stable routing state is found by repeatedly letting each AS pick its best
candidate whose suffix is what the next hop currently uses. Exponential, so
restricted to small graphs; used only to cross-check the staged kernels.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .bgpsim import Decision, HijackScenario, PrefixMode, RoutingOutcome, Source, _hijacker_tail
from .topology import AsGraph

MAX_NODES = 14

_CLASS_OF_ROLE = {K.ROLE_CUSTOMER: K.CLS_CUSTOMER, K.ROLE_PEER: K.CLS_PEER, K.ROLE_PROVIDER: K.CLS_PROVIDER}


class GraphTooLarge(ValueError):
    pass


def _role_table(graph: AsGraph) -> dict[tuple[int, int], int]:
    """(i, j) -> role of j as seen from i, over node indices."""
    out = {}
    for i in range(len(graph)):
        for s in range(graph.indptr[i], graph.indptr[i + 1]):
            out[(i, int(graph.nbr[s]))] = int(graph.role[s])
    return out


def _enumerate(graph: AsGraph, roles, origin: int, forbidden: set[int]) -> dict[int, list[tuple[int, ...]]]:
    """All valley-free simple paths (holder first, origin last) keyed by holder.

    ``forbidden`` ASes neither hold nor relay the route.
    """
    paths: dict[int, list[tuple[int, ...]]] = {origin: [(origin,)]}
    adj = {i: [int(j) for j in graph.nbr[graph.indptr[i] : graph.indptr[i + 1]]] for i in range(len(graph))}

    # walk outward from the origin; `up` is True while the route may still be
    # exported to anyone (originated or learned from a customer)
    stack = [((origin,), True)]
    while stack:
        path, up = stack.pop()
        tip = path[0]
        for w in adj[tip]:
            if w in path or w in forbidden:
                continue
            r = roles[(w, tip)]  # role of the sender as seen by the receiver
            if not up and r != K.ROLE_PROVIDER:
                continue
            new = (w,) + path
            paths.setdefault(w, []).append(new)
            stack.append((new, up and r == K.ROLE_CUSTOMER))
    return paths


def _stable_state(graph: AsGraph, roles, seed: int, candidates, extra_len) -> dict[int, tuple[int, tuple[int, ...]]]:
    """Fixed point of best-route selection. Returns holder -> (source, path)."""
    asns = graph.asns

    def rank(i, src, path):
        if len(path) == 1:
            return (K.CLS_SELF, len(path) + extra_len[src], 0, 0)
        nh = path[1]
        cls = _CLASS_OF_ROLE[roles[(i, nh)]]
        return (
            cls,
            len(path) + extra_len[src],
            K.local_pref_key_py(seed, int(asns[i]), int(asns[nh])),
            int(asns[nh]),
        )

    chosen: dict[int, tuple[int, tuple[int, ...]]] = {}
    limit = 4 * len(graph) + 8
    for _ in range(limit):
        changed = False
        for i in range(len(graph)):
            best = None
            for src, path in candidates.get(i, ()):
                if len(path) > 1 and chosen.get(path[1]) != (src, path[1:]):
                    continue
                key = rank(i, src, path)
                if best is None or key < best[0]:
                    best = (key, (src, path))
            new = best[1] if best else None
            if chosen.get(i) != new:
                changed = True
                if new is None:
                    chosen.pop(i, None)
                else:
                    chosen[i] = new
        if not changed:
            return chosen
    raise RuntimeError("route selection did not converge")


def _as_outcome(graph, scenario, state, tails, extra_len) -> RoutingOutcome:
    n = len(graph)
    decision = np.full(n, Decision.UNREACHABLE, dtype=np.int8)
    length = np.full(n, K.UNSET, dtype=np.int32)
    cls = np.full(n, K.CLS_NONE, dtype=np.int8)
    nexthop = np.full(n, -1, dtype=np.int32)
    roles = _role_table(graph)
    for i, (src, path) in state.items():
        decision[i] = src
        length[i] = len(path) + extra_len[src]
        if len(path) == 1:
            cls[i] = K.CLS_SELF
        else:
            cls[i] = _CLASS_OF_ROLE[roles[(i, path[1])]]
            nexthop[i] = path[1]
    return RoutingOutcome(graph, scenario, decision, length, cls, nexthop, tails)


def brute_force_outcome(graph: AsGraph, scenario: HijackScenario) -> RoutingOutcome:
    """Reference outcome by exhaustive path enumeration (graphs of at most 14 ASes)."""
    if len(graph) > MAX_NODES:
        raise GraphTooLarge(f"brute force limited to {MAX_NODES} ASes, graph has {len(graph)}")
    scenario.check(graph)
    roles = _role_table(graph)
    v = graph.index(scenario.victim)
    h = graph.index(scenario.hijacker)
    tails = {int(Source.VICTIM): (), int(Source.HIJACKER): _hijacker_tail(graph, scenario)}
    extra = {int(Source.VICTIM): 0, int(Source.HIJACKER): scenario.hijack_type}
    h_forbidden = {v} if scenario.hijack_type > 0 else set()

    if scenario.prefix_mode == PrefixMode.EXACT:
        cand: dict[int, list] = {}
        for src, origin, forbidden in ((0, v, {h}), (1, h, {v})):
            for i, plist in _enumerate(graph, roles, origin, forbidden).items():
                cand.setdefault(i, []).extend((src, p) for p in plist)
        state = _stable_state(graph, roles, scenario.seed, cand, extra)
        return _as_outcome(graph, scenario, state, tails, extra)

    # sub-prefix: independent announcements, the more specific wins except at V
    def single(src, origin, forbidden):
        c = {i: [(src, p) for p in pl] for i, pl in _enumerate(graph, roles, origin, forbidden).items()}
        return _stable_state(graph, roles, scenario.seed, c, extra)

    v_state = single(0, v, set())
    h_state = single(1, h, h_forbidden)
    merged = dict(v_state)
    merged.update({i: r for i, r in h_state.items() if i != v})
    out = _as_outcome(graph, scenario, merged, tails, extra)
    out._chains = {
        0: _chain_array(len(graph), v_state),
        1: _chain_array(len(graph), h_state),
    }
    return out


def _chain_array(n, state):
    nh = np.full(n, -1, dtype=np.int32)
    for i, (_, path) in state.items():
        if len(path) > 1:
            nh[i] = path[1]
    return nh
