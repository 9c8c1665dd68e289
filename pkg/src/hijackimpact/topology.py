"""AS-relationship topologies.

Graphs are stored twice: as the original edge list (for serialization and
validation) and as a CSR adjacency where every slot carries the role of the
neighbor relative to the row AS. The propagation kernels only read the CSR
arrays.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import gzip
import io
import os
from collections.abc import Iterable, Iterator
from typing import TextIO

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

MAX_ASN = 2**32 - 1


class TopologyError(ValueError):
    """Raised for malformed or contradictory AS-relationship input."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class RelationshipConflict(TopologyError):
    def __init__(self, a: int, b: int, lineno: int | None = None):
        self.pair = (min(a, b), max(a, b))
        super().__init__(f"conflicting relationships for pair {self.pair}", lineno)


class Relationship(enum.IntEnum):
    """Edge relationship, encoded as in the CAIDA serial-1 files."""

    PROVIDER_TO_CUSTOMER = -1
    PEER_TO_PEER = 0


class Role(enum.IntEnum):
    """Role of a neighbor as seen from the AS holding the adjacency row."""

    CUSTOMER = 0
    PEER = 1
    PROVIDER = 2


@dataclasses.dataclass(frozen=True)
class Edge:
    a: int
    b: int
    rel: Relationship


def _check_asn(value: int, lineno: int | None = None) -> int:
    if not 0 < value <= MAX_ASN:
        raise TopologyError(f"AS number out of range: {value}", lineno)
    return value


class AsGraph:
    """Immutable AS-level topology.

    ``edges`` is kept verbatim (self-loops and repeated pairs included) so that
    :func:`validate` can report them; the CSR adjacency skips self-loops and
    keeps only the first record of a repeated pair.
    """

    def __init__(self, edges: Iterable[Edge | tuple[int, int, int]], nodes: Iterable[int] = ()):
        norm: list[Edge] = []
        for e in edges:
            if not isinstance(e, Edge):
                a, b, rel = e
                e = Edge(int(a), int(b), Relationship(int(rel)))
            norm.append(e)
        self.edges: tuple[Edge, ...] = tuple(norm)

        node_set = {int(n) for n in nodes}
        for e in self.edges:
            node_set.add(e.a)
            node_set.add(e.b)
        for asn in node_set:
            _check_asn(asn)
        self.asns = np.array(sorted(node_set), dtype=np.int64)
        self.asns.setflags(write=False)
        self._index = {int(a): i for i, a in enumerate(self.asns)}

        n = len(self.asns)
        seen: set[tuple[int, int]] = set()
        rows: list[int] = []
        cols: list[int] = []
        roles: list[int] = []
        for e in self.edges:
            if e.a == e.b:
                continue
            key = (min(e.a, e.b), max(e.a, e.b))
            if key in seen:
                continue
            seen.add(key)
            ia, ib = self._index[e.a], self._index[e.b]
            if e.rel == Relationship.PROVIDER_TO_CUSTOMER:
                rows += [ia, ib]
                cols += [ib, ia]
                roles += [Role.CUSTOMER, Role.PROVIDER]
            else:
                rows += [ia, ib]
                cols += [ib, ia]
                roles += [Role.PEER, Role.PEER]
        rows_a = np.asarray(rows, dtype=np.int64)
        cols_a = np.asarray(cols, dtype=np.int64)
        # rows sorted by AS, neighbors within a row sorted by neighbor ASN
        order = np.lexsort((cols_a, rows_a)) if len(rows_a) else np.zeros(0, dtype=np.int64)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, rows_a + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)
        self.nbr = cols_a[order].astype(np.int32)
        self.role = np.asarray(roles, dtype=np.int8)[order] if roles else np.zeros(0, dtype=np.int8)
        for arr in (self.indptr, self.nbr, self.role):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.asns)

    def __contains__(self, asn: object) -> bool:
        return asn in self._index

    def __repr__(self) -> str:
        return f"AsGraph(n_nodes={len(self)}, n_edges={self.n_edges})"

    @property
    def n_edges(self) -> int:
        return len(self.nbr) // 2

    def index(self, asn: int) -> int:
        try:
            return self._index[int(asn)]
        except KeyError:
            raise KeyError(f"AS{asn} not in graph") from None

    def indices(self, asns: Iterable[int] | np.ndarray) -> np.ndarray:
        """Vectorized ASN -> row index; raises KeyError on unknown ASNs."""
        arr = np.asarray(asns, dtype=np.int64).reshape(-1)
        pos = np.searchsorted(self.asns, arr)
        pos = np.clip(pos, 0, max(len(self.asns) - 1, 0))
        if len(arr) and (len(self.asns) == 0 or np.any(self.asns[pos] != arr)):
            bad = arr[(len(self.asns) == 0) | (self.asns[pos] != arr)]
            raise KeyError(f"AS{int(bad[0])} not in graph")
        return pos

    def neighbors(self, asn: int) -> list[tuple[int, Role]]:
        i = self.index(asn)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return [(int(self.asns[j]), Role(int(r))) for j, r in zip(self.nbr[lo:hi], self.role[lo:hi])]

    def _with_role(self, asn: int, role: Role) -> list[int]:
        return [a for a, r in self.neighbors(asn) if r == role]

    def customers(self, asn: int) -> list[int]:
        return self._with_role(asn, Role.CUSTOMER)

    def providers(self, asn: int) -> list[int]:
        return self._with_role(asn, Role.PROVIDER)

    def peers(self, asn: int) -> list[int]:
        return self._with_role(asn, Role.PEER)

    @functools.cached_property
    def _customer_links(self) -> scipy.sparse.csr_matrix:
        n = len(self)
        rows = np.repeat(np.arange(n), np.diff(self.indptr))
        keep = self.role == Role.CUSTOMER
        data = np.ones(int(keep.sum()), dtype=np.int8)
        return scipy.sparse.csr_matrix((data, (rows[keep], self.nbr[keep])), shape=(n, n))

    def customer_cone(self, asn: int) -> np.ndarray:
        """ASNs reachable from ``asn`` by following provider-to-customer links (inclusive)."""
        start = self.index(asn)
        order = scipy.sparse.csgraph.breadth_first_order(
            self._customer_links, start, directed=True, return_predecessors=False
        )
        return np.sort(self.asns[order])


def _open_text(source: str | os.PathLike | TextIO) -> TextIO:
    if hasattr(source, "read"):
        return source  # type: ignore[return-value]
    path = os.fspath(source)
    if path.endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def _iter_records(lines: Iterable[str]) -> Iterator[tuple[int, int, int, int]]:
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("|")
        # serial-2 files carry a trailing source column; serial-1 has exactly three
        if len(fields) != 3:
            raise TopologyError(f"expected 3 '|'-separated fields, got {len(fields)}", lineno)
        try:
            a, b, code = (int(f) for f in fields)
        except ValueError:
            raise TopologyError(f"non-integer field in {line!r}", lineno) from None
        _check_asn(a, lineno)
        _check_asn(b, lineno)
        if code not in (-1, 0):
            raise TopologyError(f"unknown relationship code {code}", lineno)
        yield lineno, a, b, code


def parse_as_rel(text: str | Iterable[str]) -> AsGraph:
    """Parse CAIDA serial-1 ``<a>|<b>|<code>`` records.

    Repeated identical records are kept once; a pair that appears with two
    different relationships raises :class:`RelationshipConflict`.
    """
    lines = io.StringIO(text) if isinstance(text, str) else text
    pair_rel: dict[tuple[int, int], tuple[int, int, int]] = {}
    edges: list[Edge] = []
    for lineno, a, b, code in _iter_records(lines):
        key = (min(a, b), max(a, b))
        prev = pair_rel.get(key)
        if prev is not None:
            if code == 0 and prev[2] == 0:
                continue
            if (a, b, code) == prev:
                continue
            raise RelationshipConflict(a, b, lineno)
        pair_rel[key] = (a, b, code)
        edges.append(Edge(a, b, Relationship(code)))
    return AsGraph(edges)


def load_as_rel(path: str | os.PathLike | TextIO) -> AsGraph:
    """Read an AS-relationship file; ``.gz`` paths are decompressed."""
    fh = _open_text(path)
    try:
        return parse_as_rel(fh)
    finally:
        if fh is not path:
            fh.close()


def serialize_as_rel(graph: AsGraph) -> str:
    out = [f"{e.a}|{e.b}|{int(e.rel)}" for e in graph.edges]
    return "\n".join(out) + ("\n" if out else "")


def gen_synthetic_topology(
    n_ases: int,
    seed: int,
    *,
    n_tier1: int | None = None,
    peer_ratio: float = 0.3,
) -> AsGraph:
    """Random loosely hierarchical topology with ASNs ``1..n_ases``.

    A clique of peered tier-1 ASes is created first. Every later AS buys
    transit from 1-3 earlier ASes, chosen preferentially by customer count,
    and ``peer_ratio * n_ases`` peer links are then added between non-tier-1
    ASes that are not already adjacent.
    """
    if n_ases < 2:
        raise ValueError(f"n_ases must be >= 2, got {n_ases}")
    rng = np.random.default_rng(seed)
    if n_tier1 is None:
        n_tier1 = int(np.clip(round(np.sqrt(n_ases) / 4), 1, 12))
    n_tier1 = min(n_tier1, n_ases - 1)

    edges: list[Edge] = []
    adjacent: set[tuple[int, int]] = set()

    def link(a: int, b: int, rel: Relationship) -> None:
        adjacent.add((min(a, b), max(a, b)))
        edges.append(Edge(a, b, rel))

    for a in range(1, n_tier1 + 1):
        for b in range(a + 1, n_tier1 + 1):
            link(a, b, Relationship.PEER_TO_PEER)

    # each AS appears once per customer plus once for itself: preferential attachment
    pool: list[int] = list(range(1, n_tier1 + 1))
    n_prov_choices = np.array([1, 2, 3])
    n_prov_probs = np.array([0.55, 0.3, 0.15])
    for v in range(n_tier1 + 1, n_ases + 1):
        want = int(rng.choice(n_prov_choices, p=n_prov_probs))
        chosen: set[int] = set()
        for _ in range(4 * want):
            if len(chosen) == want:
                break
            chosen.add(pool[int(rng.integers(len(pool)))])
        for p in sorted(chosen):
            link(p, v, Relationship.PROVIDER_TO_CUSTOMER)
            pool.append(p)
        pool.append(v)

    n_peer = int(peer_ratio * n_ases)
    lo = n_tier1 + 1
    if n_ases - lo >= 1:
        for _ in range(n_peer):
            a = pool[int(rng.integers(len(pool)))]
            b = int(rng.integers(lo, n_ases + 1))
            if a < lo or a == b or (min(a, b), max(a, b)) in adjacent:
                continue
            link(a, b, Relationship.PEER_TO_PEER)
    return AsGraph(edges)


@dataclasses.dataclass
class ValidationReport:
    violations: list[str]
    n_nodes: int
    n_edges: int
    n_components: int
    n_isolated: int
    n_unknown_dropped: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def _count_components(graph: AsGraph) -> tuple[int, int]:
    n = len(graph)
    if n == 0:
        return 0, 0
    rows = np.repeat(np.arange(n), np.diff(graph.indptr))
    adj = scipy.sparse.csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, graph.nbr)), shape=(n, n))
    comps, _ = scipy.sparse.csgraph.connected_components(adj, directed=False)
    isolated = int(np.sum(np.diff(graph.indptr) == 0))
    return int(comps), isolated


def validate(graph: AsGraph, n_unknown_dropped: int = 0) -> ValidationReport:
    """Check graph invariants and report connectivity statistics."""
    violations: list[str] = []
    seen: dict[tuple[int, int], Edge] = {}
    for e in graph.edges:
        if e.a == e.b:
            violations.append(f"self-loop at {e.a}")
            continue
        key = (min(e.a, e.b), max(e.a, e.b))
        if key in seen:
            violations.append(f"duplicate edge {key}")
            continue
        seen[key] = e

    row_asn = np.repeat(graph.asns, np.diff(graph.indptr))
    adj = set(zip(row_asn.tolist(), graph.asns[graph.nbr].tolist(), graph.role.tolist()))
    for e in seen.values():
        if e.a not in graph or e.b not in graph:
            violations.append(f"edge {e.a}-{e.b} references unknown AS")
            continue
        want_ab = Role.CUSTOMER if e.rel == Relationship.PROVIDER_TO_CUSTOMER else Role.PEER
        want_ba = Role.PROVIDER if e.rel == Relationship.PROVIDER_TO_CUSTOMER else Role.PEER
        if (e.a, e.b, int(want_ab)) not in adj or (e.b, e.a, int(want_ba)) not in adj:
            violations.append(f"inconsistent adjacency for {e.a}-{e.b}")
    if int(graph.indptr[-1]) != 2 * len(seen):
        violations.append("adjacency size does not match edge list")

    comps, isolated = _count_components(graph)
    return ValidationReport(
        violations=violations,
        n_nodes=len(graph),
        n_edges=len(seen),
        n_components=comps,
        n_isolated=isolated,
        n_unknown_dropped=n_unknown_dropped,
    )
