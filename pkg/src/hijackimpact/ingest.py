"""Measurement-side inputs: prefix-to-AS maps, ping target lists and
infection classification of BGP paths and traceroutes for one event."""

from __future__ import annotations

import dataclasses
import ipaddress
import json
import re
from collections import Counter
from collections.abc import Iterable, Sequence
from typing import IO

import numpy as np

from .monitors import MeasurementVector


class IngestError(ValueError):
    def __init__(self, msg: str, lineno: int | None = None):
        super().__init__(f"line {lineno}: {msg}" if lineno is not None else msg)
        self.lineno = lineno


def _lines(src: str | IO[str] | Iterable[str]) -> Iterable[str]:
    return src.splitlines() if isinstance(src, str) else src


# ---------------------------------------------------------------- pfx2as


class PrefixToAsMap:
    """Longest-prefix match from IPv4 prefixes to origin AS sets."""

    def __init__(self, entries: Iterable[tuple[str | ipaddress.IPv4Network, Iterable[int]]] = ()):
        # prefix length -> network address (int) -> origins
        self._by_len: dict[int, dict[int, frozenset[int]]] = {}
        for pfx, origins in entries:
            self._add(ipaddress.IPv4Network(pfx), origins)

    def _add(self, net: ipaddress.IPv4Network, origins: Iterable[int]) -> None:
        table = self._by_len.setdefault(net.prefixlen, {})
        key = int(net.network_address)
        table[key] = table.get(key, frozenset()) | frozenset(int(a) for a in origins)

    def __len__(self) -> int:
        return sum(len(t) for t in self._by_len.values())

    def lookup(self, ip: str | ipaddress.IPv4Address) -> frozenset[int]:
        """Origins of the longest matching prefix; empty when nothing matches."""
        addr = int(ipaddress.IPv4Address(ip))
        for plen in sorted(self._by_len, reverse=True):
            mask = (0xFFFFFFFF << (32 - plen)) & 0xFFFFFFFF
            hit = self._by_len[plen].get(addr & mask)
            if hit is not None:
                return hit
        return frozenset()

    def pairs(self) -> Iterable[tuple[ipaddress.IPv4Network, int]]:
        for plen in sorted(self._by_len):
            for key in sorted(self._by_len[plen]):
                net = ipaddress.IPv4Network((key, plen))
                for a in sorted(self._by_len[plen][key]):
                    yield net, a

    def entries(self) -> list[tuple[ipaddress.IPv4Network, frozenset[int]]]:
        return [
            (ipaddress.IPv4Network((key, plen)), self._by_len[plen][key])
            for plen in sorted(self._by_len)
            for key in sorted(self._by_len[plen])
        ]


_ORIGIN_SPLIT = re.compile(r"[,_]")


def _parse_origins(text: str, lineno: int) -> list[int]:
    out = []
    for tok in _ORIGIN_SPLIT.split(text):
        tok = tok.strip()
        if tok.upper().startswith("AS"):
            tok = tok[2:]
        if not tok.isdigit() or int(tok) <= 0:
            raise IngestError(f"invalid AS number {tok!r}", lineno)
        out.append(int(tok))
    return out


def parse_pfx2as(src: str | IO[str] | Iterable[str]) -> PrefixToAsMap:
    """Lines ``prefix|asn[,asn]``, ``prefix asn`` or ``addr len asn``; ``#`` comments.

    Multi-origin entries may use ``,`` or ``_`` as separator.
    """
    pm = PrefixToAsMap()
    for lineno, raw in enumerate(_lines(src), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split("|") if "|" in line else line.split()
        fields = [f.strip() for f in fields]
        if len(fields) == 3 and "/" not in fields[0]:
            pfx_text, origin_text = f"{fields[0]}/{fields[1]}", fields[2]
        elif len(fields) == 2:
            pfx_text, origin_text = fields
        else:
            raise IngestError(f"expected 'prefix|asn', got {raw.rstrip()!r}", lineno)
        try:
            net = ipaddress.IPv4Network(pfx_text, strict=True)
        except ValueError as exc:
            raise IngestError(f"invalid prefix {pfx_text!r}: {exc}", lineno) from None
        pm._add(net, _parse_origins(origin_text, lineno))
    return pm


def merge_pfx2as_snapshots(
    snapshots: Sequence[PrefixToAsMap], min_consistency: float = 0.5, strict: bool = True
) -> PrefixToAsMap:
    """Keep (prefix, origin) pairs seen in more than ``min_consistency`` of the
    snapshots (at least that fraction when ``strict`` is false). Pairs present
    in every snapshot are always kept."""
    if not snapshots:
        raise ValueError("no snapshots to merge")
    if not 0.0 < min_consistency <= 1.0:
        raise ValueError("min_consistency must lie in (0, 1]")
    n = len(snapshots)
    counts = Counter(pair for snap in snapshots for pair in set(snap.pairs()))
    out = PrefixToAsMap()
    for (net, asn), c in sorted(counts.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        frac = c / n
        if c == n or frac > min_consistency or (not strict and frac >= min_consistency):
            out._add(net, [asn])
    return out


# ---------------------------------------------------------------- ping targets


@dataclasses.dataclass
class PingTargetList:
    targets: dict[int, list[tuple[str, float]]]
    min_score: float
    per_as_cap: int
    malformed: int = 0
    unmapped: int = 0  # qualifying IPs with no covering prefix
    ases_without_targets: int = 0  # origins in the prefix map with no qualifying IP

    def n_ip(self, asn: int) -> int:
        return len(self.targets.get(asn, ()))

    def to_dict(self) -> dict:
        return {str(a): [ip for ip, _ in lst] for a, lst in sorted(self.targets.items())}


def build_ping_targets(
    hitlist: str | IO[str] | Iterable[str],
    pfx2as: PrefixToAsMap,
    min_score: float = 0.9,
    per_as_cap: int = 10,
) -> PingTargetList:
    """Per origin AS, the ``per_as_cap`` best-scored hitlist IPs with score >= ``min_score``."""
    if per_as_cap < 1:
        raise ValueError("per_as_cap must be >= 1")
    if not 0.0 <= min_score <= 1.0:
        raise ValueError("min_score must lie in [0, 1]")
    pool: dict[int, list[tuple[float, int, str]]] = {}
    malformed = unmapped = 0
    for raw in _lines(hitlist):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if len(parts) != 2:
                raise ValueError
            ip = ipaddress.IPv4Address(parts[0])
            score = float(parts[1])
            if not 0.0 <= score <= 1.0:
                raise ValueError
        except ValueError:
            malformed += 1
            continue
        if score < min_score:
            continue
        origins = pfx2as.lookup(ip)
        if not origins:
            unmapped += 1
            continue
        for a in origins:
            pool.setdefault(a, []).append((-score, int(ip), str(ip)))
    targets = {}
    for a in sorted(pool):
        best = sorted(pool[a])[:per_as_cap]
        targets[a] = [(ip, -neg) for neg, _, ip in best]
    known = {a for _, a in pfx2as.pairs()}
    return PingTargetList(targets, min_score, per_as_cap, malformed, unmapped, len(known - set(targets)))


# ---------------------------------------------------------------- classification


@dataclasses.dataclass(frozen=True)
class EventSpec:
    victim: int
    hijacker: int
    prefix: ipaddress.IPv4Network | str | None = None
    victim_upstreams: frozenset[int] = frozenset()
    hijacker_upstreams: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.prefix is not None:
            object.__setattr__(self, "prefix", ipaddress.IPv4Network(self.prefix))
        object.__setattr__(self, "victim_upstreams", frozenset(int(a) for a in self.victim_upstreams))
        object.__setattr__(self, "hijacker_upstreams", frozenset(int(a) for a in self.hijacker_upstreams))

    @property
    def shared_upstreams(self) -> frozenset[int]:
        return self.victim_upstreams & self.hijacker_upstreams


@dataclasses.dataclass
class Diagnostics:
    no_inference: list[tuple[int, str]] = dataclasses.field(default_factory=list)
    errors: list[tuple[int, str]] = dataclasses.field(default_factory=list)  # (record index, message)
    duplicates: int = 0


def _assemble(decided: list[tuple[int, int]]) -> MeasurementVector:
    mons = np.array([a for a, _ in decided], dtype=np.int64)
    vals = np.array([b for _, b in decided], dtype=np.int8)
    return MeasurementVector(mons, vals, corrupted=False)


def classify_bgp_paths(
    records: Iterable[tuple[int, Sequence[int]]], event: EventSpec, origin_only: bool = False
) -> tuple[MeasurementVector, Diagnostics]:
    """Infected if the hijacker is on the path (or is its origin, with ``origin_only``)."""
    diag = Diagnostics()
    decided: list[tuple[int, int]] = []
    seen: set[int] = set()
    for k, (monitor, path) in enumerate(records):
        path = [int(a) for a in path]
        if not path:
            diag.errors.append((k, "empty AS path"))
            continue
        monitor = int(monitor)
        if monitor in seen:
            diag.duplicates += 1
            continue
        seen.add(monitor)
        if path[0] != monitor:
            diag.errors.append((k, f"path starts at AS{path[0]}, not at monitor AS{monitor}"))
            continue
        via_h = path[-1] == event.hijacker if origin_only else event.hijacker in path
        if via_h:
            decided.append((monitor, 1))
        elif path[-1] == event.victim:
            decided.append((monitor, 0))
        else:
            diag.no_inference.append((monitor, f"path ends at AS{path[-1]}"))
    return _assemble(decided), diag


def classify_traceroutes(
    records: Iterable[tuple[int, Sequence[str]]], event: EventSpec, pfx2as: PrefixToAsMap
) -> tuple[MeasurementVector, Diagnostics]:
    """Classify by the upstream AS of the last resolvable hop before the event prefix."""
    diag = Diagnostics()
    decided: list[tuple[int, int]] = []
    seen: set[int] = set()
    h_only = event.hijacker_upstreams - event.victim_upstreams
    v_only = event.victim_upstreams - event.hijacker_upstreams
    for k, (monitor, hops) in enumerate(records):
        monitor = int(monitor)
        if monitor in seen:
            diag.duplicates += 1
            continue
        seen.add(monitor)
        before: list[ipaddress.IPv4Address] = []
        for hop in hops:
            try:
                addr = ipaddress.IPv4Address(str(hop))
            except ValueError:
                continue  # '*' or garbage: unresolvable hop
            if event.prefix is not None and addr in event.prefix:
                break
            before.append(addr)
        origins: frozenset[int] = frozenset()
        for addr in reversed(before):
            origins = pfx2as.lookup(addr)
            if origins:
                break
        if not origins:
            diag.no_inference.append((monitor, "no resolvable hop before the destination"))
            diag.errors.append((k, "unresolvable hops"))
            continue
        in_h, in_v = bool(origins & h_only), bool(origins & v_only)
        if in_h and not in_v:
            decided.append((monitor, 1))
        elif in_v and not in_h:
            decided.append((monitor, 0))
        elif origins & event.shared_upstreams:
            diag.no_inference.append((monitor, "last hop in an upstream shared by victim and hijacker"))
        else:
            diag.no_inference.append((monitor, f"last hop maps to {sorted(origins)}, not an event upstream"))
    return _assemble(decided), diag


def read_path_records(src: str | IO[str] | Iterable[str]) -> list[tuple[int, list[int]]]:
    """JSON Lines ``{"monitor": asn, "path": [asn, ...]}``."""
    out = []
    for lineno, line in enumerate(_lines(src), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append((int(d["monitor"]), [int(a) for a in d["path"]]))
        except (ValueError, KeyError, TypeError) as exc:
            raise IngestError(f"bad path record: {exc}", lineno) from None
    return out


def read_traceroute_records(src: str | IO[str] | Iterable[str]) -> list[tuple[int, list[str]]]:
    """JSON Lines ``{"monitor": asn, "hops": ["ip", ...]}``."""
    out = []
    for lineno, line in enumerate(_lines(src), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append((int(d["monitor"]), [str(h) for h in d["hops"]]))
        except (ValueError, KeyError, TypeError) as exc:
            raise IngestError(f"bad traceroute record: {exc}", lineno) from None
    return out
