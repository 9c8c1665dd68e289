"""Route propagation kernels.

Both implementations compute the same stable Gao-Rexford routing state for a
set of simultaneously announcing origins:

1. customer-learned routes climb provider links in waves of increasing length;
2. ASes without a customer route take the best one-hop export from a peer
   whose route is customer-learned or originated;
3. everything still unrouted inherits from providers, again in waves of
   increasing length.

Candidates of the same class and length are ranked by a per-(seed, AS,
neighbor) 64-bit hash (lower wins), then by the neighbor's ASN.

Outputs are per-AS arrays: ``src`` (index into the origin list of the
announcement that won, -1 if unreachable), ``length``, ``cls`` (see the
``CLS_*`` constants) and ``nexthop`` (row index, -1 for origins and
unreachable ASes).
"""

from __future__ import annotations

import numpy as np

from ._accel import njit, requested_backend

CLS_BLOCKED = -2
CLS_NONE = -1
CLS_SELF = 0
CLS_CUSTOMER = 1
CLS_PEER = 2
CLS_PROVIDER = 3

ROLE_CUSTOMER = 0
ROLE_PEER = 1
ROLE_PROVIDER = 2

UNSET = np.iinfo(np.int32).max

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_MASK64 = (1 << 64) - 1


def seed_to_u64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & _MASK64)


def local_pref_key_py(seed: int, holder_asn: int, neighbor_asn: int) -> int:
    """Reference (pure Python int) version of the tie-break hash."""

    def mix(z: int) -> int:
        z = (z + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    return mix(mix((int(seed) & _MASK64) ^ int(holder_asn)) ^ int(neighbor_asn))


def _mix_np(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def local_pref_key_np(seed: np.uint64, holder_asn: np.ndarray, neighbor_asn: np.ndarray) -> np.ndarray:
    h = np.asarray(holder_asn).astype(np.uint64)
    n = np.asarray(neighbor_asn).astype(np.uint64)
    with np.errstate(over="ignore"):
        return _mix_np(_mix_np(seed ^ h) ^ n)


# ---------------------------------------------------------------- numba path


@njit
def _mix_nb(z):
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def _key_nb(seed, holder_asn, neighbor_asn):
    return _mix_nb(_mix_nb(seed ^ np.uint64(holder_asn)) ^ np.uint64(neighbor_asn))


@njit
def _offer(w, v, new_len, new_cls, asn, seed, length, src, cls, nexthop, bestkey):
    """Offer v's route to w; returns True when w had no route before."""
    k = _key_nb(seed, asn[w], asn[v])
    if length[w] == UNSET:
        length[w] = new_len
        src[w] = src[v]
        cls[w] = new_cls
        nexthop[w] = v
        bestkey[w] = k
        return True
    if new_len < length[w] or (
        new_len == length[w] and (k < bestkey[w] or (k == bestkey[w] and asn[v] < asn[nexthop[w]]))
    ):
        length[w] = new_len
        src[w] = src[v]
        cls[w] = new_cls
        nexthop[w] = v
        bestkey[w] = k
    return False


@njit
def _propagate_nb(indptr, nbr, role, asn, seed, o_idx, o_len, blocked):
    n = indptr.shape[0] - 1
    length = np.full(n, UNSET, dtype=np.int32)
    src = np.full(n, -1, dtype=np.int8)
    cls = np.full(n, CLS_NONE, dtype=np.int8)
    nexthop = np.full(n, -1, dtype=np.int32)
    bestkey = np.zeros(n, dtype=np.uint64)

    max_origin = 1
    for k in range(o_idx.shape[0]):
        if o_len[k] > max_origin:
            max_origin = o_len[k]
    n_levels = 2 * n + max_origin + 3
    head = np.full(n_levels, -1, dtype=np.int32)
    link = np.full(n, -1, dtype=np.int32)

    for k in range(blocked.shape[0]):
        cls[blocked[k]] = CLS_BLOCKED
    for k in range(o_idx.shape[0]):
        v = o_idx[k]
        length[v] = o_len[k]
        src[v] = k
        cls[v] = CLS_SELF
        link[v] = head[o_len[k]]
        head[o_len[k]] = v

    # stage 1: customer routes move up to providers
    for lvl in range(1, n_levels - 1):
        v = head[lvl]
        while v != -1:
            for s in range(indptr[v], indptr[v + 1]):
                if role[s] != ROLE_PROVIDER:
                    continue
                w = nbr[s]
                if cls[w] == CLS_SELF or cls[w] == CLS_BLOCKED or (length[w] != UNSET and length[w] <= lvl):
                    continue
                if _offer(w, v, lvl + 1, CLS_CUSTOMER, asn, seed, length, src, cls, nexthop, bestkey):
                    link[w] = head[lvl + 1]
                    head[lvl + 1] = w
            v = link[v]

    # stage 2: one peer hop from customer-routed / originating ASes
    for v in range(n):
        if cls[v] != CLS_SELF and cls[v] != CLS_CUSTOMER:
            continue
        for s in range(indptr[v], indptr[v + 1]):
            if role[s] != ROLE_PEER:
                continue
            w = nbr[s]
            if cls[w] == CLS_SELF or cls[w] == CLS_CUSTOMER or cls[w] == CLS_BLOCKED:
                continue
            _offer(w, v, length[v] + 1, CLS_PEER, asn, seed, length, src, cls, nexthop, bestkey)

    # stage 3: provider routes flow down to customers
    head[:] = -1
    link[:] = -1
    for v in range(n):
        if length[v] != UNSET:
            link[v] = head[length[v]]
            head[length[v]] = v
    for lvl in range(1, n_levels - 1):
        v = head[lvl]
        while v != -1:
            for s in range(indptr[v], indptr[v + 1]):
                if role[s] != ROLE_CUSTOMER:
                    continue
                w = nbr[s]
                if cls[w] != CLS_NONE and cls[w] != CLS_PROVIDER:
                    continue
                if cls[w] == CLS_PROVIDER and length[w] <= lvl:
                    continue
                if _offer(w, v, lvl + 1, CLS_PROVIDER, asn, seed, length, src, cls, nexthop, bestkey):
                    link[w] = head[lvl + 1]
                    head[lvl + 1] = w
            v = link[v]

    for k in range(blocked.shape[0]):
        cls[blocked[k]] = CLS_NONE
    return src, length, cls, nexthop


# ---------------------------------------------------------------- numpy path


def _expand(indptr: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All CSR slots of ``rows``: returns (slot indices, owning row per slot)."""
    starts = indptr[rows]
    counts = indptr[rows + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=rows.dtype)
    owner = np.repeat(rows, counts)
    offs = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return np.repeat(starts, counts) + offs, owner


def _pick_best(w, v, cand_len, asn, seed):
    """Best candidate per target w: lowest (length, key, neighbor ASN)."""
    keys = local_pref_key_np(seed, asn[w], asn[v])
    order = np.lexsort((asn[v], keys, cand_len, w))
    w_sorted = w[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = w_sorted[1:] != w_sorted[:-1]
    sel = order[first]
    return w[sel], v[sel], cand_len[sel]


def _propagate_np(indptr, nbr, role, asn, seed, o_idx, o_len, blocked):
    n = len(indptr) - 1
    length = np.full(n, UNSET, dtype=np.int32)
    src = np.full(n, -1, dtype=np.int8)
    cls = np.full(n, CLS_NONE, dtype=np.int8)
    nexthop = np.full(n, -1, dtype=np.int32)
    o_idx = np.asarray(o_idx, dtype=np.int64)
    o_len = np.asarray(o_len, dtype=np.int32)
    cls[blocked] = CLS_BLOCKED
    length[o_idx] = o_len
    src[o_idx] = np.arange(len(o_idx), dtype=np.int8)
    cls[o_idx] = CLS_SELF

    def assign(w, v, cand_len, new_cls):
        length[w] = cand_len
        src[w] = src[v]
        cls[w] = new_cls
        nexthop[w] = v

    # stage 1
    pending = {int(L): o_idx[o_len == L] for L in np.unique(o_len)}
    lvl = int(o_len.min()) if len(o_len) else 0
    while pending:
        frontier = pending.pop(lvl, None)
        if frontier is not None and len(frontier):
            slots, owner = _expand(indptr, frontier)
            mask = role[slots] == ROLE_PROVIDER
            w = nbr[slots[mask]].astype(np.int64)
            v = owner[mask]
            keep = (length[w] == UNSET) & (cls[w] != CLS_BLOCKED)
            w, v = w[keep], v[keep]
            if len(w):
                w, v, cl = _pick_best(w, v, np.full(len(w), lvl + 1, dtype=np.int32), asn, seed)
                assign(w, v, cl, CLS_CUSTOMER)
                pending[lvl + 1] = np.concatenate([pending.get(lvl + 1, np.zeros(0, np.int64)), w])
        lvl += 1

    # stage 2
    routed = np.flatnonzero((cls == CLS_SELF) | (cls == CLS_CUSTOMER))
    slots, owner = _expand(indptr, routed)
    mask = role[slots] == ROLE_PEER
    w = nbr[slots[mask]].astype(np.int64)
    v = owner[mask]
    keep = (length[w] == UNSET) & (cls[w] != CLS_BLOCKED)
    w, v = w[keep], v[keep]
    if len(w):
        w, v, cl = _pick_best(w, v, length[v] + 1, asn, seed)
        assign(w, v, cl, CLS_PEER)

    # stage 3
    routed = np.flatnonzero(length != UNSET)
    pending = {}
    for L in np.unique(length[routed]):
        pending[int(L)] = routed[length[routed] == L]
    lvl = min(pending) if pending else 0
    while pending:
        frontier = pending.pop(lvl, None)
        if frontier is not None and len(frontier):
            slots, owner = _expand(indptr, frontier)
            mask = role[slots] == ROLE_CUSTOMER
            w = nbr[slots[mask]].astype(np.int64)
            v = owner[mask]
            keep = (length[w] == UNSET) & (cls[w] != CLS_BLOCKED)
            w, v = w[keep], v[keep]
            if len(w):
                w, v, cl = _pick_best(w, v, np.full(len(w), lvl + 1, dtype=np.int32), asn, seed)
                assign(w, v, cl, CLS_PROVIDER)
                pending[lvl + 1] = np.concatenate([pending.get(lvl + 1, np.zeros(0, np.int64)), w])
        lvl += 1

    cls[blocked] = CLS_NONE
    return src, length, cls, nexthop


def propagate(graph, seed: int, origin_idx, origin_len, backend: str | None = None, blocked=()):
    """Run the staged propagation for origins announcing with initial lengths ``origin_len``.

    ASes listed in ``blocked`` refuse every route (BGP loop prevention for an
    AS that already appears in the announced path).
    """
    backend = backend or requested_backend()
    o_idx = np.ascontiguousarray(origin_idx, dtype=np.int64)
    o_len = np.ascontiguousarray(origin_len, dtype=np.int32)
    blk = np.ascontiguousarray(blocked, dtype=np.int64)
    s = seed_to_u64(seed)
    if backend == "numba":
        return _propagate_nb(graph.indptr, graph.nbr, graph.role, graph.asns, s, o_idx, o_len, blk)
    if backend == "numpy":
        return _propagate_np(graph.indptr, graph.nbr, graph.role, graph.asns, s, o_idx, o_len, blk)
    raise ValueError(f"unknown backend {backend!r}")
