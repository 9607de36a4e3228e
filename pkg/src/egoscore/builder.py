"""Ego-net materialization via Bloom-filtered triangle enumeration.

The pipeline mirrors MapReduce stage boundaries locally:

1. map: every node ``u`` emits wedge candidates ``(ego, other, u)`` for pairs of
   its neighbors whose closing edge passes the Bloom filter;
2. shuffle + semi-join: candidates are partitioned by the closing edge and
   joined against the exact edge set, dropping Bloom false positives;
3. reduce: verified triangles are grouped by ego, pendant neighbors are
   joined in from the adjacency lists and the ego-net is capped by activity.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .graph import (
    EgoNet,
    Graph,
    directed_keys,
    node_features_from_arrays,
    undirected_keys,
    write_egonet,
)

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class BuilderConfig:
    cap: int = 300
    bloom_bits_per_edge: float = 10.0
    bloom_hashes: int = 7
    include_pendants: bool = True
    undirected_closure: bool = True
    partitions: int = 1
    workers: int = 1
    bloom_salt: int = 0

    def __post_init__(self):
        if self.cap < 2:
            raise ValueError("cap must be >= 2")
        if self.bloom_hashes < 1:
            raise ValueError("bloom_hashes must be >= 1")
        if self.bloom_bits_per_edge <= 0:
            raise ValueError("bloom_bits_per_edge must be positive")
        if self.partitions < 1 or self.workers < 1:
            raise ValueError("partitions and workers must be >= 1")


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class BloomFilter:
    """Bit-packed Bloom filter over uint64 keys with seeded double hashing."""

    def __init__(self, num_bits: int, num_hashes: int, salt: int = 0):
        self.m = max(1, int(num_bits))
        self.k = int(num_hashes)
        self.salt = int(salt)
        self.bits = np.zeros((self.m + 7) // 8, dtype=np.uint8)
        self.count = 0
        self._s1 = np.uint64(_splitmix_int(self.salt * 2 + 1))
        self._s2 = np.uint64(_splitmix_int(self.salt * 2 + 2))

    def _positions(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.uint64).reshape(-1)
        with np.errstate(over="ignore"):
            h1 = _splitmix64(keys ^ self._s1)
            h2 = _splitmix64(keys ^ self._s2) | np.uint64(1)
            i = np.arange(self.k, dtype=np.uint64)
            pos = (h1[:, None] + i[None, :] * h2[:, None]) % np.uint64(self.m)
        return pos.astype(np.int64)

    def add(self, keys) -> None:
        pos = self._positions(keys).reshape(-1)
        np.bitwise_or.at(self.bits, pos >> 3, (1 << (pos & 7)).astype(np.uint8))
        self.count += len(np.asarray(keys).reshape(-1))

    def contains(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.uint64)
        pos = self._positions(keys)
        hit = (self.bits[pos >> 3] >> (pos & 7).astype(np.uint8)) & 1
        return hit.all(axis=1).reshape(keys.shape) if len(pos) else np.zeros(keys.shape, dtype=bool)

    def __contains__(self, pair) -> bool:
        a, b = pair
        return bool(self.contains(undirected_keys(np.array([a]), np.array([b])))[0])

    def expected_fpr(self, n_items: int | None = None) -> float:
        n = self.count if n_items is None else n_items
        return (1.0 - math.exp(-self.k * n / self.m)) ** self.k


def _splitmix_int(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _closure_keys(g: Graph, cfg: BuilderConfig) -> np.ndarray:
    g.build_adjacency()
    if cfg.undirected_closure:
        return g.edge_keys
    return np.unique(directed_keys(g.src, g.dst))


def build_bloom(g: Graph, cfg: BuilderConfig = BuilderConfig()) -> BloomFilter:
    keys = _closure_keys(g, cfg)
    bloom = BloomFilter(math.ceil(cfg.bloom_bits_per_edge * len(keys)), cfg.bloom_hashes, cfg.bloom_salt)
    if len(keys):
        bloom.add(keys)
    return bloom


class TriangleCandidate(NamedTuple):
    e: int
    v: int
    u: int


@dataclass
class Candidates:
    """Columnar batch of wedge candidates ``(e, v, u)``: ego, other endpoint, wedge center."""

    e: np.ndarray
    v: np.ndarray
    u: np.ndarray

    @classmethod
    def empty(cls) -> "Candidates":
        z = np.empty(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy())

    @classmethod
    def concat(cls, parts: list["Candidates"]) -> "Candidates":
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("e", "v", "u")))

    def __len__(self) -> int:
        return len(self.e)

    def __iter__(self) -> Iterator[TriangleCandidate]:
        for row in zip(self.e.tolist(), self.v.tolist(), self.u.tolist()):
            yield TriangleCandidate(*row)

    def sorted(self) -> "Candidates":
        order = np.lexsort((self.u, self.v, self.e))
        return Candidates(self.e[order], self.v[order], self.u[order])

    def closing_keys(self, undirected: bool) -> np.ndarray:
        return undirected_keys(self.e, self.v) if undirected else directed_keys(self.e, self.v)


def _map_partition(g: Graph, bloom: BloomFilter, cfg: BuilderConfig, part: int) -> Candidates:
    out = []
    nodes = np.arange(part, g.num_nodes, cfg.partitions)
    for u in nodes.tolist():
        nb = g.neighbors(u) if cfg.undirected_closure else _out_set(g, u)
        k = len(nb)
        if k < 2:
            continue
        i, j = np.triu_indices(k, 1)
        a, b = nb[i], nb[j]
        if cfg.undirected_closure:
            hit = bloom.contains(undirected_keys(a, b))
            a, b = a[hit], b[hit]
            # both apex orientations: ego a sees intra edge {b, u}, ego b sees {a, u}
            e = np.concatenate([a, b])
            v = np.concatenate([b, a])
        else:
            e = np.concatenate([a, b])
            v = np.concatenate([b, a])
            hit = bloom.contains(directed_keys(e, v))
            e, v = e[hit], v[hit]
        out.append(Candidates(e, v, np.full(len(e), u, dtype=np.int64)))
    return Candidates.concat(out)


def _out_set(g: Graph, u: int) -> np.ndarray:
    return np.unique(np.array([d for d, _ in g.out_neighbors(u)], dtype=np.int64))


def _run_partitions(fn: Callable[[int], Candidates], cfg: BuilderConfig) -> list[Candidates]:
    parts = range(cfg.partitions)
    if cfg.workers > 1 and cfg.partitions > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, parts))
    return [fn(p) for p in parts]


def emit_wedges(g: Graph, bloom: BloomFilter, cfg: BuilderConfig = BuilderConfig()) -> Candidates:
    """Map stage: wedge candidates whose closing edge passes the Bloom test.

    Nodes are assigned to partitions by ``u % partitions``; the concatenated
    output is deterministic for a fixed partition count.
    """
    g.build_adjacency()
    return Candidates.concat(_run_partitions(lambda p: _map_partition(g, bloom, cfg, p), cfg))


def verify_join(candidates: Candidates, g: Graph, cfg: BuilderConfig = BuilderConfig()) -> Candidates:
    """Shuffle candidates by closing edge and left-semi-join against the exact edge set.

    Drops Bloom false positives. Output is sorted by ``(e, v, u)`` so it does
    not depend on the partitioning.
    """
    keys = candidates.closing_keys(cfg.undirected_closure)
    exact = _closure_keys(g, cfg)
    with np.errstate(over="ignore"):
        bucket = (_splitmix64(keys) % np.uint64(cfg.partitions)).astype(np.int64)

    def join(p: int) -> Candidates:
        idx = np.flatnonzero(bucket == p)
        k = keys[idx]
        if len(exact):
            pos = np.minimum(np.searchsorted(exact, k), len(exact) - 1)
            idx = idx[exact[pos] == k]
        else:
            idx = idx[:0]
        return Candidates(candidates.e[idx], candidates.v[idx], candidates.u[idx])

    return Candidates.concat(_run_partitions(join, cfg)).sorted()


def _activity_rank(members: np.ndarray, activity: np.ndarray, keep: int) -> np.ndarray:
    order = np.lexsort((members, -activity))
    return np.sort(members[order[:keep]])


def group_by_ego(verified: Candidates, g: Graph, cfg: BuilderConfig = BuilderConfig()) -> Iterator[EgoNet]:
    """Reduce stage: one :class:`EgoNet` per ego, sorted by ego id.

    Ego-nets larger than ``cfg.cap`` nodes keep the ``cap - 1`` neighbors with
    the highest activity (sum of transformed ego-edge attributes), ties broken
    by smaller global id.
    """
    g.build_adjacency()
    T = g.num_types
    verified = verified.sorted()
    egos_v, starts = np.unique(verified.e, return_index=True)
    bounds = dict(zip(egos_v.tolist(), zip(starts.tolist(), np.append(starts[1:], len(verified)).tolist())))
    if cfg.include_pendants:
        egos = np.flatnonzero(np.diff(g.und_indptr) > 0)
    else:
        egos = egos_v
    for ego in egos.tolist():
        lo, hi = bounds.get(ego, (0, 0))
        tri_v, tri_u = verified.v[lo:hi], verified.u[lo:hi]
        if cfg.include_pendants:
            members = g.neighbors(ego)
        else:
            members = np.unique(np.concatenate([tri_v, tri_u]))
        if not len(members):
            continue

        # ego edges to every candidate member (needed for features and the cap)
        epos = g.edges_between(undirected_keys(np.full(len(members), ego), members))
        e_src, e_dst = g.src[epos], g.dst[epos]
        ego_is_src = e_src == ego
        other = np.where(ego_is_src, e_dst, e_src)
        if len(members) > cfg.cap - 1:
            feats_all = node_features_from_arrays(
                g.num_nodes, other, ego_is_src, g.etype[epos], g.attr[epos], T)
            activity = feats_all[members].sum(axis=1)
            members = _activity_rank(members, activity, cfg.cap - 1)
            keep = np.isin(other, members)
            epos, other, ego_is_src = epos[keep], other[keep], ego_is_src[keep]

        local_to_global = np.concatenate([[ego], members])
        local_other = np.searchsorted(members, other) + 1
        feats = node_features_from_arrays(
            len(local_to_global), local_other, ego_is_src, g.etype[epos], g.attr[epos], T)

        pair_keys = np.unique(undirected_keys(tri_v, tri_u))
        a =(pair_keys >> np.uint64(32)).astype(np.int64)
        b = (pair_keys & np.uint64(0xFFFFFFFF)).astype(np.int64)
        inside = np.isin(a, members) & np.isin(b, members)
        ipos = np.sort(g.edges_between(pair_keys[inside]))
        i_src = np.searchsorted(members, g.src[ipos]) + 1
        i_dst = np.searchsorted(members, g.dst[ipos]) + 1
        order = np.lexsort((g.etype[ipos], i_dst, i_src))
        yield EgoNet(
            ego_global_id=ego,
            local_to_global=local_to_global,
            src=i_src[order],
            dst=i_dst[order],
            etype=g.etype[ipos][order],
            attr=g.attr[ipos][order],
            node_features=feats,
            num_types=T,
        )


def iter_egonets(g: Graph, cfg: BuilderConfig = BuilderConfig()) -> Iterator[EgoNet]:
    """All four stages composed; yields ego-nets sorted by ego id."""
    g.build_adjacency()
    bloom = build_bloom(g, cfg)
    cands = emit_wedges(g, bloom, cfg)
    verified = verify_join(cands, g, cfg)
    log.debug("wedges=%d verified=%d bloom_bits=%d", len(cands), len(verified), bloom.m)
    yield from group_by_ego(verified, g, cfg)


def build_all_egonets(g: Graph, cfg: BuilderConfig, out) -> int:
    """Materialize every ego-net of ``g`` into ``out``.

    ``out`` is a path, a writable text stream, or a callable receiving each
    :class:`EgoNet`. Returns the number of ego-nets written.
    """
    count = 0
    if callable(out) and not hasattr(out, "write"):
        for e in iter_egonets(g, cfg):
            out(e)
            count += 1
        return count
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", encoding="utf-8") as fh:
            return build_all_egonets(g, cfg, fh)
    for e in iter_egonets(g, cfg):
        write_egonet(e, out)
        count += 1
    return count
