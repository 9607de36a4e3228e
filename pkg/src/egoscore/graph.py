"""Core graph types, ingestion and the ego-net file format."""

from __future__ import annotations

import dataclasses
import io
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

FRIENDSHIP = 0
DEFAULT_NUM_TYPES = 4


class GraphFormatError(ValueError):
    """Raised for malformed edge-list or ego-net files."""


class TypedEdge(NamedTuple):
    src: int
    dst: int
    etype: int
    attr: float


def transform_time(t: float) -> float:
    """Map a friendship age in days to ``28 / (t + 1)``; negative ages mean no friendship."""
    if t >= 0:
        return 28.0 / (t + 1.0)
    return 0.0


def transform_attrs(etype: np.ndarray, attr: np.ndarray) -> np.ndarray:
    """Vectorized attribute transform: time transform on the friendship type, raw otherwise."""
    attr = np.asarray(attr, dtype=np.float64)
    out = attr.copy()
    fr = np.asarray(etype) == FRIENDSHIP
    age = attr[fr]
    out[fr] = np.where(age >= 0, 28.0 / (np.maximum(age, 0.0) + 1.0), 0.0)
    return out


def format_float(x: float) -> str:
    # repr is the shortest string that round-trips a float64 (at most 17 significant digits)
    return repr(float(x))


def _validate_edges(src, dst, etype, attr, num_types, where=None):
    def loc(i):
        return f" (line {where[i]})" if where is not None else f" (edge {i})"

    bad = np.flatnonzero(src == dst)
    if bad.size:
        raise GraphFormatError(f"self-loop on node {src[bad[0]]}{loc(bad[0])}")
    bad = np.flatnonzero((src < 0) | (dst < 0))
    if bad.size:
        raise GraphFormatError(f"negative node id{loc(bad[0])}")
    bad = np.flatnonzero((etype < 0) | (etype >= num_types))
    if bad.size:
        raise GraphFormatError(f"edge type {etype[bad[0]]} outside [0, {num_types}){loc(bad[0])}")
    fr = etype == FRIENDSHIP
    bad = np.flatnonzero(fr & ~((attr >= 0) | (attr == -1)))
    if bad.size:
        raise GraphFormatError(f"friendship age must be >= 0 or -1, got {attr[bad[0]]}{loc(bad[0])}")
    bad = np.flatnonzero(~np.isfinite(attr))
    if bad.size:
        raise GraphFormatError(f"non-finite attribute{loc(bad[0])}")
    if len(src):
        order = np.lexsort((etype, dst, src))
        s, d, t = src[order], dst[order], etype[order]
        dup = np.flatnonzero((s[1:] == s[:-1]) & (d[1:] == d[:-1]) & (t[1:] == t[:-1]))
        if dup.size:
            i = order[dup[0] + 1]
            raise GraphFormatError(f"duplicate edge ({src[i]}, {dst[i]}, {etype[i]}){loc(i)}")


def undirected_keys(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pack unordered node pairs into sortable uint64 keys ``min << 32 | max``."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    return (np.minimum(a, b) << np.uint64(32)) | np.maximum(a, b)


def directed_keys(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    return (a << np.uint64(32)) | b


class Graph:
    """A directed typed multigraph stored as parallel edge arrays.

    Node ids are global and need not be contiguous; ``num_nodes`` is one past
    the largest referenced id. Adjacency indices are built on first use.
    """

    def __init__(self, src, dst, etype, attr, num_types: int = DEFAULT_NUM_TYPES, validate: bool = True):
        self.src = np.asarray(src, dtype=np.int64).reshape(-1)
        self.dst = np.asarray(dst, dtype=np.int64).reshape(-1)
        self.etype = np.asarray(etype, dtype=np.int64).reshape(-1)
        self.attr = np.asarray(attr, dtype=np.float64).reshape(-1)
        if not (len(self.src) == len(self.dst) == len(self.etype) == len(self.attr)):
            raise ValueError("edge arrays must have equal length")
        self.num_types = int(num_types)
        if validate:
            _validate_edges(self.src, self.dst, self.etype, self.attr, self.num_types)
        if len(self.src) and max(self.src.max(), self.dst.max()) >= 2**32:
            raise ValueError("node ids must fit in 32 bits")
        self.num_nodes = int(max(self.src.max(), self.dst.max()) + 1) if len(self.src) else 0
        self._adj_built = False

    @classmethod
    def from_edges(cls, edges: Iterable[TypedEdge | Sequence], num_types: int = DEFAULT_NUM_TYPES) -> "Graph":
        rows = [tuple(e) for e in edges]
        if not rows:
            return cls([], [], [], [], num_types=num_types)
        s, d, t, a = zip(*rows)
        return cls(s, d, t, a, num_types=num_types)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def edges(self) -> Iterator[TypedEdge]:
        for s, d, t, a in zip(self.src.tolist(), self.dst.tolist(), self.etype.tolist(), self.attr.tolist()):
            yield TypedEdge(s, d, t, a)

    def node_ids(self) -> np.ndarray:
        """Sorted ids of every node referenced by at least one edge."""
        return np.unique(np.concatenate([self.src, self.dst]))

    def build_adjacency(self) -> "Graph":
        """Build the CSR indices (idempotent).

        * out-adjacency: per source, ``(dst, etype)`` sorted by dst then etype
        * undirected topology: per node, sorted distinct neighbors over all types and directions
        * undirected key index: edge positions sorted by unordered pair key
        """
        if self._adj_built:
            return self
        n = self.num_nodes
        order = np.lexsort((self.etype, self.dst, self.src))
        self.out_order = order
        self.out_indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.out_indptr, self.src + 1, 1)
        np.cumsum(self.out_indptr, out=self.out_indptr)

        a = np.concatenate([self.src, self.dst])
        b = np.concatenate([self.dst, self.src])
        pairs = np.unique(directed_keys(a, b))
        ua = (pairs >> np.uint64(32)).astype(np.int64)
        ub = (pairs & np.uint64(0xFFFFFFFF)).astype(np.int64)
        self.und_indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.und_indptr, ua + 1, 1)
        np.cumsum(self.und_indptr, out=self.und_indptr)
        self.und_indices = ub

        ukeys = undirected_keys(self.src, self.dst)
        self.key_order = np.argsort(ukeys, kind="stable")
        self.sorted_ukeys = ukeys[self.key_order]
        self.edge_keys = np.unique(ukeys)
        self._adj_built = True
        return self

    def out_neighbors(self, u: int) -> list[tuple[int, int]]:
        """Sorted ``(neighbor, etype)`` list of out-edges of ``u``."""
        self.build_adjacency()
        if u >= self.num_nodes:
            return []
        idx = self.out_order[self.out_indptr[u]:self.out_indptr[u + 1]]
        return list(zip(self.dst[idx].tolist(), self.etype[idx].tolist()))

    def neighbors(self, u: int) -> np.ndarray:
        """Distinct undirected neighbors of ``u`` (any type, any direction), sorted."""
        self.build_adjacency()
        if u >= self.num_nodes:
            return np.empty(0, dtype=np.int64)
        return self.und_indices[self.und_indptr[u]:self.und_indptr[u + 1]]

    def degree(self, u: int) -> int:
        return len(self.neighbors(u))

    def connected(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorized test for an edge of any type/direction between ``a[i]`` and ``b[i]``."""
        self.build_adjacency()
        keys = undirected_keys(a, b)
        if not len(self.edge_keys):
            return np.zeros(keys.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(self.edge_keys, keys), len(self.edge_keys) - 1)
        return self.edge_keys[pos] == keys

    def edges_between(self, keys: np.ndarray) -> np.ndarray:
        """Positions of all edges whose unordered endpoint key is in ``keys``."""
        self.build_adjacency()
        keys = np.asarray(keys, dtype=np.uint64)
        lo = np.searchsorted(self.sorted_ukeys, keys, side="left")
        hi = np.searchsorted(self.sorted_ukeys, keys, side="right")
        return self.key_order[_expand_ranges(lo, hi)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        if self.num_types != other.num_types or self.num_edges != other.num_edges:
            return False
        a = np.lexsort((self.etype, self.dst, self.src))
        b = np.lexsort((other.etype, other.dst, other.src))
        return all(
            np.array_equal(getattr(self, f)[a], getattr(other, f)[b]) for f in ("src", "dst", "etype", "attr")
        )

    def __repr__(self) -> str:
        return f"Graph(num_nodes={self.num_nodes}, num_edges={self.num_edges}, num_types={self.num_types})"


def _expand_ranges(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    starts = np.repeat(lo - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    return starts + np.arange(total)


def build_adjacency(g: Graph) -> Graph:
    return g.build_adjacency()


def load_graph(path, format: str = "tsv_edges", num_types: int = DEFAULT_NUM_TYPES) -> Graph:
    """Read a whitespace-separated ``src dst etype attr`` edge list.

    Blank lines and lines starting with ``#`` are skipped. Raises
    :class:`GraphFormatError` with the offending line number on parse errors,
    self-loops and duplicate ``(src, dst, etype)`` triples.
    """
    if format != "tsv_edges":
        raise ValueError(f"unsupported graph format {format!r}")
    src, dst, et, at, lines = [], [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise GraphFormatError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            try:
                s, d, t = int(parts[0]), int(parts[1]), int(parts[2])
                a = float(parts[3])
            except ValueError as exc:
                raise GraphFormatError(f"line {lineno}: {exc}") from None
            src.append(s)
            dst.append(d)
            et.append(t)
            at.append(a)
            lines.append(lineno)
    src_a = np.array(src, dtype=np.int64)
    dst_a = np.array(dst, dtype=np.int64)
    et_a = np.array(et, dtype=np.int64)
    at_a = np.array(at, dtype=np.float64)
    _validate_edges(src_a, dst_a, et_a, at_a, num_types, where=lines)
    return Graph(src_a, dst_a, et_a, at_a, num_types=num_types, validate=False)


def save_graph(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in g.edges():
            fh.write(f"{e.src} {e.dst} {e.etype} {format_float(e.attr)}\n")


@dataclass(frozen=True, eq=False)
class EgoNet:
    """A self-contained ego-net with the ego at local id 0.

    ``src``/``dst``/``etype``/``attr`` hold the intra ego-net edges over local
    ids; edges touching the ego live only in ``node_features``
    (``n x 2T``: slot ``t`` for ego->u, slot ``T + t`` for u->ego).
    """

    ego_global_id: int
    local_to_global: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    etype: np.ndarray
    attr: np.ndarray
    node_features: np.ndarray
    num_types: int = DEFAULT_NUM_TYPES
    ground_truth: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        for name, dtype in (("local_to_global", np.int64), ("src", np.int64), ("dst", np.int64),
                            ("etype", np.int64), ("attr", np.float64), ("node_features", np.float64)):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=dtype))
        n = len(self.local_to_global)
        if self.node_features.shape != (n, 2 * self.num_types):
            raise ValueError(f"node_features must be {n}x{2 * self.num_types}, got {self.node_features.shape}")
        if len(self.src) and (np.any(self.src == 0) or np.any(self.dst == 0)):
            raise ValueError("intra ego-net edges must not touch the ego (local id 0)")
        if len(self.src) and (max(self.src.max(), self.dst.max()) >= n or np.any(self.src == self.dst)):
            raise ValueError("edge endpoint out of range or self-loop")
        gt = tuple((min(int(u), int(v)), max(int(u), int(v))) for u, v in self.ground_truth)
        object.__setattr__(self, "ground_truth", gt)
        for u, v in gt:
            if u == 0 or u == v or v >= n:
                raise ValueError(f"invalid ground-truth pair ({u}, {v})")
            if self.base_adjacency[u, v]:
                raise ValueError(f"ground-truth pair ({u}, {v}) already has a base edge")

    @property
    def n(self) -> int:
        return len(self.local_to_global)

    @property
    def num_edges(self) -> int:
        return len(self.src)

    def edges(self) -> Iterator[TypedEdge]:
        for s, d, t, a in zip(self.src.tolist(), self.dst.tolist(), self.etype.tolist(), self.attr.tolist()):
            yield TypedEdge(s, d, t, a)

    @cached_property
    def base_adjacency(self) -> np.ndarray:
        """Symmetric boolean ``n x n``: any base edge between u and v."""
        a = np.zeros((self.n, self.n), dtype=bool)
        a[self.src, self.dst] = True
        return a | a.T

    @cached_property
    def candidate_mask(self) -> np.ndarray:
        """Symmetric boolean mask of rankable pairs: non-ego, off-diagonal, no base edge."""
        m = ~self.base_adjacency
        np.fill_diagonal(m, False)
        m[0, :] = False
        m[:, 0] = False
        return m

    def with_ground_truth(self, pairs) -> "EgoNet":
        return dataclasses.replace(self, ground_truth=tuple(pairs))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EgoNet):
            return NotImplemented
        return (
            self.ego_global_id == other.ego_global_id
            and self.num_types == other.num_types
            and self.ground_truth == other.ground_truth
            and all(np.array_equal(getattr(self, f), getattr(other, f))
                    for f in ("local_to_global", "src", "dst", "etype", "attr", "node_features"))
        )

    def __repr__(self) -> str:
        return f"EgoNet(ego={self.ego_global_id}, n={self.n}, edges={self.num_edges}, gt={len(self.ground_truth)})"


def node_features_from_arrays(n, other, ego_is_src, etype, attr, num_types) -> np.ndarray:
    feats = np.zeros((n, 2 * num_types), dtype=np.float64)
    slot = np.where(ego_is_src, etype, num_types + etype)
    feats[other, slot] = transform_attrs(etype, attr)
    return feats


def derive_node_features(e: EgoNet, raw_ego_edges: Iterable[TypedEdge]) -> EgoNet:
    """Return a copy of ``e`` whose node features come from edges incident to the ego.

    ``raw_ego_edges`` use local ids. Row 0 (the ego) is all zeros, absent
    edges contribute 0.
    """
    rows = [tuple(x) for x in raw_ego_edges]
    for s, d, _, _ in rows:
        if (s == 0) == (d == 0):
            raise ValueError(f"edge ({s}, {d}) is not incident to the ego")
    if rows:
        s, d, t, a = (np.array(c) for c in zip(*rows))
    else:
        s = d = t = np.empty(0, dtype=np.int64)
        a = np.empty(0)
    ego_is_src = s == 0
    other = np.where(ego_is_src, d, s).astype(np.int64)
    feats = node_features_from_arrays(e.n, other, ego_is_src, t.astype(np.int64), a, e.num_types)
    return dataclasses.replace(e, node_features=feats)


def write_egonet(e: EgoNet, fh: IO[str]) -> None:
    fh.write(f"E {e.ego_global_id} {e.n}\n")
    for i, (g, row) in enumerate(zip(e.local_to_global.tolist(), e.node_features.tolist())):
        fh.write(f"N {i} {g} " + " ".join(map(format_float, row)) + "\n")
    for s, d, t, a in zip(e.src.tolist(), e.dst.tolist(), e.etype.tolist(), e.attr.tolist()):
        fh.write(f"A {s} {d} {t} {format_float(a)}\n")
    for u, v in e.ground_truth:
        fh.write(f"G {u} {v}\n")


def write_egonets(egonets: Iterable[EgoNet], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for e in egonets:
            write_egonet(e, fh)
            count += 1
    return count


def egonet_to_text(e: EgoNet) -> str:
    buf = io.StringIO()
    write_egonet(e, buf)
    return buf.getvalue()


def iter_egonets(path) -> Iterator[EgoNet]:
    """Stream ego-nets from a file written by :func:`write_egonets`."""
    with open(path, encoding="utf-8") as fh:
        yield from parse_egonets(fh)


def read_egonets(path) -> list[EgoNet]:
    return list(iter_egonets(path))


def parse_egonets(lines: Iterable[str]) -> Iterator[EgoNet]:
    block = None

    def finish(b):
        ego, n, nodes, edges, gt, lineno = b
        if len(nodes) != n:
            raise GraphFormatError(f"line {lineno}: ego-net {ego} declares {n} nodes, found {len(nodes)}")
        nodes.sort()
        if [x[0] for x in nodes] != list(range(n)):
            raise GraphFormatError(f"line {lineno}: ego-net {ego} local ids are not 0..{n - 1}")
        width = len(nodes[0][2])
        if width % 2 or any(len(x[2]) != width for x in nodes):
            raise GraphFormatError(f"line {lineno}: ego-net {ego} has inconsistent feature width")
        edge_cols = list(zip(*edges)) if edges else [[], [], [], []]
        try:
            return EgoNet(
                ego_global_id=ego,
                local_to_global=[x[1] for x in nodes],
                src=edge_cols[0], dst=edge_cols[1], etype=edge_cols[2], attr=edge_cols[3],
                node_features=np.array([x[2] for x in nodes], dtype=np.float64).reshape(n, width),
                num_types=width // 2,
                ground_truth=tuple(gt),
            )
        except ValueError as exc:
            raise GraphFormatError(f"line {lineno}: ego-net {ego}: {exc}") from None

    lineno = 0
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        try:
            if tag == "E":
                if block is not None:
                    yield finish(block)
                block = [int(parts[1]), int(parts[2]), [], [], [], lineno]
                continue
            if block is None:
                raise GraphFormatError(f"line {lineno}: record before any E header")
            if tag == "N":
                block[2].append((int(parts[1]), int(parts[2]), [float(x) for x in parts[3:]]))
            elif tag == "A":
                block[3].append((int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])))
            elif tag == "G":
                block[4].append((int(parts[1]), int(parts[2])))
            else:
                raise GraphFormatError(f"line {lineno}: unknown record tag {tag!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, GraphFormatError):
                raise
            raise GraphFormatError(f"line {lineno}: {exc}") from None
    if block is not None:
        block[5] = lineno
        yield finish(block)


def egonet_from_edges(
    n: int,
    edges: Iterable[TypedEdge | Sequence],
    ego_edges: Iterable[TypedEdge | Sequence] = (),
    *,
    ego_global_id: int = 0,
    local_to_global=None,
    num_types: int = DEFAULT_NUM_TYPES,
    ground_truth=(),
) -> EgoNet:
    """Convenience constructor over local ids (used heavily by tests and the generator)."""
    rows = [tuple(x) for x in edges]
    cols = list(zip(*rows)) if rows else [[], [], [], []]
    e = EgoNet(
        ego_global_id=ego_global_id,
        local_to_global=np.arange(n) if local_to_global is None else local_to_global,
        src=cols[0], dst=cols[1], etype=cols[2], attr=cols[3],
        node_features=np.zeros((n, 2 * num_types)),
        num_types=num_types,
        ground_truth=tuple(ground_truth),
    )
    return derive_node_features(e, ego_edges)


def ensure_dir(path) -> None:
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)


def import_egovk(path) -> Iterator[EgoNet]:
    """Importer hook for the public Ego-VK release.

    Each ego-net there provides, per the dataset description: directed
    intra ego-net edges ``(u, v)`` with four attributes (friendship age in days,
    ``-1`` when not friends, then three activity intensities), ego-edge
    attributes in both directions for every node, local ids with the ego at 0,
    and next-day friendships as undirected ground-truth pairs. Map each
    non-zero attribute to one :class:`TypedEdge` and build ego-nets with
    :func:`egonet_from_edges`. The on-disk layout of the release is not
    bundled here, so this hook is left to whoever has the files.
    """
    raise NotImplementedError("Ego-VK import needs the dataset files; see the docstring for the field mapping")
