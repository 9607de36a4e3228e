"""Framework orchestration: in-ego scoring, out-ego aggregation and top-k suggestions."""

from __future__ import annotations

import heapq
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from itertools import groupby
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .builder import BuilderConfig, iter_egonets
from .graph import EgoNet, Graph, format_float

log = logging.getLogger(__name__)


class LocalScore(NamedTuple):
    u: int
    v: int
    ego: int
    score: float


class AggregatorKind(str, Enum):
    SUM = "sum"
    MAX = "max"


@dataclass
class ScoreReport:
    scored: int = 0
    failed: int = 0
    emitted: int = 0


def _local_scores(e: EgoNet, model, mask_existing: bool) -> list[LocalScore]:
    m = np.asarray(model.score(e), dtype=np.float64)
    if m.shape != (e.n, e.n):
        raise ValueError(f"model returned {m.shape}, expected {(e.n, e.n)}")
    if mask_existing:
        keep = np.triu(e.candidate_mask, 1)
    else:
        keep = np.triu(np.ones((e.n, e.n), dtype=bool), 1)
        keep[0, :] = False
    i, j = np.nonzero(keep)
    s = np.maximum(m[i, j], m[j, i])
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite local score")
    gi = e.local_to_global[i]
    gj = e.local_to_global[j]
    lo, hi = np.minimum(gi, gj), np.maximum(gi, gj)
    ego = int(e.ego_global_id)
    return [LocalScore(a, b, ego, c) for a, b, c in zip(lo.tolist(), hi.tolist(), s.tolist())]


def score_egonets(egonets: Iterable[EgoNet], model, *, mask_existing: bool = True, workers: int = 1,
                  report: ScoreReport | None = None) -> Iterator[LocalScore]:
    """Map phase: one :class:`LocalScore` per unmasked non-ego pair of every ego-net.

    A model error skips that ego-net (logged and counted in ``report``)
    instead of aborting the stream. Output order follows the input order for
    any number of workers.
    """
    report = report if report is not None else ScoreReport()

    def run(e):
        try:
            return _local_scores(e, model, mask_existing)
        except Exception as exc:  # noqa: BLE001 - one bad ego-net must not kill the batch
            log.warning("ego-net %s failed: %s", e.ego_global_id, exc)
            return None

    if workers > 1:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(run, egonets)
    else:
        pool = None
        results = map(run, egonets)
    try:
        for res in results:
            if res is None:
                report.failed += 1
                continue
            report.scored += 1
            report.emitted += len(res)
            yield from res
    finally:
        if pool is not None:
            pool.shutdown()


_RUN_DTYPE = np.dtype([("u", "<i8"), ("v", "<i8"), ("ego", "<i8"), ("score", "<f8")])


def _spill(buf: list[LocalScore], tmpdir: str, idx: int) -> str:
    arr = np.array(buf, dtype=_RUN_DTYPE)
    arr.sort(order=("u", "v", "ego"))
    path = os.path.join(tmpdir, f"run{idx:05d}.npy")
    np.save(path, arr)
    return path


def _read_run(path: str) -> Iterator[tuple]:
    arr = np.load(path, mmap_mode="r")
    for start in range(0, len(arr), 65536):
        yield from arr[start:start + 65536].tolist()


def iter_aggregate(locals_: Iterable[LocalScore], kind: AggregatorKind | str = AggregatorKind.SUM,
                   run_size: int = 1_000_000) -> Iterator[tuple[tuple[int, int], float]]:
    """External-memory out-ego aggregation, yielding ``((u, v), value)`` in pair order.

    Scores are spilled to sorted runs of at most ``run_size`` records and
    merge-folded; within a pair the fold runs in ego order, so the result is
    bit-identical for any input order or partitioning.
    """
    kind = AggregatorKind(kind)
    with tempfile.TemporaryDirectory(prefix="egoscore-agg-") as tmp:
        runs, buf = [], []
        for ls in locals_:
            buf.append(tuple(ls))
            if len(buf) >= run_size:
                runs.append(_spill(buf, tmp, len(runs)))
                buf = []
        if runs:
            if buf:
                runs.append(_spill(buf, tmp, len(runs)))
            stream = heapq.merge(*(_read_run(p) for p in runs))
        else:
            stream = iter(sorted(buf))
        for key, group in groupby(stream, key=lambda r: (r[0], r[1])):
            if kind is AggregatorKind.SUM:
                acc = 0.0
                for r in group:
                    acc += r[3]
            else:
                acc = max(r[3] for r in group)
            yield key, acc


def aggregate(locals_: Iterable[LocalScore], kind: AggregatorKind | str = AggregatorKind.SUM,
              run_size: int = 1_000_000) -> dict[tuple[int, int], float]:
    return dict(iter_aggregate(locals_, kind, run_size))


def top_k_suggestions(global_scores, g: Graph, k: int = 10) -> dict[int, list[tuple[int, float]]]:
    """Per user, the ``k`` best counterparts not already linked by any edge.

    ``global_scores`` is a mapping or an iterable of ``((u, v), score)``.
    Ordering: score descending, then smaller counterpart id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    items = global_scores.items() if hasattr(global_scores, "items") else global_scores
    heaps: dict[int, list] = {}

    def push(user, other, s):
        h = heaps.setdefault(user, [])
        # min-heap on (score, -other): the root is the currently worst kept entry
        entry = (s, -other)
        if len(h) < k:
            heapq.heappush(h, entry)
        elif entry > h[0]:
            heapq.heapreplace(h, entry)

    batch = []

    def flush():
        if not batch:
            return
        arr = np.array([(a, b) for (a, b), _ in batch], dtype=np.int64)
        linked = g.connected(arr[:, 0], arr[:, 1]) if g.num_edges else np.zeros(len(arr), dtype=bool)
        for ((a, b), s), skip in zip(batch, linked.tolist()):
            if not skip:
                push(a, b, s)
                push(b, a, s)
        batch.clear()

    for (a, b), s in items:
        batch.append(((int(a), int(b)), float(s)))
        if len(batch) >= 65536:
            flush()
    flush()
    return {
        user: [(-neg, s) for s, neg in sorted(h, key=lambda t: (-t[0], -t[1]))]
        for user, h in sorted(heaps.items())
    }


def write_suggestions(suggestions: dict[int, list[tuple[int, float]]], path) -> int:
    """``user_id counterpart_id rank score`` lines, users ascending, ranks from 1."""
    lines = 0
    with open(path, "w", encoding="utf-8") as fh:
        for user in sorted(suggestions):
            for rank, (other, s) in enumerate(suggestions[user], 1):
                fh.write(f"{user} {other} {rank} {format_float(s)}\n")
                lines += 1
    return lines


def read_suggestions(path) -> dict[int, list[tuple[int, float]]]:
    out: dict[int, list[tuple[int, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            user, other, _rank, s = line.split()
            out.setdefault(int(user), []).append((int(other), float(s)))
    return out


def run_gefs(graph: Graph, model, kind: AggregatorKind | str = AggregatorKind.SUM,
             cfg: BuilderConfig = BuilderConfig(), k: int = 10, *, workers: int = 1,
             report: ScoreReport | None = None) -> dict[int, list[tuple[int, float]]]:
    """Build ego-nets, score them, aggregate per pair and rank suggestions."""
    egonets = iter_egonets(graph, cfg)
    locals_ = score_egonets(egonets, model, workers=workers, report=report)
    return top_k_suggestions(iter_aggregate(locals_, kind), graph, k)
