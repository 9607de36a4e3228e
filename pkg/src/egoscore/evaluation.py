"""NDCG@k evaluation, bootstrap confidence intervals and dataset splits."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import EgoNet


@dataclass
class EvalReport:
    metric: str
    mean: float
    ci_low: float
    ci_high: float
    n_egonets: int
    per_egonet: list[float] = field(repr=False, default_factory=list)
    ego_ids: list[int] = field(repr=False, default_factory=list)

    def as_dict(self) -> dict:
        return {
            "metric": self.metric,
            "mean": self.mean,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_egonets": self.n_egonets,
        }


def rank_candidates(scores: np.ndarray, e: EgoNet) -> np.ndarray:
    """Unmasked candidate pairs ``(i, j), i < j`` ordered best first.

    Directed scores are symmetrized by max; ties fall back to canonical pair order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (e.n, e.n):
        raise ValueError(f"score matrix must be {e.n}x{e.n}, got {scores.shape}")
    i, j = np.nonzero(np.triu(e.candidate_mask, 1))
    s = np.maximum(scores[i, j], scores[j, i])
    if not np.all(np.isfinite(s)):
        raise ValueError("non-finite score on a candidate pair")
    order = np.lexsort((j, i, -s))
    return np.stack([i[order], j[order]], axis=1)


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, k + 2))


def ndcg_at_k(scores: np.ndarray, e: EgoNet, k: int = 5) -> float:
    """Binary-relevance NDCG@k of the ranked candidate pairs against the ground truth."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not e.ground_truth:
        raise ValueError(f"ego-net {e.ego_global_id} has no ground truth")
    ranked = rank_candidates(scores, e)[:k]
    gt = set(e.ground_truth)
    hits = np.array([(int(a), int(b)) in gt for a, b in ranked], dtype=bool)
    disc = _discounts(k)
    dcg = float(disc[: len(hits)][hits].sum())
    idcg = float(disc[: min(k, len(gt))].sum())
    return dcg / idcg


def per_egonet_ndcg(model, egonets: Iterable[EgoNet], k: int = 5) -> tuple[list[int], list[float]]:
    ids, vals = [], []
    for e in egonets:
        ids.append(e.ego_global_id)
        vals.append(ndcg_at_k(model.score(e), e, k))
    return ids, vals


def mean_ndcg(model, egonets: Iterable[EgoNet], k: int = 5) -> float:
    _, vals = per_egonet_ndcg(model, egonets, k)
    return math.fsum(vals) / len(vals)


def bootstrap_ci(values: Sequence[float], samples: int = 1000, seed: int = 0, level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean."""
    x = np.asarray(values, dtype=np.float64)
    if samples < 1 or not len(x):
        return float("nan"), float("nan")
    rng = np.random.default_rng(seed)
    means = x[rng.integers(0, len(x), size=(samples, len(x)))].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def evaluate(model, egonets: Iterable[EgoNet], bootstrap_samples: int = 1000, seed: int = 0,
             k: int = 5) -> EvalReport:
    """Mean NDCG@k over ego-nets with a 95% percentile bootstrap interval."""
    ids, vals = per_egonet_ndcg(model, egonets, k)
    if not vals:
        raise ValueError("no ego-nets to evaluate")
    m = math.fsum(vals) / len(vals)
    lo, hi = bootstrap_ci(vals, bootstrap_samples, seed)
    # the percentile interval can exclude the sample mean on very skewed inputs
    lo, hi = min(lo, m), max(hi, m)
    return EvalReport(f"ndcg@{k}", m, lo, hi, len(vals), vals, ids)


def split_fraction(ego_id: int, seed: int) -> float:
    """Deterministic uniform draw in [0, 1) from ``(ego_id, seed)``."""
    h = hashlib.blake2b(f"{seed}:{ego_id}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") / 2.0**64


def split_dataset(egonets: Iterable[EgoNet], ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Assign each ego-net to train/valid/test by a hash of its ego id."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be three non-negative numbers summing to 1")
    c1 = ratios[0]
    c2 = ratios[0] + ratios[1]
    out: tuple[list, list, list] = ([], [], [])
    for e in egonets:
        u = split_fraction(e.ego_global_id, seed)
        out[0 if u < c1 else 1 if u < c2 else 2].append(e)
    return out


def format_report(report: EvalReport, model_name: str = "", extra: dict | None = None) -> str:
    """Human-readable table followed by a ``key=value`` block."""
    rows = [("model", model_name or "-"), ("metric", report.metric), ("ego-nets", str(report.n_egonets)),
            ("mean", f"{report.mean:.6f}"), ("95% CI", f"[{report.ci_low:.6f}, {report.ci_high:.6f}]")]
    width = max(len(k) for k, _ in rows)
    lines = [f"{k:<{width}}  {v}" for k, v in rows]
    lines.append("")
    lines.append("[metrics]")
    kv = {"model": model_name, **report.as_dict(), **(extra or {})}
    for k, v in kv.items():
        lines.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
    return "\n".join(lines) + "\n"
