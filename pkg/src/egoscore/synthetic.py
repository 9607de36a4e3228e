"""Synthetic ego-nets with a planted link-formation rule.

Each ego-net has ``T = 4`` edge types: friendship (age in days) plus three
activity types. Non-ego nodes belong to 2-4 planted blocks that drive the
friendship topology. A pair's propensity to form a new link is

    logit(u, v) = path_weight * log1p(P(u, v)) + block_weight * [block(u) == block(v)]

where ``P(u, v) = sum_q w(u, q) * w(q, v)`` counts length-2 paths weighted by
symmetrized message intensity ``w``. Ground-truth pairs are drawn without
replacement from ``softmax(logit)`` over pairs with no base edge.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Iterator

import numpy as np

from .graph import FRIENDSHIP, EgoNet, egonet_from_edges

MESSAGES = 1


@dataclass(frozen=True)
class SyntheticConfig:
    n_egonets: int = 100
    min_nodes: int = 16
    max_nodes: int = 26
    num_types: int = 4
    min_blocks: int = 2
    max_blocks: int = 4
    p_in: float = 0.7
    p_out: float = 0.12
    p_activity: float = 0.5
    message_sigma: float = 1.0
    max_age: int = 1000
    path_weight: float = 3.0
    block_weight: float = 1.0
    min_gt: int = 1
    max_gt: int = 2
    max_retries: int = 10
    ego_id_offset: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.num_types < 2:
            raise ValueError("need the friendship type and the message type")
        if not 3 <= self.min_nodes <= self.max_nodes:
            raise ValueError("node range must satisfy 3 <= min_nodes <= max_nodes")
        if not 1 <= self.min_blocks <= self.max_blocks:
            raise ValueError("invalid block range")
        if not 1 <= self.min_gt <= self.max_gt:
            raise ValueError("invalid ground-truth count range")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synthetic config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "SyntheticConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


class InfeasibleEgoNet(RuntimeError):
    pass


def _one(cfg: SyntheticConfig, rng: np.random.Generator, ego_id: int):
    T = cfg.num_types
    n = int(rng.integers(cfg.min_nodes, cfg.max_nodes + 1))
    m = n - 1
    nb = int(rng.integers(cfg.min_blocks, cfg.max_blocks + 1))
    block = np.concatenate([[-1], rng.integers(0, nb, size=m)])

    same = block[:, None] == block[None, :]
    prob = np.where(same, cfg.p_in, cfg.p_out)
    linked = np.triu(rng.random((n, n)) < prob, 1)
    linked[0, :] = False
    linked = linked | linked.T

    edges = []
    msg = np.zeros((n, n))
    iu, ju = np.nonzero(np.triu(linked, 1))
    for a, b in zip(iu.tolist(), ju.tolist()):
        age = float(rng.integers(0, cfg.max_age + 1))
        edges.append((a, b, FRIENDSHIP, age))
        edges.append((b, a, FRIENDSHIP, age))
    for t in range(1, T):
        present = linked & (rng.random((n, n)) < cfg.p_activity)
        si, di = np.nonzero(present)
        if t == MESSAGES:
            vals = rng.lognormal(0.0, cfg.message_sigma, size=len(si))
            msg[si, di] = vals
        else:
            vals = rng.exponential(1.0, size=len(si))
        edges.extend(zip(si.tolist(), di.tolist(), [t] * len(si), vals.tolist()))

    ego_edges = []
    for u in range(1, n):
        age = float(rng.integers(0, cfg.max_age + 1))
        ego_edges.append((0, u, FRIENDSHIP, age))
        ego_edges.append((u, 0, FRIENDSHIP, age))
        for t in range(1, T):
            for src, dst in ((0, u), (u, 0)):
                if rng.random() < cfg.p_activity:
                    ego_edges.append((src, dst, t, float(rng.exponential(1.0))))

    w = msg + msg.T
    paths = w @ w
    logit = cfg.path_weight * np.log1p(paths) + cfg.block_weight * same
    cand = ~linked
    np.fill_diagonal(cand, False)
    cand[0, :] = False
    cand[:, 0] = False
    ci, cj = np.nonzero(np.triu(cand, 1))
    if len(ci) == 0:
        raise InfeasibleEgoNet("no candidate pairs")
    k = min(int(rng.integers(cfg.min_gt, cfg.max_gt + 1)), len(ci))
    z = logit[ci, cj]
    p = np.exp(z - z.max())
    p /= p.sum()
    pick = rng.choice(len(ci), size=k, replace=False, p=p)
    gt = sorted(zip(ci[pick].tolist(), cj[pick].tolist()))
    # shuffle local ids so the ordinal numbering carries no block information
    perm = np.concatenate([[0], 1 + rng.permutation(m)])
    inv = np.argsort(perm)
    edges = [(int(inv[a]), int(inv[b]), t, x) for a, b, t, x in edges]
    ego_edges = [(int(inv[a]), int(inv[b]), t, x) for a, b, t, x in ego_edges]
    gt = [(int(min(inv[a], inv[b])), int(max(inv[a], inv[b]))) for a, b in gt]
    truth = logit[np.ix_(perm, perm)]
    e = egonet_from_edges(
        n, edges, ego_edges,
        ego_global_id=ego_id,
        local_to_global=np.concatenate([[ego_id], ego_id * 1000 + np.arange(1, n)]),
        num_types=T,
        ground_truth=gt,
    )
    return e, truth


def iter_synthetic(cfg: SyntheticConfig, return_truth: bool = False) -> Iterator:
    """Yield ego-nets (or ``(egonet, planted_logits)`` pairs) deterministically from ``cfg.seed``."""
    root = np.random.SeedSequence(cfg.seed)
    for idx, child in enumerate(root.spawn(cfg.n_egonets)):
        ego_id = cfg.ego_id_offset + idx
        for attempt, sub in enumerate(child.spawn(cfg.max_retries)):
            try:
                e, truth = _one(cfg, np.random.default_rng(sub), ego_id)
                break
            except InfeasibleEgoNet:
                if attempt == cfg.max_retries - 1:
                    raise
        yield (e, truth) if return_truth else e


def generate_synthetic(cfg: SyntheticConfig, return_truth: bool = False) -> list:
    return list(iter_synthetic(cfg, return_truth))


class PlantedOracle:
    """In-ego model that scores pairs with the generator's own logits."""

    name = "planted"

    def __init__(self, truth: dict[int, np.ndarray]):
        self.truth = truth

    def score(self, e: EgoNet) -> np.ndarray:
        return self.truth[e.ego_global_id]
