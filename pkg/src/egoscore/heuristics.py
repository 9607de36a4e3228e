"""Classical link-prediction heuristics expressed as in-ego models.

Every model maps one :class:`EgoNet` to a dense ``n x n`` relevance matrix.
Rows and columns of the ego and the diagonal are zero.
"""

from __future__ import annotations

import math
from typing import Callable, Protocol

import numpy as np

from .graph import EgoNet

LN3 = math.log(3.0)


class InEgoModel(Protocol):
    def score(self, e: EgoNet) -> np.ndarray: ...


def _non_ego_block(n: int, value: float) -> np.ndarray:
    m = np.full((n, n), float(value))
    m[0, :] = 0.0
    m[:, 0] = 0.0
    np.fill_diagonal(m, 0.0)
    return m


def adamic_adar_local(e: EgoNet, literal: bool = False) -> np.ndarray:
    """Constant ``1 / ln(deg)`` for every non-ego pair.

    ``deg`` is the ego's neighbor count ``n - 1``, so summing over all ego-nets
    reproduces classical Adamic-Adar. ``literal=True`` uses the ego-net size
    ``n`` instead. The denominator is clamped below at ``ln 3``.
    """
    if e.n < 2:
        raise ValueError("ego-net needs at least one neighbor")
    size = e.n if literal else e.n - 1
    return _non_ego_block(e.n, 1.0 / math.log(max(size, 3)))


def common_neighbors_local(e: EgoNet) -> np.ndarray:
    if e.n < 2:
        raise ValueError("ego-net needs at least one neighbor")
    return _non_ego_block(e.n, 1.0)


def activity_weight(features: np.ndarray) -> float:
    """Default edge weight: total transformed attribute mass between ego and node."""
    return float(np.sum(features))


def weighted_adamic_adar_local(e: EgoNet, weight_fn: Callable[[np.ndarray], float] = activity_weight) -> np.ndarray:
    """Weighted Adamic-Adar: ``(w_u + w_v) / (2 ln(1 + S))``.

    ``weight_fn`` maps a node's ego-edge feature row to its tie strength with
    the ego; ``S`` is the ego's total weighted degree.
    """
    w = np.array([weight_fn(row) for row in e.node_features], dtype=np.float64)
    w[0] = 0.0
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("edge weights must be finite and non-negative")
    denom = 2.0 * max(math.log1p(w.sum()), LN3)
    m = (w[:, None] + w[None, :]) / denom
    m[0, :] = 0.0
    m[:, 0] = 0.0
    np.fill_diagonal(m, 0.0)
    return m


def label_propagation_clusters(e: EgoNet, max_iters: int = 20, seed: int = 0) -> np.ndarray:
    """Synchronous label propagation on the undirected intra ego-net topology.

    Each node counts its own label and its neighbors' labels and adopts the
    most frequent one, ties going to the smallest label. Initial labels are a
    seeded permutation of the node ids. Returns per-node labels, ``-1`` for the ego.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    n = e.n
    adj = e.base_adjacency.astype(np.int64)
    adj[0, :] = 0
    adj[:, 0] = 0
    adj += np.eye(n, dtype=np.int64)
    rng = np.random.default_rng(seed)
    labels = rng.permutation(n)
    for _ in range(max_iters):
        # votes[u, l] = occurrences of label l in the closed neighborhood of u
        onehot = np.zeros((n, n), dtype=np.int64)
        onehot[np.arange(n), labels] = 1
        votes = adj @ onehot
        new = np.argmax(votes, axis=1)  # argmax returns the first (smallest) label on ties
        if np.array_equal(new, labels):
            break
        labels = new
    labels = labels.copy()
    labels[0] = -1
    return labels


def connected_component_clusters(e: EgoNet) -> np.ndarray:
    from scipy.sparse.csgraph import connected_components

    adj = e.base_adjacency.copy()
    adj[0, :] = False
    adj[:, 0] = False
    _, labels = connected_components(adj, directed=False)
    labels = labels.copy()
    labels[0] = -1
    return labels


def cluster_friendship_score(e: EgoNet, cluster_fn: Callable[[EgoNet], np.ndarray] = label_propagation_clusters) -> np.ndarray:
    labels = np.asarray(cluster_fn(e))
    if labels.shape != (e.n,):
        raise ValueError("cluster assignment must label every node")
    m = (labels[:, None] == labels[None, :]).astype(np.float64)
    m[0, :] = 0.0
    m[:, 0] = 0.0
    np.fill_diagonal(m, 0.0)
    return m


class AdamicAdar:
    name = "aa"

    def __init__(self, literal: bool = False):
        self.literal = literal

    def score(self, e: EgoNet) -> np.ndarray:
        return adamic_adar_local(e, literal=self.literal)


class CommonNeighbors:
    name = "cn"

    def score(self, e: EgoNet) -> np.ndarray:
        return common_neighbors_local(e)


class WeightedAdamicAdar:
    name = "waa"

    def __init__(self, weight_fn=activity_weight):
        self.weight_fn = weight_fn

    def score(self, e: EgoNet) -> np.ndarray:
        return weighted_adamic_adar_local(e, self.weight_fn)


class FriendshipScore:
    name = "fs"

    def __init__(self, cluster_fn=None, max_iters: int = 20, seed: int = 0):
        if cluster_fn is None:
            def cluster_fn(e):
                return label_propagation_clusters(e, max_iters=max_iters, seed=seed)
        self.cluster_fn = cluster_fn

    def score(self, e: EgoNet) -> np.ndarray:
        return cluster_friendship_score(e, self.cluster_fn)


class FunctionModel:
    """Wrap a plain ``EgoNet -> matrix`` callable as an in-ego model."""

    def __init__(self, fn, name: str = "fn"):
        self.fn = fn
        self.name = name

    def score(self, e: EgoNet) -> np.ndarray:
        return np.asarray(self.fn(e), dtype=np.float64)


HEURISTICS = {
    "aa": AdamicAdar,
    "aa-literal": lambda: AdamicAdar(literal=True),
    "cn": CommonNeighbors,
    "waa": WeightedAdamicAdar,
    "fs": FriendshipScore,
}


def get_heuristic(name: str) -> InEgoModel:
    try:
        return HEURISTICS[name]()
    except KeyError:
        raise KeyError(f"unknown heuristic {name!r}; choose from {sorted(HEURISTICS)}") from None
