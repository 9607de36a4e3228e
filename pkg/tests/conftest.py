"""Shared independent oracles and graph factories for the test suite.

The oracles here are deliberately naive (pure Python loops over sets) so they
share no code path with the vectorized implementations under test.
"""

from __future__ import annotations

import itertools
import math
import random

import numpy as np
import pytest

from egoscore.graph import Graph


def random_undirected_graph(n: int, p: float, seed: int, num_types: int = 4, directed_fraction: float = 0.3) -> Graph:
    """Random simple graph whose edges carry a random type and a random direction.

    A fraction of the pairs gets edges in both directions, which exercises the
    per-pair merge paths without changing the undirected topology.
    """
    rng = random.Random(seed)
    rows = []
    for u, v in itertools.combinations(range(n), 2):
        if rng.random() >= p:
            continue
        t = rng.randrange(num_types)
        attr = float(rng.randint(0, 400)) if t == 0 else round(rng.uniform(0.1, 5.0), 3)
        a, b = (u, v) if rng.random() < 0.5 else (v, u)
        rows.append((a, b, t, attr))
        if rng.random() < directed_fraction:
            rows.append((b, a, t, attr))
    return Graph.from_edges(rows, num_types=num_types)


def naive_adjacency(g: Graph) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {}
    for e in g.edges():
        adj.setdefault(e.src, set()).add(e.dst)
        adj.setdefault(e.dst, set()).add(e.src)
    return adj


def naive_triangle_egonet_edges(g: Graph) -> set[tuple[int, int, int]]:
    """Brute-force O(n^3): (ego, a, b) with a < b for every triangle {ego, a, b}."""
    adj = naive_adjacency(g)
    nodes = sorted(adj)
    out = set()
    for x in nodes:
        for a in nodes:
            for b in nodes:
                if a < b and x not in (a, b) and a in adj[x] and b in adj[x] and b in adj[a]:
                    out.add((x, a, b))
    return out


def classical_adamic_adar(g: Graph) -> dict[tuple[int, int], float]:
    adj = naive_adjacency(g)
    out: dict[tuple[int, int], float] = {}
    for u, v in itertools.combinations(sorted(adj), 2):
        common = adj[u] & adj[v]
        if common:
            out[(u, v)] = sum(1.0 / math.log(len(adj[w])) for w in common)
    return out


def common_neighbor_counts(g: Graph) -> dict[tuple[int, int], int]:
    adj = naive_adjacency(g)
    out = {}
    for u, v in itertools.combinations(sorted(adj), 2):
        c = len(adj[u] & adj[v])
        if c:
            out[(u, v)] = c
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def finite_difference_check(e, cfg, params, h: float = 1e-5):
    """Worst per-tensor relative error between reverse-mode and central-difference gradients.

    The loss pairs every ground-truth pair with every negative so that it is
    a deterministic function of the parameters. The relative error of a
    tensor is ``|g_ad - g_fd| / max(|g_ad| + |g_fd|, 1e-8)`` in the 2-norm.
    The floor sits well above the central-difference round-off (about
    ``eps * loss / h``, ~1e-11 here) so that exactly-zero gradients, such as
    the output bias under the shift-invariant ranking loss, compare as equal
    instead of as a ratio of two round-off residues.
    """
    from egoscore.walkgnn import pairwise_loss, walkgnn_forward

    def loss_value():
        return float(pairwise_loss(walkgnn_forward(e, params, cfg), e.ground_truth, e.candidate_mask,
                                   num_negatives=None).data)

    params.zero_grad()
    loss = pairwise_loss(walkgnn_forward(e, params, cfg), e.ground_truth, e.candidate_mask, num_negatives=None)
    loss.backward()
    worst = {}
    for name, p in params.items():
        fd = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_value()
            flat[i] = old - h
            down = loss_value()
            flat[i] = old
            fd.reshape(-1)[i] = (up - down) / (2 * h)
        num = np.linalg.norm(p.grad - fd)
        den = max(np.linalg.norm(p.grad) + np.linalg.norm(fd), 1e-8)
        worst[name] = num / den
    return worst


def small_egonet(seed: int, n: int = 6, num_types: int = 4, p: float = 0.5):
    """Random ego-net over local ids with typed edges, ego edges and one ground-truth pair."""
    from egoscore.graph import egonet_from_edges

    r = np.random.default_rng(seed)
    edges, ego_edges = [], []
    for u in range(1, n):
        for v in range(1, n):
            if u != v and r.random() < p:
                t = int(r.integers(num_types))
                edges.append((u, v, t, float(r.integers(0, 50)) if t == 0 else float(r.uniform(0.1, 3))))
        for direction in (0, 1):
            if r.random() < 0.6:
                t = int(r.integers(num_types))
                a = float(r.integers(0, 50)) if t == 0 else float(r.uniform(0.1, 3))
                ego_edges.append((0, u, t, a) if direction == 0 else (u, 0, t, a))
    e = egonet_from_edges(n, edges, ego_edges, num_types=num_types)
    free = np.argwhere(np.triu(e.candidate_mask, 1))
    if len(free) < 2:
        return small_egonet(seed + 7919, n, num_types, p)
    u, v = free[r.integers(len(free))]
    return e.with_ground_truth([(int(u), int(v))])


def randomize_params(params, seed: int, scale: float = 0.5):
    """Perturb every parameter, biases included.

    Freshly initialized biases are exactly zero, which parks many ReLU inputs
    exactly on the kink at 0 where finite differences see a slope of 1/2.
    """
    r = np.random.default_rng(seed)
    for _, p in params.items():
        p.data[...] += r.normal(scale=scale, size=p.data.shape) * (1.0 if p.data.ndim == 1 else 0.2)
    return params


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    """Print and remember one pass/fail line; the summary hook repeats them at the end of the run."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
