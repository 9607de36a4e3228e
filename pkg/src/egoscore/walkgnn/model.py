"""WalkGNN: a second-order GNN over node-pair states driven by per-edge filters."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..graph import EgoNet, transform_attrs
from .tensor import Tensor, concat, index, linear, matmul, maximum, relu, scale, scatter, softplus

MASK_VALUE = -1e30


@dataclass(frozen=True)
class WalkGNNConfig:
    layers: int = 6
    hidden: int = 8
    mlp_depth: int = 4
    mlp_hidden: int = 32
    directed_concat: bool = True
    residual: bool = True
    use_edge_attrs: bool = True
    use_node_features: bool = True
    num_types: int = 4
    last_layer_gain: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1:
            raise ValueError("layers and hidden must be >= 1")
        if self.mlp_depth < 1 or self.mlp_hidden < 1:
            raise ValueError("mlp_depth and mlp_hidden must be >= 1")

    @property
    def node_feature_dim(self) -> int:
        return 2 * self.num_types

    @property
    def edge_feature_dim(self) -> int:
        base = self.num_types if self.use_edge_attrs else 1
        return base + (2 * self.node_feature_dim if self.use_node_features else 0)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WalkGNNConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - fields
        if unknown:
            raise ValueError(f"unknown WalkGNN config keys: {sorted(unknown)}")
        return cls(**d)


class ParamStore:
    """Ordered registry of named parameter tensors plus Adam moment buffers."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def items(self):
        return self.params.items()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_snapshot(self, snap: dict[str, np.ndarray]) -> None:
        for k, arr in snap.items():
            self.params[k].data[...] = arr

    def adam_step(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for k, p in self.params.items():
            g = p.grad
            m, v = self.m[k], self.v[k]
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def add_mlp(store: ParamStore, prefix: str, dims: list[int], rng: np.random.Generator,
            last_gain: float = 1.0) -> None:
    for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
        w = _glorot(rng, fi, fo)
        if i == len(dims) - 2:
            w *= last_gain
        store.add(f"{prefix}.{i}.weight", w)
        store.add(f"{prefix}.{i}.bias", np.zeros(fo))


def mlp(store: ParamStore, prefix: str, x: Tensor, tag: str = "mlp") -> Tensor:
    """Linear layers with ReLU in between and a linear output."""
    i = 0
    while f"{prefix}.{i}.weight" in store:
        if i:
            x = relu(x)
        x = linear(x, store[f"{prefix}.{i}.weight"], store[f"{prefix}.{i}.bias"], tag=tag)
        i += 1
    if i == 0:
        raise KeyError(f"no parameters under {prefix!r}")
    return x


def _mlp_dims(cfg: WalkGNNConfig, fan_in: int, fan_out: int) -> list[int]:
    return [fan_in] + [cfg.mlp_hidden] * (cfg.mlp_depth - 1) + [fan_out]


def init_params(cfg: WalkGNNConfig, seed: int | None = None) -> ParamStore:
    """Glorot-uniform weights and zero biases.

    The output layer of each per-layer MLP is scaled by ``cfg.last_layer_gain``
    so every WalkConv starts close to the identity map; a gain of 0 makes it
    exact. An exactly-zero start is a saddle point for the ranking loss
    (off-edge pair states never leave zero), hence the small default.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    d = cfg.hidden
    store = ParamStore()
    mlp_in = 2 * d if cfg.directed_concat else d
    for k in range(cfg.layers):
        add_mlp(store, f"layer{k}.edge_mlp", _mlp_dims(cfg, cfg.edge_feature_dim, d * d), rng)
        add_mlp(store, f"layer{k}.mlp", _mlp_dims(cfg, mlp_in, d), rng, cfg.last_layer_gain)
    add_mlp(store, "out_mlp", _mlp_dims(cfg, d, 1), rng)
    return store


@dataclass
class EdgeFeatures:
    """Merged per directed pair: ``src[i] -> dst[i]`` carries ``features[i]``."""

    src: np.ndarray
    dst: np.ndarray
    features: np.ndarray


def assemble_edge_features(e: EgoNet, use_edge_attrs: bool = True, use_node_features: bool = True) -> EdgeFeatures:
    """One feature vector per ordered pair with at least one typed edge.

    Layout: ``T`` per-type attribute slots (friendship age time-transformed,
    absent types 0), then the source's and the destination's node features.
    With ``use_edge_attrs=False`` the type slots collapse to a single 1.
    """
    T = e.num_types
    if e.num_edges:
        keys = e.src * e.n + e.dst
        uniq, inv = np.unique(keys, return_inverse=True)
        src, dst = uniq // e.n, uniq % e.n
        if use_edge_attrs:
            slots = np.zeros((len(uniq), T))
            slots[inv, e.etype] = transform_attrs(e.etype, e.attr)
        else:
            slots = np.ones((len(uniq), 1))
    else:
        src = dst = np.empty(0, dtype=np.int64)
        slots = np.zeros((0, T if use_edge_attrs else 1))
    parts = [slots]
    if use_node_features:
        parts += [e.node_features[src], e.node_features[dst]]
    return EdgeFeatures(src.astype(np.int64), dst.astype(np.int64), np.concatenate(parts, axis=1))


def build_filters(ef: EdgeFeatures, n: int, d: int, store: ParamStore, prefix: str) -> Tensor:
    """Run the edge MLP and scatter row-major ``d x d`` filters into a dense ``[n, n, d, d]`` tensor."""
    vals = mlp(store, prefix, Tensor(ef.features), tag="edge_mlp")
    return scatter(vals.reshape(len(ef.src), d, d), (n, n, d, d), (ef.src, ef.dst))


def walk_conv(state: Tensor, filters: Tensor, apply_mlp=None, *, directed_concat: bool = True,
              residual: bool = True) -> Tensor:
    """One WalkConv step.

    ``W[u, v, t] = (1/d) * sum_{q, c} S[u, q, c] * F[q, v, c, t]``, optionally
    concatenated with its ``(u, v)`` transpose along channels, passed through
    ``apply_mlp`` (identity when ``None``) and added to ``S`` when ``residual``.
    The contraction is a single ``[n, n*d] @ [n*d, n*d]`` product, i.e.
    ``n^3 * d^2`` multiply-adds.
    """
    if state.ndim != 3 or filters.ndim != 4:
        raise ValueError("state must be [n, n, d] and filters [n, n, d, d]")
    n, n2, d = state.shape
    if n != n2 or filters.shape != (n, n, d, d):
        raise ValueError(f"shape mismatch: state {state.shape}, filters {filters.shape}")
    a = state.reshape(n, n * d)
    b = filters.transpose(0, 2, 1, 3).reshape(n * d, n * d)
    w = scale(matmul(a, b, tag="walk_conv"), 1.0 / d).reshape(n, n, d)
    if directed_concat:
        w = concat([w, w.transpose(1, 0, 2)], axis=2)
    if apply_mlp is not None:
        c = w.shape[2]
        w = apply_mlp(w.reshape(n * n, c)).reshape(n, n, -1)
    if not residual:
        return w
    if w.shape != state.shape:
        raise ValueError(f"layer output {w.shape} does not match state {state.shape}")
    return state + w


def initial_state(e: EgoNet, cfg: WalkGNNConfig) -> np.ndarray:
    """Channel-wise identity; node features overwrite the leading diagonal channels."""
    n, d = e.n, cfg.hidden
    s = np.zeros((n, n, d))
    idx = np.arange(n)
    s[idx, idx, :] = 1.0
    if cfg.use_node_features:
        f = min(cfg.node_feature_dim, d)
        s[idx, idx, :f] = e.node_features[:, :f]
    return s


def walkgnn_forward(e: EgoNet, params: ParamStore, cfg: WalkGNNConfig) -> Tensor:
    """Raw directed pair scores ``[n, n]`` (unmasked, differentiable)."""
    if e.num_types != cfg.num_types:
        raise ValueError(f"ego-net has {e.num_types} edge types, model expects {cfg.num_types}")
    if "out_mlp.0.weight" not in params:
        raise ValueError("parameters are not initialized for this config")
    n, d = e.n, cfg.hidden
    ef = assemble_edge_features(e, cfg.use_edge_attrs, cfg.use_node_features)
    s = Tensor(initial_state(e, cfg))
    for k in range(cfg.layers):
        filters = build_filters(ef, n, d, params, f"layer{k}.edge_mlp")
        prefix = f"layer{k}.mlp"
        s = walk_conv(s, filters, lambda x, p=prefix: mlp(params, p, x),
                      directed_concat=cfg.directed_concat, residual=cfg.residual)
    return mlp(params, "out_mlp", s.reshape(n * n, d)).reshape(n, n)


def mask_scores(scores: np.ndarray, e: EgoNet) -> np.ndarray:
    out = np.array(scores, dtype=np.float64)
    out[~e.candidate_mask] = MASK_VALUE
    return out


class WalkGNN:
    """In-ego model wrapper: frozen parameters, masked directed score matrix."""

    name = "walkgnn"

    def __init__(self, params: ParamStore, cfg: WalkGNNConfig):
        self.params = params
        self.cfg = cfg

    def score(self, e: EgoNet) -> np.ndarray:
        return mask_scores(walkgnn_forward(e, self.params, self.cfg).data, e)


def pairwise_loss(
    scores: Tensor,
    ground_truth,
    mask: np.ndarray,
    *,
    num_negatives: int | None = 16,
    rng: np.random.Generator | None = None,
    negatives: np.ndarray | None = None,
) -> Tensor:
    """RankNet logistic loss ``mean ln(1 + exp(-(s_pos - s_neg)))``.

    Directed scores are symmetrized by max. For each ground-truth pair,
    ``num_negatives`` negatives are drawn uniformly (with replacement) from the
    unmasked non-ground-truth pairs; ``num_negatives=None`` pairs every
    positive with every negative. ``negatives`` may pin an explicit
    ``[P, K, 2]`` array of negative pairs instead.
    """
    gt = [(min(u, v), max(u, v)) for u, v in ground_truth]
    if not gt:
        raise ValueError("pairwise loss needs at least one ground-truth pair")
    scores = scores if isinstance(scores, Tensor) else Tensor(scores)
    sym = maximum(scores, scores.transpose(1, 0))
    pos = np.array(gt, dtype=np.int64)
    if negatives is None:
        cand = np.triu(mask, 1)
        cand[pos[:, 0], pos[:, 1]] = False
        ci, cj = np.nonzero(cand)
        if not len(ci):
            raise ValueError("no negative candidate pairs")
        if num_negatives is None:
            pick = np.broadcast_to(np.arange(len(ci)), (len(pos), len(ci)))
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            pick = rng.integers(0, len(ci), size=(len(pos), num_negatives))
        negatives = np.stack([ci[pick], cj[pick]], axis=-1)
    negatives = np.asarray(negatives, dtype=np.int64)
    s_pos = index(sym, (pos[:, 0], pos[:, 1]))
    s_neg = index(sym, (negatives[..., 0], negatives[..., 1]))
    diff = s_pos.reshape(len(pos), 1) - s_neg
    return softplus(-diff).mean()


def ranknet_loss(pos_scores, neg_scores) -> float:
    """Plain-float RankNet loss over all (positive, negative) combinations."""
    p = np.asarray(pos_scores, dtype=np.float64).reshape(-1, 1)
    q = np.asarray(neg_scores, dtype=np.float64).reshape(1, -1)
    return float(np.mean(np.logaddexp(0.0, -(p - q))))


def walk_count_mode(e: EgoNet, k: int) -> np.ndarray:
    """Exact length-``k`` directed walk counts computed with the WalkConv machinery.

    Uses ``d = 1``, unit filters on every directed edge, identity MLP, no
    residual and no transpose concatenation, so the result equals ``A^k``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n = e.n
    filt = np.zeros((n, n, 1, 1))
    filt[e.src, e.dst, 0, 0] = 1.0
    filters = Tensor(filt)
    s = Tensor(np.eye(n).reshape(n, n, 1))
    for _ in range(k):
        s = walk_conv(s, filters, None, directed_concat=False, residual=False)
        if np.max(s.data, initial=0.0) > 2.0 ** 53:
            raise OverflowError("walk counts exceed 2^53 and are no longer exact")
    return s.data.reshape(n, n).astype(np.int64)


def symmetric_scores(scores: np.ndarray) -> np.ndarray:
    return np.maximum(scores, scores.T)
