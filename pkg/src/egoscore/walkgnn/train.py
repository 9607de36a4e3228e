"""Training loop and binary checkpoints for WalkGNN."""

from __future__ import annotations

import json
import logging
import math
import struct
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..graph import EgoNet
from .model import ParamStore, WalkGNN, WalkGNNConfig, init_params, pairwise_loss, walkgnn_forward

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"EGOSCKPT"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    num_negatives: int | None = 16
    max_seconds: float | None = None
    shuffle: bool = True
    seed: int = 0
    eval_k: int = 5


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    valid_ndcg: float | None
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int | None = None
    best_valid: float | None = None
    steps: int = 0


def train_step(e: EgoNet, params: ParamStore, cfg: WalkGNNConfig, opt: OptimizerConfig,
               rng: np.random.Generator) -> float:
    params.zero_grad()
    scores = walkgnn_forward(e, params, cfg)
    loss = pairwise_loss(scores, e.ground_truth, e.candidate_mask, num_negatives=opt.num_negatives, rng=rng)
    value = float(loss.data)
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite loss {value} on ego-net {e.ego_global_id} at step {params.step_count + 1}")
    loss.backward()
    params.adam_step(opt.lr, opt.beta1, opt.beta2, opt.eps)
    return value


def train(
    dataset: Sequence[EgoNet],
    cfg: WalkGNNConfig,
    opt: OptimizerConfig = OptimizerConfig(),
    valid: Sequence[EgoNet] | None = None,
    *,
    params: ParamStore | None = None,
    history: TrainHistory | None = None,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> ParamStore:
    """Per-ego-net Adam steps over ``opt.epochs`` epochs.

    Ego-nets without ground truth are skipped. When ``valid`` is given the
    parameters with the best validation NDCG@k are restored at the end.
    Deterministic for a fixed seed.
    """
    from ..evaluation import mean_ndcg

    params = init_params(cfg) if params is None else params
    history = TrainHistory() if history is None else history
    rng = np.random.default_rng(opt.seed)
    usable = [e for e in dataset if e.ground_truth and e.candidate_mask.any()]
    if not usable:
        raise ValueError("no training ego-nets with ground truth")
    best_snap = None
    start = time.monotonic()
    for epoch in range(opt.epochs):
        t0 = time.monotonic()
        order = rng.permutation(len(usable)) if opt.shuffle else np.arange(len(usable))
        losses = []
        out_of_time = False
        for i in order:
            losses.append(train_step(usable[i], params, cfg, opt, rng))
            history.steps += 1
            if opt.max_seconds is not None and time.monotonic() - start > opt.max_seconds:
                out_of_time = True
                break
        valid_ndcg = None
        if valid:
            valid_ndcg = mean_ndcg(WalkGNN(params, cfg), valid, k=opt.eval_k)
            if history.best_valid is None or valid_ndcg > history.best_valid:
                history.best_valid = valid_ndcg
                history.best_epoch = epoch
                best_snap = params.snapshot()
        stats = EpochStats(epoch, float(np.mean(losses)), valid_ndcg, time.monotonic() - t0)
        history.epochs.append(stats)
        log.info("epoch %d loss=%.5f valid_ndcg=%s (%.1fs)", epoch, stats.train_loss,
                 "n/a" if valid_ndcg is None else f"{valid_ndcg:.4f}", stats.seconds)
        if on_epoch is not None:
            on_epoch(stats)
        if out_of_time:
            log.info("time budget reached after %d steps", history.steps)
            break
    if best_snap is not None:
        params.load_snapshot(best_snap)
    return params


def save_checkpoint(path, params: ParamStore, cfg: WalkGNNConfig) -> None:
    """Binary layout (little-endian)::

        magic 'EGOSCKPT' | u32 version | u32 len + JSON config | u32 count
        per parameter: u32 len + utf-8 name | u32 ndim | u64 dims... | float64 data
    """
    header = json.dumps(cfg.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(params)))
        for name, t in params.items():
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", t.data.ndim))
            fh.write(struct.pack(f"<{t.data.ndim}Q", *t.data.shape))
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ParamStore, WalkGNNConfig]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an egoscore checkpoint")
    pos = 8

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, buf, pos)
        pos += struct.calcsize(fmt)
        return vals

    (version,) = take("<I")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = take("<I")
    cfg = WalkGNNConfig.from_dict(json.loads(buf[pos:pos + hlen]))
    pos += hlen
    (count,) = take("<I")
    store = ParamStore()
    for _ in range(count):
        (nlen,) = take("<I")
        name = buf[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = take("<I")
        shape = take(f"<{ndim}Q")
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += 8 * size
        store.add(name, data.astype(np.float64))
    if pos != len(buf):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    expected = init_params(cfg)
    if list(expected) != list(store) or any(expected[k].shape != store[k].shape for k in store):
        raise ValueError(f"{path}: parameters do not match the stored config")
    return store, cfg
