"""A minimal dense float64 tensor with tape-based reverse-mode differentiation.

Only the operations WalkGNN needs are provided. Every operation records its
parents and a closure mapping the output gradient to parent gradients;
:meth:`Tensor.backward` walks the recorded graph in reverse topological order,
accumulates into ``.grad`` of leaf tensors with ``requires_grad`` and then
frees the tape.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class TapeError(RuntimeError):
    """Backward requested without a recorded forward pass."""


class _OpCounter:
    def __init__(self):
        self.active = 0
        self.counts: dict[str, int] = {}

    def add(self, tag: str, n: int) -> None:
        if self.active:
            self.counts[tag] = self.counts.get(tag, 0) + int(n)


OPS = _OpCounter()


@contextmanager
def count_ops():
    """Count scalar multiply-adds of matrix products issued inside the block, keyed by tag."""
    OPS.active += 1
    before = dict(OPS.counts)
    counts: dict[str, int] = {}
    try:
        yield counts
    finally:
        OPS.active -= 1
        for k, v in OPS.counts.items():
            counts[k] = v - before.get(k, 0)
        if not OPS.active:
            OPS.counts.clear()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_freed", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._freed = False
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    @property
    def tracked(self) -> bool:
        return self.requires_grad or self._backward is not None

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _make(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if any(p.tracked for p in parents):
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self, grad: np.ndarray | None = None) -> None:
        if self._freed or (self._backward is None and not self.requires_grad):
            raise TapeError("backward() called without a recorded forward pass")
        if grad is None:
            if self.data.size != 1:
                raise ValueError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.data)

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.tracked:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad += g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.tracked:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None
                node._freed = True

    # -- operators ------------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)

    def relu(self):
        return relu(self)

    def numpy(self) -> np.ndarray:
        return self.data


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor._make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a: Tensor) -> Tensor:
    return Tensor._make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data
    return Tensor._make(ad * bd, (a, b), lambda g: (_unbroadcast(g * bd, sa), _unbroadcast(g * ad, sb)))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._make(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor, tag: str = "matmul") -> Tensor:
    """2-D matrix product; counts ``m * k * n`` multiply-adds under :func:`count_ops`."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    OPS.add(tag, a.shape[0] * a.shape[1] * b.shape[1])
    ad, bd = a.data, b.data
    return Tensor._make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def linear(x: Tensor, w: Tensor, b: Tensor, tag: str = "linear") -> Tensor:
    """Fused ``x @ w + b`` for 2-D ``x``."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ValueError(f"linear shape mismatch {x.shape} @ {w.shape} + {b.shape}")
    OPS.add(tag, x.shape[0] * x.shape[1] * w.shape[1])
    xd, wd = x.data, w.data
    return Tensor._make(xd @ wd + b.data, (x, w, b), lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0)))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return Tensor._make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor._make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return Tensor._make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return Tensor._make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def softplus(a: Tensor) -> Tensor:
    """``ln(1 + exp(x))`` computed stably."""
    x = a.data
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return Tensor._make(np.logaddexp(0.0, x), (a,), lambda g: (g * sig,))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties send the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data >= b.data
    sa, sb = a.shape, b.shape
    return Tensor._make(
        np.where(take_a, a.data, b.data),
        (a, b),
        lambda g: (_unbroadcast(g * take_a, sa), _unbroadcast(g * ~take_a, sb)),
    )


def tsum(a: Tensor) -> Tensor:
    shape = a.shape
    return Tensor._make(np.sum(a.data), (a,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(a: Tensor) -> Tensor:
    shape, size = a.shape, a.data.size
    return Tensor._make(np.mean(a.data), (a,), lambda g: (np.broadcast_to(g / size, shape).copy(),))


def index(a: Tensor, idx) -> Tensor:
    """Gather ``a[idx]`` (basic or advanced indexing); gradients scatter-add back."""
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor._make(a.data[idx], (a,), back)


def scatter(values: Tensor, shape: tuple[int, ...], idx) -> Tensor:
    """Dense zeros of ``shape`` with ``out[idx] = values``; ``idx`` must not repeat positions."""
    out = np.zeros(shape)
    out[idx] = values.data
    return Tensor._make(out, (values,), lambda g: (g[idx],))
