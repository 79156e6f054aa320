"""Minimal reverse-mode autodiff over float64 numpy arrays.

The tape lives only as long as the Tensors of one training step; nothing is
retained across steps. Only the operations the package's networks need are
implemented.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    for _ in range(extra):
        grad = grad.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """Node in a reverse-mode computation tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        _accumulate(self, np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_t(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return narrow(self, idx)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._parents):
        return
    g = _unbroadcast(np.asarray(g, dtype=np.float64), t.data.shape)
    t.grad = g if t.grad is None else t.grad + g


def _node(data, parents, backward) -> Tensor:
    out = Tensor(data)
    parents = tuple(p for p in parents if p.requires_grad or p._parents)
    if parents:
        out._parents = parents
        out._backward = backward
        out.requires_grad = True
    return out


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    def bw(g):
        _accumulate(a, g)
        _accumulate(b, g)
    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    def bw(g):
        _accumulate(a, g)
        _accumulate(b, -g)
    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    def bw(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)
    return _node(a.data * b.data, (a, b), bw)


def matmul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    def bw(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)
    return _node(a.data @ b.data, (a, b), bw)


def square(a) -> Tensor:
    a = _t(a)
    def bw(g):
        _accumulate(a, 2.0 * a.data * g)
    return _node(a.data ** 2, (a,), bw)


# ---------------------------------------------------------------------------
# nonlinearities


def tanh(a) -> Tensor:
    a = _t(a)
    y = np.tanh(a.data)
    def bw(g):
        _accumulate(a, g * (1.0 - y ** 2))
    return _node(y, (a,), bw)


def sigmoid(a) -> Tensor:
    a = _t(a)
    x = np.atleast_1d(a.data)
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    y = y.reshape(a.data.shape)
    def bw(g):
        _accumulate(a, g * y * (1.0 - y))
    return _node(y, (a,), bw)


def exp(a) -> Tensor:
    a = _t(a)
    y = np.exp(a.data)
    def bw(g):
        _accumulate(a, g * y)
    return _node(y, (a,), bw)


def log(a) -> Tensor:
    a = _t(a)
    def bw(g):
        _accumulate(a, g / a.data)
    return _node(np.log(a.data), (a,), bw)


def clip_floor(a, lo: float) -> Tensor:
    """max(a, lo); the gradient is zero where the floor is active."""
    a = _t(a)
    mask = a.data > lo
    def bw(g):
        _accumulate(a, g * mask)
    return _node(np.maximum(a.data, lo), (a,), bw)


def prelu(a, slope) -> Tensor:
    """PReLU with a learnable slope tensor (broadcastable, typically shape (1,))."""
    a, slope = _t(a), _t(slope)
    pos = a.data > 0
    def bw(g):
        _accumulate(a, g * np.where(pos, 1.0, slope.data))
        _accumulate(slope, g * np.where(pos, 0.0, a.data))
    return _node(np.where(pos, a.data, slope.data * a.data), (a, slope), bw)


# ---------------------------------------------------------------------------
# shape ops


def narrow(a, idx) -> Tensor:
    """Basic slicing (no fancy indexing); gradient scatters back."""
    a = _t(a)
    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        _accumulate(a, full)
    return _node(a.data[idx], (a,), bw)


def reshape(a, shape) -> Tensor:
    a = _t(a)
    old = a.data.shape
    def bw(g):
        _accumulate(a, g.reshape(old))
    return _node(a.data.reshape(shape), (a,), bw)


def concat(parts, axis: int = -1) -> Tensor:
    parts = [_t(p) for p in parts]
    sizes = [p.data.shape[axis] for p in parts]
    def bw(g):
        offset = 0
        for p, s in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis if axis >= 0 else g.ndim + axis] = slice(offset, offset + s)
            _accumulate(p, g[tuple(sl)])
            offset += s
    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)


def take_rows(a, idx) -> Tensor:
    """Pick a[range(B), idx]; used for class-indexed lookups."""
    a = _t(a)
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.data.shape[0])
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, idx), g)
        _accumulate(a, full)
    return _node(a.data[rows, idx], (a,), bw)


# ---------------------------------------------------------------------------
# reductions


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _t(a)
    def bw(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(gg, a.data.shape))
    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _t(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    def bw(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape) / count)
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(gg, a.data.shape) / count)
    return _node(a.data.mean(axis=axis, keepdims=keepdims), (a,), bw)


def cumsum(a, axis: int) -> Tensor:
    a = _t(a)
    def bw(g):
        _accumulate(a, np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis))
    return _node(np.cumsum(a.data, axis=axis), (a,), bw)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = _t(a)
    m = a.data.max(axis=axis, keepdims=True)
    z = np.exp(a.data - m)
    s = z.sum(axis=axis, keepdims=True)
    out = np.log(s) + m
    soft = z / s
    def bw(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        _accumulate(a, gg * soft)
    return _node(out if keepdims else out.squeeze(axis=axis), (a,), bw)


def softmax_np(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Plain-numpy softmax (inference paths and tests)."""
    z = np.exp(logits - logits.max(axis=axis, keepdims=True))
    return z / z.sum(axis=axis, keepdims=True)
