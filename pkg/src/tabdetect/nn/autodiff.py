"""Reverse-mode automatic differentiation over dense float64 arrays.

Each op records its parents and a closure that routes the output
gradient backward. backward() walks the recorded graph in reverse
topological order. Everything is double precision so finite-difference
checks can be held to tight tolerances.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Optional, Sequence

import numpy as np

from ..errors import GraphError, ShapeError

# thread-local so concurrent grid jobs cannot switch each other's mode
_recording = threading.local()


def _grad_enabled() -> bool:
    return getattr(_recording, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording (inference paths)."""
    previous = _grad_enabled()
    _recording.enabled = False
    try:
        yield
    finally:
        _recording.enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_visited")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self._visited = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, Tensor(-1.0)))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the parent's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _node(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 1 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {a.data.shape} @ {b.data.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accumulate(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accumulate(b, _unbroadcast(gb, b.data.shape))

    return _node(out_data, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * (a.data > 0.0))

    return _node(out_data, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(a.data.shape))

    return _node(out_data, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(axes)
    out_data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.transpose(g, inverse))

    return _node(out_data, (a,), backward)


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                _accumulate(p, g[tuple(index)])

    return _node(out_data, tuple(parts), backward)


def take(a: Tensor, index, axis: int) -> Tensor:
    """Select one slice along an axis (e.g. the CLS position)."""
    a = _as_tensor(a)
    out_data = np.take(a.data, index, axis=axis)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            sel = [slice(None)] * a.data.ndim
            sel[axis] = index
            full[tuple(sel)] = g
            _accumulate(a, full)

    return _node(out_data, (a,), backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup: table[V, d] indexed by integer ids of any shape."""
    ids = np.asarray(ids)
    out_data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, g)

    return _node(out_data, (table,), backward)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, numerically stable."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    out_data = exp / exp.sum(axis=-1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * out_data).sum(axis=-1, keepdims=True)
            _accumulate(a, out_data * (g - inner))

    return _node(out_data, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    a = _as_tensor(a)
    n = a.data.shape[-1]
    mean = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mean
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    normed = centered * inv
    out_data = normed * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            _accumulate(gain, _unbroadcast(g * normed, gain.data.shape))
        if bias.requires_grad:
            _accumulate(bias, _unbroadcast(g, bias.data.shape))
        if a.requires_grad:
            gx = g * gain.data
            term = n * gx - gx.sum(axis=-1, keepdims=True)
            term -= normed * (gx * normed).sum(axis=-1, keepdims=True)
            _accumulate(a, inv / n * term)

    return _node(out_data, (a, gain, bias), backward)


def mean_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out_data = np.asarray(a.data.mean())

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.full_like(a.data, g / a.data.size))

    return _node(out_data, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out_data = np.asarray(a.data.sum())

    def backward(g):
        if a.requires_grad:
            _accumulate(a, np.full_like(a.data, g))

    return _node(out_data, (a,), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity at rate 0."""
    if rate <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    return mul(a, Tensor(keep))


def backward(loss: Tensor) -> None:
    """Populate grads of every tensor reachable from a scalar loss."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._visited:
        raise GraphError("backward already ran on this graph; build a fresh forward pass")
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    seen = set()
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        node._visited = True
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
