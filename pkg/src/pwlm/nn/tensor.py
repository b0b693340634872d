"""Minimal reverse-mode autodiff over dense numpy arrays.

A Tensor wraps one ndarray. Operations record a backward closure and
their parent tensors; `backward()` on a scalar loss walks the graph in
reverse topological order and accumulates gradients into the leaves.
Arrays are float32 by default; passing float64 leaves everywhere gives
the 64-bit reference mode used by the gradient oracles.
"""

from __future__ import annotations

from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from ..errors import GraphError, ShapeMismatch, TargetOutOfRange
from . import functional as F

_grad_enabled = True


class no_grad:
    """Context manager that suspends graph recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_spent")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: Tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._spent = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        backward(self)


def param(data, dtype=np.float32) -> Tensor:
    """A leaf tensor that receives gradients."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def _make_node(data, parents: Tuple[Tensor, ...], backward_fn) -> Tensor:
    if not _grad_enabled or not any(p.requires_grad for p in parents):
        return Tensor(data)
    out = Tensor(data, requires_grad=True)
    out._parents = parents
    out._backward_fn = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's .grad.

    Raises GraphError when called a second time on the same recorded
    forward pass.
    """
    if loss.data.size != 1:
        raise ShapeMismatch("backward() requires a scalar loss")
    if loss._spent:
        raise GraphError("backward() already ran on this graph; run a new forward")
    loss._spent = True
    if not loss.requires_grad:
        return

    topo = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if id(parent) in grads:
                grads[id(parent)] += pg
            else:
                grads[id(parent)] = pg


def grads_of(params: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    """Gradient arrays by name; parameters untouched by the loss get zeros."""
    return {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }


def zero_grads(params: Iterable[Tensor]) -> None:
    for t in params:
        t.grad = None


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def _const(x, like: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=like.dtype)


def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out = a.data + b.data
        return _make_node(out, (a, b), lambda g: (
            _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))
    bc = _const(b, a.data) if np.asarray(b).dtype.kind == "f" else np.asarray(b)
    out = a.data + bc
    return _make_node(out, (a,), lambda g: (_unbroadcast(g, a.data.shape),))


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        out = a.data * b.data
        return _make_node(out, (a, b), lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape)))
    bc = _const(b, a.data)
    out = a.data * bc
    return _make_node(out, (a,), lambda g: (_unbroadcast(g * bc, a.data.shape),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _make_node(out, (a, b), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return _make_node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    out = np.swapaxes(a.data, ax1, ax2)
    return _make_node(out, (a,), lambda g: (np.swapaxes(g, ax1, ax2),))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    out = table.data[ids]

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        return (gt,)

    return _make_node(out, (table,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    y, xhat, inv_std = F.layer_norm_np(x.data, gain.data, bias.data, eps)

    def bwd(g):
        d = x.data.shape[-1]
        lead = tuple(range(g.ndim - 1))
        g_gain = np.sum(g * xhat, axis=lead)
        g_bias = np.sum(g, axis=lead)
        gx_hat = g * gain.data
        gx = inv_std * (
            gx_hat
            - np.mean(gx_hat, axis=-1, keepdims=True)
            - xhat * np.mean(gx_hat * xhat, axis=-1, keepdims=True)
        )
        return gx.astype(x.data.dtype, copy=False), g_gain, g_bias

    return _make_node(y, (x, gain, bias), bwd)


def gelu(x: Tensor) -> Tensor:
    out = F.gelu_np(x.data)
    return _make_node(out, (x,), lambda g: (g * F.gelu_grad_np(x.data),))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = F.softmax_np(x.data, axis=axis)

    def bwd(g):
        dot = np.sum(g * y, axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _make_node(y, (x,), bwd)


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator]) -> Tensor:
    """Inverted dropout; identity when p == 0."""
    if p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout with p > 0 requires an RNG")
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return _make_node(x.data * keep, (x,), lambda g: (g * keep,))


def tsum(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)
    return _make_node(out, (a,), lambda g: (np.broadcast_to(g, a.data.shape).copy(),))


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    out = np.asarray(a.data.mean(), dtype=a.data.dtype)
    return _make_node(out, (a,), lambda g: (
        np.broadcast_to(g / n, a.data.shape).astype(a.data.dtype, copy=True),))


def cross_entropy(logits: Tensor, targets: np.ndarray, ignore_index: int = -1) -> Tensor:
    """Mean negative log-softmax probability of the targets.

    `logits` is [N, V]; `targets` holds ids in [0, V) or ignore_index.
    Ignored positions contribute neither loss nor gradient.
    """
    targets = np.asarray(targets)
    if logits.data.ndim != 2 or targets.shape != (logits.data.shape[0],):
        raise ShapeMismatch(
            f"cross_entropy expects [N, V] logits with [N] targets, got "
            f"{logits.data.shape} and {targets.shape}"
        )
    vocab = logits.data.shape[1]
    valid = targets != ignore_index
    if np.any((targets < 0) & valid) or np.any(targets >= vocab):
        raise TargetOutOfRange(f"targets must lie in [0, {vocab}) or be {ignore_index}")
    n_valid = int(valid.sum())
    logp = F.log_softmax_np(logits.data, axis=-1)
    if n_valid == 0:
        return _make_node(np.asarray(0.0, dtype=logits.data.dtype), (logits,),
                          lambda g: (np.zeros_like(logits.data),))
    rows = np.nonzero(valid)[0]
    picked = logp[rows, targets[rows]]
    loss = np.asarray(-picked.mean(), dtype=logits.data.dtype)

    def bwd(g):
        grad = np.zeros_like(logits.data)
        p = np.exp(logp[rows])
        p[np.arange(rows.size), targets[rows]] -= 1.0
        grad[rows] = p * (g / n_valid)
        return (grad,)

    return _make_node(loss, (logits,), bwd)
