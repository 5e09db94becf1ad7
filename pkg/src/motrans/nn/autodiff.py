"""Reverse-mode automatic differentiation over numpy arrays.

Each op returns a new :class:`Tensor` holding a closure that pushes the
output gradient into its inputs.  Ops are deliberately coarse (a fused
``linear``, ``layer_norm`` and ``cross_entropy``) to keep Python overhead
low at desk scale.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Sequence

import numpy as np

# Per-thread so concurrent evaluations cannot switch each other's mode.
_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (inference)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._prev: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None
        self.name = name

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, name={self.name})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accum(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -other if isinstance(other, Tensor) else -np.asarray(other))

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _result(data: np.ndarray, parents: Sequence[Tensor]) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(p for p in parents if p.requires_grad)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _result(a.data + b.data, (a, b))
    if out.requires_grad:

        def backward():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad, b.shape))

        out._backward = backward
    return out


def scale(x: Tensor, c: float) -> Tensor:
    out = _result(x.data * x.data.dtype.type(c), (x,))
    if out.requires_grad:
        out._backward = lambda: x._accum(out.grad * c)
    return out


def mul(a, b) -> Tensor:
    if isinstance(a, Tensor) and np.isscalar(b):
        return scale(a, b)
    if isinstance(b, Tensor) and np.isscalar(a):
        return scale(b, a)
    a, b = _as_tensor(a), _as_tensor(b)
    out = _result(a.data * b.data, (a, b))
    if out.requires_grad:

        def backward():
            if a.requires_grad:
                a._accum(_unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(out.grad * a.data, b.shape))

        out._backward = backward
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul; operands share leading batch dims."""
    out = _result(np.matmul(a.data, b.data), (a, b))
    if out.requires_grad:

        def backward():
            g = out.grad
            if a.requires_grad:
                a._accum(np.matmul(g, np.swapaxes(b.data, -1, -2)))
            if b.requires_grad:
                b._accum(np.matmul(np.swapaxes(a.data, -1, -2), g))

        out._backward = backward
    return out


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``; ``w`` is (in, out)."""
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    y = x2 @ w.data
    if b is not None:
        y = y + b.data
    parents = (x, w) if b is None else (x, w, b)
    out = _result(y.reshape(*lead, w.shape[1]), parents)
    if out.requires_grad:

        def backward():
            g = out.grad.reshape(-1, w.shape[1])
            if x.requires_grad:
                x._accum((g @ w.data.T).reshape(x.shape))
            if w.requires_grad:
                w._accum(x2.T @ g)
            if b is not None and b.requires_grad:
                b._accum(g.sum(axis=0))

        out._backward = backward
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = _result(x.data.reshape(shape), (x,))
    if out.requires_grad:
        out._backward = lambda: x._accum(out.grad.reshape(x.shape))
    return out


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))
    out = _result(x.data.transpose(axes), (x,))
    if out.requires_grad:
        out._backward = lambda: x._accum(out.grad.transpose(inv))
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = _result(x.data * mask, (x,))
    if out.requires_grad:
        out._backward = lambda: x._accum(out.grad * mask)
    return out


def softmax(x: Tensor, additive_mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; ``additive_mask`` is added to logits first.

    Masked entries should carry a large negative value so they underflow to
    exactly zero weight.
    """
    z = x.data if additive_mask is None else x.data + additive_mask
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype, copy=False)
    out = _result(y, (x,))
    if out.requires_grad:

        def backward():
            g = out.grad
            x._accum(y * (g - (g * y).sum(axis=-1, keepdims=True)))

        out._backward = backward
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = _result(xhat * gamma.data + beta.data, (x, gamma, beta))
    if out.requires_grad:

        def backward():
            g = out.grad
            n = x.shape[-1]
            if gamma.requires_grad:
                gamma._accum((g * xhat).reshape(-1, n).sum(axis=0))
            if beta.requires_grad:
                beta._accum(g.reshape(-1, n).sum(axis=0))
            if x.requires_grad:
                gx = g * gamma.data
                x._accum(
                    inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
                )

        out._backward = backward
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    out = _result(table.data[ids], (table,))
    if out.requires_grad:

        def backward():
            g = np.zeros_like(table.data)
            np.add.at(g, ids.reshape(-1), out.grad.reshape(-1, table.shape[1]))
            table._accum(g)

        out._backward = backward
    return out


def log_softmax_np(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, targets: np.ndarray, pad_id: int | None = 0) -> Tensor:
    """Mean token negative log-likelihood over positions whose target != pad."""
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ValueError(f"logits {logits.shape} do not match targets {targets.shape}")
    v = logits.shape[-1]
    flat_t = targets.reshape(-1)
    keep = np.ones_like(flat_t, dtype=bool) if pad_id is None else flat_t != pad_id
    count = int(keep.sum())
    if count == 0:
        raise ValueError("cross_entropy over an empty (all-pad) target")
    lsm = log_softmax_np(logits.data.reshape(-1, v))
    rows = np.nonzero(keep)[0]
    loss = -lsm[rows, flat_t[rows]].sum() / count
    out = _result(np.asarray(loss, dtype=logits.dtype), (logits,))
    if out.requires_grad:

        def backward():
            p = np.exp(lsm)
            p[rows, flat_t[rows]] -= 1.0
            p[~keep] = 0.0
            logits._accum((p * (out.grad / count)).reshape(logits.shape))

        out._backward = backward
    return out
