"""Minimal reverse-mode tape over numpy arrays.

Covers exactly the operations the recurrent policy/value network needs
(dense layers, a gated recurrent cell unrolled through time, masked
categorical heads, and the PPO/REINFORCE/BC loss surfaces). Every op
accepts plain ndarrays or Var nodes; with no Var among the inputs the raw
numpy result is returned, so the same forward code serves both gradient
recording and fast inference.
"""

from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("value", "grad", "_parents", "_vjp")

    def __init__(self, value, parents=(), vjp=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


def val(x):
    return x.value if isinstance(x, Var) else x


def _is_var(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


def _accumulate(node: Var, g: np.ndarray):
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += g


def accumulate(node: Var, g: np.ndarray):
    """Add into a Var's gradient buffer (for custom fused ops)."""
    _accumulate(node, g)


def sigmoid_np(a: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function on raw arrays."""
    ea = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + ea), ea / (1.0 + ea))


def backward(root: Var, seed=None):
    """Reverse accumulation from root; fills .grad on every reachable Var."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if isinstance(p, Var) and id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value) if seed is None else np.asarray(seed, dtype=float)
    for node in reversed(order):
        if node._vjp is not None and node.grad is not None:
            node._vjp(node.grad)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to the given shape (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, out, da, db):
    parents = tuple(x for x in (a, b) if isinstance(x, Var))

    def vjp(g):
        if isinstance(a, Var):
            _accumulate(a, _unbroadcast(da(g), a.value.shape))
        if isinstance(b, Var):
            _accumulate(b, _unbroadcast(db(g), b.value.shape))

    return Var(out, parents, vjp)


def add(a, b):
    out = val(a) + val(b)
    if not _is_var(a, b):
        return out
    return _binary(a, b, out, lambda g: g, lambda g: g)


def sub(a, b):
    out = val(a) - val(b)
    if not _is_var(a, b):
        return out
    return _binary(a, b, out, lambda g: g, lambda g: -g)


def mul(a, b):
    av, bv = val(a), val(b)
    out = av * bv
    if not _is_var(a, b):
        return out
    return _binary(a, b, out, lambda g: g * bv, lambda g: g * av)


def neg(a):
    out = -val(a)
    if not _is_var(a):
        return out

    def vjp(g):
        _accumulate(a, -g)

    return Var(out, (a,), vjp)


def matmul(a, b):
    av, bv = val(a), val(b)
    out = av @ bv
    if not _is_var(a, b):
        return out
    return _binary(a, b, out, lambda g: g @ bv.T, lambda g: av.T @ g)


def _unary(a, out, dfn):
    def vjp(g):
        _accumulate(a, dfn(g))

    return Var(out, (a,), vjp)


def tanh(a):
    out = np.tanh(val(a))
    if not _is_var(a):
        return out
    return _unary(a, out, lambda g: g * (1.0 - out * out))


def sigmoid(a):
    av = val(a)
    out = np.where(av >= 0, 1.0 / (1.0 + np.exp(-np.abs(av))), np.exp(-np.abs(av)) / (1.0 + np.exp(-np.abs(av))))
    if not _is_var(a):
        return out
    return _unary(a, out, lambda g: g * out * (1.0 - out))


def relu(a):
    av = val(a)
    out = np.maximum(av, 0.0)
    if not _is_var(a):
        return out
    return _unary(a, out, lambda g: g * (av > 0))


def exp(a):
    out = np.exp(val(a))
    if not _is_var(a):
        return out
    return _unary(a, out, lambda g: g * out)


def log(a):
    av = val(a)
    out = np.log(av)
    if not _is_var(a):
        return out
    return _unary(a, out, lambda g: g / av)


def square(a):
    av = val(a)
    out = av * av
    if not _is_var(a):
        return out
    return _unary(a, out, lambda g: g * 2.0 * av)


def asum(a, axis=None, keepdims=False):
    av = val(a)
    out = av.sum(axis=axis, keepdims=keepdims)
    if not _is_var(a):
        return out

    def vjp(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, av.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(gg, av.shape).copy())

    return Var(out, (a,), vjp)


def amean(a, axis=None, keepdims=False):
    av = val(a)
    n = av.size if axis is None else av.shape[axis]
    s = asum(a, axis=axis, keepdims=keepdims)
    if not _is_var(a):
        return s / n
    return mul(s, 1.0 / n)


def maximum(a, b):
    av, bv = val(a), val(b)
    out = np.maximum(av, bv)
    if not _is_var(a, b):
        return out
    take_a = av >= bv
    return _binary(a, b, out, lambda g: g * take_a, lambda g: g * ~take_a)


def minimum(a, b):
    av, bv = val(a), val(b)
    out = np.minimum(av, bv)
    if not _is_var(a, b):
        return out
    take_a = av <= bv
    return _binary(a, b, out, lambda g: g * take_a, lambda g: g * ~take_a)


def clip(a, lo: float, hi: float):
    av = val(a)
    out = np.clip(av, lo, hi)
    if not _is_var(a):
        return out
    inside = (av > lo) & (av < hi)
    return _unary(a, out, lambda g: g * inside)


def where(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    av, bv = val(a), val(b)
    out = np.where(cond, av, bv)
    if not _is_var(a, b):
        return out
    return _binary(a, b, out, lambda g: g * cond, lambda g: g * ~cond)


def concat(parts, axis=-1):
    vals = [val(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    if not _is_var(*parts):
        return out
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)
    parents = tuple(p for p in parts if isinstance(p, Var))

    def vjp(g):
        for p, o, s in zip(parts, offsets[:-1], sizes):
            if isinstance(p, Var):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(o, o + s)
                _accumulate(p, g[tuple(sl)])

    return Var(out, parents, vjp)


def cols(a, start: int, stop: int):
    """Column slice a[:, start:stop] (2-D); gradient written in place."""
    av = val(a)
    out = av[:, start:stop]
    if not _is_var(a):
        return out

    def vjp(g):
        if a.grad is None:
            a.grad = np.zeros_like(av)
        a.grad[:, start:stop] += g

    return Var(out, (a,), vjp)


def rows(a, start: int, stop: int):
    """Row slice a[start:stop]; gradient written in place."""
    av = val(a)
    out = av[start:stop]
    if not _is_var(a):
        return out

    def vjp(g):
        if a.grad is None:
            a.grad = np.zeros_like(av)
        a.grad[start:stop] += g

    return Var(out, (a,), vjp)


def reshape(a, shape):
    av = val(a)
    out = av.reshape(shape)
    if not _is_var(a):
        return out
    return _unary(a, out, lambda g: g.reshape(av.shape))


def stack(parts, axis=0):
    vals = [val(p) for p in parts]
    out = np.stack(vals, axis=axis)
    if not _is_var(*parts):
        return out
    parents = tuple(p for p in parts if isinstance(p, Var))

    def vjp(g):
        pieces = np.moveaxis(g, axis, 0)
        for p, piece in zip(parts, pieces):
            if isinstance(p, Var):
                _accumulate(p, piece)

    return Var(out, parents, vjp)


MASK_NEG = -1e30  # finite stand-in for -inf; exp underflows to exactly 0


def masked_log_softmax(logits, mask=None):
    """Log-probabilities over the admissible subset of the last axis.

    Masked entries receive MASK_NEG (probability exactly 0, no gradient).
    mask is a constant boolean array broadcastable to the logits.
    """
    z = val(logits)
    if mask is None:
        mask_arr = np.ones(z.shape, dtype=bool)
    else:
        mask_arr = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
    if not mask_arr.any(axis=-1).all():
        raise ValueError("mask admits no action for at least one row")
    zm = np.where(mask_arr, z, -np.inf)
    zmax = zm.max(axis=-1, keepdims=True)
    ez = np.exp(zm - zmax)
    denom = ez.sum(axis=-1, keepdims=True)
    logp = np.where(mask_arr, zm - zmax - np.log(denom), MASK_NEG)
    if not _is_var(logits):
        return logp
    probs = ez / denom

    def vjp(g):
        gm = g * mask_arr
        _accumulate(logits, gm - probs * gm.sum(axis=-1, keepdims=True))

    return Var(logp, (logits,), vjp)


def take_along_last(a, idx):
    """a[..., idx] picked per row; idx is a constant integer array."""
    av = val(a)
    idx = np.asarray(idx, dtype=int)
    out = np.take_along_axis(av, idx[..., None], axis=-1)[..., 0]
    if not _is_var(a):
        return out

    def vjp(g):
        full = np.zeros_like(av)
        np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
        _accumulate(a, full)

    return Var(out, (a,), vjp)


def bce_with_logits(logits, labels):
    """Elementwise binary cross entropy on logits (numerically stable)."""
    z = val(logits)
    y = np.asarray(labels, dtype=float)
    out = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    if not _is_var(logits):
        return out
    s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return _unary(logits, out, lambda g: g * (s - y))
