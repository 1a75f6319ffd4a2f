"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`GradTape` records every operation whose inputs depend on a
trainable :class:`Tensor`; :meth:`GradTape.gradient` replays the record in
reverse.  All functions in this module also accept plain ndarrays, in which
case they compute the value with numpy and return an ndarray, so model code
can be written once and used for both inference and training.

Subgradient conventions: ``relu'(0) = 1``, ``leaky_relu'(0) = 1``,
``abs'(0) = 0``, ``maximum`` routes to the first argument on ties, and
group maxima route to the lowest index.
"""
from __future__ import annotations

import threading

import numpy as np
from scipy import special

from .errors import UnrecordedNode

_local = threading.local()


def _tapes():
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


class Tensor:
    __slots__ = ("value", "tracked", "parents")
    __array_priority__ = 100.0
    __array_ufunc__ = None  # make ndarray operators defer to Tensor

    def __init__(self, value, requires_grad=False):
        self.value = np.asarray(value, dtype=float)
        self.tracked = bool(requires_grad)
        self.parents = ()

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Tensor({self.value!r}, tracked={self.tracked})"

    def detach(self):
        return self.value

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return swapaxes(self, -1, -2)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


class GradTape:
    """Records tracked operations; use as a context manager."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self._ids: set[int] = set()

    def __enter__(self):
        _tapes().append(self)
        return self

    def __exit__(self, *exc):
        _tapes().remove(self)
        return False

    def _record(self, node):
        self.nodes.append(node)
        self._ids.add(id(node))

    def gradient(self, loss: Tensor, sources):
        """Gradients of scalar ``loss`` with respect to each tensor in ``sources``."""
        if not isinstance(loss, Tensor) or id(loss) not in self._ids:
            raise UnrecordedNode("loss was not recorded on this tape")
        if loss.value.size != 1:
            raise ValueError("loss must be a scalar")
        grads = {id(loss): np.ones_like(loss.value)}
        stop = self.nodes.index(loss)
        for node in reversed(self.nodes[: stop + 1]):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            for parent, vjp in node.parents:
                key = id(parent)
                contrib = vjp(g)
                grads[key] = grads[key] + contrib if key in grads else contrib
        out = []
        for s in sources:
            g = grads.get(id(s))
            out.append(np.zeros_like(s.value) if g is None else np.asarray(g, dtype=float).reshape(s.shape))
        return out


def grad(tape: GradTape, loss: Tensor, params):
    return tape.gradient(loss, params)


def value(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=float)


def is_tensor(x):
    return isinstance(x, Tensor)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _node(val, inputs):
    """Wrap ``val``; ``inputs`` is a sequence of (operand, vjp) pairs."""
    if not any(isinstance(x, Tensor) for x, _ in inputs):
        return val
    out = Tensor(val)
    parents = tuple((x, f) for x, f in inputs if isinstance(x, Tensor) and x.tracked)
    if parents:
        out.tracked = True
        out.parents = parents
        for tape in _tapes():
            tape._record(out)
    return out


def add(a, b):
    va, vb = value(a), value(b)
    v = va + vb
    return _node(v, [(a, lambda g: _unbroadcast(g, va.shape)), (b, lambda g: _unbroadcast(g, vb.shape))])


def sub(a, b):
    va, vb = value(a), value(b)
    v = va - vb
    return _node(v, [(a, lambda g: _unbroadcast(g, va.shape)), (b, lambda g: _unbroadcast(-g, vb.shape))])


def mul(a, b):
    va, vb = value(a), value(b)
    v = va * vb
    return _node(v, [(a, lambda g: _unbroadcast(g * vb, va.shape)), (b, lambda g: _unbroadcast(g * va, vb.shape))])


def div(a, b):
    va, vb = value(a), value(b)
    v = va / vb
    return _node(
        v,
        [
            (a, lambda g: _unbroadcast(g / vb, va.shape)),
            (b, lambda g: _unbroadcast(-g * va / (vb * vb), vb.shape)),
        ],
    )


def power(a, p: float):
    va = value(a)
    v = va**p
    return _node(v, [(a, lambda g: g * p * va ** (p - 1))])


def square(a):
    va = value(a)
    return _node(va * va, [(a, lambda g: 2.0 * g * va)])


def matmul(a, b):
    va, vb = value(a), value(b)
    v = va @ vb

    def ga(g):
        if vb.ndim == 1:
            r = np.multiply.outer(g, vb)
        else:
            r = g @ np.swapaxes(vb, -1, -2)
        return _unbroadcast(r, va.shape)

    def gb(g):
        if va.ndim == 1:
            r = np.multiply.outer(va, g)
        else:
            r = np.swapaxes(va, -1, -2) @ (g if g.ndim > 1 else g[..., None])
            if g.ndim == 1:
                r = r[..., 0]
        return _unbroadcast(r, vb.shape)

    return _node(v, [(a, ga), (b, gb)])


def sum_(a, axis=None, keepdims=False):
    va = value(a)
    v = va.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, va.shape).copy()

    return _node(v, [(a, vjp)])


def mean(a, axis=None, keepdims=False):
    va = value(a)
    count = va.size if axis is None else np.prod([va.shape[i] for i in np.atleast_1d(axis)])
    return div(sum_(a, axis, keepdims), float(count))


def exp(a):
    va = value(a)
    v = np.exp(va)
    return _node(v, [(a, lambda g: g * v)])


def log(a):
    va = value(a)
    return _node(np.log(va), [(a, lambda g: g / va)])


def sqrt(a):
    va = value(a)
    v = np.sqrt(va)
    return _node(v, [(a, lambda g: g * 0.5 / np.where(v > 0, v, np.inf))])


def abs_(a):
    va = value(a)
    return _node(np.abs(va), [(a, lambda g: g * np.sign(va))])


def erf(a):
    va = value(a)
    return _node(special.erf(va), [(a, lambda g: g * (2.0 / np.sqrt(np.pi)) * np.exp(-va * va))])


def arctan(a):
    va = value(a)
    return _node(np.arctan(va), [(a, lambda g: g / (1.0 + va * va))])


def tanh(a):
    v = np.tanh(value(a))
    return _node(v, [(a, lambda g: g * (1.0 - v * v))])


def normal_cdf(a):
    va = value(a)
    return _node(special.ndtr(va), [(a, lambda g: g * np.exp(-0.5 * va * va) / np.sqrt(2.0 * np.pi))])


def normal_pdf(a):
    va = value(a)
    v = np.exp(-0.5 * va * va) / np.sqrt(2.0 * np.pi)
    return _node(v, [(a, lambda g: -g * va * v)])


def sigmoid(a):
    v = special.expit(value(a))
    return _node(v, [(a, lambda g: g * v * (1.0 - v))])


def relu(a):
    va = value(a)
    mask = va >= 0
    return _node(np.where(mask, va, 0.0), [(a, lambda g: g * mask)])


def leaky_relu(a, slope):
    va = value(a)
    d = np.where(va >= 0, 1.0, slope)
    return _node(va * d, [(a, lambda g: g * d)])


def maximum(a, b):
    va, vb = value(a), value(b)
    first = va >= vb
    v = np.where(first, va, vb)
    return _node(
        v,
        [
            (a, lambda g: _unbroadcast(g * first, va.shape)),
            (b, lambda g: _unbroadcast(g * ~first, vb.shape)),
        ],
    )


def where(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    va, vb = value(a), value(b)
    v = np.where(cond, va, vb)
    return _node(
        v,
        [
            (a, lambda g: _unbroadcast(np.where(cond, g, 0.0), va.shape)),
            (b, lambda g: _unbroadcast(np.where(cond, 0.0, g), vb.shape)),
        ],
    )


def clip(a, lo, hi):
    va = value(a)
    inside = (va >= (-np.inf if lo is None else lo)) & (va <= (np.inf if hi is None else hi))
    return _node(np.clip(va, lo, hi), [(a, lambda g: g * inside)])


def getitem(a, idx):
    va = value(a)
    v = va[idx]

    def vjp(g):
        out = np.zeros_like(va)
        np.add.at(out, idx, g)
        return out

    return _node(v, [(a, vjp)])


def reshape(a, shape):
    va = value(a)
    return _node(va.reshape(shape), [(a, lambda g: g.reshape(va.shape))])


def swapaxes(a, i, j):
    va = value(a)
    return _node(np.swapaxes(va, i, j), [(a, lambda g: np.swapaxes(g, i, j))])


def take_along_axis(a, idx, axis):
    va = value(a)
    v = np.take_along_axis(va, idx, axis)

    def vjp(g):
        out = np.zeros_like(va)
        _scatter_add(out, idx, g, axis)
        return out

    return _node(v, [(a, vjp)])


def _scatter_add(out, idx, g, axis):
    axis = axis % out.ndim
    grids = list(np.meshgrid(*[np.arange(s) for s in idx.shape], indexing="ij"))
    grids[axis] = idx
    np.add.at(out, tuple(grids), g)


def group_max_index(x, group_size: int):
    """Index (within each group of the last axis) of the max, lowest index on ties."""
    vx = value(x)
    groups = vx.reshape(vx.shape[:-1] + (vx.shape[-1] // group_size, group_size))
    return np.argmax(groups, axis=-1)


def group_take(x, idx, group_size: int):
    """Select ``idx`` within each consecutive group of ``group_size`` on the last axis."""
    vx = value(x)
    shape = vx.shape[:-1] + (vx.shape[-1] // group_size, group_size)
    grouped = reshape(x, shape)
    picked = take_along_axis(grouped, idx[..., None], -1)
    return reshape(picked, shape[:-1])


def stack(items, axis=0):
    vals = [value(x) for x in items]
    v = np.stack(vals, axis=axis)
    pairs = []
    for i, x in enumerate(items):
        pairs.append((x, lambda g, i=i: np.take(g, i, axis=axis)))
    return _node(v, pairs)


def diagonal(a):
    """Diagonal over the last two axes."""
    va = value(a)
    n = va.shape[-1]
    v = np.diagonal(va, axis1=-2, axis2=-1).copy()

    def vjp(g):
        return g[..., :, None] * np.eye(n)

    return _node(v, [(a, vjp)])
