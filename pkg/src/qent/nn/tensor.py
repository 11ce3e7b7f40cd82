"""Reverse-mode autodiff on NumPy arrays.

A Tensor wraps an ndarray plus an optional backward closure. Calling
``backward()`` on a scalar walks the graph in reverse topological order and
accumulates gradients into every reachable tensor that requires them.
Gradients accumulate across calls until ``zero_grad()``.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import DisconnectedGraphError, ShapeMismatchError

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    # -- graph machinery -----------------------------------------------------

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ShapeMismatchError("backward() requires a scalar tensor")
        if self._backward is None and not self.requires_grad:
            raise DisconnectedGraphError(
                "backward() called on a tensor with no graph and no gradient request"
            )
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators -----------------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other, self.dtype))

    def __radd__(self, other):
        return add(_lift(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _lift(other, self.dtype))

    def __rsub__(self, other):
        return sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self.dtype))

    def __rmul__(self, other):
        return mul(_lift(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _lift(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_lift(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def abs(self):
        return tabs(self)


def _lift(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward):
    """Create an op output; parents participate only when grad is enabled."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._backward is not None for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _send(parent, g):
    """Route a gradient contribution into a parent tensor."""
    if parent.requires_grad or parent._backward is not None:
        parent._accumulate(g)


def _unbroadcast(g, shape):
    """Reduce gradient g back to the broadcast source shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise ops ----------------------------------------------------------


def add(a, b):
    def backward(g):
        _send(a, _unbroadcast(g, a.shape))
        _send(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    def backward(g):
        _send(a, _unbroadcast(g, a.shape))
        _send(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    def backward(g):
        _send(a, _unbroadcast(g * b.data, a.shape))
        _send(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def div(a, b):
    def backward(g):
        _send(a, _unbroadcast(g / b.data, a.shape))
        _send(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(a.data / b.data, (a, b), backward)


def neg(a):
    def backward(g):
        _send(a, -g)

    return _make(-a.data, (a,), backward)


def tabs(a):
    sign = np.sign(a.data)

    def backward(g):
        _send(a, g * sign)

    return _make(np.abs(a.data), (a,), backward)


# -- linear algebra -----------------------------------------------------------


def matmul(a, b):
    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _send(a, _unbroadcast(ga, a.shape) if ga.shape != a.shape else ga)
        _send(b, _unbroadcast(gb, b.shape) if gb.shape != b.shape else gb)

    return _make(np.matmul(a.data, b.data), (a, b), backward)


def transpose(a, axes=None):
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)

    def backward(g):
        _send(a, np.transpose(g, inverse))

    return _make(np.transpose(a.data, axes), (a,), backward)


def reshape(a, shape):
    orig = a.shape

    def backward(g):
        _send(a, g.reshape(orig))

    return _make(a.data.reshape(shape), (a,), backward)


def trace(a):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"trace expects a square matrix, got {a.shape}")
    n = a.shape[0]

    def backward(g):
        _send(a, g * np.eye(n, dtype=a.dtype))

    return _make(np.trace(a.data), (a,), backward)


# -- reductions ---------------------------------------------------------------


def tsum(a, axis=None, keepdims=False):
    def backward(g):
        if axis is None:
            _send(a, np.broadcast_to(g, a.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _send(a, np.broadcast_to(g, a.shape).copy())

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a, axis=None, keepdims=False):
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))

    def backward(g):
        if axis is None:
            _send(a, np.broadcast_to(g / count, a.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _send(a, np.broadcast_to(g / count, a.shape).copy())

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward)


# -- structure ----------------------------------------------------------------


def stack(tensors, axis=0):
    tensors = list(tensors)

    def backward(g):
        pieces = np.split(g, len(tensors), axis=axis)
        for t, piece in zip(tensors, pieces):
            _send(t, piece.reshape(t.shape))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def zero_grads(tensors):
    for t in tensors:
        t.zero_grad()
