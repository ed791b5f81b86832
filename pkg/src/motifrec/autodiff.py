"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

The training objective chains sparse propagation, cosine attention, softmax
fusion and several contrastive terms, so gradients are obtained by taping
the primitive operations listed here and replaying them in reverse. Forward
creation order is a topological order of the graph, which is what the
backward sweep relies on: each reachable node is visited exactly once, in
reverse topological order.

Values are always float64; sparse operands enter only as constants through
:func:`spmm`.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Skip graph construction inside the block (value-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A graph node: an ndarray value plus the plumbing to backpropagate."""

    __slots__ = ("value", "grad", "parents", "vjp", "requires_grad", "name")

    def __init__(self, value, parents=(), vjp=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        if not _grad_enabled:
            parents, vjp, requires_grad = (), None, False
        self.parents = tuple(parents)
        self.vjp = vjp  # callable(grad_out) -> tuple of grads aligned with parents
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in self.parents
        )
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def item(self):
        return float(self.value)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.value.shape}{tag}, grad={self.requires_grad})"

    # operator sugar; every operator defers to a primitive below
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, name=None):
    """Wrap an array as a constant Tensor; Tensors pass through unchanged."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x, name=name)


def parameter(value, name=None):
    """A leaf tensor that accumulates gradients."""
    return Tensor(np.array(value, dtype=np.float64, copy=True),
                  requires_grad=True, name=name)


def is_tensor(x):
    return isinstance(x, Tensor)


def unwrap(out, *inputs):
    """Return ``out.value`` when no input was a Tensor, else ``out`` itself.

    Lets one code path serve both the differentiable pipeline and plain
    numpy callers (tests, evaluation).
    """
    if any(isinstance(x, Tensor) for x in inputs):
        return out
    return out.value


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` to undo numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def topo_order(root):
    """All tensors reachable from ``root`` through grad-requiring edges,
    parents before children."""
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
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Reverse sweep from a scalar loss; fills ``.grad`` on reachable tensors.

    Tensors not connected to the loss keep ``grad is None`` (read as zero).
    """
    if loss.value.size != 1:
        raise ValueError("backward expects a scalar loss")
    order = topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.grad is None or node.vjp is None:
            continue
        for parent, g in zip(node.parents, node.vjp(node.grad)):
            if g is None or not parent.requires_grad:
                continue
            g = np.asarray(g, dtype=np.float64)
            if parent.grad is None:
                parent.grad = g.copy() if g.base is not None else g
            else:
                parent.grad = parent.grad + g
    return loss


def grad_of(t):
    """Gradient of a tensor after backward(); zeros when disconnected."""
    if t.grad is None:
        return np.zeros_like(t.value)
    return t.grad


# ---------------------------------------------------------------------------
# primitives


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_val = a.value + b.value

    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return Tensor(out_val, (a, b), vjp)


def neg(a):
    a = as_tensor(a)
    return Tensor(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_val = a.value * b.value
    av, bv = a.value, b.value

    def vjp(g):
        ga = _unbroadcast(g * bv, av.shape) if a.requires_grad else None
        gb = _unbroadcast(g * av, bv.shape) if b.requires_grad else None
        return ga, gb

    return Tensor(out_val, (a, b), vjp)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    out_val = av / bv

    def vjp(g):
        ga = _unbroadcast(g / bv, av.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * av / (bv * bv), bv.shape) if b.requires_grad else None
        return ga, gb

    return Tensor(out_val, (a, b), vjp)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    out_val = av @ bv

    def vjp(g):
        ga = g @ bv.T if a.requires_grad else None
        gb = av.T @ g if b.requires_grad else None
        return ga, gb

    return Tensor(out_val, (a, b), vjp)


def transpose(a):
    a = as_tensor(a)
    return Tensor(a.value.T, (a,), lambda g: (g.T,))


def spmm(A, x):
    """Constant sparse matrix times dense tensor: ``A @ x``.

    ``A`` is any scipy sparse matrix; the transpose used in the backward
    pass is a zero-copy view.
    """
    x = as_tensor(x)
    out_val = A @ x.value

    def vjp(g):
        return (A.T @ g,)

    return Tensor(out_val, (x,), vjp)


def take_rows(x, idx):
    """Row gather ``x[idx]``; duplicate indices accumulate in the backward."""
    x = as_tensor(x)
    idx = np.asarray(idx)
    out_val = x.value[idx]

    def vjp(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, idx, g)
        return (gx,)

    return Tensor(out_val, (x,), vjp)


def take_along_rows(x, idx):
    """Per-column row gather: ``out[i, j] = x[idx[i, j], j]``."""
    x = as_tensor(x)
    idx = np.asarray(idx)
    out_val = np.take_along_axis(x.value, idx, axis=0)
    cols = np.broadcast_to(np.arange(x.value.shape[1]), idx.shape)

    def vjp(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, (idx, cols), g)
        return (gx,)

    return Tensor(out_val, (x,), vjp)


def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out_val = x.value.sum(axis=axis, keepdims=keepdims)
    shape = x.value.shape

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, shape).copy(),)

    return Tensor(out_val, (x,), vjp)


def mean_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    n = x.value.size if axis is None else x.value.shape[axis]
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / n)


def log(x):
    x = as_tensor(x)
    xv = x.value
    return Tensor(np.log(xv), (x,), lambda g: (g / xv,))


def exp(x):
    x = as_tensor(x)
    out_val = np.exp(x.value)
    return Tensor(out_val, (x,), lambda g: (g * out_val,))


def sqrt(x):
    x = as_tensor(x)
    out_val = np.sqrt(x.value)
    return Tensor(out_val, (x,), lambda g: (g * 0.5 / out_val,))


def clip_min(x, floor):
    """max(x, floor) with subgradient 0 on the clipped side."""
    x = as_tensor(x)
    xv = x.value
    mask = xv > floor
    return Tensor(np.maximum(xv, floor), (x,), lambda g: (g * mask,))


def relu(x):
    return clip_min(x, 0.0)


def logsigmoid(x):
    """Numerically stable log(sigmoid(x))."""
    x = as_tensor(x)
    xv = x.value
    out_val = np.minimum(xv, 0.0) - np.log1p(np.exp(-np.abs(xv)))

    def vjp(g):
        return (g * _sigmoid(-xv),)  # d/dx log sigmoid(x) = sigmoid(-x)

    return Tensor(out_val, (x,), vjp)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logsumexp(x, axis):
    x = as_tensor(x)
    xv = x.value
    m = xv.max(axis=axis, keepdims=True)
    shifted = np.exp(xv - m)
    total = shifted.sum(axis=axis, keepdims=True)
    out_val = np.squeeze(m + np.log(total), axis=axis)

    def vjp(g):
        return (np.expand_dims(g, axis) * (shifted / total),)

    return Tensor(out_val, (x,), vjp)


def softmax(x, axis):
    x = as_tensor(x)
    xv = x.value
    shifted = np.exp(xv - xv.max(axis=axis, keepdims=True))
    y = shifted / shifted.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return Tensor(y, (x,), vjp)


def where(mask, a, b):
    """Constant boolean routing: mask picks from ``a``, else from ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    out_val = np.where(mask, a.value, b.value)

    def vjp(g):
        ga = _unbroadcast(np.where(mask, g, 0.0), a.value.shape) if a.requires_grad else None
        gb = _unbroadcast(np.where(mask, 0.0, g), b.value.shape) if b.requires_grad else None
        return ga, gb

    return Tensor(out_val, (a, b), vjp)


def stack_cols(tensors):
    """Stack 1-D tensors of equal length into columns of an (n, k) tensor."""
    ts = [as_tensor(t) for t in tensors]
    out_val = np.stack([t.value for t in ts], axis=1)

    def vjp(g):
        return tuple(g[:, i] for i in range(len(ts)))

    return Tensor(out_val, tuple(ts), vjp)


def col(x, j):
    """Column ``j`` as an (n, 1) tensor."""
    x = as_tensor(x)
    out_val = x.value[:, j : j + 1]

    def vjp(g):
        gx = np.zeros_like(x.value)
        gx[:, j : j + 1] = g
        return (gx,)

    return Tensor(out_val, (x,), vjp)


def reshape(x, shape):
    x = as_tensor(x)
    orig = x.value.shape
    return Tensor(x.value.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def rowwise_dot(a, b):
    """sum(a * b, axis=1) as a 1-D tensor."""
    return sum_(mul(a, b), axis=1)
