"""Minimal reverse-mode autodiff over numpy arrays.

Only the operations the scoring model needs are implemented.  Every op
builds a closure that maps the output gradient to parent gradients; the
heavy lifting (convolutions, pooling) is delegated to the kernels package.
Dtype follows the inputs, so the whole graph can run in float64 for
finite-difference verification.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from . import kernels

_grad_enabled = True
_pool_freeze = None


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class PoolFreeze:
    """Pins max-pool selections across repeated forwards of the same graph.

    The first forward inside the context records every pool's argmax; later
    forwards reuse them in invocation order.  Finite-difference probes then
    sample the same locally-linear branch that backprop differentiates,
    instead of jumping across pool ties.
    """

    def __init__(self):
        self.indices = []
        self.cursor = 0
        self.recording = True

    def next_index(self):
        idx = self.indices[self.cursor]
        self.cursor += 1
        return idx

    def rewind(self):
        self.recording = not self.indices
        self.cursor = 0


@contextmanager
def freeze_pools(freezer):
    global _pool_freeze
    prev = _pool_freeze
    _pool_freeze = freezer
    freezer.rewind()
    try:
        yield
    finally:
        _pool_freeze = prev


class Tensor:
    """An array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def _tracks(t):
    return t.requires_grad or t._parents


def _make(data, parents, vjp):
    out = Tensor(data)
    if _grad_enabled and any(_tracks(p) for p in parents):
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _sum_to_shape(grad, shape):
    """Reduce a broadcasted gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def backward(root):
    """Accumulate gradients of `root` (a scalar) into all graph leaves."""
    if root.data.size != 1:
        raise ValueError("backward() expects a scalar loss")
    topo = []
    seen = set()
    stack = [(root, False)]
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
            if id(p) not in seen and (p._parents or p.requires_grad):
                stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._vjp(node.grad)):
            if g is None or not _tracks(parent):
                continue
            # accumulation is never in-place, so aliasing views is safe
            parent.grad = g if parent.grad is None else parent.grad + g


# ---------------------------------------------------------------------------
# elementwise and reduction ops
# ---------------------------------------------------------------------------

def add(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    out = a.data + b.data
    return _make(out, (a, b), lambda g: (_sum_to_shape(g, a.data.shape),
                                         _sum_to_shape(g, b.data.shape)))


def sub(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    out = a.data - b.data
    return _make(out, (a, b), lambda g: (_sum_to_shape(g, a.data.shape),
                                         _sum_to_shape(-g, b.data.shape)))


def mul(a, b):
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    out = a.data * b.data
    return _make(out, (a, b), lambda g: (_sum_to_shape(g * b.data, a.data.shape),
                                         _sum_to_shape(g * a.data, b.data.shape)))


def abs_(a):
    out = np.abs(a.data)
    sign = np.sign(a.data)
    return _make(out, (a,), lambda g: (g * sign,))


def mean_all(a):
    out = a.data.mean(dtype=a.data.dtype)
    n = a.data.size
    return _make(out, (a,), lambda g: ((g / n) * np.ones_like(a.data),))


def sum_all(a):
    out = a.data.sum(dtype=a.data.dtype)
    return _make(out, (a,), lambda g: (g * np.ones_like(a.data),))


def relu(a):
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a):
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def reshape(a, shape):
    out = a.data.reshape(shape)
    return _make(out, (a,), lambda g: (g.reshape(a.data.shape),))


def softmax1d(a):
    z = a.data - a.data.max()
    e = np.exp(z)
    out = e / e.sum()

    def vjp(g):
        dot = np.dot(g, out)
        return ((g - dot) * out,)

    return _make(out, (a,), vjp)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def linear(x, w, b):
    """x: (N, in), w: (out, in), b: (out,) -> (N, out)."""
    out = x.data @ w.data.T + b.data

    def vjp(g):
        return (g @ w.data, g.T @ x.data, g.sum(axis=0))

    return _make(out, (x, w, b), vjp)


def stack_cols(parts):
    """Stack K tensors of shape (N,) into an (N, K) matrix."""
    out = np.stack([p.data for p in parts], axis=1)

    def vjp(g):
        return tuple(g[:, i] for i in range(len(parts)))

    return _make(out, tuple(parts), vjp)


def matvec(m, v):
    """(N, K) @ (K,) -> (N,)."""
    out = m.data @ v.data

    def vjp(g):
        return (g[:, None] * v.data[None, :], m.data.T @ g)

    return _make(out, (m, v), vjp)


# ---------------------------------------------------------------------------
# spatial ops
# ---------------------------------------------------------------------------

def conv2d(x, w, b):
    out = kernels.conv2d_fwd(x.data, w.data, b.data)

    def vjp(g):
        g = np.ascontiguousarray(g)
        dw, db = kernels.conv2d_bwd_w(x.data, g, w.data.shape[-1])
        dx = kernels.conv2d_bwd_x(w.data, g) if _tracks(x) else None
        return (dx, dw, db)

    return _make(out, (x, w, b), vjp)


def conv_transpose2d(x, w, b, stride):
    out = kernels.convt2d_fwd(x.data, w.data, b.data, stride)

    def vjp(g):
        dx, dw, db = kernels.convt2d_bwd(x.data, w.data, np.ascontiguousarray(g), stride)
        return (dx, dw, db)

    return _make(out, (x, w, b), vjp)


def maxpool2x2(x):
    if _pool_freeze is not None and not _pool_freeze.recording:
        idx = _pool_freeze.next_index()
        n, c, h, w = x.data.shape
        v = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        v = v.reshape(n, c, h // 2, w // 2, 4)
        out = np.take_along_axis(v, idx[..., None].astype(np.intp), axis=-1)[..., 0]
        out = np.ascontiguousarray(out)
    else:
        out, idx = kernels.maxpool2_fwd(x.data)
        if _pool_freeze is not None:
            _pool_freeze.indices.append(idx)
    return _make(out, (x,), lambda g: (kernels.maxpool2_bwd(np.ascontiguousarray(g), idx),))


def global_avg_pool(x):
    """(N, C, H, W) -> (N, C) spatial mean."""
    n, c, h, w = x.data.shape
    out = x.data.mean(axis=(2, 3), dtype=x.data.dtype)

    def vjp(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape).astype(x.data.dtype),)

    return _make(out, (x,), vjp)


def center_crop(x, oh, ow):
    """Center-crop NCHW spatial dims to (oh, ow); floor split on the low side."""
    n, c, h, w = x.data.shape
    top = (h - oh) // 2
    left = (w - ow) // 2
    out = x.data[:, :, top:top + oh, left:left + ow]

    def vjp(g):
        dx = np.zeros_like(x.data)
        dx[:, :, top:top + oh, left:left + ow] = g
        return (dx,)

    return _make(np.ascontiguousarray(out), (x,), vjp)
