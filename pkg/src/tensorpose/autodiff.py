"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: every operation returns a `Tensor` node holding its value and a
tuple of (parent, vjp) pairs.  `backward()` walks the graph in reverse
topological order and accumulates plain ndarray gradients on the leaves.

Only the operations the renderer and the training loops actually use are
implemented.  Correctness is pinned by central finite differences in the test
suite (relative error <= 1e-4 is the binding contract).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.special import expit


class Tensor:
    """A node in the computation graph wrapping an ndarray value."""

    __slots__ = ("value", "grad", "requires_grad", "_parents")

    def __init__(self, value, requires_grad: bool = False, _parents=()):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad or bool(_parents)
        self._parents = _parents

    # -- bookkeeping ----------------------------------------------------

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def item(self) -> float:
        return float(self.value)

    def detach(self) -> "Tensor":
        return Tensor(self.value)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.value.shape}{flag})"

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad."""
        if grad is None:
            grad = np.ones_like(self.value)
        # Iterative topological sort; recursion depth would blow up on long
        # cumsum/training graphs.
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.asarray(grad, dtype=self.value.dtype)
        for node in reversed(topo):
            g = node.grad
            if g is None:
                continue
            for parent, vjp in node._parents:
                contrib = vjp(g)
                parent.grad = contrib if parent.grad is None else parent.grad + contrib
            if node._parents and node is not self:
                node.grad = None  # free interior gradients eagerly

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

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

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def leaf(value, dtype=None) -> Tensor:
    """Create a trainable leaf (its .grad is populated by backward)."""
    arr = np.array(value, dtype=dtype) if dtype is not None else np.array(value)
    return Tensor(arr, requires_grad=True)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcasted gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _node(value, parents) -> Tensor:
    live = tuple((p, vjp) for p, vjp in parents if p.requires_grad)
    return Tensor(value, _parents=live)


# -- arithmetic ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value + b.value,
                 [(a, lambda g: _unbroadcast(g, a.value.shape)),
                  (b, lambda g: _unbroadcast(g, b.value.shape))])


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value - b.value,
                 [(a, lambda g: _unbroadcast(g, a.value.shape)),
                  (b, lambda g: _unbroadcast(-g, b.value.shape))])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value * b.value,
                 [(a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
                  (b, lambda g: _unbroadcast(g * a.value, b.value.shape))])


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    inv = 1.0 / b.value
    return _node(a.value * inv,
                 [(a, lambda g: _unbroadcast(g * inv, a.value.shape)),
                  (b, lambda g: _unbroadcast(-g * a.value * inv * inv, b.value.shape))])


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    val = a.value ** p
    return _node(val, [(a, lambda g: g * p * a.value ** (p - 1))])


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    out = av @ bv

    if av.ndim == 1 and bv.ndim == 1:
        parents = [(a, lambda g: g * bv), (b, lambda g: g * av)]
    elif av.ndim == 1:  # (k,) @ (k, n)
        parents = [(a, lambda g: bv @ g), (b, lambda g: np.outer(av, g))]
    elif bv.ndim == 1:  # (m, k) @ (k,)
        parents = [(a, lambda g: np.outer(g, bv)), (b, lambda g: av.T @ g)]
    else:
        def ga(g):
            return _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)

        def gb(g):
            return _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)

        parents = [(a, ga), (b, gb)]
    return _node(out, parents)


# -- reductions and shape ops ------------------------------------------


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    val = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.value.shape)

    return _node(val, [(a, vjp)])


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    val = a.value.mean(axis=axis, keepdims=keepdims)
    n = a.value.size / max(val.size, 1)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g / n, a.value.shape)

    return _node(val, [(a, vjp)])


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.value.reshape(shape), [(a, lambda g: g.reshape(a.value.shape))])


def astype(a, dtype) -> Tensor:
    """Dtype cast; the gradient is cast back to the source dtype."""
    a = as_tensor(a)
    return _node(a.value.astype(dtype),
                 [(a, lambda g: g.astype(a.value.dtype))])


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inv = tuple(np.argsort(axes))
    return _node(a.value.transpose(axes), [(a, lambda g: g.transpose(inv))])


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return out

    return _node(a.value[idx], [(a, vjp)])


def concatenate(parts: Sequence, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    val = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)
    parents = []
    for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
        sl = [slice(None)] * val.ndim
        sl[axis] = slice(int(lo), int(hi))
        sl = tuple(sl)
        parents.append((p, lambda g, sl=sl: g[sl]))
    return _node(val, parents)


def stack(parts: Sequence, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    val = np.stack([p.value for p in parts], axis=axis)
    parents = []
    for i, p in enumerate(parts):
        parents.append((p, lambda g, i=i: np.take(g, i, axis=axis)))
    return _node(val, parents)


def cumsum(a, axis=-1) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        return np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)

    return _node(np.cumsum(a.value, axis=axis), [(a, vjp)])


# -- elementwise nonlinearities ----------------------------------------


def exp(a) -> Tensor:
    a = as_tensor(a)
    val = np.exp(a.value)
    return _node(val, [(a, lambda g: g * val)])


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.value), [(a, lambda g: g / a.value)])


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    val = np.sqrt(a.value)
    return _node(val, [(a, lambda g: g * 0.5 / val)])


def sin(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.sin(a.value), [(a, lambda g: g * np.cos(a.value))])


def cos(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.cos(a.value), [(a, lambda g: -g * np.sin(a.value))])


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    val = expit(a.value)
    return _node(val, [(a, lambda g: g * val * (1.0 - val))])


def softplus(a) -> Tensor:
    a = as_tensor(a)
    val = np.logaddexp(0.0, a.value)
    return _node(val, [(a, lambda g: g * expit(a.value))])


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.value > 0
    return _node(np.where(mask, a.value, 0.0), [(a, lambda g: g * mask)])


def tabs(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.value)
    return _node(np.abs(a.value), [(a, lambda g: g * sign)])


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp; gradient passes through inside [lo, hi], zero outside."""
    a = as_tensor(a)
    mask = (a.value >= lo) & (a.value <= hi)
    return _node(np.clip(a.value, lo, hi), [(a, lambda g: g * mask)])


# -- fused / custom-vjp ops --------------------------------------------


def take_last(a, idx: np.ndarray) -> Tensor:
    """Gather along the last axis with a 1-D integer index.

    a: (..., W), idx: (P,) int -> out (..., P).  The backward pass scatters
    with a composite-index bincount, which is much faster than np.add.at for
    the per-sample grid gathers in the render path.
    """
    a = as_tensor(a)
    idx = np.asarray(idx)
    val = np.take(a.value, idx, axis=-1)
    lead_shape = a.value.shape[:-1]
    w = a.value.shape[-1]
    lead = int(np.prod(lead_shape)) if lead_shape else 1
    composite = (np.arange(lead)[:, None] * w + idx[None, :]).ravel()

    def vjp(g):
        flat = np.bincount(composite, weights=g.reshape(lead, -1).ravel(),
                           minlength=lead * w)
        return flat.reshape(a.value.shape).astype(a.value.dtype, copy=False)

    return _node(val, [(a, vjp)])


def conv1d_same(a, kernel: np.ndarray) -> Tensor:
    """True zero-padded same convolution along the last axis (odd kernel).

    The adjoint of convolution is correlation, i.e. convolution with the
    flipped kernel.
    """
    a = as_tensor(a)
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 1 or kernel.size % 2 == 0:
        raise ValueError("kernel must be a 1-D array of odd length")
    val = ndimage.convolve1d(a.value, kernel, axis=-1, mode="constant", cval=0.0)
    flipped = kernel[::-1]

    def vjp(g):
        return ndimage.convolve1d(g, flipped, axis=-1, mode="constant", cval=0.0)

    return _node(val, [(a, vjp)])


def where(cond: np.ndarray, a, b) -> Tensor:
    """Select with a constant boolean condition."""
    cond = np.asarray(cond)
    a, b = as_tensor(a), as_tensor(b)
    val = np.where(cond, a.value, b.value)
    return _node(val,
                 [(a, lambda g: _unbroadcast(np.where(cond, g, 0.0), a.value.shape)),
                  (b, lambda g: _unbroadcast(np.where(cond, 0.0, g), b.value.shape))])


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    mask = a.value >= b.value
    return _node(np.maximum(a.value, b.value),
                 [(a, lambda g: _unbroadcast(g * mask, a.value.shape)),
                  (b, lambda g: _unbroadcast(g * ~mask, b.value.shape))])
