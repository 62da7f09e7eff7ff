"""Minimal dense-tensor substrate with reverse-mode autodiff.

Everything the model needs lives here: a Tensor wrapping a float32/float64
numpy array, the small set of differentiable kernels (matmul, elementwise
arithmetic, softmax, reductions, gather, concat/slice, cross-entropy), a
reverse-mode `backward`, and a central finite-difference checker.

Reductions use numpy's fixed left-to-right order and no threading, so
identical inputs give bit-identical outputs. Every op checks its result for
NaN/Inf and raises instead of propagating silently.
"""

from __future__ import annotations

import numpy as np


class NonFiniteError(FloatingPointError):
    """A kernel produced (or was handed) NaN or Inf."""


_grad_enabled = True


class no_grad:
    """Context manager: ops inside do not record the backward graph."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _check_finite(arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("non-finite values in tensor")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        _check_finite(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        g = np.asarray(g, dtype=self.data.dtype)
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def item(self):
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_wrap(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def _wrap(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data, parents, backward):
    """Create an op result; records the graph only when grads are on."""
    _check_finite(data)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


# -- elementwise kernels ------------------------------------------------


def add(a, b):
    a = _wrap(a, np.float32)
    b = _wrap(b, a.dtype)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(data, (a, b), backward)


def mul(a, b):
    a = _wrap(a, np.float32)
    b = _wrap(b, a.dtype)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), backward)


def _fast_pow(x, exponent: float):
    # integer exponents hit numpy's fast repeated-multiply path
    return x ** (int(exponent) if float(exponent).is_integer() else exponent)


def power(a, exponent):
    exponent = float(exponent)
    data = _fast_pow(a.data, exponent)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * exponent * _fast_pow(a.data, exponent - 1.0))

    return _result(data, (a,), backward)


def exp(a):
    data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * data)

    return _result(data, (a,), backward)


def log(a):
    data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _result(data, (a,), backward)


def tanh(a):
    data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - data * data))

    return _result(data, (a,), backward)


def relu(a):
    data = np.maximum(a.data, 0.0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > 0.0))

    return _result(data, (a,), backward)


_GELU_C = 0.7978845608028654  # sqrt(2/pi)


def gelu(a):
    """Tanh-approximation GELU as a single fused kernel."""
    x = a.data
    x_sq = x * x
    inner = _GELU_C * (x + 0.044715 * x_sq * x)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def backward(g):
        if a.requires_grad:
            d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * x_sq)
            local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
            a._accumulate(g * local)

    return _result(data, (a,), backward)


# -- linear algebra / structure ------------------------------------------


def matmul(a, b):
    data = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.shape))

    return _result(data, (a, b), backward)


def reshape(a, *shape):
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    data = a.data.reshape(shape)
    in_shape = a.shape

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(in_shape))

    return _result(data, (a,), backward)


def transpose(a, axes):
    axes = tuple(axes)
    data = np.transpose(a.data, axes)
    inverse = np.argsort(axes)

    def backward(g):
        if a.requires_grad:
            a._accumulate(np.transpose(g, inverse))

    return _result(data, (a,), backward)


def concat(tensors, axis):
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(piece)

    return _result(data, tuple(tensors), backward)


def slice_axis(a, axis, start, stop):
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    data = a.data[index].copy()

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[index] = g
            a._accumulate(full)

    return _result(data, (a,), backward)


def gather_rows(a, indices):
    """Select rows of `a` along axis 0; scatter-add gradient back."""
    indices = np.asarray(indices)
    if indices.min(initial=0) < 0 or (indices.size and indices.max() >= a.shape[0]):
        raise IndexError("gather index out of range")
    data = a.data[indices].copy()

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, indices, g)
            a._accumulate(full)

    return _result(data, (a,), backward)


def gather_diag(a):
    """Diagonal of a square matrix as a vector."""
    n = a.shape[0]
    idx = np.arange(n)
    data = a.data[idx, idx].copy()

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[idx, idx] = g
            a._accumulate(full)

    return _result(data, (a,), backward)


def tsum(a, axis=None, keepdims=False):
    data = a.data.sum(axis=axis, keepdims=keepdims)
    data = np.asarray(data, dtype=a.dtype)

    def backward(g):
        if a.requires_grad:
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(gg, a.shape))

    return _result(data, (a,), backward)


def tmean(a, axis=None, keepdims=False):
    if axis is None:
        n = a.data.size
    else:
        n = a.shape[axis] if isinstance(axis, int) else int(np.prod([a.shape[i] for i in axis]))
    return mul(tsum(a, axis, keepdims), 1.0 / n)


# -- softmax / losses ------------------------------------------------------


def softmax(x, axis=-1):
    """Numerically stable softmax along `axis`; rows sum to 1."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        if x.requires_grad:
            dot = (g * data).sum(axis=axis, keepdims=True)
            x._accumulate((g - dot) * data)

    return _result(data, (x,), backward)


def log_softmax(x, axis=-1):
    m = x.data.max(axis=axis, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse

    def backward(g):
        if x.requires_grad:
            p = np.exp(data)
            x._accumulate(g - p * g.sum(axis=axis, keepdims=True))

    return _result(data, (x,), backward)


def cross_entropy_from_logits(logits, targets):
    """Mean of -log softmax(logits)[target] over the leading dims.

    `logits` has class axis last; `targets` are integer indices of the same
    leading shape, each in [0, K).
    """
    targets = np.asarray(targets)
    k = logits.shape[-1]
    if targets.size == 0:
        raise ValueError("cross_entropy_from_logits: empty target set")
    if targets.min() < 0 or targets.max() >= k:
        raise ValueError(f"target index out of range [0, {k})")
    flat = logits.data.reshape(-1, k)
    tflat = targets.reshape(-1)
    m = flat.max(axis=1, keepdims=True)
    shifted = flat - m
    lse = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(flat.shape[0]), tflat]
    n = flat.shape[0]
    data = np.asarray((lse - picked).sum() / n, dtype=logits.dtype)

    def backward(g):
        if logits.requires_grad:
            p = np.exp(shifted - lse[:, None])
            p[np.arange(n), tflat] -= 1.0
            logits._accumulate((g * p / n).reshape(logits.shape))

    return _result(data, (logits,), backward)


def l2_normalize(x, axis=-1, eps=1e-12):
    """Rows scaled to unit L2 norm (composed, differentiable)."""
    sq = tsum(mul(x, x), axis=axis, keepdims=True)
    return mul(x, power(add(sq, eps), -0.5))


# -- reverse mode ----------------------------------------------------------


def backward(output):
    """Populate .grad on every antecedent of a scalar output.

    Repeated calls without zeroing accumulate, matching gradient
    accumulation across micro-batches.
    """
    if output.data.size != 1:
        raise ValueError("backward requires a scalar output")
    topo = []
    seen = set()
    stack = [(output, False)]
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
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    output._accumulate(np.ones_like(output.data))
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def finite_diff_check(f, x, step=1e-5, analytic=None):
    """Max relative error between analytic grad of f at x and central FD.

    `f` maps a Tensor to a scalar Tensor and must be deterministic. When
    `analytic` is None the gradient is computed by reverse mode. Relative
    error per coordinate is |a-b| / max(|a|, |b|, 1e-8).
    """
    if analytic is None:
        probe = Tensor(x.data.copy(), requires_grad=True, dtype=x.dtype)
        out = f(probe)
        backward(out)
        analytic = probe.grad
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.zeros_like(analytic)
    flat = x.data.reshape(-1)
    fd_flat = fd.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = f(Tensor(x.data.copy(), dtype=x.dtype)).item()
            flat[i] = orig - step
            down = f(Tensor(x.data.copy(), dtype=x.dtype)).item()
            flat[i] = orig
            fd_flat[i] = (up - down) / (2.0 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
    return float(np.max(np.abs(analytic - fd) / denom))
