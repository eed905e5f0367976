"""Reverse-mode differentiation over float64 numpy arrays.

A ``Var`` wraps an ndarray. While a ``GradTape`` is active, every op whose
inputs require gradients appends its output node to the tape; ``backward``
walks the tape in exact reverse order and accumulates gradients additively.
Outside a tape the same ops run as plain numpy with no bookkeeping.
"""

from __future__ import annotations

import numpy as np

_TAPE: "GradTape | None" = None


class Var:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "name")

    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Var(shape={self.data.shape}{tag})"

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return vsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return vmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def parameter(data, name=None):
    return Var(np.array(data, dtype=np.float64), requires_grad=True, name=name)


class GradTape:
    """Records differentiable ops; use as a context manager."""

    def __init__(self):
        self.nodes = []
        self._prev = None

    def __enter__(self):
        global _TAPE
        self._prev = _TAPE
        _TAPE = self
        return self

    def __exit__(self, *exc):
        global _TAPE
        _TAPE = self._prev
        return False

    def backward(self, loss):
        if loss.data.size != 1:
            raise ValueError("backward() needs a scalar loss")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


def as_var(x):
    return x if isinstance(x, Var) else Var(x)


def _node(data, parents, backward):
    out = Var(data)
    if _TAPE is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._backward = backward
        _TAPE.nodes.append(out)
    return out


def _acc(v, g):
    if not v.requires_grad:
        return
    v.grad = g if v.grad is None else v.grad + g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise arithmetic -------------------------------------------------

def add(a, b):
    a, b = as_var(a), as_var(b)

    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_var(a), as_var(b)

    def bw(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(-g, b.shape))

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = as_var(a), as_var(b)

    def bw(g):
        _acc(a, _unbroadcast(g * b.data, a.shape))
        _acc(b, _unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = as_var(a), as_var(b)
    out = a.data / b.data

    def bw(g):
        _acc(a, _unbroadcast(g / b.data, a.shape))
        _acc(b, _unbroadcast(-g * out / b.data, b.shape))

    return _node(out, (a, b), bw)


def neg(a):
    a = as_var(a)
    return _node(-a.data, (a,), lambda g: _acc(a, -g))


def exp(a):
    a = as_var(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: _acc(a, g * out))


def log(a):
    a = as_var(a)
    return _node(np.log(a.data), (a,), lambda g: _acc(a, g / a.data))


def sqrt(a):
    a = as_var(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: _acc(a, g * 0.5 / out))


def square(a):
    a = as_var(a)
    return _node(a.data * a.data, (a,), lambda g: _acc(a, 2.0 * g * a.data))


def vabs(a):
    a = as_var(a)
    return _node(np.abs(a.data), (a,), lambda g: _acc(a, g * np.sign(a.data)))


def relu(a):
    a = as_var(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: _acc(a, g * mask))


def sigmoid(a):
    a = as_var(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _node(out, (a,), lambda g: _acc(a, g * out * (1.0 - out)))


def softplus(a):
    a = as_var(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return _node(out, (a,), lambda g: _acc(a, g * sig))


def clip(a, lo, hi):
    """Clamp values; gradient passes only where the input is inside [lo, hi]."""
    a = as_var(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: _acc(a, g * inside))


# -- reductions and shape ops ----------------------------------------------

def vsum(a, axis=None, keepdims=False):
    a = as_var(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, a.shape).copy())

    return _node(out, (a,), bw)


def vmean(a, axis=None, keepdims=False):
    a = as_var(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return vsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape):
    a = as_var(a)
    return _node(a.data.reshape(shape), (a,), lambda g: _acc(a, g.reshape(a.shape)))


def transpose(a, axes=None):
    a = as_var(a)
    if axes is None:
        axes = tuple(range(a.ndim))[:-2] + (a.ndim - 1, a.ndim - 2)
    inv = np.argsort(axes)
    return _node(np.transpose(a.data, axes), (a,), lambda g: _acc(a, np.transpose(g, inv)))


def getitem(a, idx):
    a = as_var(a)

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        _acc(a, full)

    return _node(a.data[idx], (a,), bw)


def concat(vs, axis=-1):
    vs = [as_var(v) for v in vs]
    sizes = [v.shape[axis] for v in vs]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        for v, piece in zip(vs, np.split(g, cuts, axis=axis)):
            _acc(v, piece)

    return _node(np.concatenate([v.data for v in vs], axis=axis), vs, bw)


def stack(vs, axis=0):
    vs = [as_var(v) for v in vs]

    def bw(g):
        for i, v in enumerate(vs):
            _acc(v, np.take(g, i, axis=axis))

    return _node(np.stack([v.data for v in vs], axis=axis), vs, bw)


# -- linear algebra ---------------------------------------------------------

def matmul(a, b):
    a, b = as_var(a), as_var(b)
    ad, bd = a.data, b.data

    def bw(g):
        a2 = ad[None, :] if ad.ndim == 1 else ad
        b2 = bd[:, None] if bd.ndim == 1 else bd
        g2 = g
        if bd.ndim == 1:
            g2 = np.expand_dims(g2, -1)
        if ad.ndim == 1:
            g2 = np.expand_dims(g2, -2)
        if a.requires_grad:
            ga = g2 @ np.swapaxes(b2, -1, -2)
            if ad.ndim == 1:
                ga = ga.reshape(-1, ad.shape[0]).sum(axis=0)
            _acc(a, _unbroadcast(ga, ad.shape))
        if b.requires_grad:
            gb = np.swapaxes(a2, -1, -2) @ g2
            if bd.ndim == 1:
                gb = gb.reshape(-1, bd.shape[0]).sum(axis=0)
            _acc(b, _unbroadcast(gb, bd.shape))

    return _node(ad @ bd, (a, b), bw)


def polar(m):
    """Nearest proper rotation to each 3x3 block (special polar factor)."""
    m = as_var(m)
    u, s, vt = np.linalg.svd(m.data)
    d = np.sign(np.linalg.det(u @ vt))
    d = np.where(d == 0, 1.0, d)
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    s = s.copy()
    s[..., 2] *= d
    out = u @ vt

    def bw(g):
        x = np.swapaxes(u, -1, -2) @ g @ np.swapaxes(vt, -1, -2)
        f = 1.0 / (s[..., :, None] + s[..., None, :])
        k = (x - np.swapaxes(x, -1, -2)) * f
        _acc(m, u @ k @ vt)

    return _node(out, (m,), bw)


# -- normalisation and attention primitives --------------------------------

def softmax(a, axis=-1):
    a = as_var(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        _acc(a, out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _node(out, (a,), bw)


LN_EPS = 1e-5


def layer_norm(x, gamma, beta, eps=LN_EPS):
    x, gamma, beta = as_var(x), as_var(gamma), as_var(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        _acc(gamma, _unbroadcast(g * xhat, gamma.shape))
        _acc(beta, _unbroadcast(g, beta.shape))
        if x.requires_grad:
            dxh = g * gamma.data
            dx = inv * (dxh - dxh.mean(axis=-1, keepdims=True)
                        - xhat * (dxh * xhat).mean(axis=-1, keepdims=True))
            _acc(x, dx)

    return _node(out, (x, gamma, beta), bw)


L2_FLOOR = 1e-12


def l2_normalize(x, axis=-1, floor=L2_FLOOR):
    x = as_var(x)
    raw = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    n = np.maximum(raw, floor)
    out = x.data / n
    live = raw >= floor

    def bw(g):
        radial = out * (g * out).sum(axis=axis, keepdims=True)
        _acc(x, np.where(live, (g - radial) / n, g / n))

    return _node(out, (x,), bw)
