"""Parameter containers and the layers the association module and human head use."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Var


def make_rng(seed):
    """All randomness goes through numpy's PCG64 with an explicit seed."""
    return np.random.Generator(np.random.PCG64(seed))


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Var) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"checkpoint missing parameters: {sorted(missing)}")
        extra = set(state) - set(own)
        if extra:
            raise KeyError(f"checkpoint has unknown parameters: {sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.data.shape}")
            p.data = arr.copy()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    """y = x W^T + b with W stored out x in."""

    def __init__(self, n_in, n_out, rng, bias=True):
        self.n_in, self.n_out = n_in, n_out
        self.weight = ad.parameter(uniform_init(rng, (n_out, n_in), n_in))
        self.bias = ad.parameter(uniform_init(rng, (n_out,), n_in)) if bias else None

    def __call__(self, x):
        return linear_forward(x, self)

    def zero_(self):
        self.weight.data[...] = 0.0
        if self.bias is not None:
            self.bias.data[...] = 0.0


def linear_forward(x, layer):
    x = ad.as_var(x)
    if x.shape[-1] != layer.weight.shape[1]:
        raise ValueError(f"dimension mismatch: input {x.shape[-1]} vs layer in={layer.weight.shape[1]}")
    y = ad.matmul(x, ad.transpose(layer.weight))
    if layer.bias is not None:
        y = y + layer.bias
    return y


class LayerNorm(Module):
    def __init__(self, dim):
        self.gamma = ad.parameter(np.ones(dim))
        self.beta = ad.parameter(np.zeros(dim))

    def __call__(self, x):
        return ad.layer_norm(x, self.gamma, self.beta)


class MLP(Module):
    """Two-layer ReLU MLP."""

    def __init__(self, n_in, n_hidden, n_out, rng):
        self.fc1 = Linear(n_in, n_hidden, rng)
        self.fc2 = Linear(n_hidden, n_out, rng)

    def __call__(self, x):
        return self.fc2(ad.relu(self.fc1(x)))


class MultiHeadAttention(Module):
    """Per-head W^Q, W^K, W^V slices of D x D maps plus an output projection.

    The returned attention is averaged over heads, so each row is stochastic.
    """

    def __init__(self, dim, heads, rng, kdim=None, out_proj=True):
        if dim % heads:
            raise ValueError(f"model dim {dim} not divisible by {heads} heads")
        kdim = kdim or dim
        self.dim, self.heads = dim, heads
        self.wq = ad.parameter(uniform_init(rng, (dim, dim), dim))
        self.wk = ad.parameter(uniform_init(rng, (kdim, dim), kdim))
        self.wv = ad.parameter(uniform_init(rng, (kdim, dim), kdim))
        self.wo = ad.parameter(uniform_init(rng, (dim, dim), dim)) if out_proj else None

    def __call__(self, queries, keys, values=None):
        return multi_head_attention(queries, keys, keys if values is None else values, self)


def attention_scores(queries, keys, wq, wk, heads):
    """Per-head logits Q W_h^Q (K W_h^K)^T / sqrt(D/H), shape (H, P, N)."""
    d = wq.shape[1]
    if d % heads:
        raise ValueError(f"model dim {d} not divisible by {heads} heads")
    dh = d // heads
    q = ad.matmul(queries, wq).reshape(queries.shape[0], heads, dh)
    k = ad.matmul(keys, wk).reshape(keys.shape[0], heads, dh)
    q = ad.transpose(q, (1, 0, 2))
    k = ad.transpose(k, (1, 2, 0))
    return ad.matmul(q, k) * (1.0 / np.sqrt(dh))


def multi_head_attention(queries, keys, values, weights):
    """Returns (output P x D, head-averaged attention P x N)."""
    queries, keys, values = ad.as_var(queries), ad.as_var(keys), ad.as_var(values)
    heads = weights.heads
    dh = weights.dim // heads
    attn = ad.softmax(attention_scores(queries, keys, weights.wq, weights.wk, heads), axis=-1)
    v = ad.matmul(values, weights.wv).reshape(values.shape[0], heads, dh)
    v = ad.transpose(v, (1, 0, 2))
    out = ad.matmul(attn, v)
    out = ad.transpose(out, (1, 0, 2)).reshape(queries.shape[0], weights.dim)
    if weights.wo is not None:
        out = ad.matmul(out, weights.wo)
    return out, attn.mean(axis=0)
