"""Layer building blocks on top of the tensor substrate.

A Module is just a container whose Tensor attributes (and sub-Modules) are
discovered reflectively for the optimizer and checkpointing. Parameter
iteration order is attribute insertion order, which is deterministic.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor

NEG_INF = -1e9  # additive attention mask; finite so kernels stay NaN-free


class Module:
    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}" if not prefix else f"{prefix}.{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}")

    def parameters(self):
        return dict(self.named_parameters())

    def num_parameters(self):
        return sum(p.data.size for _, p in self.named_parameters())

    def zero_grad(self):
        for _, p in self.named_parameters():
            p.zero_grad()


def relu_clamp_max(x: Tensor, cap: float) -> Tensor:
    """min(x, cap), differentiable below the cap."""
    return cap - T.relu(cap - x)


def xavier_uniform(rng: Rng, fan_in, fan_out, shape=None, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    g = rng.generator()
    shape = shape if shape is not None else (fan_in, fan_out)
    return Tensor(g.uniform(-limit, limit, size=shape).astype(dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, rng: Rng, n_in, n_out, dtype=np.float32):
        self.w = xavier_uniform(rng, n_in, n_out, dtype=dtype)
        self.b = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.w.shape[0]:
            raise ValueError(
                f"linear width mismatch: input {x.shape[-1]}, expected {self.w.shape[0]}"
            )
        return T.matmul(x, self.w) + self.b


class LayerNorm(Module):
    def __init__(self, width, dtype=np.float32, eps=1e-5):
        self.gain = Tensor(np.ones(width, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(width, dtype=dtype), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = T.tmean(x, axis=-1, keepdims=True)
        centered = x - mu
        var = T.tmean(centered * centered, axis=-1, keepdims=True)
        normed = centered * T.power(var + self.eps, -0.5)
        return normed * self.gain + self.bias


class Embedding(Module):
    def __init__(self, rng: Rng, num_entries, width, dtype=np.float32):
        g = rng.generator()
        self.table = Tensor(
            (g.standard_normal((num_entries, width)) * 0.02).astype(dtype),
            requires_grad=True,
        )

    def __call__(self, ids) -> Tensor:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.table.shape[0]):
            raise ValueError(
                f"embedding id out of range [0, {self.table.shape[0]})"
            )
        return T.gather_rows(self.table, ids)


class FeedForward(Module):
    def __init__(self, rng: Rng, width, hidden, dtype=np.float32):
        self.up = Linear(rng.derive(1), width, hidden, dtype)
        self.down = Linear(rng.derive(2), hidden, width, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(T.gelu(self.up(x)))


class MultiHeadAttention(Module):
    """Scaled dot-product attention; queries and keys/values may differ."""

    def __init__(self, rng: Rng, width, heads, dtype=np.float32):
        if width % heads != 0:
            raise ValueError("attention width must be divisible by heads")
        self.wq = Linear(rng.derive(1), width, width, dtype)
        self.wk = Linear(rng.derive(2), width, width, dtype)
        self.wv = Linear(rng.derive(3), width, width, dtype)
        self.wo = Linear(rng.derive(4), width, width, dtype)
        self.heads = heads

    def __call__(self, q_in: Tensor, kv_in: Tensor, key_pad_mask=None) -> Tensor:
        b, nq, h = q_in.shape
        nk = kv_in.shape[1]
        d = h // self.heads

        def split(x, n):
            return T.transpose(T.reshape(x, (b, n, self.heads, d)), (0, 2, 1, 3))

        q = split(self.wq(q_in), nq)
        k = split(self.wk(kv_in), nk)
        v = split(self.wv(kv_in), nk)
        scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(d))
        if key_pad_mask is not None:
            bias = np.where(np.asarray(key_pad_mask), NEG_INF, 0.0)
            bias = bias[:, None, None, :].astype(scores.dtype)
            scores = scores + Tensor(bias)
        attn = T.softmax(scores, axis=-1)
        ctx = T.matmul(attn, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (b, nq, h))
        return self.wo(ctx)


class EncoderLayer(Module):
    """Classical post-norm transformer encoder layer."""

    def __init__(self, rng: Rng, width, heads, ffn_width=None, dtype=np.float32):
        ffn_width = ffn_width or 4 * width
        self.attn = MultiHeadAttention(rng.derive(1), width, heads, dtype)
        self.norm1 = LayerNorm(width, dtype)
        self.ffn = FeedForward(rng.derive(2), width, ffn_width, dtype)
        self.norm2 = LayerNorm(width, dtype)

    def __call__(self, x: Tensor, pad_mask=None) -> Tensor:
        x = self.norm1(x + self.attn(x, x, key_pad_mask=pad_mask))
        return self.norm2(x + self.ffn(x))


def sinusoid_positions(length, width, dtype=np.float32):
    pos = np.arange(length)[:, None].astype(np.float64)
    idx = np.arange(width)[None, :]
    angle = pos / np.power(10000.0, (2 * (idx // 2)) / width)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return Tensor(table.astype(dtype))
