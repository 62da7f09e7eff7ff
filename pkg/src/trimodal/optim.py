"""Decoupled-weight-decay adaptive-moment optimizer with linear warmup.

Two parameter groups (encoders vs. fusion+heads) keep the 2:1 learning
rate ratio at every step. Gradient clipping is by global L2 norm across
all trainable parameters.
"""

from __future__ import annotations

import numpy as np


def clip_global_norm(params, max_norm=1.0):
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class AdamW:
    def __init__(self, groups, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01,
                 warmup_steps=0):
        """`groups` is a list of (named-parameter dict, peak learning rate)."""
        self.groups = [(dict(params), float(lr)) for params, lr in groups]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.step_count = 0
        self.m = {}
        self.v = {}
        for params, _ in self.groups:
            for name, p in params.items():
                self.m[name] = np.zeros_like(p.data, dtype=np.float64)
                self.v[name] = np.zeros_like(p.data, dtype=np.float64)

    def lr_scale(self, step=None):
        """Linear warmup to 1.0, then constant."""
        step = self.step_count if step is None else step
        if self.warmup_steps <= 0:
            return 1.0
        return min(1.0, step / self.warmup_steps)

    def current_lrs(self):
        scale = self.lr_scale()
        return [lr * scale for _, lr in self.groups]

    def step(self):
        self.step_count += 1
        scale = self.lr_scale()
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for params, peak_lr in self.groups:
            lr = peak_lr * scale
            for name, p in params.items():
                g = p.grad
                if g is None:
                    continue
                g = g.astype(np.float64)
                m = self.m[name]
                v = self.v[name]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
                p.data -= (lr * (update + self.weight_decay * p.data.astype(np.float64))).astype(p.data.dtype)

    def zero_grad(self):
        for params, _ in self.groups:
            for p in params.values():
                p.zero_grad()

    def state(self):
        return {"m": self.m, "v": self.v, "step_count": self.step_count}

    def load_state(self, state):
        self.step_count = int(state["step_count"])
        for name in self.m:
            self.m[name] = np.asarray(state["m"][name], dtype=np.float64)
            self.v[name] = np.asarray(state["v"][name], dtype=np.float64)
