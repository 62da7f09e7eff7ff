"""Masking procedures for the three pretraining objectives.

- BERT-style token corruption for language (30% of non-pad tokens;
  80/10/10 mask/random/keep split).
- 3-D tube masking on the vision patch grid: one 2-D position set applied
  across a contiguous span of patch frames.
- Span masking on speech frames: p*F start indices, each masking an
  l-step span, overlaps unioned.

All three are deterministic functions of (input, Rng).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor

ACTION_MASK, ACTION_RANDOM, ACTION_KEEP = 0, 1, 2


@dataclass
class MaskPlan:
    positions: np.ndarray  # bool over the unit grid
    targets: np.ndarray  # ground-truth unit ids at masked positions, -1 elsewhere
    actions: np.ndarray = None  # language only: per masked position action code

    def __post_init__(self):
        if self.positions.shape != self.targets.shape:
            raise ValueError("positions and targets must share a shape")
        if np.any((self.targets >= 0) != self.positions):
            raise ValueError("targets must be defined exactly at masked positions")

    @property
    def num_masked(self):
        return int(self.positions.sum())


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def mask_language(tokens, pad_mask, rng: Rng, ratio=0.30, mask_token=None, vocab=256):
    """Corrupt `tokens` [B, L]; returns (corrupted copy, MaskPlan).

    Selects round(ratio * n_nonpad) positions per example (at least 1),
    never touching pads. Of the selected positions 80% become the MASK
    token, 10% a uniformly random vocab token, 10% stay unchanged.
    """
    tokens = np.asarray(tokens)
    pad_mask = np.asarray(pad_mask, dtype=bool)
    if mask_token is None:
        mask_token = vocab - 1
    corrupted = tokens.copy()
    positions = np.zeros(tokens.shape, dtype=bool)
    targets = np.full(tokens.shape, -1, dtype=np.int64)
    actions = np.full(tokens.shape, -1, dtype=np.int64)
    for b in range(tokens.shape[0]):
        g = rng.derive(b).generator()
        nonpad = np.flatnonzero(~pad_mask[b])
        if nonpad.size == 0:
            raise ValueError("example has zero non-pad tokens")
        n_mask = max(1, _round_half_up(ratio * nonpad.size))
        chosen = g.choice(nonpad, size=n_mask, replace=False)
        u = g.random(n_mask)
        for pos, draw in zip(chosen, u):
            positions[b, pos] = True
            targets[b, pos] = tokens[b, pos]
            if draw < 0.8:
                corrupted[b, pos] = mask_token
                actions[b, pos] = ACTION_MASK
            elif draw < 0.9:
                corrupted[b, pos] = g.integers(0, vocab)
                actions[b, pos] = ACTION_RANDOM
            else:
                actions[b, pos] = ACTION_KEEP
    return corrupted, MaskPlan(positions, targets, actions)


def tube_mask_pattern(shape2d, temporal, rng: Rng, ratio2d=0.50, span_range=None):
    """Sample the tube: returns (bool [W', H', T'] mask, 2-D cell set, span).

    Exactly round(ratio2d * W' * H') 2-D positions are chosen; the span
    length is uniform in [ceil(T'/2), T'] by default and the start uniform
    over valid offsets. Every frame inside the span shares the 2-D set.
    """
    w, h = shape2d
    t = temporal
    if w * h < 2 or t < 1:
        raise ValueError("tube mask needs at least 2 spatial cells and 1 frame")
    g = rng.generator()
    n_cells = _round_half_up(ratio2d * w * h)
    flat = g.choice(w * h, size=n_cells, replace=False)
    pattern = np.zeros(w * h, dtype=bool)
    pattern[flat] = True
    pattern = pattern.reshape(w, h)
    lo, hi = span_range if span_range is not None else (math.ceil(t / 2), t)
    length = int(g.integers(lo, hi + 1))
    start = int(g.integers(0, t - length + 1))
    mask = np.zeros((w, h, t), dtype=bool)
    mask[:, :, start : start + length] = pattern[:, :, None]
    return mask, pattern, (start, length)


def tube_mask(patch_grid: Tensor, rng: Rng, mask_embedding: Tensor, ratio2d=0.50,
              span_range=None, targets=None):
    """Apply a 3-D tube mask to one example's patch grid [W', H', T', C].

    Masked cells are replaced by `mask_embedding` (learnable, shape [C]).
    `targets`, when given, supplies ground-truth unit ids on the same grid.
    """
    w, h, t, c = patch_grid.shape
    mask, _, _ = tube_mask_pattern((w, h), t, rng, ratio2d, span_range)
    keep = Tensor((~mask)[..., None].astype(patch_grid.dtype))
    fill = Tensor(mask[..., None].astype(patch_grid.dtype))
    emb = T.reshape(mask_embedding, (1, 1, 1, c))
    masked = patch_grid * keep + emb * fill
    tgt = np.where(mask, targets, -1) if targets is not None else np.where(mask, 0, -1)
    return masked, MaskPlan(mask, tgt)


def span_mask_indices(num_steps, rng: Rng, p=0.08, l=10):
    """Union of round(p*F) spans [s, s+l) clipped at F; returns bool [F]."""
    if num_steps < 1:
        raise ValueError("need at least one step")
    mask = np.zeros(num_steps, dtype=bool)
    n_starts = _round_half_up(p * num_steps)
    if n_starts == 0:
        return mask
    g = rng.generator()
    starts = g.choice(num_steps, size=n_starts, replace=False)
    for s in starts:
        mask[s : s + l] = True
    return mask


def span_mask(features: Tensor, rng: Rng, mask_embedding: Tensor, p=0.08, l=10,
              targets=None):
    """Span-mask one example's speech frames [F, C] with a learned embedding."""
    f, c = features.shape
    mask = span_mask_indices(f, rng, p, l)
    keep = Tensor((~mask)[:, None].astype(features.dtype))
    fill = Tensor(mask[:, None].astype(features.dtype))
    emb = T.reshape(mask_embedding, (1, c))
    masked = features * keep + emb * fill
    tgt = np.where(mask, targets, -1) if targets is not None else np.where(mask, 0, -1)
    return masked, MaskPlan(mask, tgt)
