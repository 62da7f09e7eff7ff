"""Multimodal fusion network: merge-attention and co-attention variants.

Merge mode flattens and concatenates all present modalities and runs
shared-parameter transformer encoder layers over the combined sequence.
Co mode keeps modalities separate: per-modality self-attention, then
cross-attention whose keys/values are the concatenation of the other
modalities' self outputs, then a per-modality feed-forward block; each
sublayer is post-norm residual. A single-modality co pass skips the cross
sublayer entirely.

No positional embeddings are added here; any non-empty subset of
modalities is accepted and per-modality output shapes match the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .nn import FeedForward, LayerNorm, Module, MultiHeadAttention
from .rng import Rng
from .tensor import Tensor

MODALITIES = ("V", "L", "S")


@dataclass
class FusionConfig:
    mode: str = "merge"  # "merge" or "co"
    layers: int = None  # defaults: 6 merge, 3 co
    hidden: int = 128
    heads: int = 4
    ffn_width: int = None  # default 4 * hidden

    def __post_init__(self):
        if self.mode not in ("merge", "co"):
            raise ValueError(f"unknown fusion mode {self.mode!r}")
        if self.layers is None:
            self.layers = 6 if self.mode == "merge" else 3
        if self.ffn_width is None:
            self.ffn_width = 4 * self.hidden
        if self.layers < 1:
            raise ValueError("need at least one fusion layer")
        if self.hidden % self.heads:
            raise ValueError("hidden must be divisible by heads")


@dataclass
class FusedBatch:
    features: dict  # modality -> Tensor shaped like its projected input
    pad_masks: dict  # modality -> bool [B, N] or None
    segments: list  # (modality, start, length) over the flattened sequence

    def __getitem__(self, modality):
        return self.features[modality]


def _flatten(x: Tensor):
    """[B, ..., H] -> ([B, N, H], original shape)."""
    shape = x.shape
    n = int(np.prod(shape[1:-1]))
    return T.reshape(x, (shape[0], n, shape[-1])), shape


class MergeLayer(Module):
    """Classical encoder layer over the concatenated modality sequence."""

    def __init__(self, rng: Rng, cfg: FusionConfig, dtype=np.float32):
        self.attn = MultiHeadAttention(rng.derive(1), cfg.hidden, cfg.heads, dtype)
        self.norm1 = LayerNorm(cfg.hidden, dtype)
        self.ffn = FeedForward(rng.derive(2), cfg.hidden, cfg.ffn_width, dtype)
        self.norm2 = LayerNorm(cfg.hidden, dtype)

    def __call__(self, x: Tensor, pad_mask=None) -> Tensor:
        x = self.norm1(x + self.attn(x, x, key_pad_mask=pad_mask))
        return self.norm2(x + self.ffn(x))


class CoLayer(Module):
    """Per-modality self-attention, cross-attention to the others, FFN."""

    def __init__(self, rng: Rng, cfg: FusionConfig, dtype=np.float32):
        for i, m in enumerate(MODALITIES):
            setattr(self, f"self_{m}", MultiHeadAttention(rng.derive(1, i), cfg.hidden, cfg.heads, dtype))
            setattr(self, f"norm_self_{m}", LayerNorm(cfg.hidden, dtype))
            setattr(self, f"cross_{m}", MultiHeadAttention(rng.derive(2, i), cfg.hidden, cfg.heads, dtype))
            setattr(self, f"norm_cross_{m}", LayerNorm(cfg.hidden, dtype))
            setattr(self, f"ffn_{m}", FeedForward(rng.derive(3, i), cfg.hidden, cfg.ffn_width, dtype))
            setattr(self, f"norm_ffn_{m}", LayerNorm(cfg.hidden, dtype))

    def __call__(self, inputs: dict, pad_masks: dict) -> dict:
        if not inputs:
            raise ValueError("co-attention layer needs at least one modality")
        present = [m for m in MODALITIES if m in inputs]
        selfed = {}
        for m in present:
            attn = getattr(self, f"self_{m}")
            norm = getattr(self, f"norm_self_{m}")
            selfed[m] = norm(inputs[m] + attn(inputs[m], inputs[m], key_pad_mask=pad_masks.get(m)))
        crossed = {}
        for m in present:
            others = [o for o in present if o != m]
            if not others:
                crossed[m] = selfed[m]
                continue
            kv = T.concat([selfed[o] for o in others], axis=1) if len(others) > 1 else selfed[others[0]]
            kv_mask = _concat_masks([pad_masks.get(o) for o in others],
                                    [selfed[o].shape[1] for o in others],
                                    selfed[m].shape[0])
            attn = getattr(self, f"cross_{m}")
            norm = getattr(self, f"norm_cross_{m}")
            crossed[m] = norm(selfed[m] + attn(selfed[m], kv, key_pad_mask=kv_mask))
        out = {}
        for m in present:
            ffn = getattr(self, f"ffn_{m}")
            norm = getattr(self, f"norm_ffn_{m}")
            out[m] = norm(crossed[m] + ffn(crossed[m]))
        return out


def _concat_masks(masks, lengths, batch):
    if all(m is None for m in masks):
        return None
    parts = []
    for m, n in zip(masks, lengths):
        parts.append(np.zeros((batch, n), dtype=bool) if m is None else np.asarray(m, dtype=bool))
    return np.concatenate(parts, axis=1)


class FusionNetwork(Module):
    def __init__(self, cfg: FusionConfig, rng: Rng, dtype=np.float32):
        self.cfg = cfg
        layer_cls = MergeLayer if cfg.mode == "merge" else CoLayer
        self.layers = [layer_cls(rng.derive(i), cfg, dtype) for i in range(cfg.layers)]

    def __call__(self, inputs: dict, pad_masks: dict = None) -> FusedBatch:
        """Fuse any non-empty subset of projected modality features.

        `inputs` maps modality -> Tensor [B, ..., H]; vision keeps its
        spatial/temporal dims and is flattened internally. Outputs are
        reshaped back to the input shapes.
        """
        if not inputs:
            raise ValueError("fuse needs at least one modality")
        pad_masks = pad_masks or {}
        present = [m for m in MODALITIES if m in inputs]
        hidden = self.cfg.hidden
        for m in present:
            if inputs[m].shape[-1] != hidden:
                raise ValueError(f"modality {m} width {inputs[m].shape[-1]} != hidden {hidden}")
        flat, shapes = {}, {}
        for m in present:
            flat[m], shapes[m] = _flatten(inputs[m])
        segments = []
        offset = 0
        for m in present:
            n = flat[m].shape[1]
            segments.append((m, offset, n))
            offset += n

        if self.cfg.mode == "merge":
            x = T.concat([flat[m] for m in present], axis=1) if len(present) > 1 else flat[present[0]]
            mask = _concat_masks([pad_masks.get(m) for m in present],
                                 [flat[m].shape[1] for m in present],
                                 x.shape[0])
            for layer in self.layers:
                x = layer(x, pad_mask=mask)
            features = {}
            for m, start, n in segments:
                piece = T.slice_axis(x, 1, start, start + n)
                features[m] = T.reshape(piece, shapes[m])
        else:
            state = {m: flat[m] for m in present}
            masks = {m: pad_masks.get(m) for m in present}
            for layer in self.layers:
                state = layer(state, masks)
            features = {m: T.reshape(state[m], shapes[m]) for m in present}

        return FusedBatch(features=features,
                          pad_masks={m: pad_masks.get(m) for m in present},
                          segments=segments)
