"""Frozen codebooks, nearest-code assignment, and the vision upsampling head.

The codebooks discretize vision patches and speech frames into target
tokens for masked-unit prediction. They are seeded, unit-norm, and never
trained; quantization is a pure argmin over squared L2 distance (ties to
the lowest index) and carries no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import Linear, Module
from .rng import Rng
from .tensor import Tensor


@dataclass(frozen=True)
class Codebook:
    codes: np.ndarray  # [V_c, D], unit-norm rows

    @property
    def size(self):
        return self.codes.shape[0]

    @property
    def dim(self):
        return self.codes.shape[1]


def build_codebook(num_codes, dim, seed) -> Codebook:
    if num_codes < 2:
        raise ValueError("codebook needs at least 2 codes")
    g = Rng(seed).generator()
    codes = g.standard_normal((num_codes, dim))
    codes /= np.linalg.norm(codes, axis=1, keepdims=True)
    return Codebook(codes.astype(np.float64))


def quantize(vectors, cb: Codebook):
    """Nearest-code indices [N] for vectors [N, D] (squared L2, ties -> lowest)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.shape[-1] != cb.dim:
        raise ValueError(f"vector dim {vectors.shape[-1]} != codebook dim {cb.dim}")
    flat = vectors.reshape(-1, cb.dim)
    # |v - c|^2 = |v|^2 - 2 v.c + |c|^2; |v|^2 constant per row
    d = -2.0 * flat @ cb.codes.T + (cb.codes ** 2).sum(axis=1)[None, :]
    return np.argmin(d, axis=1).reshape(vectors.shape[:-1])


class DeconvUpsample(Module):
    """Transposed 3-D convolution, kernel 2x2x2 and stride 2x2x2.

    With kernel == stride each input cell independently produces a 2x2x2
    output block, so the op is a linear map to 8 per-cell outputs followed
    by a block interleave.
    """

    def __init__(self, rng: Rng, width, dtype=np.float32):
        self.proj = Linear(rng, width, 8 * width, dtype)
        self.width = width

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.width:
            raise ValueError(f"expected width {self.width}, got {x.shape[-1]}")
        b, w, h, t, c = x.shape
        y = self.proj(x)  # [b, w, h, t, 8c]
        y = T.reshape(y, (b, w, h, t, 2, 2, 2, c))
        y = T.transpose(y, (0, 1, 4, 2, 5, 3, 6, 7))
        return T.reshape(y, (b, 2 * w, 2 * h, 2 * t, c))


def code_logits(features: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map from head features to codebook logits."""
    if features.shape[-1] != w.shape[0]:
        raise ValueError("feature width does not match projection")
    return T.matmul(features, w) + b


def code_probabilities(features: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Per-position probability distribution over the codebook."""
    return T.softmax(code_logits(features, w, b), axis=-1)


def vision_target_tokens(frames, lift, cb: Codebook):
    """Quantized target grid [B, W/16, H/16, T] from raw frames.

    Each 16x16x1 block of raw RGB is mean-pooled to a 3-vector, lifted to
    the codebook dimension by the fixed seeded matrix `lift` [3, D], then
    assigned to its nearest code.
    """
    f = np.asarray(frames, dtype=np.float64)
    b, w, h, t, _ = f.shape
    if w % 16 or h % 16:
        raise ValueError("frame extents must divide by 16 for target tokens")
    pooled = f.reshape(b, w // 16, 16, h // 16, 16, t, 3).mean(axis=(2, 4))
    descriptors = pooled @ np.asarray(lift, dtype=np.float64)
    return quantize(descriptors, cb)


def build_lift_matrix(dim, seed):
    """Fixed seeded 3 -> D lift for vision target descriptors."""
    return Rng(seed).generator().standard_normal((3, dim))


def speech_target_tokens(frozen_frames, cb: Codebook):
    """Quantize frozen featurizer outputs [B, F, D] frame by frame."""
    return quantize(np.asarray(frozen_frames, dtype=np.float64), cb)
