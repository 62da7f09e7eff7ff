"""Toy single-modality encoders.

These stand in for the large pretrained encoders while reproducing their
I/O geometry: the language encoder maps token ids to [B, L, H_l], the
vision encoder maps [B, W, H, T, 3] voxels through a 4x4x2 patch embedding
and three stride-2 spatial pooling blocks to [B, W/32, H/32, T/2, H_v],
and the speech encoder applies non-overlapping strided 1-D convolutions
with total stride 320 to reach [B, floor(S/320), H_s].

A projector then maps each modality into the fusion width and, in merge
mode, adds the modality's identification embedding at every position.
Positional information lives only inside the encoders; nothing positional
is added at the fusion boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .nn import (
    Embedding,
    EncoderLayer,
    Linear,
    Module,
    sinusoid_positions,
    xavier_uniform,
)
from .rng import Rng
from .tensor import Tensor

MODALITIES = ("V", "L", "S")


@dataclass
class EncoderConfig:
    vocab: int = 256
    h_lang: int = 64
    h_vision: int = 64
    h_speech: int = 64
    h_fusion: int = 128
    depth: int = 2
    heads: int = 4
    patch_width: int = 32  # C: width of the 4x4x2 patch features
    speech_strides: tuple = (5, 4, 4, 4)  # product 320
    speech_widths: tuple = (32, 64, 64, 64)

    def __post_init__(self):
        for name in ("vocab", "h_lang", "h_vision", "h_speech", "h_fusion", "depth", "heads"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        self.speech_strides = tuple(self.speech_strides)
        self.speech_widths = tuple(self.speech_widths)
        if len(self.speech_widths) != len(self.speech_strides):
            raise ValueError("speech_widths and speech_strides must align")
        if self.speech_widths[-1] != self.h_speech:
            self.speech_widths = self.speech_widths[:-1] + (self.h_speech,)

    @property
    def speech_stride_product(self):
        return int(np.prod(self.speech_strides))


@dataclass
class LanguageInput:
    token_ids: np.ndarray  # [B, L] ints in [0, vocab)
    pad_mask: np.ndarray = None  # [B, L] bool, True where padding

    def __post_init__(self):
        self.token_ids = np.asarray(self.token_ids)
        if self.pad_mask is None:
            self.pad_mask = np.zeros(self.token_ids.shape, dtype=bool)
        self.pad_mask = np.asarray(self.pad_mask, dtype=bool)
        if np.any(np.all(self.pad_mask, axis=-1)):
            raise ValueError("each example needs at least one non-pad token")


@dataclass
class VisionInput:
    frames: np.ndarray  # [B, W, H, T, 3], values in [0, 1]

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        _, w, h, t, c = self.frames.shape
        if c != 3:
            raise ValueError("frames must have 3 channels")
        if w % 32 or h % 32:
            raise ValueError("frame width and height must be divisible by 32")
        if t % 2:
            raise ValueError("frame count must be divisible by 2")


@dataclass
class SpeechInput:
    waveform: np.ndarray  # [B, S] in [-1, 1]
    sample_rate: int = 16000

    def __post_init__(self):
        self.waveform = np.asarray(self.waveform)


class LanguageEncoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: Rng, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.embed = Embedding(rng.derive(1), cfg.vocab, cfg.h_lang, dtype)
        self.layers = [
            EncoderLayer(rng.derive(10 + i), cfg.h_lang, cfg.heads, dtype=dtype)
            for i in range(cfg.depth)
        ]

    def __call__(self, x: LanguageInput) -> Tensor:
        ids = x.token_ids
        if ids.max() >= self.cfg.vocab:
            raise ValueError(f"token id {ids.max()} >= vocab {self.cfg.vocab}")
        h = self.embed(ids) + sinusoid_positions(ids.shape[1], self.cfg.h_lang, self.dtype)
        for layer in self.layers:
            h = layer(h, pad_mask=x.pad_mask)
        return h


class VisionEncoder(Module):
    """Patch embedding then three stride-2 spatial pooling+linear blocks."""

    def __init__(self, cfg: EncoderConfig, rng: Rng, dtype=np.float32):
        self.cfg = cfg
        c = cfg.patch_width
        self.patch_proj = Linear(rng.derive(1), 4 * 4 * 2 * 3, c, dtype)
        widths = [c, c, c, cfg.h_vision]
        self.blocks = [
            Linear(rng.derive(2 + i), widths[i], widths[i + 1], dtype) for i in range(3)
        ]

    def patchify(self, x: VisionInput) -> Tensor:
        """Raw voxels -> [B, W/4, H/4, T/2, C] patch features (4x4x2 patches)."""
        f = np.asarray(x.frames)
        b, w, h, t, _ = f.shape
        if w % 4 or h % 4 or t % 2:
            raise ValueError("frames not divisible into 4x4x2 patches")
        blocks = f.reshape(b, w // 4, 4, h // 4, 4, t // 2, 2, 3)
        blocks = blocks.transpose(0, 1, 3, 5, 2, 4, 6, 7).reshape(
            b, w // 4, h // 4, t // 2, 96
        )
        return self.patch_proj(Tensor(blocks.astype(self.patch_proj.w.dtype)))

    def encode_patches(self, grid: Tensor) -> Tensor:
        """Patch grid [B, W', H', T', C] -> [B, W'/8, H'/8, T', H_v]."""
        h = grid
        for block in self.blocks:
            b, wg, hg, tg, c = h.shape
            if wg % 2 or hg % 2:
                raise ValueError("patch grid not divisible by pooling stride")
            pooled = T.reshape(h, (b, wg // 2, 2, hg // 2, 2, tg, c))
            pooled = T.tmean(pooled, axis=(2, 4))
            h = T.gelu(block(pooled))
        return h

    def __call__(self, x: VisionInput) -> Tensor:
        return self.encode_patches(self.patchify(x))


class SpeechFeaturizer(Module):
    """Non-overlapping strided 1-D conv stack; total stride 320 by default."""

    def __init__(self, cfg: EncoderConfig, rng: Rng, dtype=np.float32):
        self.strides = cfg.speech_strides
        widths = (1,) + cfg.speech_widths
        self.stages = [
            Linear(rng.derive(i), widths[i] * self.strides[i], widths[i + 1], dtype)
            for i in range(len(self.strides))
        ]

    def __call__(self, waveform) -> Tensor:
        stride_product = int(np.prod(self.strides))
        if isinstance(waveform, Tensor):
            h = T.reshape(waveform, waveform.shape + (1,))
        else:
            wave = np.asarray(waveform)
            h = Tensor(wave[:, :, None].astype(self.stages[0].w.dtype))
        if h.shape[1] < stride_product:
            raise ValueError(
                f"waveform length {h.shape[1]} < stride product {stride_product}"
            )
        for stride, stage in zip(self.strides, self.stages):
            b, n, c = h.shape
            n_out = n // stride
            h = T.slice_axis(h, 1, 0, n_out * stride)
            h = T.reshape(h, (b, n_out, stride * c))
            h = T.gelu(stage(h))
        return h


class SpeechEncoder(Module):
    def __init__(self, cfg: EncoderConfig, rng: Rng, dtype=np.float32):
        self.cfg = cfg
        self.featurizer = SpeechFeaturizer(cfg, rng.derive(1), dtype)
        self.layers = [
            EncoderLayer(rng.derive(10 + i), cfg.h_speech, cfg.heads, dtype=dtype)
            for i in range(cfg.depth)
        ]

    def encode_frames(self, frames: Tensor) -> Tensor:
        h = frames
        for layer in self.layers:
            h = layer(h)
        return h

    def __call__(self, x: SpeechInput) -> Tensor:
        return self.encode_frames(self.featurizer(x.waveform))


class ModalityProjector(Module):
    """Per-modality linear map to the fusion width plus merge-mode ID embeddings."""

    def __init__(self, cfg: EncoderConfig, rng: Rng, dtype=np.float32):
        widths = {"V": cfg.h_vision, "L": cfg.h_lang, "S": cfg.h_speech}
        self.proj_V = Linear(rng.derive(1), widths["V"], cfg.h_fusion, dtype)
        self.proj_L = Linear(rng.derive(2), widths["L"], cfg.h_fusion, dtype)
        self.proj_S = Linear(rng.derive(3), widths["S"], cfg.h_fusion, dtype)
        self.id_embed = xavier_uniform(
            rng.derive(4), 3, cfg.h_fusion, shape=(3, cfg.h_fusion), dtype=dtype
        )

    def __call__(self, features: Tensor, modality: str, mode: str) -> Tensor:
        if modality not in MODALITIES:
            raise ValueError(f"unknown modality {modality!r}")
        proj = getattr(self, f"proj_{modality}")
        out = proj(features)
        if mode == "merge":
            idx = MODALITIES.index(modality)
            tag = T.slice_axis(self.id_embed, 0, idx, idx + 1)
            out = out + T.reshape(tag, (1,) * (len(out.shape) - 1) + (out.shape[-1],))
        elif mode != "co":
            raise ValueError(f"unknown fusion mode {mode!r}")
        return out
