"""Full pretraining model: encoders, projector, fusion, heads, temperatures.

Also owns the frozen discretizers that produce masked-unit targets: the
vision and speech codebooks, the fixed RGB lift matrix, and a frozen copy
of the speech featurizer. Those never receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from . import vq
from .encoders import (
    EncoderConfig,
    LanguageEncoder,
    LanguageInput,
    ModalityProjector,
    SpeechEncoder,
    SpeechInput,
    VisionEncoder,
    VisionInput,
)
from .fusion import FusionConfig, FusionNetwork
from .nn import Linear, Module, xavier_uniform
from .objectives import Temperatures
from .rng import Rng
from .tensor import Tensor


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    vision_codebook_size: int = 512
    speech_codebook_size: int = 320
    vision_code_dim: int = 16
    codebook_seed: int = 7

    def __post_init__(self):
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        if isinstance(self.fusion, dict):
            self.fusion = FusionConfig(**self.fusion)
        if self.encoder.h_fusion != self.fusion.hidden:
            raise ValueError("encoder h_fusion must equal fusion hidden width")


class PretrainHeads(Module):
    """Prediction heads for the three masked-unit objectives."""

    def __init__(self, cfg: ModelConfig, rng: Rng, dtype=np.float32):
        h = cfg.fusion.hidden
        self.mlm = Linear(rng.derive(1), h, cfg.encoder.vocab, dtype)
        self.msm = Linear(rng.derive(2), h, cfg.speech_codebook_size, dtype)
        self.mvm_upsample = vq.DeconvUpsample(rng.derive(3), h, dtype)
        self.mvm_w = xavier_uniform(rng.derive(4), h, cfg.vision_codebook_size, dtype=dtype)
        self.mvm_b = Tensor(np.zeros(cfg.vision_codebook_size, dtype=dtype), requires_grad=True)

    def mvm_logits(self, fused_vision: Tensor) -> Tensor:
        up = self.mvm_upsample(fused_vision)
        return vq.code_logits(up, self.mvm_w, self.mvm_b)


class Model(Module):
    def __init__(self, cfg: ModelConfig, seed: int, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        rng = Rng(seed)
        enc = cfg.encoder
        self.language = LanguageEncoder(enc, rng.derive(1), dtype)
        self.vision = VisionEncoder(enc, rng.derive(2), dtype)
        self.speech = SpeechEncoder(enc, rng.derive(3), dtype)
        self.projector = ModalityProjector(enc, rng.derive(4), dtype)
        self.fusion = FusionNetwork(cfg.fusion, rng.derive(5), dtype)
        self.heads = PretrainHeads(cfg, rng.derive(6), dtype)
        self.temperatures = Temperatures(dtype)
        # learnable mask embeddings for vision patches and speech frames
        self.vision_mask_embed = xavier_uniform(
            rng.derive(7), enc.patch_width, enc.patch_width,
            shape=(enc.patch_width,), dtype=dtype)
        self.speech_mask_embed = xavier_uniform(
            rng.derive(8), enc.h_speech, enc.h_speech,
            shape=(enc.h_speech,), dtype=dtype)
        # frozen target machinery (never trained)
        self.vision_codebook = vq.build_codebook(
            cfg.vision_codebook_size, cfg.vision_code_dim, cfg.codebook_seed)
        self.vision_lift = vq.build_lift_matrix(cfg.vision_code_dim, cfg.codebook_seed + 1)
        from .encoders import SpeechFeaturizer

        self.frozen_featurizer = SpeechFeaturizer(enc, Rng(cfg.codebook_seed + 2), dtype)
        for _, p in self.frozen_featurizer.named_parameters():
            p.requires_grad = False
        self.speech_codebook = vq.build_codebook(
            cfg.speech_codebook_size, enc.h_speech, cfg.codebook_seed + 3)

    # -- encoding into the fusion space ---------------------------------

    def project(self, modality: str, features: Tensor) -> Tensor:
        return self.projector(features, modality, self.cfg.fusion.mode)

    def encode_inputs(self, language: LanguageInput = None, vision: VisionInput = None,
                      speech: SpeechInput = None):
        """Encode + project raw inputs; returns (inputs dict, pad_masks dict)."""
        inputs, pads = {}, {}
        if vision is not None:
            inputs["V"] = self.project("V", self.vision(vision))
        if language is not None:
            inputs["L"] = self.project("L", self.language(language))
            pads["L"] = language.pad_mask
        if speech is not None:
            inputs["S"] = self.project("S", self.speech(speech))
        return inputs, pads

    def fuse_raw(self, **raw):
        inputs, pads = self.encode_inputs(**raw)
        return self.fusion(inputs, pads)

    # -- targets ---------------------------------------------------------

    def vision_targets(self, frames) -> np.ndarray:
        return vq.vision_target_tokens(frames, self.vision_lift, self.vision_codebook)

    def speech_targets(self, waveform) -> np.ndarray:
        with T.no_grad():
            frames = self.frozen_featurizer(waveform)
        return vq.speech_target_tokens(frames.data, self.speech_codebook)

    # -- bookkeeping -------------------------------------------------------

    def parameter_groups(self):
        """(encoder group, fusion group) of named parameters.

        The encoder group holds the three single-modality encoders; the
        fusion group holds the projector, fusion layers, heads, mask
        embeddings, and temperatures. Frozen target machinery is excluded.
        """
        encoder_names = ("language.", "vision.", "speech.")
        enc, fus = {}, {}
        for name, p in self.named_parameters():
            if name.startswith("frozen_featurizer."):
                continue
            (enc if name.startswith(encoder_names) else fus)[name] = p
        return enc, fus

    def named_parameters(self, prefix=""):
        for name, p in super().named_parameters(prefix):
            if not p.requires_grad:
                continue
            yield name, p

    def parameter_count(self):
        enc, fus = self.parameter_groups()
        return {
            "encoders": sum(p.data.size for p in enc.values()),
            "fusion": sum(p.data.size for p in fus.values()),
            "total": sum(p.data.size for p in enc.values())
            + sum(p.data.size for p in fus.values()),
        }
