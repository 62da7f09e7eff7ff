"""Shared fixtures: tiny configs sized for fast CPU tests."""

import numpy as np
import pytest

from trimodal.encoders import EncoderConfig
from trimodal.fusion import FusionConfig
from trimodal.model import Model, ModelConfig
from trimodal.rng import Rng


@pytest.fixture
def tiny_encoder_cfg():
    return EncoderConfig(h_lang=16, h_vision=16, h_speech=16, h_fusion=32,
                         depth=1, heads=2, patch_width=8,
                         speech_widths=(8, 16, 16, 16))


@pytest.fixture
def tiny_model():
    enc = EncoderConfig(h_lang=16, h_vision=16, h_speech=16, h_fusion=32,
                        depth=1, heads=2, patch_width=8,
                        speech_widths=(8, 16, 16, 16))
    fus = FusionConfig(mode="merge", layers=1, hidden=32, heads=2)
    return Model(ModelConfig(encoder=enc, fusion=fus,
                             vision_codebook_size=32, speech_codebook_size=24,
                             vision_code_dim=8), seed=0)


@pytest.fixture
def rng():
    return Rng(0)


def rand64(rng_key, *shape):
    """Random float64 array from a fixed numpy seed (test-local inputs)."""
    return np.random.default_rng(rng_key).standard_normal(shape)
