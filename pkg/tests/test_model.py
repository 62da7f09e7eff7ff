"""Model wiring: parameter groups, frozen machinery, target grids."""

import numpy as np
import pytest

from trimodal.encoders import EncoderConfig, LanguageInput, SpeechInput, VisionInput
from trimodal.fusion import FusionConfig
from trimodal.model import Model, ModelConfig


def small_cfg(mode="merge"):
    enc = EncoderConfig(h_lang=16, h_vision=16, h_speech=16, h_fusion=32,
                        depth=1, heads=2, patch_width=8,
                        speech_widths=(8, 16, 16, 16))
    fus = FusionConfig(mode=mode, layers=1, hidden=32, heads=2)
    return ModelConfig(encoder=enc, fusion=fus, vision_codebook_size=32,
                       speech_codebook_size=24, vision_code_dim=8)


def test_width_mismatch_rejected():
    enc = EncoderConfig(h_fusion=64)
    with pytest.raises(ValueError):
        ModelConfig(encoder=enc, fusion=FusionConfig(hidden=128))


def test_parameter_groups_partition():
    model = Model(small_cfg(), seed=0)
    enc, fus = model.parameter_groups()
    assert set(enc) & set(fus) == set()
    assert all(n.startswith(("language.", "vision.", "speech.")) for n in enc)
    assert any(n.startswith("fusion.") for n in fus)
    assert any(n.startswith("heads.") for n in fus)
    assert any(n.startswith("temperatures.") for n in fus)
    assert not any(n.startswith("frozen_featurizer.") for n in list(enc) + list(fus))


def test_parameter_count_consistent():
    model = Model(small_cfg(), seed=0)
    counts = model.parameter_count()
    assert counts["total"] == counts["encoders"] + counts["fusion"]
    assert counts["total"] == sum(p.data.size for _, p in model.named_parameters())
    assert counts["total"] > 0


def test_seed_reproducibility():
    a = Model(small_cfg(), seed=4)
    b = Model(small_cfg(), seed=4)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        np.testing.assert_array_equal(pa.data, pb.data)


def test_frozen_machinery_identical_across_train_seeds():
    """Codebooks/lift/frozen featurizer depend only on codebook_seed."""
    a, b = Model(small_cfg(), seed=0), Model(small_cfg(), seed=99)
    np.testing.assert_array_equal(a.vision_codebook.codes, b.vision_codebook.codes)
    np.testing.assert_array_equal(a.speech_codebook.codes, b.speech_codebook.codes)
    np.testing.assert_array_equal(a.vision_lift, b.vision_lift)


def test_vision_targets_grid():
    model = Model(small_cfg(), seed=0)
    frames = np.random.default_rng(0).random((2, 64, 64, 8, 3))
    tokens = model.vision_targets(frames)
    assert tokens.shape == (2, 4, 4, 8)
    assert tokens.min() >= 0 and tokens.max() < 32


def test_speech_targets_grid():
    model = Model(small_cfg(), seed=0)
    wave = np.random.default_rng(1).uniform(-1, 1, (2, 16000)).astype(np.float32)
    tokens = model.speech_targets(wave)
    assert tokens.shape == (2, 50)
    assert tokens.min() >= 0 and tokens.max() < 24


def test_fuse_raw_all_modalities():
    model = Model(small_cfg(), seed=0)
    g = np.random.default_rng(2)
    fused = model.fuse_raw(
        language=LanguageInput(g.integers(0, 256, (1, 12))),
        vision=VisionInput(g.random((1, 64, 64, 8, 3)).astype(np.float32)),
        speech=SpeechInput(g.uniform(-1, 1, (1, 16000)).astype(np.float32)),
    )
    assert fused["L"].shape == (1, 12, 32)
    assert fused["V"].shape == (1, 2, 2, 4, 32)
    assert fused["S"].shape == (1, 50, 32)


def test_mvm_head_appendix_shapes():
    from trimodal.tensor import Tensor
    model = Model(small_cfg(), seed=0)
    fused_v = Tensor(np.zeros((1, 2, 2, 4, 32), dtype=np.float32))
    logits = model.heads.mvm_logits(fused_v)
    assert logits.shape == (1, 4, 4, 8, 32)
