"""Frozen codebooks, nearest-code assignment, deconv upsampling head."""

import numpy as np
import pytest

from trimodal.rng import Rng
from trimodal.tensor import Tensor, finite_diff_check
from trimodal.vq import (
    Codebook,
    DeconvUpsample,
    build_codebook,
    build_lift_matrix,
    code_probabilities,
    quantize,
    vision_target_tokens,
)


def test_codebook_unit_rows_reproducible():
    a = build_codebook(512, 16, seed=7)
    b = build_codebook(512, 16, seed=7)
    assert a.codes.shape == (512, 16)
    np.testing.assert_array_equal(a.codes, b.codes)
    np.testing.assert_allclose(np.linalg.norm(a.codes, axis=1), 1.0, atol=1e-6)


def test_codebook_seeds_differ():
    a = build_codebook(64, 8, seed=1)
    b = build_codebook(64, 8, seed=2)
    assert not np.array_equal(a.codes, b.codes)


def test_codebook_rejects_tiny():
    with pytest.raises(ValueError):
        build_codebook(1, 8, seed=0)


def test_quantize_nearest():
    cb = Codebook(codes=np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert quantize(np.array([[0.9, 0.1]]), cb)[0] == 0


def test_quantize_tie_goes_to_lowest_index():
    cb = Codebook(codes=np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert quantize(np.array([[0.5, 0.5]]), cb)[0] == 0


def test_quantize_matches_exhaustive_oracle():
    cb = build_codebook(40, 6, seed=3)
    vecs = np.random.default_rng(9).standard_normal((1000, 6))
    got = quantize(vecs, cb)
    # independent oracle: explicit distance loop
    oracle = np.empty(1000, dtype=int)
    for i, v in enumerate(vecs):
        d = np.sum((cb.codes - v) ** 2, axis=1)
        oracle[i] = int(np.argmin(d))
    np.testing.assert_array_equal(got, oracle)


def test_deconv_doubles_every_grid_axis():
    up = DeconvUpsample(Rng(0), 16)
    out = up(Tensor(np.zeros((1, 2, 2, 4, 16), dtype=np.float32)))
    assert out.shape == (1, 4, 4, 8, 16)


def test_deconv_minimal():
    up = DeconvUpsample(Rng(0), 16)
    out = up(Tensor(np.zeros((1, 1, 1, 1, 16), dtype=np.float32)))
    assert out.shape == (1, 2, 2, 2, 16)


def test_deconv_gradient():
    up = DeconvUpsample(Rng(1), 8, dtype=np.float64)
    mix = np.random.default_rng(2).standard_normal((1, 2, 2, 2, 8))

    def f(x):
        from trimodal import tensor as T
        return T.tsum(up(x) * Tensor(mix))

    x = Tensor(np.random.default_rng(3).standard_normal((1, 1, 1, 1, 8)), requires_grad=True)
    assert finite_diff_check(f, x) < 1e-4


def test_code_probabilities_normalized_and_uniform_at_zero():
    feats = Tensor(np.random.default_rng(0).standard_normal((1, 3, 8)).astype(np.float32))
    w = Tensor(np.zeros((8, 12), dtype=np.float32))
    b = Tensor(np.zeros(12, dtype=np.float32))
    p = code_probabilities(feats, w, b).data
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)
    np.testing.assert_allclose(p, 1.0 / 12, atol=1e-6)


def test_code_probabilities_appendix_shape():
    feats = Tensor(np.zeros((1, 4, 4, 8, 16), dtype=np.float32))
    w = Tensor(np.zeros((16, 512), dtype=np.float32))
    b = Tensor(np.zeros(512, dtype=np.float32))
    assert code_probabilities(feats, w, b).shape == (1, 4, 4, 8, 512)


def test_vision_targets_appendix_grid():
    frames = np.random.default_rng(0).random((1, 64, 64, 8, 3))
    cb = build_codebook(512, 16, seed=7)
    lift = build_lift_matrix(16, seed=7)
    tokens = vision_target_tokens(frames, lift, cb)
    assert tokens.shape == (1, 4, 4, 8)
    assert tokens.min() >= 0 and tokens.max() < 512


def test_vision_targets_deterministic():
    frames = np.random.default_rng(1).random((1, 64, 64, 8, 3))
    cb = build_codebook(64, 16, seed=5)
    lift = build_lift_matrix(16, seed=5)
    np.testing.assert_array_equal(
        vision_target_tokens(frames, lift, cb),
        vision_target_tokens(frames, lift, cb),
    )
