"""Fusion network: both modes, all modality subsets, structural ablations."""

import itertools

import numpy as np
import pytest

from trimodal import tensor as T
from trimodal.fusion import CoLayer, FusionConfig, FusionNetwork, MergeLayer
from trimodal.rng import Rng
from trimodal.tensor import Tensor, finite_diff_check

H = 16


def feats(shape, seed):
    data = np.random.default_rng(seed).standard_normal(shape).astype(np.float32)
    return Tensor(data)


def trimodal_inputs(seed=0):
    """Geometry of a 64x64x8 video + 12 text tokens + 1 s of audio."""
    return {
        "L": feats((2, 12, H), seed),
        "V": feats((2, 2, 2, 4, H), seed + 1),
        "S": feats((2, 50, H), seed + 2),
    }


# -- merge mode ---------------------------------------------------------------


def test_merge_sequence_length_is_78():
    net = FusionNetwork(FusionConfig(mode="merge", layers=1, hidden=H, heads=2), Rng(0))
    fused = net(trimodal_inputs())
    total = sum(n for _, _, n in fused.segments)
    assert total == 12 + 16 + 50
    assert [s[0] for s in fused.segments] == ["V", "L", "S"]


def test_merge_single_modality_is_plain_encoder_layer():
    cfg = FusionConfig(mode="merge", layers=1, hidden=H, heads=2)
    net = FusionNetwork(cfg, Rng(1))
    x = trimodal_inputs()["L"]
    fused = net({"L": x})
    direct = net.layers[0](x)
    np.testing.assert_allclose(fused["L"].data, direct.data, atol=1e-6)


def test_merge_attention_rows_sum_to_one_over_nonpad():
    """Padded keys get ~zero attention: perturbing them cannot move outputs."""
    cfg = FusionConfig(mode="merge", layers=1, hidden=H, heads=2)
    net = FusionNetwork(cfg, Rng(2))
    x = trimodal_inputs(3)["L"]
    pad = np.zeros((2, 12), dtype=bool)
    pad[:, 9:] = True
    out1 = net({"L": x}, {"L": pad})["L"].data
    bumped = Tensor(x.data.copy())
    bumped.data[:, 9:] += 2.0
    out2 = net({"L": bumped}, {"L": pad})["L"].data
    np.testing.assert_allclose(out1[:, :9], out2[:, :9], atol=1e-5)


# -- co mode ------------------------------------------------------------------


def test_co_cross_keys_span_other_modalities():
    """For {L,V,S}, language cross-attends over 16+50 = 66 positions: perturbing
    any vision or speech position moves the language output."""
    cfg = FusionConfig(mode="co", layers=1, hidden=H, heads=2)
    net = FusionNetwork(cfg, Rng(3))
    inputs = trimodal_inputs(5)
    base = net(inputs)["L"].data
    moved = {k: Tensor(v.data.copy()) for k, v in inputs.items()}
    moved["S"].data[:, 49] += 1.0  # last speech key
    out = net(moved)["L"].data
    assert np.abs(out - base).max() > 1e-6


def test_co_single_modality_skips_cross():
    """{L} only: output equals the self+FFN path with cross left out."""
    cfg = FusionConfig(mode="co", layers=1, hidden=H, heads=2)
    layer = CoLayer(Rng(4), cfg)
    x = trimodal_inputs(6)["L"]
    out = layer({"L": x}, {})["L"]
    selfed = layer.norm_self_L(x + layer.self_L(x, x))
    expect = layer.norm_ffn_L(selfed + layer.ffn_L(selfed))
    np.testing.assert_array_equal(out.data, expect.data)


def test_co_zeroed_cross_values_equal_self_ffn_path():
    """Structural ablation: zero cross value/output weights -> exact equality
    with the path that never runs cross-attention (modulo the cross LayerNorm,
    whose input becomes the pure self output)."""
    cfg = FusionConfig(mode="co", layers=1, hidden=H, heads=2)
    layer = CoLayer(Rng(7), cfg)
    for m in ("V", "L", "S"):
        cross = getattr(layer, f"cross_{m}")
        cross.wv.w.data[...] = 0.0
        cross.wv.b.data[...] = 0.0
        cross.wo.w.data[...] = 0.0
        cross.wo.b.data[...] = 0.0
    inputs = {m: T.reshape(v, (2, -1, H)) for m, v in trimodal_inputs(8).items()}
    out = layer(inputs, {})
    # reference: self + norm_cross(identity residual) + ffn, no attention term
    for m in ("V", "L", "S"):
        xm = inputs[m]
        selfed = getattr(layer, f"norm_self_{m}")(xm + getattr(layer, f"self_{m}")(xm, xm))
        crossed = getattr(layer, f"norm_cross_{m}")(selfed)  # residual + 0
        expect = getattr(layer, f"norm_ffn_{m}")(crossed + getattr(layer, f"ffn_{m}")(crossed))
        np.testing.assert_allclose(out[m].data, expect.data, atol=1e-6)


# -- subsets, both modes -------------------------------------------------------


ALL_SUBSETS = [s for n in (1, 2, 3) for s in itertools.combinations("VLS", n)]


@pytest.mark.parametrize("mode", ["merge", "co"])
@pytest.mark.parametrize("subset", ALL_SUBSETS, ids=["".join(s) for s in ALL_SUBSETS])
def test_all_subsets_shapes(mode, subset):
    cfg = FusionConfig(mode=mode, layers=1, hidden=H, heads=2)
    net = FusionNetwork(cfg, Rng(9))
    inputs = {m: v for m, v in trimodal_inputs(10).items() if m in subset}
    fused = net(inputs)
    assert set(fused.features) == set(subset)
    for m in subset:
        assert fused[m].shape == inputs[m].shape


def test_vision_flatten_unflatten_roundtrip():
    cfg = FusionConfig(mode="merge", layers=1, hidden=H, heads=2)
    net = FusionNetwork(cfg, Rng(11))
    v = feats((1, 2, 2, 4, H), 12)
    assert net({"V": v})["V"].shape == (1, 2, 2, 4, H)


def test_empty_inputs_rejected():
    net = FusionNetwork(FusionConfig(mode="merge", layers=1, hidden=H, heads=2), Rng(0))
    with pytest.raises(ValueError):
        net({})


def test_width_mismatch_rejected():
    net = FusionNetwork(FusionConfig(mode="merge", layers=1, hidden=H, heads=2), Rng(0))
    with pytest.raises(ValueError):
        net({"L": feats((1, 4, H + 2), 0)})


@pytest.mark.parametrize("mode", ["merge", "co"])
def test_end_to_end_gradient(mode):
    cfg = FusionConfig(mode=mode, layers=2, hidden=8, heads=2)
    net = FusionNetwork(cfg, Rng(13), dtype=np.float64)
    g = np.random.default_rng(14)
    other = {"V": Tensor(g.standard_normal((1, 1, 1, 1, 8)))}
    mix = g.standard_normal((1, 3, 8))

    def f(x):
        fused = net({"L": x, **other})
        return T.tsum(fused["L"] * Tensor(mix))

    x = Tensor(g.standard_normal((1, 3, 8)), requires_grad=True)
    assert finite_diff_check(f, x) < 1e-4
