"""Finite-difference gradient checks for every differentiable op.

Each named check builds a tiny 64-bit instance of one kernel or composite
(encoder, fusion layer, head, loss, temperature), reduces it to a scalar,
and compares reverse-mode gradients with central differences. Used by the
`grad-check` CLI subcommand and the acceptance suite.
"""

from __future__ import annotations

import numpy as np

from . import masking, tensor as T
from .encoders import EncoderConfig, LanguageEncoder, ModalityProjector, SpeechEncoder, VisionEncoder
from .fusion import CoLayer, FusionConfig, FusionNetwork, MergeLayer
from .nn import LayerNorm
from .objectives import Temperatures, masked_unit_loss, pair_contrastive_loss, pooled_unit_rep
from .rng import Rng
from .tensor import Tensor, backward, finite_diff_check
from .vq import DeconvUpsample, code_logits

F64 = np.float64


def _randn(seed, *shape):
    return Rng(seed).generator().standard_normal(shape)


def check_param(loss_fn, param, step=1e-5):
    """FD check of d(loss)/d(param) for a parameter inside a module."""
    param.zero_grad()
    backward(loss_fn())
    analytic = param.grad.copy()

    def f(x):
        old = param.data
        param.data = x.data
        try:
            return loss_fn()
        finally:
            param.data = old

    return finite_diff_check(f, Tensor(param.data.copy(), dtype=F64), step, analytic=analytic)


def _sq(t):
    return T.tsum(t * t)


def _mix(t, seed):
    """Scalar readout with non-uniform weights so grads are not degenerate."""
    w = Tensor(_randn(seed + 9000, *t.shape))
    return T.tsum(t * w)


# -- individual checks -------------------------------------------------------


def chk_add_mul(seed):
    a = Tensor(_randn(seed, 3, 4), dtype=F64)
    return finite_diff_check(lambda x: _mix(x * Tensor(_randn(seed + 1, 3, 4)) + x, seed), a)


def chk_matmul(seed):
    a = Tensor(_randn(seed, 2, 3, 4), dtype=F64)
    b = Tensor(_randn(seed + 1, 4, 5))
    return finite_diff_check(lambda x: _sq(T.matmul(x, b)), a)


def chk_softmax(seed):
    a = Tensor(_randn(seed, 3, 5), dtype=F64)
    return finite_diff_check(lambda x: _mix(T.softmax(x, axis=-1), seed), a)


def chk_cross_entropy(seed):
    a = Tensor(_randn(seed, 6, 5), dtype=F64)
    targets = Rng(seed).generator().integers(0, 5, size=6)
    return finite_diff_check(lambda x: T.cross_entropy_from_logits(x, targets), a)


def chk_layer_norm(seed):
    ln = LayerNorm(6, dtype=F64)
    a = Tensor(_randn(seed, 4, 6), dtype=F64)
    return finite_diff_check(lambda x: _mix(ln(x), seed), a)


def chk_embedding(seed):
    table = Tensor(_randn(seed, 7, 4), dtype=F64, requires_grad=True)
    ids = Rng(seed).generator().integers(0, 7, size=(3, 5))
    return check_param(lambda: _sq(T.gather_rows(table, ids)), table)


def chk_concat_slice(seed):
    a = Tensor(_randn(seed, 2, 3, 4), dtype=F64)

    def f(x):
        joined = T.concat([x, x * 2.0], axis=1)
        return _mix(T.slice_axis(joined, 1, 1, 5), seed)

    return finite_diff_check(f, a)


def chk_mean_l2norm(seed):
    a = Tensor(_randn(seed, 3, 6), dtype=F64)
    return finite_diff_check(lambda x: _mix(T.l2_normalize(T.tmean(x, 0, True), -1), seed), a)


def chk_gelu_exp_log_tanh(seed):
    a = Tensor(np.abs(_randn(seed, 3, 4)) + 0.5, dtype=F64)
    return finite_diff_check(
        lambda x: _sq(T.gelu(x) + T.tanh(x) + T.log(x) + T.exp(x * 0.1)), a)


def chk_language_encoder(seed):
    cfg = EncoderConfig(vocab=11, h_lang=8, h_vision=8, h_speech=8, h_fusion=8,
                        depth=1, heads=2)
    enc = LanguageEncoder(cfg, Rng(seed), dtype=F64)
    ids = Rng(seed + 1).generator().integers(0, 11, size=(2, 4))
    from .encoders import LanguageInput

    return check_param(lambda: _mix(enc(LanguageInput(ids)), seed), enc.embed.table)


def chk_vision_encoder(seed):
    cfg = EncoderConfig(h_vision=8, patch_width=4, depth=1, heads=2)
    enc = VisionEncoder(cfg, Rng(seed), dtype=F64)
    grid = Tensor(_randn(seed + 1, 1, 8, 8, 1, 4), dtype=F64)
    return finite_diff_check(lambda x: _mix(enc.encode_patches(x), seed), grid)


def chk_speech_encoder(seed):
    cfg = EncoderConfig(h_speech=8, depth=1, heads=2,
                        speech_strides=(2, 2), speech_widths=(4, 8))
    enc = SpeechEncoder(cfg, Rng(seed), dtype=F64)
    wave = Tensor(_randn(seed + 1, 1, 12) * 0.3, dtype=F64)
    return finite_diff_check(lambda x: _mix(enc.encode_frames(enc.featurizer(x)), seed), wave)


def chk_projector(seed):
    cfg = EncoderConfig(h_lang=6, h_fusion=8)
    proj = ModalityProjector(cfg, Rng(seed), dtype=F64)
    a = Tensor(_randn(seed + 1, 2, 3, 6), dtype=F64)
    return finite_diff_check(lambda x: _sq(proj(x, "L", "merge")), a)


def chk_merge_layer(seed):
    cfg = FusionConfig(mode="merge", layers=1, hidden=8, heads=2)
    layer = MergeLayer(Rng(seed), cfg, dtype=F64)
    a = Tensor(_randn(seed + 1, 2, 5, 8), dtype=F64)
    return finite_diff_check(lambda x: _mix(layer(x), seed), a)


def chk_co_layer(seed):
    cfg = FusionConfig(mode="co", layers=1, hidden=8, heads=2)
    layer = CoLayer(Rng(seed), cfg, dtype=F64)
    xl = Tensor(_randn(seed + 1, 2, 3, 8), dtype=F64)
    xv = Tensor(_randn(seed + 2, 2, 4, 8))
    xs = Tensor(_randn(seed + 3, 2, 2, 8))

    def f(x):
        out = layer({"L": x, "V": xv, "S": xs}, {})
        return _mix(out["L"], seed) + _mix(out["V"], seed + 1) + _mix(out["S"], seed + 2)

    return finite_diff_check(f, xl)


def chk_fusion_end_to_end(seed):
    cfg = FusionConfig(mode="merge", layers=2, hidden=8, heads=2)
    net = FusionNetwork(cfg, Rng(seed), dtype=F64)
    xl = Tensor(_randn(seed + 1, 1, 3, 8), dtype=F64)
    xv = Tensor(_randn(seed + 2, 1, 2, 2, 1, 8))

    def f(x):
        fused = net({"L": x, "V": xv})
        return _mix(fused["L"], seed) + _mix(fused["V"], seed + 1)

    return finite_diff_check(f, xl)


def chk_deconv_head(seed):
    head = DeconvUpsample(Rng(seed), 6, dtype=F64)
    a = Tensor(_randn(seed + 1, 1, 2, 2, 2, 6), dtype=F64)
    return finite_diff_check(lambda x: _mix(head(x), seed), a)


def chk_masked_unit_loss(seed):
    g = Rng(seed).generator()
    a = Tensor(_randn(seed, 2, 4, 5), dtype=F64)
    positions = g.random((2, 4)) < 0.5
    positions[0, 0] = True
    targets = np.where(positions, g.integers(0, 5, size=(2, 4)), -1)
    plan = masking.MaskPlan(positions, targets)
    return finite_diff_check(lambda x: masked_unit_loss(x, plan), a)


def chk_contrastive_loss(seed):
    raw = Tensor(_randn(seed, 4, 6), dtype=F64)
    other = T.l2_normalize(Tensor(_randn(seed + 1, 4, 6)), -1)

    def f(x):
        u = T.l2_normalize(x, -1)
        return pair_contrastive_loss(u, other, 3.0)

    return finite_diff_check(f, raw)


def chk_temperature(seed):
    temps = Temperatures(dtype=F64)
    temps.s_vl.data = np.asarray(_randn(seed) * 0.5, dtype=F64)
    u_a = T.l2_normalize(Tensor(_randn(seed + 1, 4, 6)), -1).detach()
    u_b = T.l2_normalize(Tensor(_randn(seed + 2, 4, 6)), -1).detach()
    return check_param(lambda: pair_contrastive_loss(u_a, u_b, temps.tau("vl")), temps.s_vl)


def chk_pooled_rep(seed):
    cfg = FusionConfig(mode="co", layers=1, hidden=8, heads=2)
    net = FusionNetwork(cfg, Rng(seed), dtype=F64)
    a = Tensor(_randn(seed + 1, 2, 4, 8), dtype=F64)
    pad = np.zeros((2, 4), dtype=bool)
    pad[1, 3] = True

    def f(x):
        fused = net({"L": x}, {"L": pad})
        return _mix(pooled_unit_rep(fused, "L"), seed)

    return finite_diff_check(f, a)


CHECKS = {
    "tensor.add_mul": chk_add_mul,
    "tensor.matmul": chk_matmul,
    "tensor.softmax": chk_softmax,
    "tensor.cross_entropy": chk_cross_entropy,
    "tensor.layer_norm": chk_layer_norm,
    "tensor.embedding": chk_embedding,
    "tensor.concat_slice": chk_concat_slice,
    "tensor.mean_l2_normalize": chk_mean_l2norm,
    "tensor.gelu_exp_log_tanh": chk_gelu_exp_log_tanh,
    "encoders.language": chk_language_encoder,
    "encoders.vision": chk_vision_encoder,
    "encoders.speech": chk_speech_encoder,
    "encoders.projector": chk_projector,
    "fusion.merge_layer": chk_merge_layer,
    "fusion.co_layer": chk_co_layer,
    "fusion.end_to_end": chk_fusion_end_to_end,
    "heads.deconv_upsample": chk_deconv_head,
    "losses.masked_unit": chk_masked_unit_loss,
    "losses.contrastive": chk_contrastive_loss,
    "losses.temperature": chk_temperature,
    "losses.pooled_rep": chk_pooled_rep,
}


def run_grad_checks(module=None, seeds=3, seed_base=0):
    """Worst FD error per check over `seeds` random seeds."""
    results = {}
    for name, fn in CHECKS.items():
        if module and not name.startswith(module):
            continue
        results[name] = max(fn(seed_base + 31 * s) for s in range(seeds))
    return results
