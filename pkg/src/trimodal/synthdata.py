"""Deterministic synthetic aligned multimodal data.

Every sample is driven by a latent class k plus a 4-component style
vector; all renderings of one sample encode (k, style) so that masked
prediction and cross-modal retrieval are learnable at desk scale:

- vision: 64x64x8 frames whose border color encodes k and whose four
  quadrant colors encode the style components, with mild temporal drift;
- language: templated token sequences containing the class token, the
  four style tokens, and random filler tokens;
- speech: 1 s of 16 kHz audio with a fundamental encoding k and four
  sequential overtone segments encoding the style components.

Generation is addressable: a sample is a pure function of
(kind, index, seed). Each modality also has an inverse map used to check
alignment soundness.
"""

from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass, field

import numpy as np

from .rng import Rng

KINDS = ("VL", "LS", "VS", "VIDEO")
KIND_IDS = {k: i for i, k in enumerate(KINDS)}

# vocab layout (vocab=256)
PAD_TOKEN = 0
CLASS_BASE = 1  # class tokens 1..16
STYLE_BASE = 32  # style tokens 32 + 16*component + value -> 32..95
FILLER_BASE = 96  # fillers 96..253
FILLER_COUNT = 158
SEP_TOKEN = 254
MASK_TOKEN = 255

NUM_STYLE = 4
STYLE_VALUES = 8

_PALETTE = np.array(
    [colorsys.hsv_to_rgb(i / 16.0, 1.0, 1.0) for i in range(16)], dtype=np.float64
)


@dataclass(frozen=True)
class LatentSpec:
    k: int
    style: tuple  # NUM_STYLE ints in [0, STYLE_VALUES)


@dataclass
class StreamConfig:
    proportions: dict = field(default_factory=lambda: {"VL": 1.0})
    batch_size: int = 8
    classes: int = 16
    seq_len: int = 12
    frame_size: int = 64
    num_frames: int = 8
    wave_len: int = 16000
    sample_rate: int = 16000
    misalign_prob: float = 0.0  # chance of shuffling speech against frames

    def __post_init__(self):
        unknown = set(self.proportions) - set(KINDS)
        if unknown:
            raise ValueError(f"unknown stream kinds: {sorted(unknown)}")
        total = sum(self.proportions.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mixing proportions must sum to 1, got {total}")


@dataclass
class Sample:
    kind: str
    index: int
    seed: int
    latent: LatentSpec
    frames: np.ndarray = None  # [W, H, T, 3]
    waveform: np.ndarray = None  # [S]
    tokens: np.ndarray = None  # language tokens (caption or transcript)
    caption: np.ndarray = None  # VIDEO only
    transcript: np.ndarray = None  # VIDEO only

    def manifest_record(self):
        return {"kind": self.kind, "index": self.index, "seed": self.seed,
                "k": self.latent.k}


def _sample_latent(rng: Rng, classes=16) -> LatentSpec:
    g = rng.generator()
    k = int(g.integers(0, classes))
    style = tuple(int(v) for v in g.integers(0, STYLE_VALUES, size=NUM_STYLE))
    return LatentSpec(k, style)


def render_vision(latent: LatentSpec, rng: Rng, cfg: StreamConfig) -> np.ndarray:
    size, t = cfg.frame_size, cfg.num_frames
    g = rng.generator()
    frame = np.empty((size, size, 3), dtype=np.float64)
    frame[:] = _PALETTE[latent.k]
    q = size // 2
    margin = size // 16
    quads = [(0, 0), (0, 1), (1, 0), (1, 1)]
    for comp, (qi, qj) in enumerate(quads):
        color = _PALETTE[latent.style[comp]]
        r0, c0 = qi * q + margin, qj * q + margin
        frame[r0 : r0 + q - 2 * margin, c0 : c0 + q - 2 * margin] = color
    drift = (0.85 + 0.12 * np.linspace(0.0, 1.0, t))[None, None, :, None]
    frames = (frame[:, :, None, :] * drift).astype(np.float32)
    # one spatial noise texture shared by all frames of the clip
    frames += g.normal(0.0, 0.02, size=(size, size, 1, 3)).astype(np.float32)
    return np.clip(frames, 0.0, 1.0)


def decode_vision(frames: np.ndarray) -> int:
    """Recover k from the border ring of the first frame."""
    f = np.asarray(frames, dtype=np.float64)
    border = np.concatenate([
        f[:4, :, 0, :].reshape(-1, 3),
        f[-4:, :, 0, :].reshape(-1, 3),
        f[:, :4, 0, :].reshape(-1, 3),
        f[:, -4:, 0, :].reshape(-1, 3),
    ])
    mean = border.mean(axis=0) / 0.85  # undo first-frame drift factor
    return int(np.argmin(((_PALETTE - mean) ** 2).sum(axis=1)))


def render_language(latent: LatentSpec, rng: Rng, cfg: StreamConfig,
                    flavor: int = 0) -> np.ndarray:
    """Templated token sequence: class + style tokens (repeated), few fillers.

    The informative block (class token followed by the four style tokens)
    is written as many times as fits, so most of the sequence carries the
    latent; masked positions stay recoverable from the surviving copy or
    the paired modality. `flavor` separates caption-style (0) from
    transcript-style (1) sequences: they use different informative-token
    offsets and independent filler draws.
    """
    g = rng.derive(flavor).generator()
    tokens = FILLER_BASE + g.integers(0, FILLER_COUNT, size=cfg.seq_len)
    offset = 0 if flavor == 0 else 2
    block = [CLASS_BASE + latent.k] + [
        STYLE_BASE + STYLE_VALUES * comp + latent.style[comp]
        for comp in range(NUM_STYLE)
    ]
    pos = offset
    while pos + len(block) <= cfg.seq_len:
        tokens[pos : pos + len(block)] = block
        pos += len(block)
    return tokens.astype(np.int64)


def decode_language(tokens: np.ndarray) -> int:
    for t in np.asarray(tokens).reshape(-1):
        if CLASS_BASE <= t < CLASS_BASE + 16:
            return int(t - CLASS_BASE)
    raise ValueError("no class token present")


def render_speech(latent: LatentSpec, rng: Rng, cfg: StreamConfig) -> np.ndarray:
    g = rng.generator()
    n = cfg.wave_len
    t = np.arange(n) / cfg.sample_rate
    f0 = 100.0 + 12.0 * latent.k
    wave = 0.35 * np.sin(2 * np.pi * f0 * t)
    seg = n // NUM_STYLE
    for comp in range(NUM_STYLE):
        freq = 500.0 + 30.0 * latent.style[comp]
        sl = slice(comp * seg, (comp + 1) * seg)
        wave[sl] += 0.3 * np.sin(2 * np.pi * freq * t[sl])
    wave += g.normal(0.0, 0.01, size=n)
    return np.clip(wave, -1.0, 1.0).astype(np.float32)


def decode_speech(waveform: np.ndarray, sample_rate=16000) -> int:
    spectrum = np.abs(np.fft.rfft(np.asarray(waveform, dtype=np.float64)))
    freqs = np.fft.rfftfreq(len(waveform), 1.0 / sample_rate)
    band = (freqs >= 90.0) & (freqs <= 300.0)
    peak = freqs[band][np.argmax(spectrum[band])]
    return int(np.clip(round((peak - 100.0) / 12.0), 0, 15))


RENDER_SEED = 9176


def _render_rng(latent: LatentSpec) -> Rng:
    """Render stream derived from the latent alone.

    Renderings are pure functions of (k, style): two samples with the
    same latent produce identical frames/tokens/waveforms regardless of
    their stream position. This plants exact cross-modal structure —
    aligning modalities is a deterministic function-matching problem, so
    retrieval is learnable at small scale instead of being floored by
    per-sample rendering noise that no other modality can explain.
    """
    tag = latent.k
    for v in latent.style:
        tag = tag * STYLE_VALUES + v
    return Rng(RENDER_SEED, tag)


def gen_pair(kind: str, index: int, seed: int, cfg: StreamConfig = None) -> Sample:
    """Aligned two-modality sample, deterministic in (kind, index, seed)."""
    if kind == "VIDEO":
        raise ValueError("use gen_clip for triple-modality samples")
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    cfg = cfg or StreamConfig()
    base = Rng(seed).derive(KIND_IDS[kind], index)
    latent = _sample_latent(base.derive(0), cfg.classes)
    render = _render_rng(latent)
    sample = Sample(kind=kind, index=index, seed=seed, latent=latent)
    if "V" in kind:
        sample.frames = render_vision(latent, render.derive(1), cfg)
    if "L" in kind:
        sample.tokens = render_language(latent, render.derive(2), cfg)
    if "S" in kind:
        sample.waveform = render_speech(latent, render.derive(3), cfg)
    return sample


def gen_clip(index: int, seed: int, cfg: StreamConfig = None) -> Sample:
    """Triple-modality clip: frames, waveform, transcript, and a caption."""
    cfg = cfg or StreamConfig()
    base = Rng(seed).derive(KIND_IDS["VIDEO"], index)
    latent = _sample_latent(base.derive(0), cfg.classes)
    render = _render_rng(latent)
    return Sample(
        kind="VIDEO",
        index=index,
        seed=seed,
        latent=latent,
        frames=render_vision(latent, render.derive(1), cfg),
        waveform=render_speech(latent, render.derive(3), cfg),
        caption=render_language(latent, render.derive(2), cfg, flavor=0),
        transcript=render_language(latent, render.derive(2), cfg, flavor=1),
    )


def caption_with_transcript(sample: Sample) -> np.ndarray:
    """Language input for video batches: caption ++ SEP ++ transcript."""
    return np.concatenate([sample.caption, [SEP_TOKEN], sample.transcript])


def kind_schedule(proportions: dict, num_steps: int) -> list:
    """Deterministic low-discrepancy kind sequence matching proportions."""
    kinds = [k for k in KINDS if proportions.get(k, 0.0) > 0.0]
    counts = {k: 0 for k in kinds}
    out = []
    for t in range(num_steps):
        best = max(kinds, key=lambda k: ((t + 1) * proportions[k] - counts[k], -KIND_IDS[k]))
        counts[best] += 1
        out.append(best)
    return out


_schedule_cache = {}


def stream_kind(cfg: StreamConfig, step: int) -> str:
    key = tuple(sorted(cfg.proportions.items()))
    cached = _schedule_cache.get(key)
    if cached is None or len(cached) <= step:
        cached = kind_schedule(cfg.proportions, max(step + 1, 4096))
        _schedule_cache[key] = cached
    return cached[step]


def mix_stream(cfg: StreamConfig, step: int, seed: int) -> list:
    """Batch of samples for one step, fully determined by (cfg, step, seed)."""
    kind = stream_kind(cfg, step)
    samples = []
    for i in range(cfg.batch_size):
        index = step * cfg.batch_size + i
        if kind == "VIDEO":
            s = gen_clip(index, seed, cfg)
        else:
            s = gen_pair(kind, index, seed, cfg)
        samples.append(s)
    if cfg.misalign_prob > 0.0 and kind in ("VS", "VIDEO"):
        g = Rng(seed).derive(99, step).generator()
        if g.random() < cfg.misalign_prob:
            waves = [s.waveform for s in samples]
            perm = g.permutation(len(samples))
            for s, j in zip(samples, perm):
                s.waveform = waves[j]
    return samples


def write_manifest(samples, path, append=True):
    """Line-delimited JSON manifest; raw tensors are regenerable, not stored."""
    mode = "a" if append else "w"
    with open(path, mode) as fh:
        for s in samples:
            fh.write(json.dumps(s.manifest_record()) + "\n")
