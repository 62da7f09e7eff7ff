"""Pretraining loop, finetuning, and retrieval evaluation.

One step draws a batch from the synthetic stream, applies the per-modality
masking, runs a joint fused pass for the masked-unit losses, runs
single-modality fusion passes for the pooled contrastive representations
(chunked through the gradient cache), and applies one AdamW update with
linear warmup and two learning-rate groups (fusion vs. encoders, 2:1).
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ckpt
from . import masking, synthdata
from . import tensor as T
from .encoders import LanguageInput, SpeechInput, VisionInput
from .model import Model, ModelConfig
from .objectives import (
    grad_cache_step,
    masked_unit_loss,
    pair_contrastive_loss,
    pooled_unit_rep,
)
from .optim import AdamW, clip_global_norm
from .rng import Rng
from .tensor import Tensor, backward, no_grad

CONTRASTIVE_INDEX_OFFSET = 10_000_000
EVAL_INDEX_OFFSET = 77_000_000


class DivergenceError(RuntimeError):
    """Training hit a non-finite loss; carries a diagnostic record."""

    def __init__(self, record):
        super().__init__(f"non-finite loss at step {record.get('step')}")
        self.record = record


@dataclass
class TrainConfig:
    steps: int = 2000
    warmup_steps: int = 200
    lr_fusion: float = 3e-4
    lr_encoders: float = 1.5e-4
    alpha: float = 0.5
    beta: float = 0.6
    gamma: float = 1.0
    lam: float = 1.0
    contrastive_batch: int = 16
    chunk_size: int = 8
    # The log-temperature scalars start at 0 and must travel far (tau of a
    # converged contrastive model is 1-2 orders of magnitude above 1), so
    # they get their own learning-rate multiple of lr_fusion.
    temp_lr_scale: float = 10.0
    grad_clip: float = 1.0
    log_every: int = 10
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    stream: synthdata.StreamConfig = field(default_factory=synthdata.StreamConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if isinstance(self.stream, dict):
            self.stream = synthdata.StreamConfig(**self.stream)
        if self.warmup_steps > self.steps:
            raise ValueError("warmup_steps must not exceed steps")
        if self.lr_fusion <= 0 or self.lr_encoders <= 0:
            raise ValueError("learning rates must be positive")

    @classmethod
    def preset(cls, name: str, **overrides):
        """`desk` converges in minutes on CPU; `paper` keeps the original
        learning rates and warmup length (2e-5/1e-5, 20000 steps)."""
        if name == "desk":
            # A 2-layer fusion stack and a large gradient-cached
            # contrastive batch give the best retrieval per CPU-second;
            # the small masked batch keeps the step under the time budget.
            base = {
                "contrastive_batch": 96,
                "chunk_size": 16,
                "model": {"fusion": {"mode": "merge", "layers": 2,
                                     "hidden": 128, "heads": 4}},
                "stream": {"proportions": {"VL": 1.0}, "batch_size": 4},
            }
        elif name == "paper":
            base = {"lr_fusion": 2e-5, "lr_encoders": 1e-5,
                    "warmup_steps": 20000, "steps": 20000}
        else:
            raise ValueError(f"unknown preset {name!r}")
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, raw: dict):
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - allowed
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        nested = dict(raw)
        if "model" in nested and isinstance(nested["model"], dict):
            m = dict(nested["model"])
            m_allowed = {f.name for f in dataclasses.fields(ModelConfig)}
            bad = set(m) - m_allowed
            if bad:
                raise ValueError(f"unknown model config keys: {sorted(bad)}")
            nested["model"] = m
        if "stream" in nested and isinstance(nested["stream"], dict):
            s_allowed = {f.name for f in dataclasses.fields(synthdata.StreamConfig)}
            bad = set(nested["stream"]) - s_allowed
            if bad:
                raise ValueError(f"unknown stream config keys: {sorted(bad)}")
        return cls(**nested)


def _language_tokens(sample):
    if sample.kind == "VIDEO":
        return synthdata.caption_with_transcript(sample)
    return sample.tokens


def _stack(tensors):
    return T.concat([T.reshape(t, (1,) + t.shape) for t in tensors], axis=0)


def _masked_modality_inputs(model: Model, samples, step, seed, cfg: TrainConfig):
    """Mask + encode every modality present; returns (inputs, pads, plans, aux)."""
    kind = samples[0].kind
    enc = model.cfg.encoder
    rng = Rng(seed).derive(7, step)
    inputs, pads, plans = {}, {}, {}

    if "L" in kind or kind == "VIDEO":
        tokens = np.stack([_language_tokens(s) for s in samples])
        pad = np.zeros(tokens.shape, dtype=bool)
        corrupted, plan = masking.mask_language(
            tokens, pad, rng.derive(0), mask_token=synthdata.MASK_TOKEN, vocab=enc.vocab)
        lang = LanguageInput(corrupted, pad)
        inputs["L"] = model.project("L", model.language(lang))
        pads["L"] = pad
        plans["L"] = plan

    if "V" in kind or kind == "VIDEO":
        frames = np.stack([s.frames for s in samples])
        grid = model.vision.patchify(VisionInput(frames))
        masked_rows, patch_masks = [], []
        for b in range(grid.shape[0]):
            row = T.slice_axis(grid, 0, b, b + 1)
            row = T.reshape(row, grid.shape[1:])
            masked, plan = masking.tube_mask(row, rng.derive(1, b), model.vision_mask_embed)
            masked_rows.append(masked)
            patch_masks.append(plan.positions)
        masked_grid = _stack(masked_rows)
        feats = model.vision.encode_patches(masked_grid)
        inputs["V"] = model.project("V", feats)
        head_mask = _head_mask_from_patches(np.stack(patch_masks))
        targets = model.vision_targets(frames)
        plans["V"] = masking.MaskPlan(head_mask, np.where(head_mask, targets, -1))

    if "S" in kind or kind == "VIDEO":
        waves = np.stack([s.waveform for s in samples])
        frames_s = model.speech.featurizer(waves)
        targets = model.speech_targets(waves)
        masked_rows, frame_masks = [], []
        for b in range(frames_s.shape[0]):
            row = T.reshape(T.slice_axis(frames_s, 0, b, b + 1), frames_s.shape[1:])
            masked, plan = masking.span_mask(row, rng.derive(2, b), model.speech_mask_embed)
            masked_rows.append(masked)
            frame_masks.append(plan)
        masked_frames = _stack(masked_rows)
        feats = model.speech.encode_frames(masked_frames)
        inputs["S"] = model.project("S", feats)
        mask = np.stack([p.positions for p in frame_masks])
        plans["S"] = masking.MaskPlan(mask, np.where(mask, targets, -1))

    return inputs, pads, plans


def _head_mask_from_patches(patch_mask):
    """Pull the tube mask back to the MVM head grid.

    `patch_mask` is [B, W/4, H/4, T/2]; an encoder cell (8x coarser
    spatially) counts as masked when any covered patch cell is masked,
    and the head grid doubles each encoder extent.
    """
    b, w, h, t = patch_mask.shape
    enc = patch_mask.reshape(b, w // 8, 8, h // 8, 8, t).any(axis=(2, 4))
    return np.repeat(np.repeat(np.repeat(enc, 2, axis=1), 2, axis=2), 2, axis=3)


def _masked_unit_losses(model: Model, inputs, pads, plans, cfg: TrainConfig):
    fused = model.fusion(inputs, pads)
    parts = {}
    if "L" in plans:
        logits = model.heads.mlm(fused["L"])
        parts["mlm"] = masked_unit_loss(logits, plans["L"])
    if "V" in plans:
        logits = model.heads.mvm_logits(fused["V"])
        parts["mvm"] = masked_unit_loss(logits, plans["V"])
    if "S" in plans:
        logits = model.heads.msm(fused["S"])
        parts["msm"] = masked_unit_loss(logits, plans["S"])
    return parts


def _pair_names(kind):
    return {"VL": ["vl"], "VS": ["vs"], "LS": ["ls"], "VIDEO": ["vl", "vs", "ls"]}[kind]


def _modality_rep_fn(model: Model, samples, modality):
    """Chunked pooled-representation closure for one modality."""

    def rep_fn(lo, hi):
        chunk = samples[lo:hi]
        if modality == "V":
            fused = model.fuse_raw(vision=VisionInput(np.stack([s.frames for s in chunk])))
        elif modality == "S":
            fused = model.fuse_raw(speech=SpeechInput(np.stack([s.waveform for s in chunk])))
        else:
            tokens = np.stack([_language_tokens(s) for s in chunk])
            fused = model.fuse_raw(language=LanguageInput(tokens))
        return pooled_unit_rep(fused, modality)

    return rep_fn


def _contrastive_losses(model: Model, kind, step, seed, cfg: TrainConfig):
    samples = []
    for i in range(cfg.contrastive_batch):
        index = CONTRASTIVE_INDEX_OFFSET + step * cfg.contrastive_batch + i
        if kind == "VIDEO":
            samples.append(synthdata.gen_clip(index, seed, cfg.stream))
        else:
            samples.append(synthdata.gen_pair(kind, index, seed, cfg.stream))
    parts = {}
    for pair in _pair_names(kind):
        a, b = pair[0].upper(), pair[1].upper()
        loss = grad_cache_step(
            _modality_rep_fn(model, samples, a),
            _modality_rep_fn(model, samples, b),
            cfg.contrastive_batch,
            cfg.chunk_size,
            model.temperatures.tau(pair),
            weight=cfg.lam,
        )
        parts[pair] = loss / cfg.lam if cfg.lam else 0.0
    return parts


def pretrain(cfg: TrainConfig, out_dir=None, model: Model = None, on_metrics=None):
    """Run the pretraining loop; returns (model, metrics list)."""
    if model is None:
        model = Model(cfg.model, seed=cfg.seed)
    enc_group, fus_group = model.parameter_groups()
    all_params = list(enc_group.values()) + list(fus_group.values())
    temp_group = {name: fus_group.pop(name) for name in list(fus_group)
                  if name.startswith("temperatures.")}
    opt = AdamW([(enc_group, cfg.lr_encoders), (fus_group, cfg.lr_fusion),
                 (temp_group, cfg.lr_fusion * cfg.temp_lr_scale)],
                warmup_steps=cfg.warmup_steps)
    metrics = []
    metrics_path = manifest_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.jsonl")
        manifest_path = os.path.join(out_dir, "manifest.jsonl")
        for p in (metrics_path, manifest_path):
            if os.path.exists(p):
                os.remove(p)

    for step in range(cfg.steps):
        samples = synthdata.mix_stream(cfg.stream, step, cfg.seed)
        if manifest_path:
            synthdata.write_manifest(samples, manifest_path)
        kind = samples[0].kind

        inputs, pads, plans = _masked_modality_inputs(model, samples, step, cfg.seed, cfg)
        unit_parts = _masked_unit_losses(model, inputs, pads, plans, cfg)
        scale = {"mlm": cfg.alpha, "mvm": cfg.beta, "msm": cfg.gamma}
        weighted = None
        for name, value in unit_parts.items():
            term = value * scale[name]
            weighted = term if weighted is None else weighted + term
        if weighted is not None:
            backward(weighted)

        ctr_parts = _contrastive_losses(model, kind, step, cfg.seed, cfg)

        report = {name: float(v.item()) for name, v in unit_parts.items()}
        report.update(ctr_parts)
        total = sum(scale.get(k, cfg.lam) * v for k, v in report.items())

        record = {
            "step": step + 1,
            "kind": kind,
            "lr_fusion": cfg.lr_fusion * opt.lr_scale(step + 1),
            "lr_enc": cfg.lr_encoders * opt.lr_scale(step + 1),
            "mlm": report.get("mlm"),
            "mvm": report.get("mvm"),
            "msm": report.get("msm"),
            "vl": report.get("vl"),
            "vs": report.get("vs"),
            "ls": report.get("ls"),
            "total": total,
            "alpha": cfg.alpha, "beta": cfg.beta,
            "gamma": cfg.gamma, "lam": cfg.lam,
        }
        if not np.isfinite(total):
            record["diverged"] = True
            if metrics_path:
                with open(metrics_path, "a") as fh:
                    fh.write(json.dumps(record) + "\n")
            raise DivergenceError(record)

        clip_global_norm(all_params, cfg.grad_clip)
        opt.step()
        opt.zero_grad()

        if (step + 1) % cfg.log_every == 0 or step == cfg.steps - 1 or step == 0:
            metrics.append(record)
            if metrics_path:
                with open(metrics_path, "a") as fh:
                    fh.write(json.dumps(record) + "\n")
            if on_metrics:
                on_metrics(record)

    if out_dir is not None:
        save_checkpoint(os.path.join(out_dir, "checkpoint.bin"), model, opt, cfg)
    return model, metrics


# -- checkpoint helpers -----------------------------------------------------


def save_checkpoint(path, model: Model, opt: AdamW = None, cfg: TrainConfig = None):
    params = dict(model.named_parameters())
    blob = dict(params)
    if opt is not None:
        for name in params:
            blob[f"opt.m.{name}"] = opt.m[name]
            blob[f"opt.v.{name}"] = opt.v[name]
    extra = {"opt_step": opt.step_count if opt else 0}
    ckpt.save(path, blob, step=opt.step_count if opt else 0, config=cfg, extra=extra)


def load_checkpoint(path):
    """Returns (model, header). The model is rebuilt from the config snapshot."""
    arrays, header = ckpt.load(path)
    cfg_snap = header.get("config") or {}
    model_cfg = ModelConfig(**cfg_snap.get("model", {})) if cfg_snap else ModelConfig()
    seed = cfg_snap.get("seed", 0)
    model = Model(model_cfg, seed=seed)
    model_arrays = {k: v for k, v in arrays.items() if not k.startswith("opt.")}
    ckpt.restore_into(dict(model.named_parameters()), model_arrays)
    return model, header


# -- evaluation -------------------------------------------------------------


def eval_retrieval(model: Model, kind: str, n: int, seed=0, stream=None, chunk=16):
    """Recall@{1,5} in both directions over n held-out aligned pairs."""
    if n < 2:
        raise ValueError("need at least 2 pairs for retrieval")
    if kind not in ("VL", "VS", "LS"):
        raise ValueError(f"retrieval kind must be a modality pair, got {kind!r}")
    stream = stream or synthdata.StreamConfig()
    samples = [synthdata.gen_pair(kind, EVAL_INDEX_OFFSET + i, seed, stream)
               for i in range(n)]
    a, b = kind[0], kind[1]
    with no_grad():
        reps = {}
        for m in (a, b):
            fn = _modality_rep_fn(model, samples, m)
            reps[m] = np.concatenate(
                [fn(lo, min(lo + chunk, n)).data for lo in range(0, n, chunk)], axis=0)
    sims = reps[a] @ reps[b].T
    out = {}
    for direction, mat in ((f"{a}2{b}", sims), (f"{b}2{a}", sims.T)):
        order = np.argsort(-mat, axis=1)
        match = order == np.arange(n)[:, None]
        out[f"recall@1_{direction}"] = float(match[:, 0].mean())
        out[f"recall@5_{direction}"] = float(match[:, :5].any(axis=1).mean())
    out["recall@1"] = 0.5 * (out[f"recall@1_{a}2{b}"] + out[f"recall@1_{b}2{a}"])
    out["recall@5"] = 0.5 * (out[f"recall@5_{a}2{b}"] + out[f"recall@5_{b}2{a}"])
    return out


def masked_lm_accuracy(model: Model, n_batches=8, batch_size=8, seed=0, stream=None):
    """Argmax accuracy at masked language positions on held-out VL pairs."""
    stream = stream or synthdata.StreamConfig()
    rng = Rng(seed).derive(13)
    correct = total = 0
    for bi in range(n_batches):
        samples = [synthdata.gen_pair("VL", EVAL_INDEX_OFFSET + 500_000 + bi * batch_size + i,
                                      seed, stream) for i in range(batch_size)]
        tokens = np.stack([s.tokens for s in samples])
        pad = np.zeros(tokens.shape, dtype=bool)
        corrupted, plan = masking.mask_language(
            tokens, pad, rng.derive(bi), mask_token=synthdata.MASK_TOKEN,
            vocab=model.cfg.encoder.vocab)
        frames = np.stack([s.frames for s in samples])
        with no_grad():
            fused = model.fuse_raw(language=LanguageInput(corrupted, pad),
                                   vision=VisionInput(frames))
            logits = model.heads.mlm(fused["L"])
        pred = logits.data.argmax(axis=-1)
        mask = plan.positions
        correct += int((pred[mask] == tokens[mask]).sum())
        total += int(mask.sum())
    return correct / total


# -- finetuning --------------------------------------------------------------

TASKS = ("class16", "style-regression")


def _multimodal_rep(model: Model, sample, modalities):
    """Mean of fused outputs across all present modalities' positions."""
    raw = {}
    if "V" in modalities:
        raw["vision"] = VisionInput(sample.frames[None])
    if "L" in modalities:
        raw["language"] = LanguageInput(_language_tokens(sample)[None])
    if "S" in modalities:
        raw["speech"] = SpeechInput(sample.waveform[None])
    fused = model.fuse_raw(**raw)
    pieces = []
    for m, feats in fused.features.items():
        flat = feats.data.reshape(-1, feats.shape[-1])
        pieces.append(flat)
    return np.concatenate(pieces, axis=0).mean(axis=0)


def finetune(model: Model, task: str, modalities="VLS", train_n=192, test_n=128,
             steps=300, lr=0.05, seed=0, stream=None):
    """Train a linear head on pooled multimodal representations.

    Returns a dict of per-epoch metrics plus final test accuracy (or MAE
    for the regression task). The backbone stays frozen.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; available: {TASKS}")
    if not modalities or any(m not in "VLS" for m in modalities):
        raise ValueError("modalities must be a non-empty subset of 'VLS'")
    stream = stream or synthdata.StreamConfig()
    samples = [synthdata.gen_clip(EVAL_INDEX_OFFSET + 900_000 + i, seed, stream)
               for i in range(train_n + test_n)]
    with no_grad():
        feats = np.stack([_multimodal_rep(model, s, modalities) for s in samples])
    feats = feats / (np.linalg.norm(feats, axis=1, keepdims=True) + 1e-8)
    if task == "class16":
        targets = np.array([s.latent.k for s in samples])
        n_out = stream.classes
    else:
        targets = np.array([np.mean(s.latent.style) / (synthdata.STYLE_VALUES - 1)
                            for s in samples], dtype=np.float64)
        n_out = 1
    x_tr, x_te = feats[:train_n], feats[train_n:]
    y_tr, y_te = targets[:train_n], targets[train_n:]

    h = feats.shape[1]
    w = Tensor(np.zeros((h, n_out), dtype=np.float64), requires_grad=True)
    b = Tensor(np.zeros(n_out, dtype=np.float64), requires_grad=True)
    opt = AdamW([({"w": w, "b": b}, lr)], weight_decay=0.0)
    history = []
    g = Rng(seed).derive(21).generator()
    batch = 32
    for it in range(steps):
        idx = g.choice(train_n, size=min(batch, train_n), replace=False)
        xb = Tensor(x_tr[idx])
        logits = T.matmul(xb, w) + b
        if task == "class16":
            loss = T.cross_entropy_from_logits(logits, y_tr[idx])
        else:
            err = T.reshape(logits, (-1,)) - Tensor(y_tr[idx])
            loss = T.tmean(err * err)
        backward(loss)
        opt.step()
        opt.zero_grad()
        if (it + 1) % 100 == 0 or it == steps - 1:
            logits_te = x_te @ w.data + b.data
            if task == "class16":
                acc = float((logits_te.argmax(axis=1) == y_te).mean())
                history.append({"iter": it + 1, "loss": float(loss.item()), "accuracy": acc})
            else:
                mae = float(np.abs(logits_te[:, 0] - y_te).mean())
                history.append({"iter": it + 1, "loss": float(loss.item()), "mae": mae})
    result = {"task": task, "modalities": modalities, "history": history}
    result.update(history[-1])
    return result
