"""Pretraining losses.

Masked-unit cross-entropies (language tokens, vision codebook tokens,
speech codebook tokens), symmetric InfoNCE contrastive losses between
pooled unit representations with a learnable temperature per modality
pair, the fixed-weight total, and a gradient-cache step that reproduces
full-batch contrastive gradients under chunked recomputation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .fusion import FusedBatch
from .nn import Module, relu_clamp_max
from .tensor import Tensor, backward, no_grad

DEFAULT_WEIGHTS = {"alpha": 0.5, "beta": 0.6, "gamma": 1.0, "lam": 1.0}
TAU_MAX = 100.0


class Temperatures(Module):
    """One learnable log-temperature per modality pair; tau = exp(s) <= 100."""

    def __init__(self, dtype=np.float32):
        self.s_vl = Tensor(np.zeros((), dtype=dtype), requires_grad=True)
        self.s_vs = Tensor(np.zeros((), dtype=dtype), requires_grad=True)
        self.s_ls = Tensor(np.zeros((), dtype=dtype), requires_grad=True)

    def tau(self, pair: str) -> Tensor:
        s = getattr(self, f"s_{pair.lower()}")
        return relu_clamp_max(T.exp(s), TAU_MAX)


def masked_unit_loss(logits: Tensor, plan) -> Tensor:
    """Mean -log p(target) over masked positions only.

    `logits` live on the unit grid with the class axis last; `plan` is a
    MaskPlan whose positions/targets share the grid shape.
    """
    mask = np.asarray(plan.positions, dtype=bool)
    if not mask.any():
        raise ValueError("masked_unit_loss: empty mask set")
    if mask.shape != logits.shape[:-1]:
        raise ValueError("mask grid does not match logits grid")
    k = logits.shape[-1]
    flat = T.reshape(logits, (-1, k))
    idx = np.flatnonzero(mask.reshape(-1))
    picked = T.gather_rows(flat, idx)
    targets = np.asarray(plan.targets).reshape(-1)[idx]
    return T.cross_entropy_from_logits(picked, targets)


def pooled_unit_rep(fused: FusedBatch, modality: str) -> Tensor:
    """Mean over all non-pad positions of one modality, L2-normalized [B, H]."""
    if modality not in fused.features:
        raise ValueError(f"modality {modality} not present in fused batch")
    x = fused.features[modality]
    flat_shape = (x.shape[0], int(np.prod(x.shape[1:-1])), x.shape[-1])
    flat = T.reshape(x, flat_shape)
    pad = fused.pad_masks.get(modality)
    if pad is None:
        pooled = T.tmean(flat, axis=1)
    else:
        pad = np.asarray(pad, dtype=bool)
        counts = (~pad).sum(axis=1, keepdims=True)
        if np.any(counts == 0):
            raise ValueError("cannot pool an all-pad example")
        keep = Tensor((~pad)[..., None].astype(flat.dtype))
        pooled = T.tsum(flat * keep, axis=1) * Tensor((1.0 / counts).astype(flat.dtype))
    return T.l2_normalize(pooled, axis=-1)


def pair_contrastive_loss(u_a: Tensor, u_b: Tensor, tau, literal_no_log=False) -> Tensor:
    """Symmetric InfoNCE over aligned batches of unit vectors.

    L = L_a2b + L_b2a with L_a2b = mean_i[-log softmax_j(tau <u_a_i, u_b_j>)_i].
    `tau` may be a Tensor (learnable) or a float. The printed no-log
    variant (softmax ratio without the log) is kept behind a flag for
    comparison only.
    """
    if u_a.shape != u_b.shape or len(u_a.shape) != 2:
        raise ValueError("expected matching [B, H] batches")
    for u in (u_a, u_b):
        norms = np.linalg.norm(u.data, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-4):
            raise ValueError("contrastive inputs must be unit-normalized rows")
    if not isinstance(tau, Tensor):
        tau = Tensor(np.asarray(tau, dtype=u_a.dtype))
    b = u_a.shape[0]
    sims = T.matmul(u_a, T.transpose(u_b, (1, 0)))
    logits = sims * tau
    diag = np.arange(b)
    if literal_no_log:
        p_ab = T.gather_diag(T.softmax(logits, axis=1))
        p_ba = T.gather_diag(T.softmax(T.transpose(logits, (1, 0)), axis=1))
        return -(T.tmean(p_ab) + T.tmean(p_ba))
    l_a2b = T.cross_entropy_from_logits(logits, diag)
    l_b2a = T.cross_entropy_from_logits(T.transpose(logits, (1, 0)), diag)
    return l_a2b + l_b2a


@dataclass
class LossReport:
    """Per-objective scalars and the weighted total for one step."""

    mlm: float = None
    mvm: float = None
    msm: float = None
    vl: float = None
    vs: float = None
    ls: float = None
    total: float = 0.0
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def recomputed_total(self):
        w = self.weights
        parts = [
            w["alpha"] * (self.mlm or 0.0),
            w["beta"] * (self.mvm or 0.0),
            w["gamma"] * (self.msm or 0.0),
            w["lam"] * ((self.vl or 0.0) + (self.vs or 0.0) + (self.ls or 0.0)),
        ]
        return sum(parts)


def total_pretrain_loss(parts: dict, alpha=0.5, beta=0.6, gamma=1.0, lam=1.0):
    """Weighted sum over available objectives; absent parts contribute 0.

    `parts` maps names in {mlm, mvm, msm, vl, vs, ls} to scalar Tensors.
    Returns (total Tensor, LossReport).
    """
    weights = {"alpha": alpha, "beta": beta, "gamma": gamma, "lam": lam}
    if any(w < 0 for w in weights.values()):
        raise ValueError("loss weights must be non-negative")
    unknown = set(parts) - {"mlm", "mvm", "msm", "vl", "vs", "ls"}
    if unknown:
        raise ValueError(f"unknown loss parts: {sorted(unknown)}")
    total = Tensor(np.zeros((), dtype=np.float64))
    scale = {"mlm": alpha, "mvm": beta, "msm": gamma, "vl": lam, "vs": lam, "ls": lam}
    for name, value in parts.items():
        total = total + value * scale[name]
    report = LossReport(
        **{name: float(v.item()) for name, v in parts.items()},
        total=float(total.item()),
        weights=weights,
    )
    return total, report


def grad_cache_step(rep_fn_a, rep_fn_b, batch_size, chunk_size, tau,
                    weight=1.0, literal_no_log=False):
    """Contrastive step over a large effective batch in small chunks.

    `rep_fn_a(lo, hi)` / `rep_fn_b(lo, hi)` return pooled unit
    representations [hi-lo, H] for a slice of the effective batch,
    rebuilding the graph each call (generation is addressable, so
    recomputation is exact). Two passes:

      1. representations for every chunk are computed without a graph;
         the loss and d(loss)/d(representations) are taken on the full
         effective batch (this also populates tau's gradient);
      2. each chunk is recomputed with a graph and the cached
         representation gradients are injected via a dot-product seed.

    Parameter gradients accumulate exactly as full-batch backprop would.
    Returns the full-batch loss value.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    chunk_size = min(chunk_size, batch_size)
    bounds = [(lo, min(lo + chunk_size, batch_size)) for lo in range(0, batch_size, chunk_size)]

    with no_grad():
        reps_a = np.concatenate([rep_fn_a(lo, hi).data for lo, hi in bounds], axis=0)
        reps_b = np.concatenate([rep_fn_b(lo, hi).data for lo, hi in bounds], axis=0)
    leaf_a = Tensor(reps_a, requires_grad=True)
    leaf_b = Tensor(reps_b, requires_grad=True)
    loss = pair_contrastive_loss(leaf_a, leaf_b, tau, literal_no_log=literal_no_log) * weight
    backward(loss)

    for leaf, rep_fn in ((leaf_a, rep_fn_a), (leaf_b, rep_fn_b)):
        for lo, hi in bounds:
            reps = rep_fn(lo, hi)
            seed = T.tsum(reps * Tensor(leaf.grad[lo:hi]))
            backward(seed)
    return float(loss.item())
