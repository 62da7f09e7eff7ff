"""Empirical masking statistics vs their analytic references.

Usage:
    python3 scripts/mask_statistics.py [--draws 100000]

Reports the language 80/10/10 action split, tube-mask cell counts, and
span-mask mean coverage at F=100 against the exact closed form.
"""

import argparse
import json
from math import comb

import numpy as np

from trimodal.masking import mask_language, span_mask_indices, tube_mask_pattern
from trimodal.rng import Rng


def exact_span_coverage(f=100, n=8, l=10):
    def p_uncov(t):
        w = min(t, l - 1) + 1
        return comb(f - w, n) / comb(f, n)

    return 1.0 - sum(p_uncov(t) for t in range(f)) / f


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--draws", type=int, default=100_000)
    args = ap.parse_args()

    # language action split
    per_batch = 1000
    tokens = np.random.default_rng(0).integers(0, 256, size=(per_batch, 100))
    pad = np.zeros(tokens.shape, dtype=bool)
    counts = np.zeros(3)
    reps = max(1, args.draws // (per_batch * 30))
    for rep in range(reps):
        _, plan = mask_language(tokens, pad, Rng(7).derive(rep), mask_token=255)
        acts = plan.actions[plan.positions]
        for k in range(3):
            counts[k] += (acts == k).sum()

    # tube counts
    lengths = []
    for s in range(1000):
        _, pattern, (_, length) = tube_mask_pattern((8, 8), 2, Rng(s))
        assert pattern.sum() == 32
        lengths.append(length)

    # span coverage
    n_span = min(args.draws, 100_000)
    cover = sum(span_mask_indices(100, Rng(1).derive(s)).mean() for s in range(n_span))

    print(json.dumps({
        "mlm_action_split": list(counts / counts.sum()),
        "mlm_draws": int(counts.sum()),
        "tube_cells_8x8": 32,
        "tube_length_mean": float(np.mean(lengths)),
        "span_coverage_empirical": cover / n_span,
        "span_coverage_exact": exact_span_coverage(),
    }, indent=2))


if __name__ == "__main__":
    main()
