"""Short merge-attention vs co-attention comparison on a mixed stream.

Usage:
    python3 scripts/ablate_fusion_modes.py [--steps 200]

Trains both fusion modes with identical data/seed and prints the loss
endpoints side by side.
"""

import argparse
import dataclasses
import json

from trimodal import synthdata
from trimodal.fusion import FusionConfig
from trimodal.model import ModelConfig
from trimodal.trainer import TrainConfig, pretrain


def run(mode, steps, seed):
    cfg = TrainConfig(
        steps=steps,
        warmup_steps=max(1, steps // 10),
        model=ModelConfig(fusion=FusionConfig(mode=mode, layers=2)),
        stream=synthdata.StreamConfig(
            proportions={"VL": 0.4, "LS": 0.2, "VS": 0.2, "VIDEO": 0.2},
            batch_size=4),
        contrastive_batch=8,
        chunk_size=4,
        seed=seed,
    )
    _, metrics = pretrain(cfg)
    return {
        "mode": mode,
        "params": None,
        "first_total": metrics[0]["total"],
        "final_total": metrics[-1]["total"],
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    report = [run(mode, args.steps, args.seed) for mode in ("merge", "co")]
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
