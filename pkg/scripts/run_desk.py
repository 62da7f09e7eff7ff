"""Full desk-scale pretraining run plus the end-to-end evaluation battery.

Usage:
    python3 scripts/run_desk.py --out runs/desk [--steps 2000] [--seed 0]

Prints a JSON report: training time, loss trajectory endpoints, VL
retrieval recall, masked-LM accuracy, and finetune-vs-scratch accuracy on
the 16-class synthetic task.
"""

import argparse
import json
import time

from trimodal.model import Model
from trimodal.trainer import (
    TrainConfig,
    eval_retrieval,
    finetune,
    masked_lm_accuracy,
    pretrain,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=None, help="directory for metrics/checkpoint")
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = TrainConfig.preset("desk", steps=args.steps,
                             warmup_steps=min(200, args.steps), seed=args.seed)
    t0 = time.time()
    model, metrics = pretrain(cfg, out_dir=args.out)
    train_minutes = (time.time() - t0) / 60

    first50 = [m["total"] for m in metrics if m["step"] <= 50]
    report = {
        "train_minutes": round(train_minutes, 2),
        "first50_avg_total": sum(first50) / len(first50),
        "final_total": metrics[-1]["total"],
        "retrieval_vl_256": eval_retrieval(model, "VL", 256),
        "masked_lm_accuracy": masked_lm_accuracy(model, n_batches=8),
    }
    report["finetune_pretrained"] = finetune(model, "class16", modalities="VL", seed=1)
    scratch = Model(cfg.model, seed=1)
    report["finetune_scratch"] = finetune(scratch, "class16", modalities="VL", seed=1)
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
