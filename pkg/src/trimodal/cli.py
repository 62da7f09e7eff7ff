"""Command-line surface.

Subcommands:
  pretrain       --config <path> --out <dir> [--seed N] [--preset desk|paper]
  finetune       --ckpt <path> --task <name> [--modalities VLS-subset]
  eval-retrieval --ckpt <path> --kind VL|VS|LS --n N
  grad-check     [--module name]
  param-count    --config <path>

Configs are JSON documents mirroring TrainConfig; unknown keys are
rejected. Metrics are written as line-delimited JSON.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .model import Model, ModelConfig
from .trainer import TrainConfig, eval_retrieval, finetune, load_checkpoint, pretrain

CONFIG_HELP = (
    "JSON config with TrainConfig fields: "
    + ", ".join(f.name for f in dataclasses.fields(TrainConfig))
)


def _load_train_config(path, preset=None, seed=None):
    raw = {}
    if path:
        with open(path) as fh:
            raw = json.load(fh)
    if seed is not None:
        raw["seed"] = seed
    if preset:
        return TrainConfig.preset(preset, **raw)
    return TrainConfig.from_dict(raw)


def cmd_pretrain(args):
    cfg = _load_train_config(args.config, args.preset, args.seed)
    def announce(rec):
        print(json.dumps(rec))
    pretrain(cfg, out_dir=args.out, on_metrics=announce if args.verbose else None)
    print(f"checkpoint and metrics written to {args.out}")


def cmd_finetune(args):
    model, _ = load_checkpoint(args.ckpt)
    result = finetune(model, args.task, modalities=args.modalities)
    print(json.dumps(result, indent=2))


def cmd_eval_retrieval(args):
    model, _ = load_checkpoint(args.ckpt)
    result = eval_retrieval(model, args.kind, args.n)
    print(json.dumps(result, indent=2))


def cmd_grad_check(args):
    from .gradcheck import run_grad_checks

    results = run_grad_checks(module=args.module, seeds=args.seeds)
    worst = 0.0
    for name, err in results.items():
        status = "ok" if err < 1e-4 else "FAIL"
        print(f"{name:40s} max rel err {err:.3e}  {status}")
        worst = max(worst, err)
    if worst >= 1e-4:
        sys.exit(1)


def cmd_param_count(args):
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
    cfg = ModelConfig(**raw.get("model", raw))
    model = Model(cfg, seed=0)
    counts = model.parameter_count()
    counts["mode"] = cfg.fusion.mode
    print(json.dumps(counts, indent=2))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="trimodal",
        description="Desk-scale trimodal pretraining: synthetic aligned data, "
                    "merge/co-attention fusion, masked-unit and contrastive objectives.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="run the pretraining loop")
    p.add_argument("--config", help=CONFIG_HELP)
    p.add_argument("--out", required=True, help="output directory for metrics/checkpoint")
    p.add_argument("--seed", type=int, help="override config seed")
    p.add_argument("--preset", choices=["desk", "paper"],
                   help="desk: lr 3e-4/1.5e-4, warmup 200; paper: lr 2e-5/1e-5, warmup 20000")
    p.add_argument("--verbose", action="store_true", help="print metric records")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="train a linear head on a synthetic task")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", required=True, choices=["class16", "style-regression"])
    p.add_argument("--modalities", default="VLS", help="subset of VLS")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval-retrieval", help="cross-modal retrieval recall")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--kind", required=True, choices=["VL", "VS", "LS"])
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_eval_retrieval)

    p = sub.add_parser("grad-check", help="finite-difference checks for all kernels")
    p.add_argument("--module", help="restrict to one module (tensor, encoders, fusion, heads, losses)")
    p.add_argument("--seeds", type=int, default=3)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("param-count", help="report parameter counts for a config")
    p.add_argument("--config", help="JSON with a ModelConfig (or {'model': {...}})")
    p.set_defaults(func=cmd_param_count)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
