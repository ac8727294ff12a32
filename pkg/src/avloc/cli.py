"""Command-line interface: synth, train, eval, ablate, gradcheck."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import gradcheck
from .data import load_manifest, synth_dataset
from .errors import AvlocError
from .model import Dims, ModelConfig
from .training import (TrainConfig, ablate, evaluate, load_checkpoint, train)

ABLATE_EPOCHS = 80  # per-variant training budget used by the ablate subcommand


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avloc",
        description="Audio-visual event localization: synthetic data, "
                    "training, evaluation, ablation, gradient checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic planted-event dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=64)
    p.add_argument("--T", type=int, default=10)
    p.add_argument("--da", type=int, default=32)
    p.add_argument("--dv", type=int, default=64)
    p.add_argument("--h", type=int, default=3)
    p.add_argument("--w", type=int, default=3)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--snr", type=float, default=3.0)

    p = sub.add_parser("train", help="train on a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=["supervised", "weak"], default="supervised")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--motion", choices=["pfme", "future-only", "off"], default="pfme")
    p.add_argument("--temporal-attention", choices=["on", "off"], default="on")
    p.add_argument("--scale-mode", choices=["sqrt", "linear"], default="sqrt")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--report", required=True)

    p = sub.add_parser("ablate", help="run the motion/attention ablation grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seeds", default="1,2,3,4,5",
                   help="comma-separated training seeds")
    p.add_argument("--out", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--module", default=None,
                   help=f"one of {sorted(gradcheck.SUITES)}; default all")
    return parser


def _model_config_from_manifest(manifest, args) -> ModelConfig:
    dims = Dims(T=manifest.T, d_a=manifest.d_a, d_v=manifest.d_v,
                h=manifest.h, w=manifest.w, classes=manifest.classes)
    return ModelConfig(dims=dims, mode=args.mode,
                       motion=args.motion.replace("-", "_"),
                       temporal_attention=args.temporal_attention == "on",
                       scale_mode=args.scale_mode)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (AvlocError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "synth":
        manifest, _ = synth_dataset(
            args.out, args.seed, args.videos, T=args.T, d_a=args.da,
            d_v=args.dv, h=args.h, w=args.w, classes=args.classes, snr=args.snr)
        print(f"wrote {len(manifest.entries)} videos to "
              f"{os.path.join(args.out, 'manifest.json')}")
        return 0

    if args.command == "train":
        manifest = load_manifest(args.manifest)
        base_dir = os.path.dirname(os.path.abspath(args.manifest))
        model_cfg = _model_config_from_manifest(manifest, args)
        cfg = TrainConfig(model=model_cfg, epochs=args.epochs,
                          batch_size=args.batch, learning_rate=args.lr,
                          seed=args.seed)
        _, report = train(cfg, manifest, base_dir, out_dir=args.out)
        print(f"final loss {report.losses[-1]:.6f}, "
              f"segment accuracy {report.accuracy:.4f}, "
              f"checkpoint in {os.path.join(args.out, 'checkpoint')}")
        return 0

    if args.command == "eval":
        manifest = load_manifest(args.manifest)
        base_dir = os.path.dirname(os.path.abspath(args.manifest))
        params, model_cfg = load_checkpoint(args.checkpoint)
        accuracy, per_class, predictions = evaluate(params, model_cfg,
                                                    manifest, base_dir)
        report = {
            "accuracy": accuracy,
            "per_class": per_class,
            "config": model_cfg.to_dict(),
            "predictions": [p.to_record() for p in predictions],
        }
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=1)
        print(f"segment accuracy {accuracy:.4f} over "
              f"{len(predictions)} videos -> {args.report}")
        return 0

    if args.command == "ablate":
        manifest = load_manifest(args.manifest)
        base_dir = os.path.dirname(os.path.abspath(args.manifest))
        seeds = [int(s) for s in args.seeds.split(",") if s]
        dims = Dims(T=manifest.T, d_a=manifest.d_a, d_v=manifest.d_v,
                    h=manifest.h, w=manifest.w, classes=manifest.classes)
        base = TrainConfig(model=ModelConfig(dims=dims), epochs=ABLATE_EPOCHS)
        table = ablate(base, manifest, base_dir, seeds)
        os.makedirs(args.out, exist_ok=True)
        json_path = os.path.join(args.out, "ablation.json")
        csv_path = os.path.join(args.out, "ablation.csv")
        with open(json_path, "w", encoding="utf-8") as f:
            f.write(table.to_json())
        with open(csv_path, "w", encoding="utf-8") as f:
            f.write(table.to_csv())
        for variant, stats in table.summary().items():
            print(f"{variant}: {stats['mean']:.4f} +/- {stats['sd']:.4f}")
        print(f"wrote {json_path} and {csv_path}")
        return 0

    if args.command == "gradcheck":
        results = gradcheck.run(args.module)
        failed = 0
        for r in results:
            print(r.line())
            failed += not r.passed
        print(f"{len(results) - failed}/{len(results)} gradient checks passed")
        return 1 if failed else 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
