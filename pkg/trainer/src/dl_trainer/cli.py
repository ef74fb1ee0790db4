"""Command line: train / predict / eval on exported crop datasets."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import ConfigError, UnetConfig
from .fgrid import FgridError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floodmap-trainer",
        description="Train and run U-Net flood models on exported crop datasets.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model on a dataset directory")
    p_train.add_argument("--data", required=True)
    p_train.add_argument("--config", required=True, help="UnetConfig JSON file")
    p_train.add_argument("--out", default="runs/latest")

    p_pred = sub.add_parser("predict", help="write predicted masks")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--in", dest="input", required=True,
                        help="dataset directory or a raster FGRID stem")
    p_pred.add_argument("--out", required=True)
    p_pred.add_argument("--threshold", type=float, default=None)

    p_eval = sub.add_parser("eval", help="pooled metrics on the test split")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--out", default=None, help="metrics.json path")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            from .train import train

            cfg = UnetConfig.from_json(args.config)
            model_path, history = train(args.data, cfg, args.out)
            print(
                f"saved {model_path}; final train loss "
                f"{history['train_loss'][-1]:.4f}, best val dice "
                f"{max(history['val_dice']):.4f}"
            )
        elif args.command == "predict":
            from .predict import predict_dataset, predict_raster

            if Path(args.input).is_dir():
                stems = predict_dataset(args.model, args.input, args.out, args.threshold)
                print(f"wrote {len(stems)} masks to {args.out}")
            else:
                predict_raster(args.model, args.input, args.out, args.threshold)
                print(f"wrote mask {args.out}")
        elif args.command == "eval":
            from .evaluate import evaluate

            report = evaluate(args.model, args.data, args.out)
            print(json.dumps(report, sort_keys=True))
    except (ConfigError, FgridError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
