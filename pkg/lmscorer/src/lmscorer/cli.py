"""Command line: serve a checkpoint, fine-tune on record files, grid-search.

    python -m lmscorer serve --checkpoint best.pt
    python -m lmscorer train --input train.jsonl --checkpoint-dir ckpt/ \
        --epochs 2 [--validation val.jsonl]
    python -m lmscorer grid --input train.jsonl --validation val.jsonl \
        [--subset 1000] [--epochs 1]
"""
from __future__ import annotations

import argparse
import json
import sys

from . import training
from .model import ScoringModel
from .training import TrainConfig, TrainingDiverged


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lmscorer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="answer scorer protocol requests on stdio")
    serve.add_argument("--checkpoint", required=True)

    def add_train_flags(p):
        p.add_argument("--input", required=True, help="record file to train on")
        p.add_argument("--validation", help="record file validated after every epoch")
        p.add_argument("--learning-rate", type=float, default=1e-5)
        p.add_argument("--alpha", type=float, default=10.0)
        p.add_argument("--beta", type=float, default=0.2)
        p.add_argument("--batch-size", type=int, default=64)
        p.add_argument("--epochs", type=int, default=30)
        p.add_argument("--seed", type=int, default=0)

    tr = sub.add_parser("train", help="fine-tune and retain the best checkpoint")
    add_train_flags(tr)
    tr.add_argument("--checkpoint-dir", required=True)

    gr = sub.add_parser("grid", help="one training run per hyperparameter cell")
    add_train_flags(gr)
    gr.add_argument("--subset", type=int, help="train on the first N records only")
    return parser


def _config(args, checkpoint_dir=None) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        alpha=args.alpha,
        beta=args.beta,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        validation_path=args.validation,
        checkpoint_dir=checkpoint_dir,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        from .server import serve

        model = ScoringModel.load(args.checkpoint)
        serve(model)
        return 0
    records = training.load_records(args.input)
    if args.command == "train":
        try:
            result = training.train(records, _config(args, args.checkpoint_dir))
        except TrainingDiverged as exc:
            print(f"training aborted: {exc}", file=sys.stderr)
            return 1
        for stats in result.epochs:
            print(json.dumps({
                "epoch": stats.epoch,
                "mean_train_loss": stats.mean_train_loss,
                "validation_accuracy": stats.validation_accuracy,
            }))
        print(json.dumps({"best_epoch": result.best_epoch,
                          "checkpoint": result.checkpoint_path}))
        return 0
    if args.command == "grid":
        validation = training.load_records(args.validation) if args.validation else []
        if not validation:
            print("grid search needs --validation", file=sys.stderr)
            return 1
        best, cells = training.grid_search(records, validation,
                                           _config(args), subset=args.subset)
        for cell in cells:
            print(json.dumps(cell.__dict__))
        print(json.dumps({"best": best.__dict__}))
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
