"""Train and predict over the shared file formats."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import read_dataset
from .predict import predict_voted, write_predictions_jsonl
from .protocol import TrainProtocolConfig
from .train import train_year


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dladapter",
        description="Deep-model training protocol over emitted datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one early-stopped model per seed")
    p.add_argument("--data", required=True,
                   help="directory with ws_train/ws_val or ws_dev JSONL")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--config", help="JSON file of protocol settings")

    p = sub.add_parser("predict", help="six-seed voted predictions")
    p.add_argument("--run", required=True, help="training run directory")
    p.add_argument("--epoch", default="next", choices=["prev", "best", "next"])
    p.add_argument("--dataset", required=True, help="dataset JSONL to score")
    p.add_argument("--out", required=True, help="predictions JSONL path")

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            settings = {}
            if args.config:
                settings = json.loads(Path(args.config).read_text(encoding="utf-8"))
            config = TrainProtocolConfig.from_dict(settings)
            runs = train_year(args.data, config, args.out)
            for run in runs:
                note = f" ({'; '.join(run.warnings)})" if run.warnings else ""
                print(
                    f"seed {run.seed}: stopped at epoch "
                    f"{run.selection.stopped_epoch}, best {run.selection.best_ep}"
                    f"{note}",
                    file=sys.stderr,
                )
        else:
            dataset = read_dataset(args.dataset)
            predictions = predict_voted(args.run, args.epoch, dataset)
            write_predictions_jsonl(predictions, args.out)
            print(f"predictions -> {args.out}", file=sys.stderr)
    except (ValueError, FileNotFoundError) as exc:
        print(f"dladapter: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
