"""Reference external model for the command protocol.

Wraps the built-in classifier behind the adapter's train/predict commands
so the protocol can be exercised end to end without any heavyweight model.
`train` only records the training data and configuration; `predict`
re-trains from that record in-process and scores the inputs, which makes
the stub's probabilities bit-identical to the in-process classifier's (no
serialization round-trip touches the parameters).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import classifier as bow
from .adapter import read_train_file
from .labels import label_from_probs


def _train(args) -> int:
    model_dir = Path(args.model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    train_src = Path(args.train_file)
    (model_dir / "train.tsv").write_text(
        train_src.read_text(encoding="utf-8"), encoding="utf-8"
    )
    config = {
        "dim": args.dim,
        "epochs": args.epochs,
        "lr0": args.lr0,
        "word_ngrams": args.word_ngrams,
        "bucket_count": args.bucket_count,
        "min_token_count": args.min_token_count,
        "seed": args.seed,
    }
    (model_dir / "config.json").write_text(json.dumps(config), encoding="utf-8")
    return 0


def _predict(args) -> int:
    model_dir = Path(args.model_dir)
    config = json.loads((model_dir / "config.json").read_text(encoding="utf-8"))
    examples = [
        (bow.preprocess(text), label)
        for label, text in read_train_file(model_dir / "train.tsv")
    ]
    model = bow.train(examples, bow.ClassifierConfig(**config))
    with open(args.input_file, encoding="utf-8") as f:
        texts = [line.rstrip("\n") for line in f]
    with open(args.output_file, "w", encoding="utf-8") as f:
        for text in texts:
            p = bow.predict(model, text)
            label = label_from_probs(*p.as_tuple())
            f.write(
                f"{label.text}\t{p.p_negative!r}\t{p.p_neutral!r}\t{p.p_positive!r}\n"
            )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drifteval-stub-model",
        description="built-in classifier behind the external-model command protocol",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="record training data and config")
    t.add_argument("--train-file", required=True)
    t.add_argument("--model-dir", required=True)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--dim", type=int, default=10)
    t.add_argument("--epochs", type=int, default=500)
    t.add_argument("--lr0", type=float, default=0.01)
    t.add_argument("--word-ngrams", type=int, default=1, dest="word_ngrams")
    t.add_argument("--bucket-count", type=int, default=2_000_000, dest="bucket_count")
    t.add_argument(
        "--min-token-count", type=int, default=1, dest="min_token_count"
    )
    t.set_defaults(func=_train)

    p = sub.add_parser("predict", help="train from the record and score inputs")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--input-file", required=True)
    p.add_argument("--output-file", required=True)
    p.set_defaults(func=_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
