"""Command-line interface: synth, train, generate, evaluate.

Exit codes: 0 success, 1 usage error, 2 validation/compatibility error,
3 runtime abort. The train config file is a flat JSON object whose keys
match TrainConfig fields; command-line flags override file values.
"""

from __future__ import annotations

import argparse
import json
import sys

from .corpus import (CorpusError, Vocabulary, generate_synthetic_corpus,
                     load_corpus, split_dataset)
from .decoding import generate_explanation
from .metrics import evaluate
from .trainer import (CheckpointError, TrainConfig, TrainingError,
                      load_checkpoint, save_checkpoint, train, write_epoch_log)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


class CompatibilityError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="pxrec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="write a synthetic corpus file")
    synth.add_argument("--users", type=int, default=50)
    synth.add_argument("--items", type=int, default=50)
    synth.add_argument("--records", type=int, default=500)
    synth.add_argument("--rank", type=int, default=4)
    synth.add_argument("--noise", type=float, default=0.1)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="train a model and save its checkpoint")
    tr.add_argument("--corpus", required=True)
    tr.add_argument("--config", help="JSON file with TrainConfig keys")
    tr.add_argument("--seed", type=int, help="overrides the config seed")
    tr.add_argument("--split-seed", type=int, help="dataset split seed (default: seed)")
    tr.add_argument("--out", required=True, help="checkpoint output path")
    tr.add_argument("--log", help="per-epoch JSON-lines log path")

    gen = sub.add_parser("generate", help="print an explanation for a pair")
    gen.add_argument("--checkpoint", required=True)
    gen.add_argument("--user", required=True)
    gen.add_argument("--item", required=True)
    gen.add_argument("--max-len", type=int, default=20)

    ev = sub.add_parser("evaluate", help="score generations on the test split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--corpus", required=True)
    ev.add_argument("--split-seed", type=int, default=0)
    ev.add_argument("--report", help="machine-readable JSON report path")
    return parser


def cmd_synth(args):
    for name in ("users", "items", "records", "rank"):
        if getattr(args, name) < 1:
            raise UsageError(f"--{name} must be at least 1")
    if args.noise < 0:
        raise UsageError("--noise must be nonnegative")
    generate_synthetic_corpus(args.out, args.users, args.items, args.records,
                              latent_rank=args.rank, noise_sd=args.noise,
                              seed=args.seed)
    print(f"wrote {args.records} records to {args.out}")
    return EXIT_OK


def _load_train_config(args):
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values = json.load(fh)
        if not isinstance(values, dict):
            raise UsageError("config file must hold a flat JSON object")
    if args.seed is not None:
        values["seed"] = args.seed
    try:
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config: {exc}") from None


def cmd_train(args):
    config = _load_train_config(args)
    records, _ = load_corpus(args.corpus)
    if not records:
        raise CorpusError(f"corpus {args.corpus} contains no records")
    split_seed = args.split_seed if args.split_seed is not None else config.seed
    split = split_dataset(records, seed=split_seed)
    result = train(config, records, split)
    save_checkpoint(result.checkpoint, args.out)
    if args.log:
        write_epoch_log(result.log, args.log)
    last = result.log[-1]
    print(f"trained {last['epoch']} epochs; "
          f"best epoch {result.checkpoint.epoch}; checkpoint {args.out}")
    return EXIT_OK


def cmd_generate(args):
    checkpoint = load_checkpoint(args.checkpoint)
    users = checkpoint.user_index
    items = checkpoint.item_index
    if args.user not in users:
        raise CompatibilityError(f"user ID {args.user!r} not found in checkpoint")
    if args.item not in items:
        raise CompatibilityError(f"item ID {args.item!r} not found in checkpoint")
    if args.max_len < 1:
        raise UsageError("--max-len must be at least 1")
    model = checkpoint.build_model()
    words = generate_explanation(model, checkpoint.vocab, users[args.user],
                                 items[args.item], max_words=args.max_len)
    print(" ".join(words))
    return EXIT_OK


def cmd_evaluate(args):
    checkpoint = load_checkpoint(args.checkpoint)
    records, feature_set = load_corpus(args.corpus)
    vocab = Vocabulary.from_records(
        [records[i] for i in split_dataset(records, seed=args.split_seed).train],
        min_count=checkpoint.config.min_count,
    )
    # Recompute the split the same way cmd_train did before comparing.
    split = split_dataset(records, seed=args.split_seed)
    if vocab.content_hash != checkpoint.vocab.content_hash:
        raise CompatibilityError(
            "corpus vocabulary does not match the checkpoint (wrong corpus, "
            "split seed, or min_count)"
        )
    report = evaluate(checkpoint, records, split.test, feature_set)
    print(report.format_table())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.as_dict(), fh, indent=2)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    handlers = {"synth": cmd_synth, "train": cmd_train,
                "generate": cmd_generate, "evaluate": cmd_evaluate}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, CheckpointError, CompatibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingError, OSError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry_point():
    raise SystemExit(main())
