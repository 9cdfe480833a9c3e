"""Command line pipeline: vocab -> cooc -> shard -> train -> export -> eval.

Every subcommand echoes its resolved configuration to stderr as
``key = value`` lines; saving that block to a file and passing it back with
``--config`` reproduces the run. Flags override config-file values.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import corpus, evaluation, matrix, trainer
from .objective import ObjectiveConfig, WeightParams

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3

log = logging.getLogger("swivel")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def read_config_file(path: str) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def format_config(args: argparse.Namespace) -> str:
    skip = {"command", "func", "config", "verbose"}
    lines = [f"# swivel {args.command}"]
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None:
            continue
        if isinstance(value, list):
            value = " ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines)


def _apply_config(sub: argparse.ArgumentParser, values: dict):
    """Turn config-file strings into parser defaults, converting by each action's type."""
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        if key == "command":
            continue
        action = actions.get(key)
        if action is None:
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            convert = action.type or str
            defaults[key] = [convert(v) for v in raw.split()]
        else:
            defaults[key] = (action.type or str)(raw)
        # a value from the config satisfies a required flag
        action.required = False
    sub.set_defaults(**defaults)


# ---------------------------------------------------------------- commands


def cmd_vocab(args):
    vocab = corpus.build_vocabulary(corpus.iter_sentences(args.input), args.max_vocab, args.min_count)
    if vocab.size == 0:
        raise ValueError("no token meets --min-count; vocabulary is empty")
    vocab.save(args.output)
    log.info("wrote %d tokens to %s", vocab.size, args.output)


def cmd_cooc(args):
    vocab = corpus.Vocabulary.load(args.vocab)
    config = corpus.CoocConfig(window=args.window, scaling=args.scaling)
    counter = corpus.CooccurrenceCounter(vocab, config)
    seen = in_vocab = 0
    present = set()

    def tracked(sentences):
        nonlocal seen, in_vocab
        for sentence in sentences:
            seen += len(sentence)
            hits = [t for t in sentence if t in vocab.index]
            in_vocab += len(hits)
            present.update(hits)
            yield sentence

    acc = counter.update(tracked(corpus.iter_sentences(args.input))).result()
    if seen and in_vocab / seen < 0.5:
        log.warning("only %.1f%% of corpus tokens are in the vocabulary", 100.0 * in_vocab / seen)
    if seen and len(present) < vocab.size:
        log.warning("%d vocabulary tokens never occur in this corpus", vocab.size - len(present))
    acc.save(args.output)
    log.info("wrote %d cells to %s", len(acc), args.output)


def cmd_shard(args):
    vocab = corpus.Vocabulary.load(args.vocab)
    acc = corpus.CoocAccumulator.load(args.cooc)
    mat, plan = matrix.finalize_matrix(acc, vocab.size, vocab.size, args.k)
    matrix.write_shards(mat, plan, args.output_dir)
    log.info(
        "wrote %d shards (%dx%d blocks, k=%d) to %s",
        plan.num_shards,
        plan.row_blocks,
        plan.col_blocks,
        plan.k,
        args.output_dir,
    )


def _train_config(args) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        dim=args.dim,
        steps=args.steps,
        eta=args.eta,
        epsilon=args.epsilon,
        seed=args.seed,
        workers=args.workers,
        schedule=args.schedule,
        objective=ObjectiveConfig(WeightParams(args.alpha, args.b0, args.b), args.shift),
        early_stop=args.early_stop,
    )


def cmd_train(args):
    try:
        cfg = _train_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    plan, shards = matrix.load_shards(args.shards)
    state = None
    if args.resume:
        ckpt = trainer.load_checkpoint(args.resume)
        store, state = ckpt.store, ckpt.state
        if store.W.shape != (plan.m, cfg.dim) or store.W_tilde.shape != (plan.n, cfg.dim):
            raise ValueError("checkpoint shapes do not match the shards and --dim")
    else:
        store = trainer.init_embeddings(plan.m, plan.n, cfg.dim, cfg.seed)
    trainer.train(
        shards,
        store,
        cfg,
        progress=trainer.stderr_progress,
        state=state,
        checkpoint_path=args.output,
        checkpoint_every=args.checkpoint_every,
    )
    log.info("wrote checkpoint %s", args.output)


def cmd_export(args):
    ckpt = trainer.load_checkpoint(args.checkpoint)
    vocab = corpus.Vocabulary.load(args.vocab)
    col_vocab = corpus.Vocabulary.load(args.col_vocab) if args.col_vocab else None
    tokens, vectors = trainer.combine_and_export(ckpt.store, vocab, args.combine, col_vocab)
    if args.format == "text":
        trainer.write_text_embeddings(args.output, tokens, vectors)
    else:
        counts = vocab.counts if args.combine != "context" or col_vocab is None else col_vocab.counts
        trainer.write_binary_embeddings(args.output, tokens, vectors, counts)
    log.info("wrote %d vectors to %s", len(tokens), args.output)


def cmd_eval(args):
    table = evaluation.EmbeddingTable.load(args.embeddings)
    results = []
    for path in args.similarity or []:
        results.append(evaluation.evaluate_similarity(table, evaluation.SimilarityDataset.load(path)))
    analogies = []
    for path in args.analogy or []:
        dataset = evaluation.AnalogyDataset.load(path)
        result = evaluation.evaluate_analogy(table, dataset)
        if result.oov == result.total:
            raise ValueError(f"{dataset.name}: every analogy has an out-of-vocabulary word")
        results.append(result)
        analogies.append((dataset, result))
    if not results:
        raise UsageError("give at least one --similarity or --analogy file")
    records = evaluation.report_records(results)
    print(evaluation.format_report(records))

    if args.freq_buckets:
        vocab = _frequency_vocab(args)
        for dataset, result in analogies:
            buckets, merges = evaluation.analogy_accuracy_by_frequency(
                table, dataset, vocab, args.freq_buckets, args.min_bucket, result
            )
            print(f"\n{dataset.name}: accuracy by log10 mean frequency ({merges} merges)")
            print(f"{'log10 freq':>10} {'range':>15} {'accuracy':>9} {'count':>6}")
            for b in buckets:
                print(f"{b.mean_log10_freq:>10.3f} {b.lo:>7.2f}-{b.hi:<7.2f} {b.accuracy:>9.4f} {b.count:>6d}")
                records.append(
                    {
                        "name": f"{dataset.name}/freq[{b.lo:.3f},{b.hi:.3f}]",
                        "metric": "accuracy",
                        "value": b.accuracy,
                        "used": b.count,
                        "skipped": 0,
                    }
                )
    if args.json:
        text = evaluation.dumps_jsonl(records)
        if args.json == "-":
            sys.stdout.write(text)
        else:
            with open(args.json, "w", encoding="utf-8") as fh:
                fh.write(text)


def _frequency_vocab(args):
    if args.vocab:
        return corpus.Vocabulary.load(args.vocab)
    sidecar = f"{args.embeddings}.vocab"
    if os.path.exists(sidecar):
        return corpus.Vocabulary.load(sidecar)
    raise UsageError("--freq-buckets needs --vocab (or binary embeddings with a .vocab sidecar)")


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="swivel", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="file of 'key = value' lines supplying flag values")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = subs.add_parser("vocab", help="build a frequency-ranked vocabulary")
    p.add_argument("--input", nargs="+", required=True, help="text files, '-' for stdin")
    p.add_argument("--max-vocab", type=_positive_int, default=397312)
    p.add_argument("--min-count", type=_positive_int, default=1)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_vocab)

    p = subs.add_parser("cooc", help="count windowed co-occurrences")
    p.add_argument("--input", nargs="+", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--window", type=_positive_int, default=10)
    p.add_argument("--scaling", choices=corpus.SCALINGS, default="harmonic")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_cooc)

    p = subs.add_parser("shard", help="split the co-occurrence matrix into k x k shards")
    p.add_argument("--cooc", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--k", type=_positive_int, default=1024)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_shard)

    p = subs.add_parser("train", help="train embeddings on a shard directory")
    p.add_argument("--shards", required=True)
    p.add_argument("--dim", type=_positive_int, default=300)
    p.add_argument("--steps", type=_positive_int, default=1_000_000)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--b0", type=float, default=0.1)
    p.add_argument("--b", type=float, default=0.25)
    p.add_argument("--shift", type=float, default=0.0, help="subtracted from PMI targets, e.g. 1.609 for log 5")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--schedule", choices=trainer.SCHEDULES, default="permutation")
    p.add_argument("--early-stop", action="store_true")
    p.add_argument("--checkpoint-every", type=_nonneg_int, default=0)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--output", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("export", help="write embeddings from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--col-vocab", help="column vocabulary, if it differs from --vocab")
    p.add_argument("--combine", choices=trainer.COMBINE_MODES, default="sum")
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_export)

    p = subs.add_parser("eval", help="score embeddings on similarity and analogy sets")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--similarity", nargs="+")
    p.add_argument("--analogy", nargs="+")
    p.add_argument("--vocab", help="vocabulary with corpus counts, for --freq-buckets")
    p.add_argument("--freq-buckets", type=_nonneg_int, default=0, help="number of log-frequency bins (0: off)")
    p.add_argument("--min-bucket", type=_positive_int, default=100)
    p.add_argument("--json", help="write JSON-lines records here ('-' for stdout)")
    p.set_defaults(func=cmd_eval)
    return parser


_COMMANDS = ("vocab", "cooc", "shard", "train", "export", "eval")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        pre_parser = _Parser(add_help=False)
        pre_parser.add_argument("--config")
        pre_parser.add_argument("-v", "--verbose", action="store_true")
        pre_parser.add_argument("command", nargs="?")
        pre, _ = pre_parser.parse_known_args(argv)
        if pre.config and pre.command in _COMMANDS:
            values = read_config_file(pre.config)
            sub = parser._subparsers._group_actions[0].choices[pre.command]
            _apply_config(sub, values)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # usage errors and --help
            return exc.code
        if args.verbose:
            log.setLevel(logging.DEBUG)
        print(format_config(args), file=sys.stderr, flush=True)
        args.func(args)
    except UsageError as exc:
        print(f"swivel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except trainer.NumericalError as exc:
        print(f"swivel: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError, trainer.CheckpointError) as exc:
        print(f"swivel: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
