"""Command line entry point: ``corefkit <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import torch

from .conllu import ConlluError, read_corpus, write_corpus_file
from .metrics import primary_score
from .model import validate_document
from .scorer import ConfigError, CorefScorer, ModelConfig, build_vocabs, load_checkpoint, parse_kv, save_checkpoint
from .stats import compute_stats
from .synth import SynthSpec, generate

log = logging.getLogger("corefkit")

GRADCHECK_LIMIT = 1e-4


def _setup_logging() -> None:
    level = os.environ.get("COREFKIT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def cmd_validate(args) -> int:
    docs = read_corpus(args.input)
    problems = 0
    for d in docs:
        for msg in validate_document(d):
            print(f"{d.doc_id}: {msg}")
            problems += 1
    if problems:
        print(f"{problems} violation(s) in {len(docs)} document(s)", file=sys.stderr)
        return 1
    print(f"ok: {len(docs)} document(s)")
    return 0


def cmd_stats(args) -> int:
    report = compute_stats(read_corpus(args.input), include_singletons=args.include_singletons)
    if args.format == "tsv":
        print("\n".join(f"{k}\t{v}" for k, v in report.rows()))
    else:
        print(report.to_table())
    return 0


def cmd_convert(args) -> int:
    write_corpus_file(args.output, read_corpus(args.input))
    return 0


def cmd_train(args) -> int:
    from .training import load_corpora, read_config, train

    path = Path(args.config)
    cfg, mixture, extras = read_config(path.read_text(encoding="utf-8"), base=path.parent)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.steps is not None:
        cfg.steps = args.steps
    corpora = load_corpora(mixture)
    dev = read_corpus(extras["dev"]) if "dev" in extras else None
    model = load_checkpoint(extras["init"]) if "init" in extras else None
    out = args.out or extras.get("out")
    if not out:
        raise ConfigError("no output checkpoint given (--out or 'out =' in the config)")
    log_path = Path(args.log or f"{out}.log")
    with open(log_path, "a", encoding="utf-8") as fh:
        def write(rec):
            fh.write(rec.to_line() + "\n")
        model, history = train(corpora, cfg, model=model, dev=dev, on_step=write)
    save_checkpoint(model, out)
    last = history[-1].loss if history else float("nan")
    print(f"trained {len(history)} step(s), last loss {last:.4f}; checkpoint {out}, log {log_path}")
    return 0


def cmd_predict(args) -> int:
    from .predict import predict_document

    model = load_checkpoint(args.model)
    if args.seed is not None:
        torch.manual_seed(args.seed)
    docs = read_corpus(args.input)

    def run(doc):
        return predict_document(model, doc, args.max_segments, args.overlap, args.filter_seen)

    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            out = list(pool.map(run, docs))
    else:
        out = [run(d) for d in docs]
    write_corpus_file(args.output, out)
    return 0


def cmd_score(args) -> int:
    gold, system = read_corpus(args.gold), read_corpus(args.system)
    report = primary_score(gold, system, args.match, args.keep_singletons)
    print(report.to_table() if args.table else report.to_rows().rstrip("\n"))
    return 0


def gradcheck_fixture(seed: int = 3):
    return generate(SynthSpec(documents=1, sentences_per_doc=2, sentence_length=8, entities_per_doc=3,
                              singleton_rate=0.4, seed=seed))


def cmd_gradcheck(args) -> int:
    from .training import finite_difference_check

    path = Path(args.config)
    values = parse_kv(path.read_text(encoding="utf-8"))
    fixture = values.pop("fixture", None)
    eps = float(values.pop("eps", 1e-4))
    coords = int(values.pop("coords", 32))
    seed = int(values.pop("seed", 0)) if args.seed is None else args.seed
    docs = read_corpus(path.parent / fixture) if fixture else gradcheck_fixture()
    vocab, rels = build_vocabs(docs)
    values.update(vocab_size=len(vocab), num_deprels=len(rels))
    unknown = set(values) - set(ModelConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown gradcheck keys: {sorted(unknown)}")
    cfg = ModelConfig.from_mapping(values)
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = CorefScorer(cfg, vocab, rels)
    feats = [model.featurize(d) for d in docs]
    report = finite_difference_check(model, feats, eps=eps, coords_per_param=coords, seed=seed)
    print("\n".join(report.lines()))
    ok = report.max_error < GRADCHECK_LIMIT
    print("PASS" if ok else "FAIL", f"(limit {GRADCHECK_LIMIT:g})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="corefkit", description="Coreference resolution over CorefUD CoNLL-U files.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="check a corpus for structural problems")
    s.add_argument("input")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", help="dataset, entity and mention statistics")
    s.add_argument("input")
    s.add_argument("--format", choices=("table", "tsv"), default="table")
    s.add_argument("--include-singletons", action="store_true",
                   help="count mentions of singleton entities in the mention figures")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("convert", help="parse and rewrite in canonical form")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("train", help="train a model from a key-value config")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--log", help="step log path (default: <out>.log)")
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="write system coreference for a corpus")
    s.add_argument("--model", required=True)
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--overlap", choices=("none", "min", "max"), default="none")
    s.add_argument("--filter-seen", action="store_true")
    s.add_argument("--max-segments", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("score", help="MUC, B3, CEAF-m, CEAF-e and the primary average")
    s.add_argument("--gold", required=True)
    s.add_argument("--system", required=True)
    s.add_argument("--match", choices=("head", "exact"), default="head")
    s.add_argument("--keep-singletons", action="store_true")
    s.add_argument("--table", action="store_true", help="human-readable percentages instead of rows")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("gradcheck", help="compare analytic and numeric gradients")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ConlluError, ConfigError, ValueError, KeyError) as exc:
        print(f"corefkit {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
