"""Command-line entry point.

Subcommands: vocab, train, eval, interp, sample, recon, qa.
Exit codes: 0 success, 2 usage error, 3 missing/unreadable file,
4 configuration or data error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, latent, metrics, qa as qa_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, resolve_config
from .errors import ConfigError, DataError, NumericError
from .reporting import RunManifest, emit_comparison_table
from .rng import RngStream
from .text import Vocabulary, build_vocab, load_corpus, read_lines
from .training import epoch_log_csv, train

__all__ = ["main", "build_parser"]


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help="evaluation seed (default: the checkpoint's training seed)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mimlm",
                                     description="Latent-variable sentence auto-encoders")
    parser.add_argument("--version", action="version", version=f"mimlm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vocab", help="build a vocabulary file from train.txt")
    p.add_argument("--data", required=True, help="directory containing train.txt")
    p.add_argument("--out", required=True, help="vocabulary JSON output path")
    p.add_argument("--max-size", type=int, default=None)
    p.add_argument("--min-freq", type=int, default=1)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", default=None, help="JSON or key=value config file")
    p.add_argument("--data", required=True, help="directory with train/valid/test .txt")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--vocab", default=None, help="pre-built vocabulary JSON")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--log", default=None,
                   help="epoch CSV path (default: <out>.epochs.csv)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="config override, repeatable")

    p = sub.add_parser("eval", help="run the evaluation battery")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="report JSON output path")
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--hist-out", default=None,
                   help="CSV of collapse-histogram values (kind,value)")
    p.add_argument("--hist-sentences", type=int, default=20)
    p.add_argument("--table-out", default=None, help="comparison-table CSV path")
    _add_seed(p)

    p = sub.add_parser("interp", help="interpolate between two sentences")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--a", required=True, help="first sentence")
    p.add_argument("--b", required=True, help="second sentence")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--greedy", action="store_true", help="greedy instead of ancestral decoding")
    p.add_argument("--out", default=None, help="JSON trace output path")
    _add_seed(p)

    p = sub.add_parser("sample", help="decode sentences from the latent prior heuristic")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--out", default=None, help="JSON output path")
    _add_seed(p)

    p = sub.add_parser("recon", help="mean/sampled/perturbed reconstruction of a sentence")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--out", default=None, help="JSON output path")
    _add_seed(p)

    p = sub.add_parser("qa", help="question answering with a trained model")
    qa_sub = p.add_subparsers(dest="qa_command", required=True)
    pr = qa_sub.add_parser("rank", help="rank candidate answers")
    pr.add_argument("--ckpt", required=True)
    pr.add_argument("--items", required=True, help="JSONL of {question, answers}")
    pr.add_argument("--out", required=True, help="result JSON path")
    pr.add_argument("--use-mean", action="store_true",
                    help="score with posterior means instead of samples")
    pr.add_argument("--sigma-reduce", choices=("l2", "mean"), default="l2")
    _add_seed(pr)
    pa = qa_sub.add_parser("answer", help="generate an answer for a question")
    pa.add_argument("--ckpt", required=True)
    pa.add_argument("--question", required=True)
    pa.add_argument("--len", type=int, default=10, dest="slot_len",
                    help="number of <UNK> answer slots (5/10/15 = short/medium/long)")
    _add_seed(pa)

    return parser


def _manifest(args, command: str, config: dict, seed, inputs: list) -> RunManifest:
    m = RunManifest(command=command, argv=list(sys.argv[1:]), config=config,
                    seed=seed, version=__version__).start()
    for path in inputs:
        if path:
            m.add_input(path)
    return m


def _data_inputs(data_dir: str) -> list[str]:
    return [str(Path(data_dir) / f"{name}.txt") for name in ("train", "valid", "test")]


def _cmd_vocab(args) -> int:
    train_path = Path(args.data) / "train.txt"
    if not train_path.exists():
        raise FileNotFoundError(f"missing corpus file: {train_path}")
    manifest = _manifest(args, "vocab", {"max_size": args.max_size, "min_freq": args.min_freq},
                         None, [train_path])
    vocab = build_vocab(read_lines(train_path), max_size=args.max_size,
                        min_freq=args.min_freq)
    vocab.save(args.out)
    manifest.finish().write(args.out)
    print(f"wrote vocabulary of {vocab.size} tokens to {args.out}")
    return 0


def _parse_overrides(pairs: list[str]) -> dict:
    from .config import _parse_scalar

    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = _parse_scalar(value)
    return overrides


def _cmd_train(args) -> int:
    config = resolve_config(args.config, _parse_overrides(args.set))
    vocab = Vocabulary.load(args.vocab) if args.vocab else None
    corpus = load_corpus(args.data, vocab=vocab, max_len=config.max_len,
                         max_vocab=config.max_vocab, min_freq=config.min_freq)
    resume = load_checkpoint(args.resume) if args.resume else None
    manifest = _manifest(args, "train", config.to_dict(), config.seed,
                         [args.config, args.vocab, args.resume] + _data_inputs(args.data))
    ckpt, logs = train(config, corpus, resume=resume)
    save_checkpoint(ckpt, args.out)
    log_path = args.log or f"{args.out}.epochs.csv"
    Path(log_path).write_text(epoch_log_csv(logs), encoding="utf-8")
    manifest.finish().write(args.out)
    best = f"{ckpt.best_valid:.4f}" if ckpt.best_valid is not None else "n/a"
    print(f"trained {config.objective} for {ckpt.epoch} epochs "
          f"({ckpt.global_step} steps), best valid loss {best}")
    print(f"checkpoint: {args.out}\nepoch log: {log_path}")
    return 0


def _load_ckpt_and_seed(args):
    ckpt = load_checkpoint(args.ckpt)
    seed = args.seed if args.seed is not None else ckpt.config.seed
    return ckpt, seed


def _cmd_eval(args) -> int:
    ckpt, seed = _load_ckpt_and_seed(args)
    corpus = load_corpus(args.data, vocab=ckpt.vocab, max_len=ckpt.config.max_len)
    seqs = getattr(corpus, args.split)
    if not seqs:
        raise DataError(f"split {args.split!r} is empty in {args.data}")
    manifest = _manifest(args, "eval", ckpt.config.to_dict(), seed,
                         [args.ckpt] + _data_inputs(args.data))
    report = metrics.evaluate(ckpt.best_params, seqs, seed=seed, repeats=args.repeats,
                              knn_k=args.knn_k, max_len=ckpt.config.max_len)
    label = f"{ckpt.config.objective}({ckpt.config.latent_dim})"
    payload = {"label": label, **report.to_dict()}
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")
    if args.hist_out:
        hist_seqs = seqs[: args.hist_sentences]
        hists = metrics.collapse_histograms(ckpt.best_params, hist_seqs,
                                            RngStream(seed).split("hist"))
        lines = ["kind,value"]
        for kind in ("p_same", "p_cross", "q_same", "q_cross"):
            lines += [f"{kind},{v!r}" for v in getattr(hists, kind)]
        Path(args.hist_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if args.table_out:
        csv_text, table_text = emit_comparison_table([(label, report)])
        Path(args.table_out).write_text(csv_text, encoding="utf-8")
        print(table_text, end="")
    manifest.finish().write(args.out)
    print(f"report: {args.out}")
    return 0


def _cmd_interp(args) -> int:
    ckpt, seed = _load_ckpt_and_seed(args)
    vocab = ckpt.vocab
    trace = latent.interpolate(
        ckpt.best_params,
        vocab.encode(args.a, max_len=ckpt.config.max_len),
        vocab.encode(args.b, max_len=ckpt.config.max_len),
        n_steps=args.steps, rng=RngStream(seed).split("interp"),
        strategy="greedy" if args.greedy else "ancestral",
        max_len=ckpt.config.max_len)
    for alpha, decoded in zip(trace.alphas, trace.decoded):
        print(f"{alpha:6.4f}  {vocab.decode(decoded)}")
    if args.out:
        manifest = _manifest(args, "interp", ckpt.config.to_dict(), seed, [args.ckpt])
        payload = {
            "a": {"text": vocab.decode(trace.endpoint_a), "code": trace.code_a.tolist()},
            "b": {"text": vocab.decode(trace.endpoint_b), "code": trace.code_b.tolist()},
            "steps": [{"alpha": a, "code": z.tolist(), "text": vocab.decode(s)}
                      for a, z, s in zip(trace.alphas, trace.codes, trace.decoded)],
        }
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        manifest.finish().write(args.out)
    return 0


def _cmd_sample(args) -> int:
    ckpt, seed = _load_ckpt_and_seed(args)
    seqs = latent.sample_prior(ckpt.best_params, args.n,
                               RngStream(seed).split("sample"), sigma=args.sigma,
                               max_len=ckpt.config.max_len)
    texts = [ckpt.vocab.decode(s) for s in seqs]
    for text in texts:
        print(text)
    if args.out:
        manifest = _manifest(args, "sample", ckpt.config.to_dict(), seed, [args.ckpt])
        Path(args.out).write_text(
            json.dumps({"sigma": args.sigma, "samples": texts}, indent=2) + "\n",
            encoding="utf-8")
        manifest.finish().write(args.out)
    return 0


def _cmd_recon(args) -> int:
    ckpt, seed = _load_ckpt_and_seed(args)
    x = ckpt.vocab.encode(args.text, max_len=ckpt.config.max_len)
    modes = latent.reconstruct_modes(ckpt.best_params, x,
                                     RngStream(seed).split("recon"),
                                     strategy="greedy" if args.greedy else "ancestral",
                                     max_len=ckpt.config.max_len)
    texts = {name: ckpt.vocab.decode(seq) for name, seq in modes.items()}
    for name in ("mean", "sample", "perturbed"):
        print(f"{name:>9}: {texts[name]}")
    if args.out:
        manifest = _manifest(args, "recon", ckpt.config.to_dict(), seed, [args.ckpt])
        Path(args.out).write_text(json.dumps({"input": args.text, **texts}, indent=2) + "\n",
                                  encoding="utf-8")
        manifest.finish().write(args.out)
    return 0


def _cmd_qa(args) -> int:
    ckpt, seed = _load_ckpt_and_seed(args)
    qmark = qa_mod.question_mark_id(ckpt.vocab)
    if args.qa_command == "rank":
        items = qa_mod.load_qa_jsonl(args.items, ckpt.vocab, max_len=ckpt.config.max_len)
        manifest = _manifest(args, "qa rank", ckpt.config.to_dict(), seed,
                             [args.ckpt, args.items])
        result = qa_mod.rank_and_metrics(ckpt.best_params, items,
                                         RngStream(seed).split("qa"), qmark_id=qmark,
                                         sigma_reduce=args.sigma_reduce,
                                         use_mean=args.use_mean)
        payload = {"n_items": len(items), "p_at_1": result.p_at_1, "mrr": result.mrr,
                   "true_ranks": result.true_ranks, "rankings": result.rankings}
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        manifest.finish().write(args.out)
        print(f"P@1 {result.p_at_1:.4f}  MRR {result.mrr:.4f}  ({len(items)} items)")
        return 0
    question = ckpt.vocab.encode(args.question, max_len=ckpt.config.max_len)
    answer = qa_mod.generate_answer(ckpt.best_params, question, args.slot_len,
                                    RngStream(seed).split("qa_answer"), qmark_id=qmark,
                                    max_len=ckpt.config.max_len)
    print(ckpt.vocab.decode(answer))
    return 0


_COMMANDS = {
    "vocab": _cmd_vocab,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "interp": _cmd_interp,
    "sample": _cmd_sample,
    "recon": _cmd_recon,
    "qa": _cmd_qa,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ConfigError, DataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
