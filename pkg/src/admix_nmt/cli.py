"""Command-line entry point: ``admix-nmt <command> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from .admix import admix_batch
from .checkpoint import load_checkpoint
from .corpus import IngestionError, Vocab, build_vocab, collate, decode, encode, read_parallel
from .evaluation import EvaluationError, corpus_bleu, robustness_sweep
from .tensor_core import ConfigError, Rng, TrainingError
from .trainer import METHODS, format_sweep, load_config, sweep, train
from .transformer import InferenceError, greedy_decode


class UsageError(Exception):
    pass


def _csv(text: str, cast):
    try:
        return [cast(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def _read_lines(path: str) -> list[str]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"file not found: {p}")
    return p.read_text(encoding="utf-8").splitlines()


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "method", None):
        cfg.method = args.method
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    return cfg


def cmd_prepare_vocab(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        prefixes, out = [cfg.train_prefix], args.out or cfg.vocab
    else:
        if not args.corpus or not args.out:
            raise UsageError("prepare-vocab needs --config or both --corpus and --out")
        prefixes, out = args.corpus, args.out
    paths = [f"{p}.{side}" for p in prefixes for side in ("src", "tgt")]
    for p in paths:
        if not Path(p).exists():
            raise FileNotFoundError(f"corpus file not found: {p}")
    vocab = build_vocab(paths, args.min_freq, args.max_size)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    vocab.save(out)
    print(f"wrote {len(vocab)} entries to {out}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    res = train(cfg)
    print(f"best val_bleu={res.best_bleu:.2f} at step {res.best_step}; "
          f"checkpoints in {cfg.out_dir}", file=sys.stderr)
    return 0


def cmd_translate(args) -> int:
    model, vocab, _ = load_checkpoint(args.checkpoint)
    model.eval()
    lines = _read_lines(args.input)
    srcs = [encode(vocab, ln) or [] for ln in lines]
    hyps: list[list[int]] = [[] for _ in srcs]
    todo = [i for i, s in enumerate(srcs) if s]
    for k in range(0, len(todo), args.batch_size):
        idx = todo[k:k + args.batch_size]
        for i, h in zip(idx, greedy_decode(model, [srcs[i] for i in idx], args.max_len)):
            hyps[i] = h
    text = "".join(decode(vocab, h) + "\n" for h in hyps)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_evaluate(args) -> int:
    hyp, ref = _read_lines(args.hyp), _read_lines(args.ref)
    rep = corpus_bleu(hyp, ref, smooth=args.smooth, lowercase=args.lowercase)
    print(rep)
    return 0


def cmd_augment(args) -> int:
    cfg = _config(args)
    cfg.admix.validate()
    vocab = Vocab.load(cfg.vocab)
    pairs = read_parallel(cfg.train_prefix, vocab)
    n = args.sentences
    rng = Rng(cfg.seed).substream("augment")
    table = torch.zeros(len(vocab), 1, dtype=torch.float64)
    out = []
    for b in range(args.batches):
        chunk = pairs[b * n:(b + 1) * n]
        if not chunk:
            break
        batch = collate(chunk)
        res = admix_batch(batch, table, table, cfg.admix, rng.substream(f"batch{b}"))
        out.append(f"batch={b} sentences={len(chunk)} k={len(cfg.admix.ops)}")
        ws = res.w if res.w.ndim == 1 else res.w.mean(axis=0)
        out.append("w=" + " ".join(f"{x:.6f}" for x in ws) + f" sum_w={float(ws.sum()):.6f}")
        ms = [res.m] if isinstance(res.m, float) else list(res.m)
        out.append("m=" + " ".join(f"{x:.6f}" for x in ms))
        for i in range(len(chunk)):
            out.append(f"sentence={i} src: {decode(vocab, batch.src_ids[i])}")
            out.append(f"sentence={i} tgt: {decode(vocab, batch.tgt_in[i])}")
            for op, sv, tv in zip(cfg.admix.ops, res.src_variants, res.tgt_variants):
                out.append(f"sentence={i} variant={op} src: {decode(vocab, sv[i], strip=False).replace(' <pad>', '')}")
                out.append(f"sentence={i} variant={op} tgt: {decode(vocab, tv[i], strip=False).replace(' <pad>', '')}")
    text = "\n".join(out) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_robustness(args) -> int:
    models, vocab = {}, None
    for entry in args.checkpoint:
        name, _, path = entry.rpartition("=")
        name = name or Path(path).stem
        model, v, _ = load_checkpoint(path)
        if vocab is not None and v.digest() != vocab.digest():
            raise ConfigError(f"{path}: vocabulary differs from the other checkpoints")
        vocab = v
        models[name] = model
    if args.valid:
        prefix = args.valid
    elif args.config:
        prefix = load_config(args.config).valid_prefix
    else:
        raise UsageError("robustness needs --valid or --config")
    pairs = read_parallel(prefix, vocab)
    ops = _csv(args.ops, int)
    res = robustness_sweep(models, pairs, ops, Rng(args.seed).substream("robustness"), smooth=args.smooth)
    print(res.table())
    for rec in res.records():
        print(rec)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = _csv(args.values, float)
    rows = sweep(cfg, args.axis, values)
    print(format_sweep(args.axis, rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="admix-nmt", description="AdMix NMT training and evaluation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-vocab", help="build a vocabulary file")
    p.add_argument("--config")
    p.add_argument("--corpus", action="append", help="corpus prefix (reads .src and .tgt); repeatable")
    p.add_argument("--out")
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--max-size", type=int)
    p.set_defaults(fn=cmd_prepare_vocab)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--out-dir")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("translate", help="greedy-decode a source file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--max-len", type=int)
    p.add_argument("--batch-size", type=int, default=128)
    p.set_defaults(fn=cmd_translate)

    p = sub.add_parser("evaluate", help="corpus BLEU of hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--smooth", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("augment", help="dump AdMix noised variants and mixing draws")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--sentences", type=int, default=4)
    p.add_argument("--batches", type=int, default=1)
    p.add_argument("--output")
    p.set_defaults(fn=cmd_augment)

    p = sub.add_parser("robustness", help="BLEU under cosine-neighbour source substitutions")
    p.add_argument("--checkpoint", action="append", required=True, help="[name=]path; repeatable")
    p.add_argument("--config")
    p.add_argument("--valid", help="validation corpus prefix")
    p.add_argument("--ops", default="0,1,2,3")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--smooth", action="store_true")
    p.set_defaults(fn=cmd_robustness)

    p = sub.add_parser("sweep", help="validation BLEU across lambda or gamma")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", choices=("lambda", "gamma"), required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=cmd_sweep)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        ap.print_usage(sys.stderr)
        print(f"admix-nmt: error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"admix-nmt: I/O error: {e}", file=sys.stderr)
        return 1
    except (ConfigError, IngestionError, EvaluationError, InferenceError, TrainingError) as e:
        print(f"admix-nmt: error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
