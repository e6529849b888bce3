"""Desk-scale experiments shared by the scripts and the acceptance tests."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

from .corpus import SentencePair, Vocab, encode
from .evaluation import RobustnessResult, robustness_sweep
from .tensor_core import Rng
from .toydata import copy_task, mapping_task
from .trainer import TrainConfig, TrainResult, train
from .transformer import ModelConfig


def encode_pairs(raw: list[tuple[str, str]]) -> tuple[Vocab, list[SentencePair]]:
    words = sorted({w for s, t in raw for w in (s + " " + t).split()})
    vocab = Vocab(words)
    return vocab, [SentencePair(tuple(encode(vocab, s)), tuple(encode(vocab, t))) for s, t in raw]


@dataclass
class CopyRun:
    result: TrainResult
    first_step_at_target: int | None
    seconds: float


def copy_task_run(target_bleu: float = 95.0, max_steps: int = 3000, n_pairs: int = 2000, n_valid: int = 200,
                  seed: int = 1, valid_interval: int = 250) -> CopyRun:
    """Baseline transformer on the copy task (45 words + 5 specials = 50 ids)."""
    vocab, pairs = encode_pairs(copy_task(n_pairs, n_words=45, min_len=3, max_len=12, seed=seed))
    cfg = TrainConfig(method="baseline", max_steps=max_steps, valid_interval=valid_interval, seed=seed,
                      log_interval=valid_interval, model=ModelConfig(d_model=64, n_layers=2))
    t0 = time.perf_counter()
    res = train(cfg, train_pairs=pairs[:-n_valid], valid_pairs=pairs[-n_valid:], vocab=vocab, write_files=False)
    first = None
    for line in res.log_lines:
        if "val_bleu=" in line and float(line.split("val_bleu=")[1]) >= target_bleu:
            first = int(line.split()[0].split("=")[1])
            break
    return CopyRun(res, first, time.perf_counter() - t0)


@dataclass
class TrendRun:
    seed: int
    robustness: RobustnessResult
    seconds: float

    def degradation(self, name: str) -> float:
        row = self.robustness.names.index(name)
        return float(self.robustness.bleu[row, 0] - self.robustness.bleu[row, 1])


def method_trend(seed: int, max_steps: int = 2000, n_pairs: int = 5000, n_valid: int = 500,
                 ops: tuple[int, ...] = (0, 1), methods: tuple[str, ...] = ("baseline", "admix"),
                 base: TrainConfig | None = None) -> TrendRun:
    """Train each method on the token-mapping task and evaluate on noisy validation sets.

    The corpus and the noisy sets are shared across methods; only the training
    seed varies between calls.
    """
    vocab, pairs = encode_pairs(mapping_task(n_pairs, seed=100))
    train_pairs, valid_pairs = pairs[:-n_valid], pairs[-n_valid:]
    base = base or TrainConfig(max_steps=max_steps, valid_interval=500, log_interval=500)
    t0 = time.perf_counter()
    models = {}
    for method in methods:
        cfg = dataclasses.replace(base, method=method, seed=seed, max_steps=max_steps)
        models[method] = train(cfg, train_pairs=train_pairs, valid_pairs=valid_pairs, vocab=vocab,
                               write_files=False).model
    rob = robustness_sweep(models, valid_pairs, list(ops), Rng(seed).substream("rob"))
    return TrendRun(seed, rob, time.perf_counter() - t0)
