"""Discrete token noise on id sequences: replacement, swapping, dropping, SwitchOut.

All operators are pure given an explicit :class:`~admix_nmt.tensor_core.Rng`
and never emit PAD, BOS or EOS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .corpus import BLANK, NUM_SPECIALS, Vocab
from .tensor_core import ConfigError, Rng

NoiseOp = Literal["replace", "swap", "drop"]
NOISE_OPS: tuple[NoiseOp, ...] = ("replace", "swap", "drop")


@dataclass(frozen=True)
class NoiseSpec:
    gamma: float
    op: NoiseOp

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"noise fraction must lie in [0, 1), got {self.gamma}")
        if self.op not in NOISE_OPS:
            raise ConfigError(f"unknown noise op {self.op!r}")


def num_changed(gamma: float, length: int) -> int:
    """round(gamma * length), halves rounded up."""
    return int(math.floor(gamma * length + 0.5))


def _vocab_size(vocab: Vocab | int) -> int:
    return vocab if isinstance(vocab, int) else len(vocab)


def _draw_other(rng: Rng, n_words: int, original: int) -> int:
    # uniform over non-special ids, excluding the original id
    if NUM_SPECIALS <= original < NUM_SPECIALS + n_words:
        if n_words == 1:
            return original
        r = int(rng.integers(0, n_words - 1)) + NUM_SPECIALS
        return r + 1 if r >= original else r
    return int(rng.integers(0, n_words)) + NUM_SPECIALS


def word_replace(seq: Sequence[int], gamma: float, rng: Rng, vocab: Vocab | int) -> list[int]:
    n_words = _vocab_size(vocab) - NUM_SPECIALS
    if n_words < 1:
        raise ConfigError("word replacement needs at least one non-special vocabulary token")
    out = list(seq)
    n = min(num_changed(gamma, len(out)), len(out))
    if n == 0:
        return out
    for pos in rng.choice(len(out), n, replace=False):
        out[pos] = _draw_other(rng, n_words, out[pos])
    return out


def word_swap(seq: Sequence[int], gamma: float, rng: Rng) -> list[int]:
    out = list(seq)
    if len(out) < 2:
        return out
    for _ in range(num_changed(gamma, len(out))):
        i, j = rng.choice(len(out), 2, replace=False)
        out[i], out[j] = out[j], out[i]
    return out


def word_drop(
    seq: Sequence[int], gamma: float, rng: Rng, mode: Literal["remove", "blank"] = "remove"
) -> list[int]:
    """Drop each token with probability ``gamma``.

    ``mode="blank"`` keeps the length by writing the BLANK id in place of the
    dropped token; ``"remove"`` deletes it. One token always survives.
    """
    if mode not in ("remove", "blank"):
        raise ConfigError(f"unknown word_drop mode {mode!r}")
    out = list(seq)
    if not out:
        return out
    selected = rng.random(len(out)) < gamma
    if selected.all():
        selected[int(rng.integers(0, len(out)))] = False
    if mode == "blank":
        return [BLANK if s else t for t, s in zip(out, selected)]
    return [t for t, s in zip(out, selected) if not s]


def switchout_count_probs(length: int, tau: float) -> np.ndarray:
    """P(n) proportional to exp(-n / tau) over n = 0..length."""
    if not tau > 0:
        raise ConfigError(f"SwitchOut temperature must be > 0, got {tau}")
    logits = -np.arange(length + 1) / tau
    p = np.exp(logits - logits.max())
    return p / p.sum()


def switchout_count(length: int, tau: float, rng: Rng) -> int:
    probs = switchout_count_probs(length, tau)
    return min(int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")), length)


def switchout_baseline(seq: Sequence[int], tau: float, rng: Rng, vocab: Vocab | int) -> list[int]:
    """Simplified SwitchOut: temperature-weighted count, then uniform substitutions."""
    n_words = _vocab_size(vocab) - NUM_SPECIALS
    if n_words < 1:
        raise ConfigError("SwitchOut needs at least one non-special vocabulary token")
    out = list(seq)
    n = switchout_count(len(out), tau, rng)
    if n:
        for pos in rng.choice(len(out), n, replace=False):
            out[pos] = int(rng.integers(0, n_words)) + NUM_SPECIALS
    return out


def apply_noise(op: NoiseOp, seq: Sequence[int], gamma: float, rng: Rng, vocab: Vocab | int) -> list[int]:
    """Length-preserving form of each op, as used inside AdMix."""
    if op == "replace":
        return word_replace(seq, gamma, rng, vocab)
    if op == "swap":
        return word_swap(seq, gamma, rng)
    if op == "drop":
        return word_drop(seq, gamma, rng, mode="blank")
    raise ConfigError(f"unknown noise op {op!r}")
