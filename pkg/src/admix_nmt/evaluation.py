"""Corpus BLEU (multi-bleu semantics) and the noisy-input robustness protocol."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .corpus import NUM_SPECIALS, SentencePair
from .tensor_core import ConfigError, Rng


class EvaluationError(ValueError):
    pass


@dataclass
class BleuReport:
    bleu: float
    precisions: list[float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    def __str__(self) -> str:
        ps = "/".join(f"{100 * p:.1f}" for p in self.precisions)
        return (f"BLEU = {self.bleu:.2f}, {ps} (BP={self.brevity_penalty:.3f}, "
                f"ratio={self.hyp_len / max(self.ref_len, 1):.3f}, hyp_len={self.hyp_len}, ref_len={self.ref_len})")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _tok(x) -> list[str]:
    return x.split() if isinstance(x, str) else [str(t) for t in x]


def corpus_bleu(hypotheses, references, max_order: int = 4, smooth: bool = False,
                lowercase: bool = False) -> BleuReport:
    """Corpus-level BLEU with clipped counts pooled over all sentences.

    Unsmoothed by default: any zero n-gram precision gives BLEU 0. ``smooth``
    adds one to numerator and denominator for orders above 1.
    """
    if len(hypotheses) != len(references):
        raise EvaluationError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    if not hypotheses:
        raise EvaluationError("cannot score an empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for h, r in zip(hypotheses, references):
        h, r = _tok(h), _tok(r)
        if lowercase:
            h, r = [t.lower() for t in h], [t.lower() for t in r]
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_order + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    precisions = []
    for n, (m, t) in enumerate(zip(matches, totals), start=1):
        if smooth and n > 1:
            m, t = m + 1, t + 1
        precisions.append(m / t if t > 0 else 0.0)
    if hyp_len == 0:
        bp = 0.0
    elif hyp_len < ref_len:
        bp = math.exp(1.0 - ref_len / hyp_len)
    else:
        bp = 1.0
    if min(precisions) <= 0.0:
        bleu = 0.0
    else:
        bleu = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / max_order)
    return BleuReport(bleu, precisions, bp, hyp_len, ref_len)


# ---------------------------------------------------------------------------
# noisy validation sets
# ---------------------------------------------------------------------------


@dataclass
class NoisySet:
    base: list[SentencePair]
    num_ops: int
    pairs: list[SentencePair]
    trace: list[list[tuple[int, int, int]]] = field(default_factory=list)  # (position, old, new)


def nearest_neighbours(table: torch.Tensor | np.ndarray) -> np.ndarray:
    """For each id, the most cosine-similar non-special, non-identical id."""
    e = np.asarray(table.detach().cpu().double() if isinstance(table, torch.Tensor) else table, dtype=np.float64)
    if e.shape[0] - NUM_SPECIALS < 2:
        raise ConfigError("need at least two non-special tokens for neighbour substitution")
    norms = np.linalg.norm(e, axis=1, keepdims=True)
    u = e / np.where(norms > 0, norms, 1.0)
    sim = u @ u[NUM_SPECIALS:].T        # [V, V - specials]
    for i in range(NUM_SPECIALS, e.shape[0]):
        sim[i, i - NUM_SPECIALS] = -np.inf
    return np.argmax(sim, axis=1) + NUM_SPECIALS


def make_noisy_set(base: Sequence[SentencePair], src_table, num_ops: int, rng: Rng) -> NoisySet:
    """Replace ``num_ops`` distinct source positions per sentence with cosine neighbours."""
    if num_ops < 0:
        raise ConfigError(f"num_ops must be >= 0, got {num_ops}")
    base = list(base)
    if num_ops == 0:
        return NoisySet(base, 0, list(base), [[] for _ in base])
    nn_ids = nearest_neighbours(src_table)
    pairs, trace = [], []
    for p in base:
        src = list(p.src)
        k = min(num_ops, len(src))
        ops = []
        for pos in rng.choice(len(src), k, replace=False):
            old = src[pos]
            src[pos] = int(nn_ids[old])
            ops.append((int(pos), old, src[pos]))
        pairs.append(SentencePair(tuple(src), p.tgt))
        trace.append(ops)
    return NoisySet(base, num_ops, pairs, trace)


@dataclass
class RobustnessResult:
    names: list[str]
    ops: list[int]
    bleu: np.ndarray   # [models, ops]

    def table(self) -> str:
        w = max(8, *(len(n) for n in self.names))
        head = "Method".ljust(w) + "".join(f"  Op-{o}".rjust(8) for o in self.ops)
        rows = [head, "-" * len(head)]
        for name, row in zip(self.names, self.bleu):
            rows.append(name.ljust(w) + "".join(f"{b:8.2f}" for b in row))
        return "\n".join(rows)

    def records(self) -> list[str]:
        return [f"model={n} ops={o} bleu={self.bleu[i, j]:.2f}"
                for i, n in enumerate(self.names) for j, o in enumerate(self.ops)]


def translate_pairs(model, pairs: Sequence[SentencePair], batch_size: int = 128) -> list[list[int]]:
    from .transformer import greedy_decode

    out: list[list[int]] = []
    model.eval()
    for i in range(0, len(pairs), batch_size):
        chunk = [list(p.src) for p in pairs[i:i + batch_size]]
        out.extend(greedy_decode(model, chunk))
    return out


def bleu_on_pairs(model, pairs: Sequence[SentencePair], smooth: bool = False) -> BleuReport:
    hyps = translate_pairs(model, pairs)
    return corpus_bleu(hyps, [list(p.tgt) for p in pairs], smooth=smooth)


def robustness_sweep(models: dict, base: Sequence[SentencePair], ops: Sequence[int], rng: Rng,
                     table=None, smooth: bool = False) -> RobustnessResult:
    """BLEU for every (model, num_ops) cell on shared noisy sets.

    The substitution table defaults to the first model's source embeddings.
    """
    names = list(models)
    if table is None:
        table = models[names[0]].src_embed
    noisy = {o: make_noisy_set(base, table, o, rng.substream(f"ops{o}")) for o in ops}
    grid = np.zeros((len(names), len(ops)))
    for i, n in enumerate(names):
        for j, o in enumerate(ops):
            grid[i, j] = bleu_on_pairs(models[n], noisy[o].pairs, smooth=smooth).bleu
    return RobustnessResult(names, list(ops), grid)
