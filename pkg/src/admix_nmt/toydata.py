"""Synthetic parallel corpora for desk-scale experiments."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import write_parallel
from .tensor_core import Rng


def _sentences(rng: Rng, n: int, words: list[str], min_len: int, max_len: int, zipf: float) -> list[list[str]]:
    ranks = np.arange(1, len(words) + 1, dtype=np.float64)
    p = ranks ** -zipf
    p /= p.sum()
    gen = rng.generator
    out = []
    for _ in range(n):
        L = int(gen.integers(min_len, max_len + 1))
        out.append([words[i] for i in gen.choice(len(words), size=L, p=p)])
    return out


def copy_task(n: int, n_words: int = 45, min_len: int = 3, max_len: int = 12, seed: int = 0,
              ) -> list[tuple[str, str]]:
    """Target equals source; uniform word choice."""
    words = [f"w{i}" for i in range(n_words)]
    sents = _sentences(Rng(seed), n, words, min_len, max_len, zipf=0.0)
    return [(" ".join(s), " ".join(s)) for s in sents]


def mapping_task(n: int, n_words: int = 60, min_len: int = 3, max_len: int = 12, seed: int = 0,
                 zipf: float = 1.0, reorder: bool = True, mapping_seed: int = 12345,
                 ) -> list[tuple[str, str]]:
    """Deterministic token-mapping translation.

    Each source word has a fixed target word (a random bijection fixed by
    ``mapping_seed``). With ``reorder``, adjacent target tokens are swapped
    pairwise so the model must use context rather than copy positions.
    """
    src_words = [f"s{i}" for i in range(n_words)]
    perm = Rng(mapping_seed).permutation(n_words)
    mapping = {w: f"t{perm[i]}" for i, w in enumerate(src_words)}
    out = []
    for s in _sentences(Rng(seed), n, src_words, min_len, max_len, zipf):
        t = [mapping[w] for w in s]
        if reorder:
            for i in range(0, len(t) - 1, 2):
                t[i], t[i + 1] = t[i + 1], t[i]
        out.append((" ".join(s), " ".join(t)))
    return out


def write_splits(out_dir: str | Path, pairs: list[tuple[str, str]], n_valid: int, n_test: int = 0) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_train = len(pairs) - n_valid - n_test
    splits = {"train": pairs[:n_train], "valid": pairs[n_train:n_train + n_valid]}
    if n_test:
        splits["test"] = pairs[n_train + n_valid:]
    for name, ps in splits.items():
        write_parallel(out / name, ps)
    return {k: str(out / k) for k in splits}
