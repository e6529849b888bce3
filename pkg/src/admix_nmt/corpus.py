"""Vocabulary, whitespace tokenisation, parallel corpora and token-budget batching."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import torch

from .tensor_core import Rng

PAD, BOS, EOS, UNK, BLANK = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("<pad>", "<s>", "</s>", "<unk>", "<blank>")
NUM_SPECIALS = len(SPECIAL_TOKENS)
VOCAB_HEADER = "#specials PAD BOS EOS UNK BLANK"


class IngestionError(ValueError):
    pass


class Vocab:
    """Bidirectional token/id map; the five specials occupy ids 0-4."""

    def __init__(self, tokens: Sequence[str] = ()):
        self.itos: list[str] = list(SPECIAL_TOKENS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            if tok in self.stoi:
                raise IngestionError(f"duplicate vocabulary token {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok: str) -> bool:
        return tok in self.stoi

    @property
    def words(self) -> list[str]:
        return self.itos[NUM_SPECIALS:]

    def id(self, tok: str) -> int:
        return self.stoi.get(tok, UNK)

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(VOCAB_HEADER + "\n")
            for tok in self.words:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            lines = f.read().split("\n")
        if not lines or lines[0].strip() != VOCAB_HEADER:
            raise IngestionError(f"{path}: missing vocab header {VOCAB_HEADER!r}")
        return cls([ln for ln in lines[1:] if ln])


def build_vocab(paths: Iterable[str | Path], min_freq: int = 1, max_size: int | None = None) -> Vocab:
    counts: Counter[str] = Counter()
    for p in paths:
        with open(p, encoding="utf-8") as f:
            for line in f:
                counts.update(line.split())
    if not counts:
        raise IngestionError("cannot build a vocabulary from an empty corpus")
    items = sorted(((t, c) for t, c in counts.items() if c >= min_freq and t not in SPECIAL_TOKENS),
                   key=lambda tc: (-tc[1], tc[0]))
    if max_size is not None:
        items = items[:max_size]
    return Vocab([t for t, _ in items])


def encode(vocab: Vocab, line: str) -> list[int] | None:
    """Token ids for ``line``; ``None`` signals an empty line to skip."""
    toks = line.split()
    if not toks:
        return None
    return [vocab.id(t) for t in toks]


def decode(vocab: Vocab, ids: Iterable[int], strip: bool = True) -> str:
    out = []
    for i in ids:
        i = int(i)
        if strip and i == EOS:
            break
        if strip and i in (PAD, BOS):
            continue
        out.append(vocab.itos[i])
    return " ".join(out)


@dataclass(frozen=True)
class SentencePair:
    src: tuple[int, ...]
    tgt: tuple[int, ...]


def read_parallel(prefix: str | Path, vocab: Vocab) -> list[SentencePair]:
    """Load ``<prefix>.src`` / ``<prefix>.tgt``; pairs with an empty side are skipped."""
    src_path, tgt_path = Path(f"{prefix}.src"), Path(f"{prefix}.tgt")
    for p in (src_path, tgt_path):
        if not p.exists():
            raise FileNotFoundError(f"corpus file not found: {p}")
    src_lines = src_path.read_text(encoding="utf-8").splitlines()
    tgt_lines = tgt_path.read_text(encoding="utf-8").splitlines()
    if len(src_lines) != len(tgt_lines):
        raise IngestionError(f"{src_path} has {len(src_lines)} lines but {tgt_path} has {len(tgt_lines)}")
    pairs = []
    for s, t in zip(src_lines, tgt_lines):
        si, ti = encode(vocab, s), encode(vocab, t)
        if si is None or ti is None:
            continue
        pairs.append(SentencePair(tuple(si), tuple(ti)))
    if not pairs:
        raise IngestionError(f"no sentence pairs in {prefix}")
    return pairs


def write_parallel(prefix: str | Path, pairs: Iterable[tuple[str, str]]) -> None:
    pairs = list(pairs)
    Path(f"{prefix}.src").write_text("".join(s + "\n" for s, _ in pairs), encoding="utf-8")
    Path(f"{prefix}.tgt").write_text("".join(t + "\n" for _, t in pairs), encoding="utf-8")


@dataclass
class Batch:
    src_ids: torch.Tensor     # [B, S]
    tgt_in: torch.Tensor      # [B, T+1], BOS-prefixed
    tgt_out: torch.Tensor     # [B, T+1], EOS-suffixed
    src_mask: torch.Tensor    # [B, S] bool
    tgt_mask: torch.Tensor    # [B, T+1] bool
    pairs: list[SentencePair] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.src_ids.shape[0]

    @property
    def num_tgt_tokens(self) -> int:
        return int(self.tgt_mask.sum())


def collate(pairs: Sequence[SentencePair]) -> Batch:
    b = len(pairs)
    s_max = max(len(p.src) for p in pairs)
    t_max = max(len(p.tgt) for p in pairs) + 1
    src = torch.full((b, s_max), PAD, dtype=torch.long)
    tin = torch.full((b, t_max), PAD, dtype=torch.long)
    tout = torch.full((b, t_max), PAD, dtype=torch.long)
    for i, p in enumerate(pairs):
        src[i, :len(p.src)] = torch.tensor(p.src, dtype=torch.long)
        tin[i, 0] = BOS
        tin[i, 1:len(p.tgt) + 1] = torch.tensor(p.tgt, dtype=torch.long)
        tout[i, :len(p.tgt)] = torch.tensor(p.tgt, dtype=torch.long)
        tout[i, len(p.tgt)] = EOS
    return Batch(src, tin, tout, src != PAD, tout != PAD, list(pairs))


def make_batches(pairs: Sequence[SentencePair], max_tokens: int, rng: Rng) -> list[Batch]:
    """Length-bucketed batches with at most ``max_tokens`` padded target positions each.

    Pairs are sorted by target then source length (random tie-break), packed
    greedily, and the batch order is shuffled.
    """
    for i, p in enumerate(pairs):
        if len(p.tgt) + 1 > max_tokens:
            raise IngestionError(
                f"pair {i} (line {i + 1}) needs {len(p.tgt) + 1} target tokens, budget is {max_tokens}"
            )
    tie = rng.random(len(pairs))
    order = sorted(range(len(pairs)), key=lambda i: (len(pairs[i].tgt), len(pairs[i].src), tie[i]))
    groups: list[list[int]] = []
    cur: list[int] = []
    cur_t = 0
    for i in order:
        t = len(pairs[i].tgt) + 1
        if cur and max(cur_t, t) * (len(cur) + 1) > max_tokens:
            groups.append(cur)
            cur, cur_t = [], 0
        cur.append(i)
        cur_t = max(cur_t, t)
    if cur:
        groups.append(cur)
    perm = rng.permutation(len(groups))
    return [collate([pairs[i] for i in groups[j]]) for j in perm]
