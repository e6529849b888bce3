"""Small pre-norm encoder-decoder transformer with id and embedding entry points."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .admix import EmbeddedBatch
from .corpus import BOS, EOS, PAD, Batch
from .tensor_core import ConfigError, Rng, dropout


class InferenceError(ValueError):
    pass


@dataclass
class ModelConfig:
    d_model: int = 64
    d_ff: int = 128
    n_layers: int = 2
    n_heads: int = 2
    dropout: float = 0.1
    share_embeddings: bool = False
    tie_output: bool = True
    max_len: int = 256

    def validate(self) -> "ModelConfig":
        for k in ("d_model", "d_ff", "n_layers", "n_heads", "max_len"):
            if getattr(self, k) < 1:
                raise ConfigError(f"{k} must be positive, got {getattr(self, k)}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        return self


def sinusoidal_positions(max_len: int, d_model: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(max_len, dtype=torch.float64)[:, None]
    div = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float64) * (-math.log(10000.0) / d_model))
    pe = torch.zeros(max_len, d_model, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)[:, : d_model // 2]
    return pe.to(dtype)


class Attention(nn.Module):
    def __init__(self, d_model: int, n_heads: int, p: float):
        super().__init__()
        self.h = n_heads
        self.dk = d_model // n_heads
        self.p = p
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_model, d_model)
        self.v = nn.Linear(d_model, d_model)
        self.o = nn.Linear(d_model, d_model)

    def forward(self, x, mem, key_mask, causal: bool, gen):
        B, Lq, _ = x.shape
        Lk = mem.shape[1]
        q = self.q(x).view(B, Lq, self.h, self.dk).transpose(1, 2)
        k = self.k(mem).view(B, Lk, self.h, self.dk).transpose(1, 2)
        v = self.v(mem).view(B, Lk, self.h, self.dk).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.dk)
        allowed = key_mask[:, None, None, :]
        if causal:
            allowed = allowed & torch.ones(Lq, Lk, dtype=torch.bool).tril()
        scores = scores.masked_fill(~allowed, float("-inf"))
        att = dropout(torch.softmax(scores, dim=-1), self.p, gen)
        out = (att @ v).transpose(1, 2).reshape(B, Lq, -1)
        return self.o(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, p: float):
        super().__init__()
        self.l1 = nn.Linear(d_model, d_ff)
        self.l2 = nn.Linear(d_ff, d_model)
        self.p = p

    def forward(self, x, gen):
        return self.l2(dropout(torch.relu(self.l1(x)), self.p, gen))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.att = Attention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.p = cfg.dropout

    def forward(self, x, mask, gen):
        h = self.ln1(x)
        x = x + dropout(self.att(h, h, mask, False, gen), self.p, gen)
        return x + dropout(self.ff(self.ln2(x), gen), self.p, gen)


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.self_att = Attention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.cross_att = Attention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.ln3 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout)
        self.p = cfg.dropout

    def forward(self, y, tgt_mask, mem, src_mask, gen):
        h = self.ln1(y)
        y = y + dropout(self.self_att(h, h, tgt_mask, True, gen), self.p, gen)
        y = y + dropout(self.cross_att(self.ln2(y), mem, src_mask, False, gen), self.p, gen)
        return y + dropout(self.ff(self.ln3(y), gen), self.p, gen)


class Model(nn.Module):
    """Encoder-decoder transformer.

    ``forward_ids`` looks up word embeddings and delegates to
    ``forward_embedded``, so both paths share every operation after the
    lookup. Scaling by sqrt(d_model) and positional encodings are applied
    inside ``forward_embedded``.
    """

    def __init__(self, cfg: ModelConfig, vocab_size: int, dtype=torch.float32, rng: Rng | None = None):
        super().__init__()
        self.cfg = cfg.validate()
        self.vocab_size = vocab_size
        d = cfg.d_model
        self.src_embed = nn.Parameter(torch.empty(vocab_size, d))
        self.tgt_embed = self.src_embed if cfg.share_embeddings else nn.Parameter(torch.empty(vocab_size, d))
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.n_layers))
        self.enc_norm = nn.LayerNorm(d)
        self.dec_norm = nn.LayerNorm(d)
        self.out_proj = None if cfg.tie_output else nn.Parameter(torch.empty(vocab_size, d))
        self.out_bias = nn.Parameter(torch.zeros(vocab_size))
        self.register_buffer("pe", sinusoidal_positions(cfg.max_len, d), persistent=False)
        self.to(dtype)
        self.reset_parameters(rng or Rng(0))

    def reset_parameters(self, rng: Rng) -> None:
        g = rng.torch_generator()
        d = self.cfg.d_model
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("embed") or name == "out_proj":
                    p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * d ** -0.5)
                elif "ln" in name or "norm" in name:
                    p.fill_(1.0 if name.endswith("weight") else 0.0)
                elif name.endswith("bias"):
                    p.zero_()
                else:
                    fan_out, fan_in = p.shape
                    bound = math.sqrt(6.0 / (fan_in + fan_out))
                    p.copy_((torch.rand(p.shape, generator=g, dtype=p.dtype) * 2 - 1) * bound)

    @property
    def dtype(self):
        return self.src_embed.dtype

    def output_table(self) -> torch.Tensor:
        return self.tgt_embed if self.out_proj is None else self.out_proj

    def _prepare(self, emb: EmbeddedBatch, gen):
        L = emb.values.shape[1]
        if L > self.cfg.max_len:
            raise InferenceError(f"sequence length {L} exceeds max_len {self.cfg.max_len}")
        if emb.values.shape[-1] != self.cfg.d_model:
            raise InferenceError(
                f"embedding dim {emb.values.shape[-1]} does not match d_model {self.cfg.d_model}"
            )
        x = emb.values * math.sqrt(self.cfg.d_model) + self.pe[:L]
        return dropout(x, self.cfg.dropout, gen)

    def encode(self, src: EmbeddedBatch, gen=None) -> torch.Tensor:
        x = self._prepare(src, gen)
        for layer in self.encoder:
            x = layer(x, src.mask, gen)
        return self.enc_norm(x)

    def decode(self, mem: torch.Tensor, src_mask: torch.Tensor, tgt: EmbeddedBatch, gen=None) -> torch.Tensor:
        y = self._prepare(tgt, gen)
        for layer in self.decoder:
            y = layer(y, tgt.mask, mem, src_mask, gen)
        y = self.dec_norm(y)
        return y @ self.output_table().t() + self.out_bias

    def forward_embedded(self, src: EmbeddedBatch, tgt: EmbeddedBatch, train_mode: bool = False,
                         generator: torch.Generator | None = None) -> torch.Tensor:
        gen = generator if train_mode else None
        if train_mode and gen is None:
            gen = torch.default_generator
        return self.decode(self.encode(src, gen), src.mask, tgt, gen)

    def embed_src(self, ids: torch.Tensor, mask: torch.Tensor) -> EmbeddedBatch:
        return EmbeddedBatch(torch.nn.functional.embedding(ids, self.src_embed), mask)

    def embed_tgt(self, ids: torch.Tensor, mask: torch.Tensor) -> EmbeddedBatch:
        return EmbeddedBatch(torch.nn.functional.embedding(ids, self.tgt_embed), mask)

    def forward_ids(self, batch: Batch, train_mode: bool = False,
                    generator: torch.Generator | None = None) -> torch.Tensor:
        if int(batch.src_ids.max()) >= self.vocab_size or int(batch.tgt_in.max()) >= self.vocab_size:
            raise InferenceError(f"token id out of range for vocabulary of size {self.vocab_size}")
        return self.forward_embedded(
            self.embed_src(batch.src_ids, batch.src_mask),
            self.embed_tgt(batch.tgt_in, batch.tgt_mask),
            train_mode,
            generator,
        )


@torch.no_grad()
def greedy_decode(model: Model, sources, max_len: int | None = None) -> list[list[int]]:
    """BOS-seeded argmax decoding for a list of source id sequences.

    Decoding of a sentence stops at EOS or after ``max_len`` tokens
    (default: source length + 10). EOS is not included in the output.
    """
    single = bool(sources) and isinstance(sources[0], int)
    if single:
        sources = [sources]
    if not sources:
        return []
    B = len(sources)
    S = max(len(s) for s in sources)
    src = torch.full((B, S), PAD, dtype=torch.long)
    for i, s in enumerate(sources):
        src[i, :len(s)] = torch.tensor(list(s), dtype=torch.long)
    src_mask = src != PAD
    limits = [max_len if max_len is not None else len(s) + 10 for s in sources]
    limit = min(max(limits), model.cfg.max_len - 1)
    mem = model.encode(model.embed_src(src, src_mask))
    ys = torch.full((B, 1), BOS, dtype=torch.long)
    done = torch.zeros(B, dtype=torch.bool)
    out: list[list[int]] = [[] for _ in range(B)]
    for t in range(limit):
        logits = model.decode(mem, src_mask, model.embed_tgt(ys, torch.ones_like(ys, dtype=torch.bool)))
        nxt = logits[:, -1].argmax(dim=-1)
        for i in range(B):
            if done[i]:
                continue
            tok = int(nxt[i])
            if tok == EOS or len(out[i]) >= limits[i]:
                done[i] = True
            else:
                out[i].append(tok)
                if len(out[i]) >= limits[i]:
                    done[i] = True
        if bool(done.all()):
            break
        ys = torch.cat([ys, nxt[:, None]], dim=1)
    return out[0] if single else out
