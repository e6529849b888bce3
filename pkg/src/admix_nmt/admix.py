"""AdMix: Dirichlet mixing of noised embeddings with a Beta residual to the clean input.

Also hosts the embedding-space comparison baselines (SeqMix, Gaussian noise).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import torch

from .corpus import Batch
from .noise_ops import NOISE_OPS, apply_noise
from .tensor_core import ConfigError, Rng, sample_beta, sample_dirichlet

Sides = Literal["both", "source_only", "target_only"]


@dataclass
class AdmixConfig:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.1
    lam: float = 10.0
    ops: list[str] = field(default_factory=lambda: list(NOISE_OPS))
    sides: str = "both"
    residual: bool = True
    per_sentence: bool = False
    divergence: str = "js"
    stop_grad_clean: bool = False

    def validate(self) -> "AdmixConfig":
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not self.ops:
            raise ConfigError("AdMix needs at least one noise op")
        bad = [o for o in self.ops if o not in NOISE_OPS]
        if bad or len(set(self.ops)) != len(self.ops):
            raise ConfigError(f"ops must be distinct members of {NOISE_OPS}, got {self.ops}")
        if self.sides not in ("both", "source_only", "target_only"):
            raise ConfigError(f"unknown sides selector {self.sides!r}")
        if self.divergence not in ("js", "kl"):
            raise ConfigError(f"unknown divergence {self.divergence!r}")
        return self


@dataclass
class EmbeddedBatch:
    values: torch.Tensor   # [B, L, d_model]
    mask: torch.Tensor     # [B, L] bool


@dataclass
class AdmixOutput:
    src: EmbeddedBatch
    tgt: EmbeddedBatch
    m: float | np.ndarray
    w: np.ndarray
    src_variants: list[torch.Tensor]   # k id matrices [B, S]
    tgt_variants: list[torch.Tensor]   # k id matrices [B, T+1], BOS-prefixed

    def __iter__(self):
        return iter((self.src, self.tgt, self.m, self.w))


def noised_variants(ids: torch.Tensor, mask: torch.Tensor, ops, gamma: float, rng: Rng,
                    vocab_size: int, skip_first: bool = False) -> list[torch.Tensor]:
    """One id matrix per op, noising only each row's real-token span.

    ``skip_first`` protects a leading BOS column.
    """
    start = 1 if skip_first else 0
    lengths = mask.sum(dim=1).tolist()
    rows = ids.tolist()
    out = []
    for op in ops:
        r = rng.substream(op)
        noisy = [list(row) for row in rows]
        for b, n in enumerate(lengths):
            span = rows[b][start:n]
            if span:
                noisy[b][start:n] = apply_noise(op, span, gamma, r, vocab_size)
        out.append(torch.tensor(noisy, dtype=torch.long))
    return out


def _mix(table: torch.Tensor, clean_ids: torch.Tensor, mask: torch.Tensor,
         variants: list[torch.Tensor], w: torch.Tensor, m: torch.Tensor) -> EmbeddedBatch:
    clean = torch.nn.functional.embedding(clean_ids, table)
    stacked = torch.stack([torch.nn.functional.embedding(v, table) for v in variants])  # [k,B,L,d]
    # w: [B, k], m: [B]
    mixed = torch.einsum("bk,kbld->bld", w, stacked)
    out = m[:, None, None] * mixed + (1.0 - m)[:, None, None] * clean
    out = torch.where(mask[..., None], out, clean)
    return EmbeddedBatch(out, mask)


def admix_batch(
    batch: Batch,
    src_table: torch.Tensor,
    tgt_table: torch.Tensor,
    cfg: AdmixConfig,
    rng: Rng,
    *,
    force_m: float | None = None,
    force_w=None,
) -> AdmixOutput:
    """Build the mixed source/target embeddings for one batch.

    ``w ~ Dirichlet(alpha)`` and ``m ~ Beta(beta, beta)`` are drawn once per
    batch (per sentence with ``cfg.per_sentence``) and shared by both sides.
    """
    cfg.validate()
    k = len(cfg.ops)
    B = batch.size
    mix_rng = rng.substream("mixing")
    if cfg.per_sentence:
        w_np = sample_dirichlet(mix_rng, k, cfg.alpha, size=B)
        m_np = sample_beta(mix_rng, cfg.beta, size=B)
    else:
        w_np = sample_dirichlet(mix_rng, k, cfg.alpha)
        m_np = sample_beta(mix_rng, cfg.beta)
    if force_w is not None:
        w_np = np.asarray(force_w, dtype=np.float64)
    if force_m is not None:
        m_np = float(force_m)
    if not cfg.residual:
        m_np = 1.0 if np.ndim(m_np) == 0 else np.ones(B)

    dtype = src_table.dtype
    w_t = torch.as_tensor(np.broadcast_to(w_np, (B, k)).copy(), dtype=dtype)
    m_t = torch.as_tensor(np.broadcast_to(m_np, (B,)).copy(), dtype=dtype)

    vocab_size = src_table.shape[0]
    noise_rng = rng.substream("noise")
    src_vars = noised_variants(batch.src_ids, batch.src_mask, cfg.ops, cfg.gamma,
                               noise_rng.substream("src"), vocab_size)
    tgt_vars = noised_variants(batch.tgt_in, batch.tgt_mask, cfg.ops, cfg.gamma,
                               noise_rng.substream("tgt"), tgt_table.shape[0], skip_first=True)

    if cfg.sides in ("both", "source_only"):
        src = _mix(src_table, batch.src_ids, batch.src_mask, src_vars, w_t, m_t)
    else:
        src = EmbeddedBatch(torch.nn.functional.embedding(batch.src_ids, src_table), batch.src_mask)
    if cfg.sides in ("both", "target_only"):
        tgt = _mix(tgt_table, batch.tgt_in, batch.tgt_mask, tgt_vars, w_t, m_t)
    else:
        tgt = EmbeddedBatch(torch.nn.functional.embedding(batch.tgt_in, tgt_table), batch.tgt_mask)
    return AdmixOutput(src, tgt, m_np, w_np, src_vars, tgt_vars)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


@dataclass
class SeqMixOutput:
    src: EmbeddedBatch
    tgt: EmbeddedBatch
    lam: float
    partner: np.ndarray


def seqmix_batch(
    batch: Batch,
    src_table: torch.Tensor,
    tgt_table: torch.Tensor,
    beta: float,
    rng: Rng,
    *,
    partner: np.ndarray | None = None,
    force_lam: float | None = None,
) -> SeqMixOutput:
    """Interpolate every row with a partner row of the same batch.

    Rows share the batch padding length; each row is zeroed outside its own
    mask before interpolation, and the result is valid wherever either row is.
    """
    if partner is None:
        partner = rng.permutation(batch.size)
    lam = sample_beta(rng, beta) if force_lam is None else float(force_lam)

    def mix(ids, mask, table):
        e = torch.nn.functional.embedding(ids, table) * mask[..., None]
        out = lam * e + (1.0 - lam) * e[partner]
        return EmbeddedBatch(out, mask | mask[partner])

    return SeqMixOutput(
        mix(batch.src_ids, batch.src_mask, src_table),
        mix(batch.tgt_in, batch.tgt_mask, tgt_table),
        lam,
        np.asarray(partner),
    )


def gaussian_perturb(emb: EmbeddedBatch, sigma: float, rng: Rng) -> EmbeddedBatch:
    """Add i.i.d. N(0, sigma^2) noise at every real (mask-true) position."""
    if not sigma > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    noise = torch.as_tensor(rng.normal(tuple(emb.values.shape)) * sigma, dtype=emb.values.dtype)
    noise = noise * emb.mask[..., None]
    return EmbeddedBatch(emb.values + noise, emb.mask)


def embed_ids(ids: torch.Tensor, mask: torch.Tensor, table: torch.Tensor) -> EmbeddedBatch:
    return EmbeddedBatch(torch.nn.functional.embedding(ids, table), mask)

