"""Training objective: masked cross-entropy plus a weighted consistency divergence."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .admix import AdmixConfig, admix_batch
from .corpus import Batch
from .tensor_core import ConfigError, Rng

PROB_FLOOR = 1e-12


@dataclass
class LossReport:
    ce: float
    js: float
    total: float
    token_count: int
    loss: torch.Tensor | None = None
    m: float | None = None


def cross_entropy(logits: torch.Tensor, tgt_out: torch.Tensor, tgt_mask: torch.Tensor) -> torch.Tensor:
    """Mean negative log-likelihood over mask-true target positions."""
    logp = torch.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, tgt_out.unsqueeze(-1)).squeeze(-1)
    maskf = tgt_mask.to(logits.dtype)
    return (nll * maskf).sum() / maskf.sum().clamp_min(1.0)


def _masked_mean(per_pos: torch.Tensor, mask: torch.Tensor | None) -> torch.Tensor:
    if mask is None:
        return per_pos.mean()
    maskf = mask.to(per_pos.dtype)
    return (per_pos * maskf).sum() / maskf.sum().clamp_min(1.0)


def kl_per_position(p: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    """KL(p || q) along the last axis, natural log, probabilities floored inside the log."""
    return (p * (torch.log(p.clamp_min(PROB_FLOOR)) - torch.log(q.clamp_min(PROB_FLOOR)))).sum(-1)


def js_per_position(p: torch.Tensor, q: torch.Tensor) -> torch.Tensor:
    if p.shape != q.shape:
        raise ValueError(f"js_divergence: shapes {tuple(p.shape)} and {tuple(q.shape)} differ")
    mid = 0.5 * (p + q)
    return 0.5 * kl_per_position(p, mid) + 0.5 * kl_per_position(q, mid)


def js_divergence(p: torch.Tensor, q: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Jensen-Shannon divergence per position, averaged over mask-true positions."""
    return _masked_mean(js_per_position(p, q), mask)


def kl_divergence(p: torch.Tensor, q: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    return _masked_mean(kl_per_position(p, q), mask)


def admix_loss(model, batch: Batch, cfg: AdmixConfig, rng: Rng,
               clean_gen: torch.Generator | None = None,
               admix_gen: torch.Generator | None = None,
               train_mode: bool = True) -> LossReport:
    """CE on the clean branch plus ``cfg.lam`` times the clean/admix divergence.

    The two forward passes draw dropout from separate generators.
    """
    if cfg.lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {cfg.lam}")
    logits = model.forward_ids(batch, train_mode, clean_gen)
    ce = cross_entropy(logits, batch.tgt_out, batch.tgt_mask)

    mixed = admix_batch(batch, model.src_embed, model.tgt_embed, cfg, rng)
    logits_ad = model.forward_embedded(mixed.src, mixed.tgt, train_mode, admix_gen)
    assert logits_ad.shape == logits.shape, "admix branch changed the target length"

    p_orig = torch.softmax(logits, dim=-1)
    if cfg.stop_grad_clean:
        p_orig = p_orig.detach()
    p_admix = torch.softmax(logits_ad, dim=-1)
    if cfg.divergence == "kl":
        div = kl_divergence(p_orig, p_admix, batch.tgt_mask)
    else:
        div = js_divergence(p_orig, p_admix, batch.tgt_mask)
    total = ce + cfg.lam * div
    m = mixed.m if isinstance(mixed.m, float) else float(mixed.m.mean())
    return LossReport(float(ce.detach()), float(div.detach()), float(total.detach()), batch.num_tgt_tokens, total, m)
