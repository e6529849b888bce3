import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from admix_nmt.admix import AdmixConfig
from admix_nmt.corpus import NUM_SPECIALS, PAD, SentencePair, collate
from admix_nmt.objective import admix_loss, cross_entropy, js_divergence, kl_divergence
from admix_nmt.tensor_core import ConfigError, Rng
from admix_nmt.transformer import Model, ModelConfig

from oracles import naive_cross_entropy, naive_js

V = 15


def dists(rng, n, v=10):
    x = rng.gamma(0.5, size=(n, v))
    return torch.as_tensor(x / x.sum(axis=1, keepdims=True))


def test_ce_perfect_prediction_is_zero():
    tgt = torch.tensor([[3, 1, 4]])
    logits = torch.full((1, 3, 6), -1e4)
    logits[0, torch.arange(3), tgt[0]] = 0.0
    assert cross_entropy(logits, tgt, torch.ones(1, 3, dtype=torch.bool)).item() == pytest.approx(0.0, abs=1e-12)


def test_ce_uniform_is_log_v():
    logits = torch.zeros(2, 4, 9)
    tgt = torch.randint(0, 9, (2, 4))
    assert cross_entropy(logits, tgt, torch.ones(2, 4, dtype=torch.bool)).item() == pytest.approx(math.log(9), rel=1e-14)


def test_ce_matches_naive_oracle():
    g = torch.Generator().manual_seed(0)
    logits = torch.randn(3, 5, 7, generator=g) * 3
    tgt = torch.randint(0, 7, (3, 5), generator=g)
    mask = torch.rand(3, 5, generator=g) > 0.3
    mask[0, 0] = True
    got = cross_entropy(logits, tgt, mask).item()
    want = naive_cross_entropy(logits.tolist(), tgt.tolist(), mask.tolist())
    assert abs(got - want) / abs(want) <= 1e-10


def test_ce_ignores_appended_padding():
    g = torch.Generator().manual_seed(1)
    logits = torch.randn(2, 4, 6, generator=g)
    tgt = torch.randint(1, 6, (2, 4), generator=g)
    mask = torch.ones(2, 4, dtype=torch.bool)
    base = cross_entropy(logits, tgt, mask)
    logits2 = torch.cat([logits, torch.randn(2, 3, 6, generator=g)], dim=1)
    tgt2 = torch.cat([tgt, torch.full((2, 3), PAD)], dim=1)
    assert cross_entropy(logits2, tgt2, tgt2 != PAD).item() == base.item()


def test_js_examples():
    p = torch.tensor([[0.2, 0.3, 0.5]])
    assert abs(js_divergence(p, p).item()) <= 1e-12
    assert js_divergence(torch.tensor([[1.0, 0.0]]), torch.tensor([[0.0, 1.0]])).item() == pytest.approx(
        math.log(2), abs=1e-15)


def test_js_matches_direct_summation():
    rng = np.random.default_rng(2)
    p, q = dists(rng, 200), dists(rng, 200)
    per = torch.stack([js_divergence(p[i:i + 1], q[i:i + 1]) for i in range(200)])
    want = torch.tensor([naive_js(p[i].tolist(), q[i].tolist()) for i in range(200)])
    assert ((per - want).abs() / want.abs()).max() <= 1e-10


def test_js_masked_average():
    rng = np.random.default_rng(3)
    p, q = dists(rng, 6).reshape(2, 3, 10), dists(rng, 6).reshape(2, 3, 10)
    mask = torch.tensor([[True, True, False], [True, False, False]])
    want = np.mean([naive_js(p[b, t].tolist(), q[b, t].tolist()) for b in range(2) for t in range(3) if mask[b, t]])
    assert js_divergence(p, q, mask).item() == pytest.approx(want, rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_js_symmetric_and_bounded(seed, v):
    rng = np.random.default_rng(seed)
    p, q = dists(rng, 4, v), dists(rng, 4, v)
    a, b = js_divergence(p, q).item(), js_divergence(q, p).item()
    assert abs(a - b) <= 1e-12
    assert 0.0 <= a <= math.log(2) + 1e-9


def test_kl_alternative():
    p = torch.tensor([[0.5, 0.5]])
    q = torch.tensor([[0.25, 0.75]])
    want = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
    assert kl_divergence(p, q).item() == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# admix_loss
# ---------------------------------------------------------------------------


def tiny_model(seed=0, dropout=0.0, d=8):
    cfg = ModelConfig(d_model=d, d_ff=16, n_layers=1, n_heads=1, dropout=dropout)
    return Model(cfg, V, dtype=torch.float64, rng=Rng(seed))


def random_batch(seed, B=3, L=6):
    gen = np.random.default_rng(seed)
    return collate([SentencePair(tuple(gen.integers(NUM_SPECIALS, V, size=gen.integers(1, L + 1)).tolist()),
                                 tuple(gen.integers(NUM_SPECIALS, V, size=gen.integers(2, L + 1)).tolist()))
                    for _ in range(B)])


def test_lambda_zero_total_is_ce():
    m, b = tiny_model(), random_batch(0)
    rep = admix_loss(m, b, AdmixConfig(lam=0.0), Rng(0), train_mode=False)
    ce = cross_entropy(m.forward_ids(b), b.tgt_out, b.tgt_mask).item()
    assert rep.total == ce and rep.ce == ce


def test_gamma_zero_gives_zero_divergence():
    m, b = tiny_model(1), random_batch(1)
    rep = admix_loss(m, b, AdmixConfig(gamma=0.0), Rng(1), train_mode=False)
    assert abs(rep.js) <= 1e-12


def test_report_invariant_and_token_count():
    m, b = tiny_model(2), random_batch(2)
    rep = admix_loss(m, b, AdmixConfig(gamma=0.4, lam=10.0), Rng(2), train_mode=False)
    assert rep.total == pytest.approx(rep.ce + 10.0 * rep.js, rel=1e-6)
    assert rep.token_count == int(b.tgt_mask.sum())
    assert rep.js > 0


def test_negative_lambda_rejected():
    with pytest.raises(ConfigError):
        admix_loss(tiny_model(), random_batch(0), AdmixConfig(lam=-1.0), Rng(0))


def test_gradients_flow_through_both_branches():
    m, b = tiny_model(3), random_batch(3)
    cfg = AdmixConfig(gamma=0.5, lam=1.0)

    def js_grad(stop):
        m.zero_grad()
        cfg.stop_grad_clean = stop
        rep = admix_loss(m, b, cfg, Rng(3), train_mode=False)
        (rep.loss - cross_entropy(m.forward_ids(b), b.tgt_out, b.tgt_mask)).backward()
        return {n: p.grad.clone() for n, p in m.named_parameters() if p.grad is not None}

    both, admix_only = js_grad(False), js_grad(True)
    assert any(not torch.allclose(both[n], admix_only[n]) for n in both)


def test_dropout_streams_are_separate():
    m, b = tiny_model(4, dropout=0.3), random_batch(4)
    cfg = AdmixConfig(gamma=0.0, lam=1.0)
    g = lambda s: torch.Generator().manual_seed(s)  # noqa: E731
    same = admix_loss(m, b, cfg, Rng(4), g(1), g(1))
    diff = admix_loss(m, b, cfg, Rng(4), g(1), g(2))
    assert same.js == pytest.approx(0.0, abs=1e-12)
    assert diff.js > 0
