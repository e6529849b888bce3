"""Independent reference computations used by the test-suite."""

import math

import numpy as np
import torch


def central_difference(f, x: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Numerical gradient of scalar ``f`` at ``x`` (float64, perturbs in place)."""
    g = torch.zeros_like(x)
    flat, gflat = x.data.view(-1), g.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = float(f())
            flat[i] = orig - eps
            lo = float(f())
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
    return g


def rel_err(a: torch.Tensor, b: torch.Tensor, floor: float = 0.0) -> float:
    """Norm-relative error ||a - b|| / max(||a||, ||b||, floor); 0 when all vanish.

    ``floor`` covers parameters whose exact gradient is zero (attention key
    biases cancel inside the softmax), where finite differences return pure
    round-off and an unfloored ratio is meaningless.
    """
    num = float((a - b).norm())
    den = max(float(a.norm()), float(b.norm()), floor)
    return 0.0 if den == 0 else num / den


def naive_cross_entropy(logits, tgt_out, mask) -> float:
    """Token-mean cross-entropy from nested lists with an explicit log-sum-exp."""
    total, count = 0.0, 0
    for b in range(len(logits)):
        for t in range(len(logits[b])):
            if not mask[b][t]:
                continue
            row = [float(x) for x in logits[b][t]]
            mx = max(row)
            lse = mx + math.log(sum(math.exp(x - mx) for x in row))
            total += lse - row[int(tgt_out[b][t])]
            count += 1
    return total / count


def naive_js(p, q) -> float:
    """JS for a single pair of distributions by direct summation."""
    s = 0.0
    for pi, qi in zip(p, q):
        m = 0.5 * (pi + qi)
        if pi > 0:
            s += 0.5 * pi * math.log(pi / m)
        if qi > 0:
            s += 0.5 * qi * math.log(qi / m)
    return s


def naive_bleu(hyps, refs, max_order=4) -> float:
    """multi-bleu style BLEU written independently with plain loops."""
    match = [0] * max_order
    total = [0] * max_order
    h_len = r_len = 0
    for h, r in zip(hyps, refs):
        h_len += len(h)
        r_len += len(r)
        for n in range(1, max_order + 1):
            h_grams = [tuple(h[i:i + n]) for i in range(len(h) - n + 1)]
            r_grams = [tuple(r[i:i + n]) for i in range(len(r) - n + 1)]
            for g in set(h_grams):
                match[n - 1] += min(h_grams.count(g), r_grams.count(g))
            total[n - 1] += len(h_grams)
    if min(match) == 0:
        return 0.0
    logp = sum(math.log(m / t) for m, t in zip(match, total)) / max_order
    bp = 1.0 if h_len >= r_len else math.exp(1 - r_len / h_len)
    return 100 * bp * math.exp(logp)


def brute_force_nearest(table: np.ndarray, n_special: int):
    """For every id, the most cosine-similar non-special, non-identical id (double loop)."""
    out = []
    for i in range(table.shape[0]):
        best, best_sim = None, -np.inf
        for j in range(n_special, table.shape[0]):
            if j == i:
                continue
            sim = float(table[i] @ table[j]) / (np.linalg.norm(table[i]) * np.linalg.norm(table[j]))
            if sim > best_sim:
                best, best_sim = j, sim
        out.append(best)
    return out
