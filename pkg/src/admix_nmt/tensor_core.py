"""Tensor plumbing: seeded random streams, gamma-family samplers, checked ops, Adam.

Tensors are ``torch.Tensor``; autograd supplies reverse-mode differentiation.
The helpers here add shape validation with readable errors and keep every
random draw behind an explicit :class:`Rng` so runs are reproducible.
"""

from __future__ import annotations

import hashlib
import math
from typing import Iterable, Sequence

import numpy as np
import torch

Tensor = torch.Tensor


class ConfigError(ValueError):
    """Invalid hyperparameter or configuration value."""


class TrainingError(RuntimeError):
    """Raised when an optimisation step cannot proceed."""


class ShapeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


class Rng:
    """Seeded PCG64 stream with named, independent substreams.

    ``Rng(7).substream("noise")`` always yields the same sequence, whatever
    else has been drawn from the parent.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = int(seed)
        self._path = _path
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([self.seed, *_path])))

    def substream(self, name: str) -> "Rng":
        return Rng(self.seed, self._path + (_name_key(name),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def integers(self, low: int, high: int | None = None, size=None):
        return self._gen.integers(low, high, size=size)

    def random(self, size=None):
        return self._gen.random(size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def torch_generator(self) -> torch.Generator:
        """A torch generator seeded from this stream (for dropout/init)."""
        g = torch.Generator()
        g.manual_seed(int(self._gen.integers(0, 2**63 - 1)))
        return g


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _mt_gamma_ge1(rng: Rng, alpha: float, size: int) -> np.ndarray:
    # Marsaglia & Tsang (2000) squeeze/rejection for shape >= 1, vectorised.
    d = alpha - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        batch = max(16, int(need * 1.1) + 8)
        x = rng.normal(batch)
        u = rng.random(batch)
        v = 1.0 + c * x
        ok = v > 0
        v = np.where(ok, v, 1.0) ** 3
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = ok & (
                (u < 1.0 - 0.0331 * x**4)
                | (np.log(u) < 0.5 * x**2 + d * (1.0 - v + np.log(v)))
            )
        got = (d * v)[accept][:need]
        out[filled:filled + got.size] = got
        filled += got.size
    return out


def sample_gamma(rng: Rng, alpha: float, size: int) -> np.ndarray:
    """Gamma(alpha, 1) draws; shape < 1 uses the ``U**(1/alpha)`` boost."""
    if not alpha > 0:
        raise ConfigError(f"gamma shape must be > 0, got {alpha}")
    if alpha >= 1.0:
        return _mt_gamma_ge1(rng, alpha, size)
    g = _mt_gamma_ge1(rng, alpha + 1.0, size)
    u = rng.random(size)
    return g * u ** (1.0 / alpha)


def sample_dirichlet(rng: Rng, k: int, alpha: float, size: int | None = None) -> np.ndarray:
    """Symmetric Dirichlet(alpha, ..., alpha) weights of length ``k``.

    With ``size`` given, returns ``size`` independent rows.
    """
    if k < 1:
        raise ConfigError(f"need k >= 1 mixing weights, got {k}")
    if not alpha > 0:
        raise ConfigError(f"Dirichlet concentration must be > 0, got {alpha}")
    n = 1 if size is None else size
    g = sample_gamma(rng, alpha, n * k).reshape(n, k)
    s = g.sum(axis=1, keepdims=True)
    # all-zero rows only happen for tiny alpha in float underflow
    zero = s[:, 0] == 0
    if zero.any():
        g[zero] = np.eye(k)[rng.integers(0, k, size=int(zero.sum()))]
        s = g.sum(axis=1, keepdims=True)
    w = g / s
    return w[0] if size is None else w


def sample_beta(rng: Rng, beta: float, size: int | None = None):
    """Symmetric Beta(beta, beta) via a ratio of two gamma draws."""
    if not beta > 0:
        raise ConfigError(f"Beta parameter must be > 0, got {beta}")
    n = 1 if size is None else size
    g = sample_gamma(rng, beta, 2 * n).reshape(n, 2)
    s = g.sum(axis=1)
    m = np.where(s > 0, g[:, 0] / np.where(s > 0, s, 1.0), 0.5)
    m = np.clip(m, 0.0, 1.0)
    return float(m[0]) if size is None else m


# ---------------------------------------------------------------------------
# checked ops
# ---------------------------------------------------------------------------


def _shape(t: Tensor) -> tuple[int, ...]:
    return tuple(t.shape)


def _broadcastable(a: Sequence[int], b: Sequence[int]) -> bool:
    for x, y in zip(reversed(a), reversed(b)):
        if x != y and x != 1 and y != 1:
            return False
    return True


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"{op}: shapes {_shape(a)} and {_shape(b)} do not broadcast")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)
    return a + b


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a, b)
    return a * b


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.dim() < 1 or b.dim() < 1 or a.shape[-1] != b.shape[-2 if b.dim() > 1 else 0]:
        raise ShapeError(f"matmul: shapes {_shape(a)} and {_shape(b)} are not aligned")
    if a.dim() > 2 and b.dim() > 2 and not _broadcastable(a.shape[:-2], b.shape[:-2]):
        raise ShapeError(f"matmul: batch dims of {_shape(a)} and {_shape(b)} do not broadcast")
    return a @ b


def softmax(x: Tensor, dim: int = -1) -> Tensor:
    return torch.softmax(x, dim=dim)


def log_softmax(x: Tensor, dim: int = -1) -> Tensor:
    return torch.log_softmax(x, dim=dim)


def log(x: Tensor, floor: float | None = None) -> Tensor:
    return torch.log(x if floor is None else x.clamp_min(floor))


def sum(x: Tensor, dim: int | None = None, keepdim: bool = False) -> Tensor:  # noqa: A001
    return x.sum() if dim is None else x.sum(dim=dim, keepdim=keepdim)


def mean(x: Tensor, dim: int | None = None, keepdim: bool = False) -> Tensor:
    return x.mean() if dim is None else x.mean(dim=dim, keepdim=keepdim)


def transpose(x: Tensor, d0: int = -2, d1: int = -1) -> Tensor:
    return x.transpose(d0, d1)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    n = math.prod(shape) if -1 not in shape else None
    if n is not None and n != x.numel():
        raise ShapeError(f"reshape: cannot view {_shape(x)} as {tuple(shape)}")
    return x.reshape(*shape)


def embedding(table: Tensor, ids: Tensor) -> Tensor:
    """Row gather ``table[ids]``; gradients scatter-add into ``table``."""
    if table.dim() != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {_shape(table)}")
    if ids.numel() and (int(ids.max()) >= table.shape[0] or int(ids.min()) < 0):
        raise ShapeError(
            f"embedding: ids in [{int(ids.min())}, {int(ids.max())}] out of range for table {_shape(table)}"
        )
    return torch.nn.functional.embedding(ids, table)


def masked_fill(x: Tensor, mask: Tensor, value: float) -> Tensor:
    _check_broadcast("masked_fill", x, mask)
    return x.masked_fill(mask, value)


def where(mask: Tensor, a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("where", a, b)
    _check_broadcast("where", a, mask)
    return torch.where(mask, a, b)


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    if weight.shape != x.shape[-1:]:
        raise ShapeError(f"layer_norm: weight {_shape(weight)} does not match input {_shape(x)}")
    return torch.nn.functional.layer_norm(x, x.shape[-1:], weight, bias, eps)


def dropout(x: Tensor, p: float, generator: torch.Generator | None) -> Tensor:
    """Inverted dropout drawing its mask from an explicit generator."""
    if p == 0.0 or generator is None:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype) >= p
    return x * keep / (1.0 - p)


def convex_combination(weights: Tensor, tensors: Tensor) -> Tensor:
    """``sum_i weights[i] * tensors[i]`` over the leading axis."""
    if weights.dim() != 1 or weights.shape[0] != tensors.shape[0]:
        raise ShapeError(
            f"convex_combination: weights {_shape(weights)} vs stacked tensors {_shape(tensors)}"
        )
    w = weights.reshape(-1, *([1] * (tensors.dim() - 1)))
    return (w * tensors).sum(dim=0)


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------


def inverse_sqrt_lr(step: int, lr_base: float, warmup_steps: int) -> float:
    """Linear warmup to ``lr_base`` at ``warmup_steps``, then ``~ step**-0.5``."""
    t = max(step, 1)
    return lr_base * min(t / warmup_steps, math.sqrt(warmup_steps / t))


class AdamInverseSqrt:
    """Adam with an inverse-sqrt schedule that refuses missing gradients."""

    def __init__(
        self,
        named_params: Iterable[tuple[str, Tensor]],
        lr_base: float = 5e-4,
        warmup_steps: int = 4000,
        betas: tuple[float, float] = (0.9, 0.98),
        eps: float = 1e-9,
        fixed_lr: bool = False,
    ):
        if lr_base <= 0:
            raise ConfigError(f"lr_base must be positive, got {lr_base}")
        if warmup_steps < 1:
            raise ConfigError(f"warmup_steps must be >= 1, got {warmup_steps}")
        self.named = [(n, p) for n, p in named_params if p.requires_grad]
        self.lr_base = lr_base
        self.warmup_steps = warmup_steps
        self.fixed_lr = fixed_lr
        self.step_count = 0
        self._opt = torch.optim.Adam(
            [p for _, p in self.named], lr=lr_base, betas=betas, eps=eps, foreach=False
        )

    def lr(self, step: int | None = None) -> float:
        if self.fixed_lr:
            return self.lr_base
        return inverse_sqrt_lr(self.step_count + 1 if step is None else step, self.lr_base, self.warmup_steps)

    def step(self) -> float:
        for name, p in self.named:
            if p.grad is None:
                raise TrainingError(f"parameter {name!r} has no gradient")
        lr = self.lr()
        for group in self._opt.param_groups:
            group["lr"] = lr
        self._opt.step()
        self.step_count += 1
        self.zero_grad()
        return lr

    def zero_grad(self) -> None:
        for _, p in self.named:
            p.grad = None

    def state_dict(self) -> dict:
        return {"step_count": self.step_count, "adam": self._opt.state_dict()}
