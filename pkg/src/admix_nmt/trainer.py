"""Deterministic training loop, experiment configuration and hyperparameter sweeps."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import torch

from .admix import AdmixConfig, gaussian_perturb, seqmix_batch
from .checkpoint import save_checkpoint
from .corpus import Batch, SentencePair, Vocab, collate, make_batches, read_parallel
from .evaluation import bleu_on_pairs
from .noise_ops import switchout_baseline, word_drop, word_swap
from .objective import LossReport, admix_loss, cross_entropy
from .tensor_core import AdamInverseSqrt, ConfigError, Rng, TrainingError
from .transformer import Model, ModelConfig

log = logging.getLogger(__name__)

METHODS = ("baseline", "admix", "swap", "worddrop", "switchout", "seqmix", "gaussian")
_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class TrainConfig:
    train_prefix: str = "data/train"
    valid_prefix: str = "data/valid"
    vocab: str = "data/vocab.txt"
    out_dir: str = "runs/default"
    method: str = "baseline"
    model: ModelConfig = field(default_factory=ModelConfig)
    admix: AdmixConfig = field(default_factory=AdmixConfig)
    lr_base: float = 1e-3
    warmup_steps: int = 400
    max_steps: int = 3000
    max_tokens: int = 1024
    seed: int = 1
    valid_interval: int = 250
    patience: int = 0
    log_interval: int = 10
    baseline_gamma: float = 0.15
    switchout_tau: float = 1.0
    seqmix_beta: float = 1.0
    gaussian_sigma: float = 0.1
    clip_norm: float = 1.0
    precision: str = "float32"
    valid_max_sentences: int = 0

    def validate(self) -> "TrainConfig":
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.precision not in _DTYPES:
            raise ConfigError(f"precision must be one of {tuple(_DTYPES)}")
        if self.max_steps < 0 or self.max_tokens < 2 or self.valid_interval < 1 or self.log_interval < 1:
            raise ConfigError("max_steps, max_tokens, valid_interval and log_interval must be positive")
        if not 0.0 <= self.baseline_gamma < 1.0:
            raise ConfigError(f"baseline_gamma must lie in [0, 1), got {self.baseline_gamma}")
        self.model.validate()
        if self.method == "admix":
            self.admix.validate()
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path | None = None) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        sub = {"model": ModelConfig, "admix": AdmixConfig}
        for key, typ in sub.items():
            if key in d:
                inner = dict(d[key])
                bad = sorted(set(inner) - {f.name for f in dataclasses.fields(typ)})
                if bad:
                    raise ConfigError(f"unknown {key} config keys: {', '.join(bad)}")
                d[key] = typ(**inner)
        cfg = cls(**d)
        if base_dir is not None:
            for key in ("train_prefix", "valid_prefix", "vocab", "out_dir"):
                p = Path(getattr(cfg, key))
                if not p.is_absolute():
                    setattr(cfg, key, str(Path(base_dir) / p))
        return cfg


def load_config(path: str | Path) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return TrainConfig.from_dict(raw, base_dir=path.parent)


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# per-method losses
# ---------------------------------------------------------------------------


def _ce_report(loss: torch.Tensor, batch: Batch) -> LossReport:
    v = float(loss.detach())
    return LossReport(v, 0.0, v, batch.num_tgt_tokens, loss)


def _noised_pairs(batch: Batch, fn: Callable[[Sequence[int], Rng], list[int]], rng: Rng,
                  both_sides: bool) -> Batch:
    pairs = []
    for p in batch.pairs:
        src = tuple(fn(p.src, rng))
        tgt = tuple(fn(p.tgt, rng)) if both_sides else p.tgt
        pairs.append(SentencePair(src, tgt))
    return collate(pairs)


def step_loss(model: Model, batch: Batch, cfg: TrainConfig, rng: Rng,
              clean_gen: torch.Generator, admix_gen: torch.Generator) -> LossReport:
    """Loss for one training batch under ``cfg.method``."""
    method = cfg.method
    V = model.vocab_size
    if method == "admix":
        return admix_loss(model, batch, cfg.admix, rng, clean_gen, admix_gen)
    if method == "swap":
        batch = _noised_pairs(batch, lambda s, r: word_swap(s, cfg.baseline_gamma, r), rng, False)
    elif method == "worddrop":
        batch = _noised_pairs(batch, lambda s, r: word_drop(s, cfg.baseline_gamma, r, "remove"), rng, False)
    elif method == "switchout":
        batch = _noised_pairs(batch, lambda s, r: switchout_baseline(s, cfg.switchout_tau, r, V), rng, True)
    elif method == "seqmix":
        mix = seqmix_batch(batch, model.src_embed, model.tgt_embed, cfg.seqmix_beta, rng)
        logits = model.forward_embedded(mix.src, mix.tgt, True, clean_gen)
        pa = torch.as_tensor(mix.partner)
        loss = mix.lam * cross_entropy(logits, batch.tgt_out, batch.tgt_mask) + (1.0 - mix.lam) * cross_entropy(
            logits, batch.tgt_out[pa], batch.tgt_mask[pa])
        return _ce_report(loss, batch)
    elif method == "gaussian":
        src = gaussian_perturb(model.embed_src(batch.src_ids, batch.src_mask), cfg.gaussian_sigma, rng)
        logits = model.forward_embedded(src, model.embed_tgt(batch.tgt_in, batch.tgt_mask), True, clean_gen)
        return _ce_report(cross_entropy(logits, batch.tgt_out, batch.tgt_mask), batch)
    logits = model.forward_ids(batch, True, clean_gen)
    return _ce_report(cross_entropy(logits, batch.tgt_out, batch.tgt_mask), batch)


# ---------------------------------------------------------------------------
# loop
# ---------------------------------------------------------------------------


def format_log(step: int, rep: LossReport, lr: float, val_bleu: float | None = None) -> str:
    line = f"step={step} ce={rep.ce:.8f} js={rep.js:.8f} total={rep.total:.8f} lr={lr:.8e}"
    if val_bleu is not None:
        line += f" val_bleu={val_bleu:.4f}"
    return line


@dataclass
class TrainResult:
    best_bleu: float
    best_step: int
    steps: int
    losses: list[LossReport]
    log_lines: list[str]
    checkpoints: dict[str, str]      # name -> sha256
    model: Model | None = None


def build_model(cfg: TrainConfig, vocab_size: int, rng: Rng) -> Model:
    return Model(cfg.model, vocab_size, dtype=_DTYPES[cfg.precision], rng=rng.substream("init"))


def train(
    cfg: TrainConfig,
    *,
    train_pairs: list[SentencePair] | None = None,
    valid_pairs: list[SentencePair] | None = None,
    vocab: Vocab | None = None,
    write_files: bool = True,
) -> TrainResult:
    """Train one model; writes ``train.log``, ``best.ckpt`` and ``final.ckpt`` to ``cfg.out_dir``.

    Data can be passed in memory; otherwise it is read from the paths in ``cfg``.
    """
    cfg.validate()
    vocab = vocab or Vocab.load(cfg.vocab)
    train_pairs = train_pairs if train_pairs is not None else read_parallel(cfg.train_prefix, vocab)
    if valid_pairs is None:
        valid_pairs = read_parallel(cfg.valid_prefix, vocab)
    if cfg.valid_max_sentences:
        valid_pairs = valid_pairs[:cfg.valid_max_sentences]

    rng = Rng(cfg.seed)
    model = build_model(cfg, len(vocab), rng)
    opt = AdamInverseSqrt(model.named_parameters(), cfg.lr_base, cfg.warmup_steps)
    params = [p for _, p in opt.named]
    batch_rng = rng.substream("batching")
    aug_rng = rng.substream("noise")
    drop_rng = rng.substream("dropout")
    clean_gen = drop_rng.substream("clean").torch_generator()
    admix_gen = drop_rng.substream("admix").torch_generator()

    out = Path(cfg.out_dir)
    log_file = None
    if write_files:
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.json")
        log_file = open(out / "train.log", "w", encoding="utf-8")

    losses: list[LossReport] = []
    lines: list[str] = []
    checkpoints: dict[str, str] = {}
    best_bleu, best_step, bad_evals = -1.0, 0, 0

    def emit(line: str) -> None:
        lines.append(line)
        if log_file:
            log_file.write(line + "\n")
            log_file.flush()

    def save(name: str, meta: dict) -> None:
        if write_files:
            checkpoints[name] = save_checkpoint(out / f"{name}.ckpt", model, vocab, meta)

    step, epoch, stop = 0, 0, False
    try:
        while step < cfg.max_steps and not stop:
            for batch in make_batches(train_pairs, cfg.max_tokens, batch_rng.substream(f"epoch{epoch}")):
                if step >= cfg.max_steps:
                    break
                step += 1
                model.train()
                rep = step_loss(model, batch, cfg, aug_rng.substream(f"step{step}"), clean_gen, admix_gen)
                if not math.isfinite(rep.total):
                    raise TrainingError(
                        f"non-finite loss at step {step} (ce={rep.ce}, js={rep.js}); "
                        f"last good checkpoint kept in {out}"
                    )
                rep.loss.backward()
                if cfg.clip_norm > 0:
                    torch.nn.utils.clip_grad_norm_(params, cfg.clip_norm)
                lr = opt.step()
                rep.loss = None
                losses.append(rep)

                val = None
                if step % cfg.valid_interval == 0 or step == cfg.max_steps:
                    val = bleu_on_pairs(model, valid_pairs, smooth=False).bleu
                    save("last", {"step": step, "val_bleu": val})
                    if val > best_bleu:
                        best_bleu, best_step, bad_evals = val, step, 0
                        save("best", {"step": step, "val_bleu": val})
                    else:
                        bad_evals += 1
                        if cfg.patience and bad_evals >= cfg.patience:
                            stop = True
                if step % cfg.log_interval == 0 or val is not None:
                    emit(format_log(step, rep, lr, val))
                if stop:
                    break
            epoch += 1
        save("final", {"step": step, "best_bleu": best_bleu, "best_step": best_step})
    finally:
        if log_file:
            log_file.close()
    return TrainResult(best_bleu, best_step, step, losses, lines, checkpoints, model)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

LAMBDA_VALUES = (0.0, 1.0, 5.0, 10.0, 20.0, 40.0)
GAMMA_VALUES = (0.1, 0.2, 0.3, 0.4)


@dataclass
class SweepRow:
    value: float
    best_bleu: float
    best_step: int


def sweep(cfg: TrainConfig, axis: str, values: Sequence[float], **train_kwargs) -> list[SweepRow]:
    """Train one admix model per value of ``axis`` (``lambda`` or ``gamma``), shared seed."""
    if axis not in ("lambda", "gamma"):
        raise ConfigError(f"sweep axis must be 'lambda' or 'gamma', got {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    rows = []
    for v in values:
        run = dataclasses.replace(cfg, admix=dataclasses.replace(cfg.admix), method="admix",
                                  out_dir=str(Path(cfg.out_dir) / f"{axis}={v:g}"))
        if axis == "lambda":
            run.admix.lam = float(v)
        else:
            run.admix.gamma = float(v)
        res = train(run, **train_kwargs)
        rows.append(SweepRow(float(v), res.best_bleu, res.best_step))
    return rows


def format_sweep(axis: str, rows: Sequence[SweepRow]) -> str:
    name = "lambda" if axis == "lambda" else "gamma"
    lines = [f"{name:>8}  {'val_bleu':>9}  {'best_step':>9}", "-" * 30]
    lines += [f"{r.value:8g}  {r.best_bleu:9.2f}  {r.best_step:9d}" for r in rows]
    return "\n".join(lines)
