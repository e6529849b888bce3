"""Checkpoint container.

Layout (version 1)::

    ADMIX-CKPT 1\\n
    <one line of UTF-8 JSON header>\\n
    <concatenated little-endian parameter bytes>

The header holds ``model_config``, ``dtype`` (``float32`` or ``float64``),
``vocab`` (the token list after the five specials), ``vocab_sha256``,
``meta`` (free-form training metadata) and ``tensors``: a list of
``{"name", "shape", "offset", "nbytes"}`` entries, offsets counted from the
first byte after the header line. Keys are written sorted so identical
models produce identical files.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np
import torch

from .corpus import Vocab
from .transformer import Model, ModelConfig

MAGIC = b"ADMIX-CKPT 1\n"
_DTYPES = {torch.float32: ("float32", "<f4"), torch.float64: ("float64", "<f8")}
_BY_NAME = {"float32": (torch.float32, "<f4"), "float64": (torch.float64, "<f8")}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path: str | Path, model: Model, vocab: Vocab, meta: dict | None = None) -> str:
    """Write ``model`` to ``path``; returns the sha256 of the file."""
    dname, np_dtype = _DTYPES[model.dtype]
    entries, blobs, offset = [], [], 0
    for name, p in model.named_parameters():
        raw = p.detach().cpu().numpy().astype(np_dtype).tobytes()
        entries.append({"name": name, "shape": list(p.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "dtype": dname,
        "meta": meta or {},
        "model_config": dataclasses.asdict(model.cfg),
        "tensors": entries,
        "vocab": vocab.words,
        "vocab_sha256": vocab.digest(),
    }
    data = MAGIC + json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + b"".join(blobs)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path: str | Path) -> tuple[Model, Vocab, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not an ADMIX-CKPT version 1 file")
    nl = data.index(b"\n", len(MAGIC))
    header = json.loads(data[len(MAGIC):nl])
    body = data[nl + 1:]
    vocab = Vocab(header["vocab"])
    if vocab.digest() != header["vocab_sha256"]:
        raise CheckpointError(f"{path}: vocabulary hash mismatch")
    dtype, np_dtype = _BY_NAME[header["dtype"]]
    model = Model(ModelConfig(**header["model_config"]), len(vocab), dtype=dtype)
    params = dict(model.named_parameters())
    with torch.no_grad():
        for e in header["tensors"]:
            if e["name"] not in params:
                raise CheckpointError(f"{path}: unknown tensor {e['name']!r}")
            arr = np.frombuffer(body[e["offset"]:e["offset"] + e["nbytes"]], dtype=np_dtype)
            params[e["name"]].copy_(torch.from_numpy(arr.reshape(e["shape"]).copy()))
    return model, vocab, header["meta"]


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
