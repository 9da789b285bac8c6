"""Binary checkpoint format: JSON header plus raw little-endian tensors.

Layout: 8-byte magic, u64 little-endian header length, canonical JSON
header (sorted keys), then the tensor payload at the offsets the header
declares. The encoding is canonical so save -> load -> save reproduces
the file byte for byte.

A checkpoint carries the full training state: current parameters (the
resume point), the best-validation parameters (what evaluation uses),
optimizer moments, counters, and the vocabulary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import TrainConfig
from .errors import DataError
from .model import ModelDims, ModelParams, init_params
from .optim import AdamState
from .rng import RngStream
from .text import Vocabulary

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint"]

MAGIC = b"MIMLMCK1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: TrainConfig
    vocab: Vocabulary
    params: ModelParams  # state at the last completed epoch (resume point)
    best_params: ModelParams  # lowest validation loss seen
    adam_state: Optional[AdamState]
    epoch: int
    global_step: int
    best_valid: Optional[float]
    lr: float
    scheduler_state: Optional[dict]
    format_version: int = FORMAT_VERSION


def _tensor_sections(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    sections = {f"params.{n}": a for n, a in ckpt.params.named_arrays().items()}
    sections.update({f"best.{n}": a for n, a in ckpt.best_params.named_arrays().items()})
    if ckpt.adam_state is not None:
        sections.update({f"adam.m.{n}": a for n, a in ckpt.adam_state.m.items()})
        sections.update({f"adam.v.{n}": a for n, a in ckpt.adam_state.v.items()})
    return sections


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    sections = _tensor_sections(ckpt)
    manifest = []
    offset = 0
    blobs = []
    for name, arr in sections.items():
        blob = np.ascontiguousarray(arr, dtype=arr.dtype).astype(
            arr.dtype.newbyteorder("<"), copy=False).tobytes()
        manifest.append({"name": name, "shape": list(arr.shape),
                         "dtype": str(arr.dtype), "offset": offset,
                         "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    dims = ckpt.params.dims
    header = {
        "format_version": ckpt.format_version,
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab.id_to_token,
        "dims": {"vocab_size": dims.vocab_size, "embed_dim": dims.embed_dim,
                 "hidden_dim": dims.hidden_dim, "latent_dim": dims.latent_dim},
        "counters": {"epoch": ckpt.epoch, "global_step": ckpt.global_step},
        "best_valid": ckpt.best_valid,
        "lr": ckpt.lr,
        "optimizer_t": ckpt.adam_state.t if ckpt.adam_state is not None else None,
        "scheduler": ckpt.scheduler_state,
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(len(header_bytes).to_bytes(8, "little"))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def _params_from_sections(dims: ModelDims, sections: dict[str, np.ndarray],
                          prefix: str) -> ModelParams:
    # Shape template from a zero init, then overwrite every array.
    params = init_params(dims, RngStream(0), scale=1e-6)
    for name in list(params.named_arrays()):
        key = f"{prefix}.{name}"
        if key not in sections:
            raise DataError(f"checkpoint is missing tensor section {key!r}")
        params.set_array(name, sections[key])
    return params


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    header_len = int.from_bytes(raw[8:16], "little")
    header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    if header["format_version"] != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format version {header['format_version']}")
    payload = raw[16 + header_len :]
    sections: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start, n = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(payload[start : start + n], dtype=np.dtype(entry["dtype"]))
        sections[entry["name"]] = arr.reshape(entry["shape"]).copy()
    dims = ModelDims(**header["dims"])
    config = TrainConfig.from_dict(header["config"])
    vocab = Vocabulary(header["vocab"])
    params = _params_from_sections(dims, sections, "params")
    best_params = _params_from_sections(dims, sections, "best")
    adam_state = None
    if header["optimizer_t"] is not None:
        adam_state = AdamState(
            m={n[len("adam.m."):]: a for n, a in sections.items() if n.startswith("adam.m.")},
            v={n[len("adam.v."):]: a for n, a in sections.items() if n.startswith("adam.v.")},
            t=header["optimizer_t"],
        )
    return Checkpoint(
        config=config, vocab=vocab, params=params, best_params=best_params,
        adam_state=adam_state, epoch=header["counters"]["epoch"],
        global_step=header["counters"]["global_step"],
        best_valid=header["best_valid"], lr=header["lr"],
        scheduler_state=header["scheduler"], format_version=header["format_version"],
    )
