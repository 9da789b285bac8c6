"""Training configuration: defaults, validation, file loading.

Config files are JSON or flat ``key = value`` pairs (TOML subset).
Resolution precedence is CLI overrides > file > defaults; the MIMLM_SEED
environment variable, when set, wins over all of them for the seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

from .errors import ConfigError

__all__ = ["TrainConfig", "OBJECTIVES", "load_config_file", "resolve_config"]

OBJECTIVES = ("mim", "vae", "vae+kl", "ae")
OPTIMIZERS = ("adam", "sgd")
_DEFAULT_LR = {"adam": 1e-3, "sgd": 5.0}


@dataclass
class TrainConfig:
    objective: str = "mim"
    latent_dim: int = 16
    embed_dim: int = 32
    hidden_dim: int = 64
    batch_size: int = 20
    optimizer: str = "adam"
    learning_rate: Optional[float] = None  # default depends on optimizer
    clip_l2: float = 0.25
    plateau_patience: int = 2
    lr_decay: float = 0.25
    max_epochs: int = 10
    seed: int = 0
    dropout: float = 0.5
    unk_corrupt_rate: float = 0.0
    max_len: int = 128
    kl_anneal_steps: int = 10000
    latent_samples: int = 1
    init_scale: float = 0.1
    init_logsigma_bias: float = 0.0
    dtype: str = "float64"
    max_vocab: Optional[int] = None
    min_freq: int = 1
    bucket_width: int = 4

    def validate(self) -> "TrainConfig":
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        for name in ("latent_dim", "embed_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("batch_size", "max_epochs", "max_len", "plateau_patience",
                     "latent_samples", "min_freq", "bucket_width", "kl_anneal_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("dropout", "unk_corrupt_rate"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ConfigError(f"{name} must be in [0, 1), got {v}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.clip_l2 <= 0:
            raise ConfigError(f"clip_l2 must be positive, got {self.clip_l2}")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.init_scale <= 0:
            raise ConfigError(f"init_scale must be positive, got {self.init_scale}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")
        if self.max_vocab is not None and self.max_vocab < 1:
            raise ConfigError(f"max_vocab must be >= 1, got {self.max_vocab}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        return self

    @property
    def resolved_lr(self) -> float:
        return self.learning_rate if self.learning_rate is not None else _DEFAULT_LR[self.optimizer]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d).validate()


def _parse_scalar(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text.strip("\"'")


def load_config_file(path: str | Path) -> dict:
    """Read a JSON object or flat ``key = value`` file into a dict."""
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        data = json.loads(raw)
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        return data
    data = {}
    for lineno, line in enumerate(raw.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        data[key.strip()] = _parse_scalar(value)
    return data


def resolve_config(file_path: Optional[str] = None,
                   overrides: Optional[dict] = None) -> TrainConfig:
    """Merge defaults, config file, CLI overrides, and MIMLM_SEED."""
    merged: dict = {}
    if file_path is not None:
        merged.update(load_config_file(file_path))
    if overrides:
        merged.update(overrides)
    env_seed = os.environ.get("MIMLM_SEED")
    if env_seed is not None:
        try:
            merged["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError(f"MIMLM_SEED must be an integer, got {env_seed!r}")
    return TrainConfig.from_dict(merged)
