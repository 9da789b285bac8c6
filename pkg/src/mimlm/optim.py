"""Optimizers and the validation-plateau learning-rate scheduler."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "AdamState", "adam_step", "global_l2_norm", "clip_gradients_",
    "sgd_clipped_step", "PlateauScheduler", "plateau_events",
]


@dataclass
class AdamState:
    """First/second moment estimates per parameter, plus the step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place."""
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def global_l2_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))


def clip_gradients_(grads: dict[str, np.ndarray], clip_l2: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``clip_l2``.

    Returns the pre-clip norm.
    """
    if clip_l2 <= 0:
        raise ConfigError(f"clip_l2 must be positive, got {clip_l2}")
    norm = global_l2_norm(grads)
    if norm > clip_l2:
        scale = clip_l2 / norm
        for g in grads.values():
            g *= scale
    return norm


def sgd_clipped_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                     lr: float, clip_l2: float) -> None:
    """Plain SGD after global-norm clipping, in place."""
    clip_gradients_(grads, clip_l2)
    for name, p in params.items():
        p -= lr * grads[name]


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs
    with no improvement of the best validation loss; the no-improvement
    counter resets on each decay and on each new best."""

    def __init__(self, patience: int, factor: float = 0.25):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        if not (0.0 < factor <= 1.0):
            raise ConfigError(f"factor must be in (0, 1], got {factor}")
        self.patience = patience
        self.factor = factor
        self.best: Optional[float] = None
        self.bad_epochs = 0

    def observe(self, valid_loss: float) -> bool:
        """Record one epoch's validation loss; True when a decay fires."""
        if self.best is None or valid_loss < self.best:
            self.best = valid_loss
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.bad_epochs = 0
            return True
        return False

    def state_dict(self) -> dict:
        return {"patience": self.patience, "factor": self.factor,
                "best": self.best, "bad_epochs": self.bad_epochs}

    @classmethod
    def from_state(cls, state: dict) -> "PlateauScheduler":
        sched = cls(patience=state["patience"], factor=state["factor"])
        sched.best = state["best"]
        sched.bad_epochs = state["bad_epochs"]
        return sched


def plateau_events(history: Sequence[float], patience: int,
                   factor: float = 0.25) -> list[int]:
    """1-based epoch indices at which a decay fires for a full loss history."""
    sched = PlateauScheduler(patience=patience, factor=factor)
    return [i for i, loss in enumerate(history, start=1) if sched.observe(loss)]
