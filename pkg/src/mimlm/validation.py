"""Input validation helpers for the estimator API."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.exceptions import NotFittedError

from .errors import ConfigError

__all__ = ["check_sentences", "check_is_fitted", "check_latent_codes"]


def check_sentences(X) -> list[str]:
    """Validate an iterable of sentence strings and return it as a list."""
    if isinstance(X, str):
        raise ConfigError("expected an iterable of sentences, got a single string")
    sentences = list(X)
    if not sentences:
        raise ConfigError("expected at least one sentence")
    for i, s in enumerate(sentences):
        if not isinstance(s, str):
            raise ConfigError(f"sentence {i} is {type(s).__name__}, expected str")
    return sentences


def check_is_fitted(estimator, attributes: Sequence[str]) -> None:
    missing = [a for a in attributes if getattr(estimator, a, None) is None]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first "
            f"(missing {missing})")


def check_latent_codes(Z, latent_dim: int) -> np.ndarray:
    """Coerce to a 2-D float array with the model's latent width."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z.reshape(1, -1)
    if Z.ndim != 2 or Z.shape[1] != latent_dim:
        raise ConfigError(f"expected codes of shape (n, {latent_dim}), got {Z.shape}")
    return Z
