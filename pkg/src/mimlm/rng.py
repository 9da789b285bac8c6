"""Deterministic, splittable random streams.

All stochastic operations in the package draw from an explicitly passed
:class:`RngStream`. Streams are derived from a root seed by splitting on
string/int tokens, so the randomness consumed by e.g. (epoch 7, batch 3)
is a pure function of the seed and those tokens. This is what makes
training resumable and bit-reproducible without serializing generator
state: the consumer re-derives the same stream from the same path.

Backed by numpy's counter-based Philox generator.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["RngStream"]


def _token_to_int(token) -> int:
    if isinstance(token, (int, np.integer)):
        if token < 0:
            raise ValueError(f"stream tokens must be non-negative, got {token}")
        return int(token)
    if isinstance(token, str):
        # Stable across processes (unlike hash()).
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"stream token must be int or str, got {type(token).__name__}")


class RngStream:
    """One independent random stream, splittable into child streams.

    ``split(*tokens)`` derives a child stream identified by the token path;
    the same (seed, path) always yields the same stream. Drawing values
    advances only this stream's local generator.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = _path
        self._gen: np.random.Generator | None = None

    def split(self, *tokens) -> "RngStream":
        path = self._path + tuple(_token_to_int(t) for t in tokens)
        return RngStream(self.seed, path)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self._path)
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    # Thin draw helpers so call sites read naturally.
    def normal(self, size=None, dtype=np.float64) -> np.ndarray:
        return self.generator.standard_normal(size=size, dtype=dtype)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self.generator.uniform(low, high, size=size)

    def random(self, size=None) -> np.ndarray:
        return self.generator.random(size=size)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self.generator.integers(low, high, size=size)

    def shuffled(self, items: list) -> list:
        out = list(items)
        self.generator.shuffle(out)
        return out

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self._path})"
