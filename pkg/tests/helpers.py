"""Shared test utilities: finite-difference oracle and error measures."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np


def finite_difference(f: Callable[[], float], arrays: Mapping[str, np.ndarray],
                      eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences of a scalar function of the given arrays.

    Wiggles each entry in place, so ``f`` must read the arrays afresh on
    every call. Independent of any autodiff machinery.
    """
    grads = {}
    for name, arr in arrays.items():
        grad = np.zeros_like(arr)
        flat, gflat = arr.ravel(), grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f()
            flat[i] = orig - eps
            f_minus = f()
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * eps)
        grads[name] = grad
    return grads


def max_rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """Worst-case elementwise relative error with a small-denominator floor."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


class FixedNormalRng:
    """Stand-in for RngStream that returns a preset value from normal()."""

    def __init__(self, value: float = 0.0):
        self.value = value

    def normal(self, size=None, dtype=np.float64):
        return np.full(size if size is not None else (), self.value, dtype=dtype)

    def split(self, *tokens):
        return self
