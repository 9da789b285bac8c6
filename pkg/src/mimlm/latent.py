"""Latent-space probes: interpolation, reconstruction modes, prior sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import model as mdl
from .errors import ConfigError
from .model import ModelParams
from .rng import RngStream
from .text import TokenSeq

__all__ = ["InterpolationTrace", "interpolate", "reconstruct_modes", "sample_prior"]


@dataclass
class InterpolationTrace:
    """Decoded sentences along a straight line between two latent codes."""

    endpoint_a: TokenSeq
    endpoint_b: TokenSeq
    code_a: np.ndarray
    code_b: np.ndarray
    alphas: list[float]
    codes: list[np.ndarray]
    decoded: list[TokenSeq]


def interpolate(params: ModelParams, x_a: TokenSeq, x_b: TokenSeq, n_steps: int,
                rng: RngStream, strategy: str = "ancestral",
                max_len: int = 128) -> InterpolationTrace:
    """Decode from z_alpha = (1-alpha) z_a + alpha z_b at equispaced alphas.

    Endpoint codes are posterior samples; alphas run 0, 1/(n-1), ..., 1.
    """
    if n_steps < 2:
        raise ConfigError(f"interpolation needs at least 2 steps, got {n_steps}")
    q_a = mdl.encode_posterior(params, x_a)
    q_b = mdl.encode_posterior(params, x_b)
    z_a = mdl.sample_latent(q_a, rng.split("a")).data
    z_b = mdl.sample_latent(q_b, rng.split("b")).data
    alphas = [t / (n_steps - 1) for t in range(n_steps)]
    codes = [(1.0 - a) * z_a + a * z_b for a in alphas]
    decoded = [mdl.decode_sample(params, z, strategy=strategy, max_len=max_len,
                                 rng=rng.split("decode", t))
               for t, z in enumerate(codes)]
    return InterpolationTrace(endpoint_a=x_a, endpoint_b=x_b, code_a=z_a, code_b=z_b,
                              alphas=alphas, codes=codes, decoded=decoded)


def reconstruct_modes(params: ModelParams, x: TokenSeq, rng: RngStream,
                      perturb_scale: float = 10.0, strategy: str = "ancestral",
                      max_len: int = 128) -> dict[str, TokenSeq]:
    """Mean / sampled / perturbed reconstructions of one sentence.

    mean decodes from the posterior mean, sample from z ~ q(z|x), and
    perturbed from z ~ N(mu, (perturb_scale * sigma)^2). All three share
    a single encoder pass.
    """
    q = mdl.encode_posterior(params, x)
    mu = q.mu_array
    sigma = q.sigma_array
    z_sample = mu + sigma * rng.split("sample").normal(mu.shape)
    z_perturbed = mu + perturb_scale * sigma * rng.split("perturb").normal(mu.shape)
    decode = lambda z, token: mdl.decode_sample(params, z, strategy=strategy,
                                                max_len=max_len, rng=rng.split(token))
    return {
        "mean": decode(mu, "decode_mean"),
        "sample": decode(z_sample, "decode_sample"),
        "perturbed": decode(z_perturbed, "decode_perturbed"),
    }


def sample_prior(params: ModelParams, n: int, rng: RngStream, sigma: float = 0.1,
                 strategy: str = "ancestral", max_len: int = 128) -> list[TokenSeq]:
    """Decode n codes drawn from N(0, sigma^2 I).

    The aggregate latent marginal has no closed form, so a small-sigma
    zero-mean Gaussian stands in for it.
    """
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    d = params.dims.latent_dim
    out = []
    for i in range(n):
        z = sigma * rng.split("z", i).normal((d,))
        out.append(mdl.decode_sample(params, z, strategy=strategy, max_len=max_len,
                                     rng=rng.split("decode", i)))
    return out
