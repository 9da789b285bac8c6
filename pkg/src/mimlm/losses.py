"""Training objectives and their Gaussian building blocks.

Three objectives share one reconstruction term -E[log p(x|z)] with a
single reparameterized latent sample per sentence:

* ``mim_loss``  adds -(1/2) E[log q(z|x) + log N(z; 0, I)], the tractable
  encoder-side cross-entropy bound (the data-entropy constant it drops is
  parameter-free and reported as such in logs, never estimated);
* ``elbo_loss`` adds beta * KL(q(z|x) || N(0, I)) with an optional linear
  annealing weight;
* ``ae_loss``   uses the posterior mean instead of a sample and has no
  latent term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from . import model as mdl
from .autodiff import Tape, Tensor
from .errors import ConfigError
from .rng import RngStream
from .text import TokenSeq

__all__ = [
    "LossBreakdown", "diag_gaussian_logpdf", "kl_diag_gaussian_to_std",
    "mim_loss", "elbo_loss", "ae_loss", "kl_anneal",
]

_HALF_LN_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class LossBreakdown:
    """One objective evaluation: differentiable total plus reporting fields."""

    total: Tensor
    recon_term: float  # -(1/N) sum log p(x_i|z_i)
    latent_term: float  # objective-specific; 0 for the deterministic AE
    per_token_recon: float
    n_sentences: int
    n_tokens: int
    beta: Optional[float] = None

    @property
    def total_value(self) -> float:
        return float(self.total.data)


def diag_gaussian_logpdf(z: Tensor, mu: Tensor, log_sigma: Tensor) -> Tensor:
    """log N(z; mu, diag(sigma^2)) summed over dimensions.

    1-D inputs give a scalar; ``[B, d]`` inputs give one value per row.
    Computed through the standardized residual (z - mu) / sigma so tiny
    sigmas stay finite as long as the residual shrinks with them.
    """
    scaled = (z - mu) * ad.exp(-log_sigma)
    quad = 0.5 * (scaled * scaled)
    per_dim = quad + log_sigma + _HALF_LN_2PI
    total = ad.sum_rows(per_dim) if per_dim.data.ndim == 2 else ad.sum_all(per_dim)
    return -total


def kl_diag_gaussian_to_std(q: mdl.GaussianPosterior) -> Tensor:
    """KL(q || N(0, I)) = sum_d 0.5 (mu_d^2 + sigma_d^2 - 1 - 2 log sigma_d)."""
    mu, ls = q.mu, q.log_sigma
    inner = mu * mu + ad.exp(2.0 * ls) - 1.0 - 2.0 * ls
    total = ad.sum_rows(inner) if inner.data.ndim == 2 else ad.sum_all(inner)
    return 0.5 * total


def _std_normal_logpdf(z: Tensor) -> Tensor:
    tape = z.tape
    zeros = tape.constant(np.zeros(z.shape))
    return diag_gaussian_logpdf(z, zeros, zeros)


def _sample_with_eps(q: mdl.GaussianPosterior, rng: RngStream) -> tuple[Tensor, Tensor]:
    eps = q.mu.tape.constant(rng.normal(q.mu.shape))
    return q.mu + ad.exp(q.log_sigma) * eps, eps


def _logq_at_own_sample(q: mdl.GaussianPosterior, eps: Tensor) -> Tensor:
    """log q(z|x) at z = mu + sigma*eps, written in terms of eps.

    Identical value and gradients to the generic logpdf (the sigma
    dependence of the residual cancels under reparameterization), but
    stays finite for arbitrarily small sigma.
    """
    per_dim = 0.5 * (eps * eps) + q.log_sigma + _HALF_LN_2PI
    total = ad.sum_rows(per_dim) if per_dim.data.ndim == 2 else ad.sum_all(per_dim)
    return -total


def _batch_stats(seqs: Sequence[TokenSeq]) -> tuple[int, int]:
    return len(seqs), sum(len(s) for s in seqs)


def _encode_and_recon(tape: Tape, bound: mdl.BoundParams, enc_seqs: Sequence[TokenSeq],
                      dec_seqs: Sequence[TokenSeq], mode: str, rng: Optional[RngStream],
                      dropout_rate: float, use_mean: bool):
    q = mdl.encode_batch(tape, bound, enc_seqs, mode=mode, rng=rng,
                         dropout_rate=dropout_rate)
    z = q.mu if use_mean else mdl.sample_latent(q, rng)
    logp = mdl.decode_logprob_batch(tape, bound, dec_seqs, z, mode=mode, rng=rng,
                                    dropout_rate=dropout_rate)
    return q, z, logp


def mim_loss(tape: Tape, bound: mdl.BoundParams, batch: Sequence[TokenSeq],
             rng: RngStream, mode: str = "train", dropout_rate: float = 0.0,
             enc_batch: Optional[Sequence[TokenSeq]] = None) -> LossBreakdown:
    """Encoder-sampled cross-entropy bound.

    total = -(1/N) sum_i [ log p(x_i|z_i) + 0.5 (log q(z_i|x_i) + log N(z_i; 0, I)) ]
    with z_i ~ q(z|x_i) via reparameterization. ``enc_batch`` lets training
    feed a corrupted copy to the encoder while reconstructing the original.
    """
    if not batch:
        raise ConfigError("loss requires a nonempty batch")
    n, n_tokens = _batch_stats(batch)
    q = mdl.encode_batch(tape, bound, enc_batch or batch, mode=mode, rng=rng,
                         dropout_rate=dropout_rate)
    z, eps = _sample_with_eps(q, rng)
    logp = mdl.decode_logprob_batch(tape, bound, batch, z, mode=mode, rng=rng,
                                    dropout_rate=dropout_rate)
    logq = _logq_at_own_sample(q, eps)
    logprior = _std_normal_logpdf(z)
    recon = -ad.mean_all(logp)
    latent = -0.5 * ad.mean_all(logq + logprior)
    total = recon + latent
    return LossBreakdown(total=total, recon_term=float(recon.data),
                         latent_term=float(latent.data),
                         per_token_recon=-float(logp.data.sum()) / n_tokens,
                         n_sentences=n, n_tokens=n_tokens)


def elbo_loss(tape: Tape, bound: mdl.BoundParams, batch: Sequence[TokenSeq],
              rng: RngStream, beta: float = 1.0, mode: str = "train",
              dropout_rate: float = 0.0,
              enc_batch: Optional[Sequence[TokenSeq]] = None) -> LossBreakdown:
    """Negative ELBO with a weighted KL term.

    total = -(1/N) sum_i log p(x_i|z_i) + beta * (1/N) sum_i KL(q(z|x_i) || N(0, I)).
    """
    if not batch:
        raise ConfigError("loss requires a nonempty batch")
    if beta < 0:
        raise ConfigError(f"beta must be >= 0, got {beta}")
    n, n_tokens = _batch_stats(batch)
    q, z, logp = _encode_and_recon(tape, bound, enc_batch or batch, batch, mode,
                                   rng, dropout_rate, use_mean=False)
    recon = -ad.mean_all(logp)
    kl_mean = ad.mean_all(kl_diag_gaussian_to_std(q))
    latent = beta * kl_mean
    total = recon + latent
    return LossBreakdown(total=total, recon_term=float(recon.data),
                         latent_term=float(latent.data),
                         per_token_recon=-float(logp.data.sum()) / n_tokens,
                         n_sentences=n, n_tokens=n_tokens, beta=beta)


def ae_loss(tape: Tape, bound: mdl.BoundParams, batch: Sequence[TokenSeq],
            rng: Optional[RngStream] = None, mode: str = "train",
            dropout_rate: float = 0.0,
            enc_batch: Optional[Sequence[TokenSeq]] = None) -> LossBreakdown:
    """Deterministic auto-encoder: z is the posterior mean, no latent term."""
    if not batch:
        raise ConfigError("loss requires a nonempty batch")
    n, n_tokens = _batch_stats(batch)
    _q, _z, logp = _encode_and_recon(tape, bound, enc_batch or batch, batch, mode,
                                     rng, dropout_rate, use_mean=True)
    recon = -ad.mean_all(logp)
    return LossBreakdown(total=recon, recon_term=float(recon.data), latent_term=0.0,
                         per_token_recon=-float(logp.data.sum()) / n_tokens,
                         n_sentences=n, n_tokens=n_tokens)


def kl_anneal(step: int, total_steps: int = 10000) -> float:
    """Linear KL weight: 0 at step 0, 1 from ``total_steps`` onward."""
    if total_steps <= 0:
        raise ConfigError(f"total_steps must be positive, got {total_steps}")
    if step < 0:
        raise ConfigError(f"step must be >= 0, got {step}")
    return min(1.0, step / total_steps)
