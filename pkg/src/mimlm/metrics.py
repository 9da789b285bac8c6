"""Evaluation battery: reconstruction entropies, BLEU-1, latent entropy
estimates, and posterior-collapse diagnostics.

Reconstruction numbers are per-sentence negative log-likelihoods (nats),
averaged over the evaluated split and over ``repeats`` independent latent
draws. Latent-space entropy uses the k-nearest-neighbor estimator
H = psi(n) - psi(k) + ln V_d + (d/n) sum_i ln eps_i with Euclidean
k-th-neighbor distances eps_i and the unit-ball volume V_d, compared
against the entropy of a diagonal Gaussian fitted to the same codes.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln

from . import model as mdl
from .autodiff import Tape
from .errors import ConfigError
from .losses import kl_diag_gaussian_to_std
from .model import ModelParams
from .rng import RngStream
from .text import TokenSeq

__all__ = [
    "EvalReport", "CollapseHistograms", "bleu1", "encoder_reconstruction",
    "random_reconstruction", "latent_codes", "fitted_sigma", "mean_kl",
    "knn_entropy", "fit_diag_gaussian_entropy", "reconstruct_corpus",
    "corpus_bleu1", "collapse_histograms", "histogram_overlap", "evaluate",
]

_CHUNK = 64  # sentences per batched forward pass


def bleu1(reference: TokenSeq, hypothesis: TokenSeq) -> float:
    """Clipped unigram precision over content tokens; empty hypothesis -> 0."""
    ref = Counter(reference.content)
    if not ref:
        raise ConfigError("bleu1 reference has no content tokens")
    hyp = Counter(hypothesis.content)
    n_hyp = sum(hyp.values())
    if n_hyp == 0:
        return 0.0
    matched = sum(min(c, ref[t]) for t, c in hyp.items())
    return matched / n_hyp


def _chunks(seqs: Sequence[TokenSeq]):
    for start in range(0, len(seqs), _CHUNK):
        yield seqs[start : start + _CHUNK]


def _posteriors(params: ModelParams, seqs: Sequence[TokenSeq]) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and log-sigmas for a corpus, as plain arrays."""
    mus, log_sigmas = [], []
    for chunk in _chunks(seqs):
        tape = Tape()
        q = mdl.encode_batch(tape, params.bind(tape), chunk)
        mus.append(q.mu.data)
        log_sigmas.append(q.log_sigma.data)
    return np.concatenate(mus, axis=0), np.concatenate(log_sigmas, axis=0)


def latent_codes(params: ModelParams, seqs: Sequence[TokenSeq], rng: RngStream,
                 mode: str = "sample") -> np.ndarray:
    """One latent code per sentence: a posterior sample or the mean."""
    mu, log_sigma = _posteriors(params, seqs)
    if mode == "mean":
        return mu
    if mode != "sample":
        raise ConfigError(f"codes mode must be 'sample' or 'mean', got {mode!r}")
    return mu + np.exp(log_sigma) * rng.normal(mu.shape)


def fitted_sigma(codes: np.ndarray) -> float:
    """Scalar std of a zero-mean Gaussian fit: RMS of per-dimension stds."""
    return float(np.sqrt(np.mean(codes ** 2)))


def _mean_neg_logprob(params: ModelParams, seqs: Sequence[TokenSeq],
                      z: np.ndarray) -> float:
    total = 0.0
    offset = 0
    for chunk in _chunks(seqs):
        tape = Tape()
        zt = tape.constant(z[offset : offset + len(chunk)])
        lp = mdl.decode_logprob_batch(tape, params.bind(tape), chunk, zt)
        total += -float(lp.data.sum())
        offset += len(chunk)
    return total / len(seqs)


def encoder_reconstruction(params: ModelParams, seqs: Sequence[TokenSeq],
                           rng: RngStream, repeats: int = 10) -> tuple[float, float]:
    """Mean and stdev over repeats of -log p(x | z ~ q(z|x))."""
    mu, log_sigma = _posteriors(params, seqs)
    runs = []
    for r in range(repeats):
        z = mu + np.exp(log_sigma) * rng.split("enc", r).normal(mu.shape)
        runs.append(_mean_neg_logprob(params, seqs, z))
    return float(np.mean(runs)), float(np.std(runs))


def random_reconstruction(params: ModelParams, seqs: Sequence[TokenSeq],
                          sigma_fit: float, rng: RngStream,
                          repeats: int = 10) -> tuple[float, float]:
    """Mean and stdev over repeats of -log p(x | z ~ N(0, sigma_fit^2 I))."""
    if sigma_fit <= 0:
        raise ConfigError(f"sigma_fit must be positive, got {sigma_fit}")
    d = params.dims.latent_dim
    runs = []
    for r in range(repeats):
        z = sigma_fit * rng.split("rand", r).normal((len(seqs), d))
        runs.append(_mean_neg_logprob(params, seqs, z))
    return float(np.mean(runs)), float(np.std(runs))


def mean_kl(params: ModelParams, seqs: Sequence[TokenSeq]) -> float:
    """Mean KL(q(z|x) || N(0, I)) over sentences, in nats."""
    total = 0.0
    for chunk in _chunks(seqs):
        tape = Tape()
        q = mdl.encode_batch(tape, params.bind(tape), chunk)
        total += float(kl_diag_gaussian_to_std(q).data.sum())
    return total / len(seqs)


def knn_entropy(codes: np.ndarray, k: int = 5) -> float:
    """k-nearest-neighbor differential entropy estimate, in nats.

    Duplicate points would make ln(eps) undefined; they are jittered by
    1e-10 (with a warning) before re-querying.
    """
    codes = np.asarray(codes, dtype=np.float64)
    n, d = codes.shape
    if k < 1 or n <= k:
        raise ConfigError(f"knn_entropy requires n > k >= 1, got n={n}, k={k}")
    eps = cKDTree(codes).query(codes, k=k + 1)[0][:, k]
    if np.any(eps <= 0.0):
        warnings.warn("duplicate latent codes; jittering by 1e-10 for the entropy estimate")
        codes = codes + 1e-10 * np.random.default_rng(0).standard_normal(codes.shape)
        eps = cKDTree(codes).query(codes, k=k + 1)[0][:, k]
    log_unit_ball = 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)
    return float(digamma(n) - digamma(k) + log_unit_ball + d * np.mean(np.log(eps)))


def fit_diag_gaussian_entropy(codes: np.ndarray) -> tuple[float, float]:
    """Entropy of a diagonal Gaussian fit and the mean per-dimension std.

    entropy = sum_d 0.5 ln(2 pi e sigma_d^2); zero-variance dimensions are
    floored at 1e-12 with a warning.
    """
    codes = np.asarray(codes, dtype=np.float64)
    if codes.shape[0] < 2:
        raise ConfigError(f"need at least 2 codes, got {codes.shape[0]}")
    sigma = codes.std(axis=0, ddof=1)
    if np.any(sigma <= 0.0):
        warnings.warn("zero-variance latent dimension; flooring std at 1e-12")
        sigma = np.maximum(sigma, 1e-12)
    entropy = float(np.sum(0.5 * np.log(2.0 * math.pi * math.e * sigma ** 2)))
    return entropy, float(sigma.mean())


def reconstruct_corpus(params: ModelParams, seqs: Sequence[TokenSeq], rng: RngStream,
                       strategy: str = "ancestral", max_len: int = 128) -> list[TokenSeq]:
    """Sampled reconstruction of each sentence: z ~ q(z|x), then decode."""
    mu, log_sigma = _posteriors(params, seqs)
    z = mu + np.exp(log_sigma) * rng.split("z").normal(mu.shape)
    out = []
    for i in range(len(seqs)):
        out.append(mdl.decode_sample(params, z[i], strategy=strategy,
                                     max_len=max_len, rng=rng.split("decode", i)))
    return out


def corpus_bleu1(references: Sequence[TokenSeq], hypotheses: Sequence[TokenSeq]) -> float:
    """Sentence-level BLEU-1 averaged over the corpus."""
    scores = [bleu1(ref, hyp) for ref, hyp in zip(references, hypotheses)]
    return float(np.mean(scores))


@dataclass
class CollapseHistograms:
    """Paired same/cross log-probability samples for collapse diagnostics.

    ``p_*`` values are log p(x_i|z_j) divided by the token count of x_i
    (per-token normalization); ``q_*`` values are raw log q(z_i|x_j).
    """

    p_same: np.ndarray  # m values, i == j
    p_cross: np.ndarray  # m(m-1) values, i != j
    q_same: np.ndarray
    q_cross: np.ndarray
    per_token_logp: bool = True


def collapse_histograms(params: ModelParams, seqs: Sequence[TokenSeq],
                        rng: RngStream) -> CollapseHistograms:
    if len(seqs) < 2:
        raise ConfigError(f"collapse histograms need at least 2 sentences, got {len(seqs)}")
    m = len(seqs)
    mu, log_sigma = _posteriors(params, seqs)
    z = mu + np.exp(log_sigma) * rng.split("z").normal(mu.shape)
    lengths = np.array([len(s) for s in seqs], dtype=np.float64)

    # log p(x_i | z_j): one batched decoder pass per code j.
    logp = np.empty((m, m))
    for j in range(m):
        tape = Tape()
        zt = tape.constant(np.repeat(z[j : j + 1], m, axis=0))
        logp[:, j] = mdl.decode_logprob_batch(tape, params.bind(tape), seqs, zt).data
    logp_per_token = logp / lengths[:, None]

    # log q(z_i | x_j) in closed form on the posterior arrays. A zero
    # residual standardizes to zero no matter how small sigma is.
    diff = z[:, None, :] - mu[None, :, :]  # [i, j, d]
    with np.errstate(over="ignore", invalid="ignore"):
        scaled = np.where(diff == 0.0, 0.0, diff * np.exp(-log_sigma)[None, :, :])
    logq = -0.5 * np.sum(scaled ** 2, axis=2)
    logq -= np.sum(log_sigma, axis=1)[None, :]
    logq -= 0.5 * mu.shape[1] * math.log(2.0 * math.pi)

    off_diag = ~np.eye(m, dtype=bool)
    return CollapseHistograms(
        p_same=np.diag(logp_per_token).copy(),
        p_cross=logp_per_token[off_diag].copy(),
        q_same=np.diag(logq).copy(),
        q_cross=logq[off_diag].copy(),
    )


def histogram_overlap(a: np.ndarray, b: np.ndarray, bins: int = 10) -> float:
    """Overlap coefficient of two samples: sum of min bin frequencies over a
    shared equal-width binning spanning both samples."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if lo == hi:
        return 1.0
    edges = np.linspace(lo, hi, bins + 1)
    pa = np.histogram(a, bins=edges)[0] / a.size
    pb = np.histogram(b, bins=edges)[0] / b.size
    return float(np.minimum(pa, pb).sum())


@dataclass
class EvalReport:
    """One model's evaluation record."""

    enc_recon: float
    enc_recon_std: float
    rand_recon: float
    rand_recon_std: float
    kl: float
    bleu1: float
    knn_entropy: float
    fitted_entropy: float
    fitted_mean_sigma: float
    entropy_ratio: float
    fitted_sigma: float
    n_sentences: int
    seed: int
    repeats: int
    latent_dim: int
    param_count: int

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(params: ModelParams, seqs: Sequence[TokenSeq], seed: int = 0,
             repeats: int = 10, knn_k: int = 5, codes_mode: str = "sample",
             max_len: int = 128, decode_strategy: str = "ancestral",
             label_seed_offset: int = 0) -> EvalReport:
    """Run the full measurement battery on one split."""
    if not seqs:
        raise ConfigError("evaluation requires at least one sentence")
    rng = RngStream(seed).split("eval", label_seed_offset)
    codes = latent_codes(params, seqs, rng.split("codes"), mode=codes_mode)
    sigma_fit = fitted_sigma(codes)
    enc_mean, enc_std = encoder_reconstruction(params, seqs, rng.split("encrec"),
                                               repeats=repeats)
    rand_mean, rand_std = random_reconstruction(params, seqs, sigma_fit,
                                                rng.split("randrec"), repeats=repeats)
    kl = mean_kl(params, seqs)
    hyps = reconstruct_corpus(params, seqs, rng.split("bleu"),
                              strategy=decode_strategy, max_len=max_len)
    bleu = corpus_bleu1(seqs, hyps)
    h_knn = knn_entropy(codes, k=knn_k)
    h_fit, mean_sigma = fit_diag_gaussian_entropy(codes)
    return EvalReport(
        enc_recon=enc_mean, enc_recon_std=enc_std,
        rand_recon=rand_mean, rand_recon_std=rand_std,
        kl=kl, bleu1=bleu, knn_entropy=h_knn, fitted_entropy=h_fit,
        fitted_mean_sigma=mean_sigma, entropy_ratio=h_knn / h_fit,
        fitted_sigma=sigma_fit, n_sentences=len(seqs), seed=seed,
        repeats=repeats, latent_dim=params.dims.latent_dim,
        param_count=params.param_count(),
    )
