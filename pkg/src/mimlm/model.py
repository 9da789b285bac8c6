"""GRU sentence auto-encoder: encoder posterior, latent sampling, decoder.

One GRU layer on each side. The encoder consumes the sentence in reverse
(terminal <EOT> kept last) and maps its final hidden state through two
affine heads to the mean and log standard deviation of a diagonal
Gaussian posterior. The decoder is auto-regressive with teacher forcing;
the latent code is concatenated to every input embedding, and the
initial hidden state is zero.

Batched entry points (`encode_batch`, `decode_logprob_batch`) build onto
a caller-supplied tape and are what training uses; the single-sentence
functions wrap them for evaluation and probing.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ConfigError
from .rng import RngStream
from .text import BOT, EOT, PAD, TokenSeq, reverse_for_encoder

__all__ = [
    "ModelDims", "GruWeights", "ModelParams", "GaussianPosterior", "BoundParams",
    "init_params", "gru_step", "encode_batch", "decode_logprob_batch",
    "encode_posterior", "sample_latent", "decode_logprob", "decode_sample",
]


@dataclass(frozen=True)
class ModelDims:
    vocab_size: int
    embed_dim: int
    hidden_dim: int
    latent_dim: int

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if v < 1:
                raise ConfigError(f"{f.name} must be >= 1, got {v}")


@dataclass
class GruWeights:
    """One GRU cell: input matrices W_*, recurrent matrices U_*, biases b_*."""

    W_r: np.ndarray
    W_u: np.ndarray
    W_h: np.ndarray
    U_r: np.ndarray
    U_u: np.ndarray
    U_h: np.ndarray
    b_r: np.ndarray
    b_u: np.ndarray
    b_h: np.ndarray


def _init_gru(e_in: int, h: int, rng: RngStream, scale: float, dtype) -> GruWeights:
    u = lambda *shape: rng.uniform(-scale, scale, size=shape).astype(dtype)
    z = lambda *shape: np.zeros(shape, dtype=dtype)
    return GruWeights(W_r=u(e_in, h), W_u=u(e_in, h), W_h=u(e_in, h),
                      U_r=u(h, h), U_u=u(h, h), U_h=u(h, h),
                      b_r=z(h), b_u=z(h), b_h=z(h))


class ModelParams:
    """All learnable weights, addressable as a flat name -> array mapping."""

    def __init__(self, dims: ModelDims, embed, enc: GruWeights, dec: GruWeights,
                 post_mu_w, post_mu_b, post_logsigma_w, post_logsigma_b, out_w, out_b):
        self.dims = dims
        self.embed = embed
        self.enc = enc
        self.dec = dec
        self.post_mu_w = post_mu_w
        self.post_mu_b = post_mu_b
        self.post_logsigma_w = post_logsigma_w
        self.post_logsigma_b = post_logsigma_b
        self.out_w = out_w
        self.out_b = out_b

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {"embed": self.embed}
        for prefix, gru in (("enc", self.enc), ("dec", self.dec)):
            for f in fields(GruWeights):
                out[f"{prefix}.{f.name}"] = getattr(gru, f.name)
        out.update(post_mu_w=self.post_mu_w, post_mu_b=self.post_mu_b,
                   post_logsigma_w=self.post_logsigma_w, post_logsigma_b=self.post_logsigma_b,
                   out_w=self.out_w, out_b=self.out_b)
        return out

    def set_array(self, name: str, value: np.ndarray) -> None:
        if "." in name:
            prefix, leaf = name.split(".", 1)
            setattr(getattr(self, prefix), leaf, value)
        else:
            setattr(self, name, value)

    def param_count(self) -> int:
        return sum(a.size for a in self.named_arrays().values())

    def copy(self) -> "ModelParams":
        gru_copy = lambda g: GruWeights(**{f.name: getattr(g, f.name).copy()
                                           for f in fields(GruWeights)})
        return ModelParams(
            dims=self.dims, embed=self.embed.copy(),
            enc=gru_copy(self.enc), dec=gru_copy(self.dec),
            post_mu_w=self.post_mu_w.copy(), post_mu_b=self.post_mu_b.copy(),
            post_logsigma_w=self.post_logsigma_w.copy(),
            post_logsigma_b=self.post_logsigma_b.copy(),
            out_w=self.out_w.copy(), out_b=self.out_b.copy(),
        )

    def bind(self, tape: Tape) -> "BoundParams":
        """Wrap every array as a leaf tensor on ``tape`` for one forward pass."""
        leaves = {name: tape.leaf(arr) for name, arr in self.named_arrays().items()}
        return BoundParams(leaves)


class BoundParams:
    """Per-pass view of :class:`ModelParams` as tape tensors."""

    def __init__(self, leaves: dict[str, Tensor]):
        self.leaves = leaves

    def __getitem__(self, name: str) -> Tensor:
        return self.leaves[name]

    def gru(self, prefix: str) -> dict[str, Tensor]:
        return {f.name: self.leaves[f"{prefix}.{f.name}"] for f in fields(GruWeights)}

    def grads(self) -> dict[str, np.ndarray]:
        """Accumulated gradients after backward; zeros where a leaf was unused."""
        return {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
                for name, t in self.leaves.items()}


def init_params(dims: ModelDims, rng: RngStream, scale: float = 0.1,
                dtype=np.float64, logsigma_bias: float = 0.0) -> ModelParams:
    """Uniform(-scale, scale) matrices, zero biases.

    ``logsigma_bias`` offsets the posterior log-sigma head so training can
    start from a small-noise posterior; at desk scale this decides the
    race between the reconstruction signal and latent collapse.
    """
    dims.validate()
    V, e, h, d = dims.vocab_size, dims.embed_dim, dims.hidden_dim, dims.latent_dim
    u = lambda *shape: rng.uniform(-scale, scale, size=shape).astype(dtype)
    z = lambda *shape: np.zeros(shape, dtype=dtype)
    return ModelParams(
        dims=dims,
        embed=u(V, e),
        enc=_init_gru(e, h, rng, scale, dtype),
        dec=_init_gru(e + d, h, rng, scale, dtype),
        post_mu_w=u(h, d), post_mu_b=z(d),
        post_logsigma_w=u(h, d),
        post_logsigma_b=np.full(d, logsigma_bias, dtype=dtype),
        out_w=u(h, V), out_b=z(V),
    )


@dataclass
class GaussianPosterior:
    """Per-sentence diagonal Gaussian q(z|x): mean and log standard deviation.

    Tensors are 1-D ``[d]`` for a single sentence or 2-D ``[B, d]`` for a
    batch.
    """

    mu: Tensor
    log_sigma: Tensor

    @property
    def mu_array(self) -> np.ndarray:
        return self.mu.data

    @property
    def sigma_array(self) -> np.ndarray:
        return np.exp(self.log_sigma.data)


def gru_step(w: dict[str, Tensor], x_t: Tensor, h: Tensor) -> Tensor:
    """One GRU update.

    r = sig(x W_r + h U_r + b_r), u = sig(x W_u + h U_u + b_u),
    cand = tanh(x W_h + (r*h) U_h + b_h), h' = (1-u)*h + u*cand.
    Accepts ``[e_in]``/``[h]`` vectors or ``[B, e_in]``/``[B, h]`` batches.
    """
    single = x_t.data.ndim == 1
    if single:
        x_t = ad.reshape(x_t, (1, -1))
        h = ad.reshape(h, (1, -1))
    r = ad.sigmoid(ad.add_bias(ad.matmul(x_t, w["W_r"]) + ad.matmul(h, w["U_r"]), w["b_r"]))
    u = ad.sigmoid(ad.add_bias(ad.matmul(x_t, w["W_u"]) + ad.matmul(h, w["U_u"]), w["b_u"]))
    cand = ad.tanh(ad.add_bias(ad.matmul(x_t, w["W_h"]) + ad.matmul(r * h, w["U_h"]), w["b_h"]))
    h_new = (1.0 - u) * h + u * cand
    return ad.reshape(h_new, (-1,)) if single else h_new


def _pad_batch(seqs: Sequence[TokenSeq]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad id rows with <PAD>; mask is 1.0 over real positions."""
    L = max(len(s) for s in seqs)
    ids = np.full((len(seqs), L), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), L), dtype=np.float64)
    for b, s in enumerate(seqs):
        ids[b, : len(s)] = s.ids
        mask[b, : len(s)] = 1.0
    return ids, mask


def encode_batch(tape: Tape, bound: BoundParams, seqs: Sequence[TokenSeq],
                 mode: str = "eval", rng: Optional[RngStream] = None,
                 dropout_rate: float = 0.0) -> GaussianPosterior:
    """Posterior parameters ``[B, d]`` for a batch of sentences.

    Inputs are reversed internally; padded steps hold the hidden state
    fixed so the final state is each sentence's own last real state.
    """
    ids, mask = _pad_batch([reverse_for_encoder(s) for s in seqs])
    B, L = ids.shape
    hdim = bound["enc.b_r"].shape[0]
    w = bound.gru("enc")
    h = tape.constant(np.zeros((B, hdim)))
    all_real = mask.all(axis=0)
    for t in range(L):
        x_t = ad.embedding_lookup(bound["embed"], ids[:, t])
        if mode == "train" and dropout_rate > 0.0:
            x_t = ad.dropout(x_t, dropout_rate, mode, rng)
        h_new = gru_step(w, x_t, h)
        if all_real[t]:
            h = h_new
        else:
            m = tape.constant(np.repeat(mask[:, t : t + 1], hdim, axis=1))
            h = m * h_new + (1.0 - m) * h
    mu = ad.add_bias(ad.matmul(h, bound["post_mu_w"]), bound["post_mu_b"])
    log_sigma = ad.add_bias(ad.matmul(h, bound["post_logsigma_w"]), bound["post_logsigma_b"])
    return GaussianPosterior(mu=mu, log_sigma=log_sigma)


def decode_logprob_batch(tape: Tape, bound: BoundParams, seqs: Sequence[TokenSeq],
                         z: Tensor, mode: str = "eval", rng: Optional[RngStream] = None,
                         dropout_rate: float = 0.0) -> Tensor:
    """Teacher-forced log p(x|z) per sentence, shape ``[B]``.

    Sums log-probabilities of all real tokens including the terminal
    <EOT>; padded positions contribute nothing.
    """
    targets, mask = _pad_batch(seqs)
    B, L = targets.shape
    inputs = np.full((B, L), PAD, dtype=np.int64)
    for b, s in enumerate(seqs):
        inputs[b, : len(s)] = (BOT,) + s.content
    hdim = bound["dec.b_r"].shape[0]
    w = bound.gru("dec")
    h = tape.constant(np.zeros((B, hdim)))
    total = tape.constant(np.zeros(B))
    for k in range(L):
        emb = ad.embedding_lookup(bound["embed"], inputs[:, k])
        if mode == "train" and dropout_rate > 0.0:
            emb = ad.dropout(emb, dropout_rate, mode, rng)
        x_in = ad.concat([emb, z], axis=1)
        h = gru_step(w, x_in, h)
        logits = ad.add_bias(ad.matmul(h, bound["out_w"]), bound["out_b"])
        step_lp = ad.take_per_row(ad.log_softmax(logits), targets[:, k])
        if mask[:, k].all():
            total = total + step_lp
        else:
            total = total + step_lp * tape.constant(mask[:, k])
    return total


def sample_latent(q: GaussianPosterior, rng: RngStream) -> Tensor:
    """Reparameterized draw z = mu + exp(log_sigma) * eps, eps ~ N(0, I)."""
    eps = q.mu.tape.constant(rng.normal(q.mu.shape))
    return q.mu + ad.exp(q.log_sigma) * eps


def encode_posterior(params: ModelParams, x: TokenSeq, mode: str = "eval",
                     rng: Optional[RngStream] = None,
                     dropout_rate: float = 0.0) -> GaussianPosterior:
    """Posterior for one sentence; tensors have shape ``[d]``."""
    tape = Tape()
    q = encode_batch(tape, params.bind(tape), [x], mode=mode, rng=rng,
                     dropout_rate=dropout_rate)
    return GaussianPosterior(mu=ad.reshape(q.mu, (-1,)),
                             log_sigma=ad.reshape(q.log_sigma, (-1,)))


def decode_logprob(params: ModelParams, x: TokenSeq, z: np.ndarray,
                   mode: str = "eval", rng: Optional[RngStream] = None,
                   dropout_rate: float = 0.0) -> float:
    """log p(x|z) for one sentence and a fixed latent code."""
    tape = Tape()
    zt = tape.constant(np.asarray(z, dtype=np.float64).reshape(1, -1))
    lp = decode_logprob_batch(tape, params.bind(tape), [x], zt, mode=mode,
                              rng=rng, dropout_rate=dropout_rate)
    return float(lp.data[0])


def decode_sample(params: ModelParams, z: np.ndarray, strategy: str = "ancestral",
                  banned: frozenset[int] | set[int] = frozenset(), max_len: int = 128,
                  rng: Optional[RngStream] = None) -> TokenSeq:
    """Generate auto-regressively from <BOT> until <EOT> or ``max_len`` tokens.

    ``banned`` token ids get -inf logits before selection. Truncated
    generations get <EOT> appended so the result is well-formed.
    """
    if max_len < 1:
        raise ConfigError(f"max_len must be >= 1, got {max_len}")
    if strategy not in ("ancestral", "greedy"):
        raise ConfigError(f"unknown decode strategy {strategy!r}")
    if strategy == "ancestral" and rng is None:
        raise ConfigError("ancestral decoding requires an rng stream")
    tape = Tape()
    bound = params.bind(tape)
    w = bound.gru("dec")
    zt = tape.constant(np.asarray(z, dtype=np.float64).reshape(1, -1))
    h = tape.constant(np.zeros((1, params.dims.hidden_dim)))
    prev = BOT
    out: list[int] = []
    for _ in range(max_len):
        emb = ad.embedding_lookup(bound["embed"], [prev])
        h = gru_step(w, ad.concat([emb, zt], axis=1), h)
        logits = ad.add_bias(ad.matmul(h, bound["out_w"]), bound["out_b"]).data[0].copy()
        for tok in banned:
            logits[tok] = -np.inf
        if strategy == "greedy":
            nxt = int(np.argmax(logits))
        else:
            shifted = logits - logits.max()
            probs = np.exp(shifted)
            probs /= probs.sum()
            nxt = int(rng.generator.choice(len(probs), p=probs))
        if nxt == EOT:
            break
        out.append(nxt)
        prev = nxt
    return TokenSeq(tuple(out) + (EOT,))
