"""Training loop: bucketed batching, optimization, LR plateau decay.

Every random draw comes from a stream derived as
``RngStream(seed).split(purpose, epoch, batch)``, so the loss trajectory
is a pure function of (seed, corpus) and training can resume from a
checkpoint mid-run with bit-identical subsequent behavior. The
validation stream is derived from a fixed path, making the scheduler
deterministic as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .autodiff import Tape
from .checkpoint import Checkpoint
from .config import TrainConfig
from .errors import DataError, NumericError
from .losses import LossBreakdown, ae_loss, elbo_loss, kl_anneal, mim_loss
from .model import BoundParams, ModelDims, ModelParams, init_params
from .optim import AdamState, PlateauScheduler, adam_step, sgd_clipped_step
from .rng import RngStream
from .text import Corpus, TokenSeq, corrupt_unk

__all__ = ["EpochLog", "objective_loss", "loss_on_corpus", "make_batches",
           "train", "epoch_log_csv"]


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    valid_loss: float
    lr: float
    beta: Optional[float]


def epoch_log_csv(logs: Sequence[EpochLog]) -> str:
    lines = ["epoch,train_loss,valid_loss,lr,beta"]
    for log in logs:
        beta = "" if log.beta is None else repr(log.beta)
        lines.append(f"{log.epoch},{log.train_loss!r},{log.valid_loss!r},{log.lr!r},{beta}")
    return "\n".join(lines) + "\n"


def _single_loss(tape: Tape, bound: BoundParams, batch, objective: str,
                 rng: RngStream, beta: float, mode: str, dropout: float,
                 enc_batch) -> LossBreakdown:
    if objective == "mim":
        return mim_loss(tape, bound, batch, rng, mode=mode, dropout_rate=dropout,
                        enc_batch=enc_batch)
    if objective in ("vae", "vae+kl"):
        return elbo_loss(tape, bound, batch, rng, beta=beta, mode=mode,
                         dropout_rate=dropout, enc_batch=enc_batch)
    if objective == "ae":
        return ae_loss(tape, bound, batch, rng, mode=mode, dropout_rate=dropout,
                       enc_batch=enc_batch)
    raise DataError(f"unknown objective {objective!r}")


def objective_loss(tape: Tape, bound: BoundParams, batch: Sequence[TokenSeq],
                   objective: str, rng: RngStream, beta: float = 1.0,
                   mode: str = "train", dropout: float = 0.0,
                   enc_batch: Optional[Sequence[TokenSeq]] = None,
                   latent_samples: int = 1) -> LossBreakdown:
    """Dispatch to the configured objective, averaging over latent samples."""
    if latent_samples == 1:
        return _single_loss(tape, bound, batch, objective, rng.split("sample", 0),
                            beta, mode, dropout, enc_batch)
    parts = [_single_loss(tape, bound, batch, objective, rng.split("sample", s),
                          beta, mode, dropout, enc_batch)
             for s in range(latent_samples)]
    total = parts[0].total
    for p in parts[1:]:
        total = total + p.total
    total = total * (1.0 / latent_samples)
    mean = lambda vals: sum(vals) / latent_samples
    return LossBreakdown(
        total=total,
        recon_term=mean([p.recon_term for p in parts]),
        latent_term=mean([p.latent_term for p in parts]),
        per_token_recon=mean([p.per_token_recon for p in parts]),
        n_sentences=parts[0].n_sentences, n_tokens=parts[0].n_tokens,
        beta=parts[0].beta)


def loss_on_corpus(params: ModelParams, seqs: Sequence[TokenSeq], objective: str,
                   rng: RngStream, beta: float = 1.0, batch_size: int = 64,
                   latent_samples: int = 1) -> float:
    """Sentence-weighted mean objective over a corpus, evaluation mode."""
    total, n = 0.0, 0
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start : start + batch_size]
        tape = Tape()
        breakdown = objective_loss(tape, params.bind(tape), chunk, objective,
                                   rng, beta=beta, mode="eval",
                                   latent_samples=latent_samples)
        total += breakdown.total_value * len(chunk)
        n += len(chunk)
    return total / n


def make_batches(seqs: Sequence[TokenSeq], batch_size: int, bucket_width: int,
                 rng: RngStream) -> list[list[int]]:
    """Shuffled index batches, grouped into length buckets to limit padding."""
    order = rng.shuffled(list(range(len(seqs))))
    order.sort(key=lambda i: len(seqs[i]) // bucket_width)  # stable within buckets
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    return rng.shuffled(batches)


def _current_beta(objective: str, global_step: int, anneal_steps: int) -> Optional[float]:
    if objective == "vae":
        return 1.0
    if objective == "vae+kl":
        return kl_anneal(global_step, anneal_steps)
    return None


def train(config: TrainConfig, corpus: Corpus,
          resume: Optional[Checkpoint] = None) -> tuple[Checkpoint, list[EpochLog]]:
    """Run the training recipe and return the final state plus per-epoch log.

    When the corpus has no validation split, the training split stands in
    for validation (desk-scale fixtures). With ``resume``, continues from
    the checkpoint's epoch counter toward ``config.max_epochs``.
    """
    config.validate()
    if not corpus.train:
        raise DataError("corpus has no training sentences")
    dtype = np.float64 if config.dtype == "float64" else np.float32
    root = RngStream(config.seed)
    dims = ModelDims(vocab_size=corpus.vocab.size, embed_dim=config.embed_dim,
                     hidden_dim=config.hidden_dim, latent_dim=config.latent_dim)

    if resume is not None:
        if resume.params.dims != dims:
            raise DataError(f"checkpoint dims {resume.params.dims} do not match {dims}")
        params = resume.params
        best_params = resume.best_params
        adam_state = resume.adam_state
        scheduler = (PlateauScheduler.from_state(resume.scheduler_state)
                     if resume.scheduler_state else
                     PlateauScheduler(config.plateau_patience, config.lr_decay))
        lr = resume.lr
        best_valid = resume.best_valid
        start_epoch = resume.epoch
        global_step = resume.global_step
    else:
        params = init_params(dims, root.split("init"), scale=config.init_scale,
                             dtype=dtype, logsigma_bias=config.init_logsigma_bias)
        best_params = params.copy()
        adam_state = AdamState() if config.optimizer == "adam" else None
        scheduler = PlateauScheduler(config.plateau_patience, config.lr_decay)
        lr = config.resolved_lr
        best_valid = None
        start_epoch = 0
        global_step = 0

    valid_set = corpus.valid if corpus.valid else corpus.train
    arrays = params.named_arrays()
    logs: list[EpochLog] = []

    for epoch in range(start_epoch, config.max_epochs):
        batches = make_batches(corpus.train, config.batch_size, config.bucket_width,
                               root.split("shuffle", epoch))
        epoch_loss, epoch_n = 0.0, 0
        for b_idx, batch_indices in enumerate(batches):
            batch = [corpus.train[i] for i in batch_indices]
            enc_batch = None
            if config.unk_corrupt_rate > 0.0:
                c_rng = root.split("corrupt", epoch, b_idx)
                enc_batch = [corrupt_unk(s, config.unk_corrupt_rate, c_rng) for s in batch]
            beta = _current_beta(config.objective, global_step, config.kl_anneal_steps)
            tape = Tape()
            bound = params.bind(tape)
            breakdown = objective_loss(tape, bound, batch, config.objective,
                                       root.split("train", epoch, b_idx),
                                       beta=beta if beta is not None else 1.0,
                                       mode="train", dropout=config.dropout,
                                       enc_batch=enc_batch,
                                       latent_samples=config.latent_samples)
            if not math.isfinite(breakdown.total_value):
                raise NumericError(
                    f"training diverged: loss {breakdown.total_value} "
                    f"at epoch {epoch + 1}, batch {b_idx + 1}")
            tape.backward(breakdown.total)
            grads = bound.grads()
            if config.optimizer == "sgd":
                sgd_clipped_step(arrays, grads, lr, config.clip_l2)
            else:
                adam_step(arrays, grads, adam_state, lr)
            global_step += 1
            epoch_loss += breakdown.total_value * len(batch)
            epoch_n += len(batch)

        beta_now = _current_beta(config.objective, global_step, config.kl_anneal_steps)
        valid_loss = loss_on_corpus(params, valid_set, config.objective,
                                    root.split("valid"),
                                    beta=beta_now if beta_now is not None else 1.0,
                                    batch_size=config.batch_size,
                                    latent_samples=config.latent_samples)
        logs.append(EpochLog(epoch=epoch + 1, train_loss=epoch_loss / epoch_n,
                             valid_loss=valid_loss, lr=lr, beta=beta_now))
        if best_valid is None or valid_loss < best_valid:
            best_valid = valid_loss
            best_params = params.copy()
        if scheduler.observe(valid_loss):
            lr *= config.lr_decay

    ckpt = Checkpoint(config=config, vocab=corpus.vocab, params=params,
                      best_params=best_params, adam_state=adam_state,
                      epoch=config.max_epochs, global_step=global_step,
                      best_valid=best_valid, lr=lr,
                      scheduler_state=scheduler.state_dict())
    return ckpt, logs
