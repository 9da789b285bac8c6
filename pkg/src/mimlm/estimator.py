"""Scikit-learn style front end for the sentence auto-encoders.

``SentenceAutoencoder`` wraps vocabulary construction, training, and the
encode/decode paths behind the familiar fit/transform surface so the
model composes with sklearn pipelines and model-selection utilities:

* ``fit(X)``                trains on an iterable of sentences;
* ``transform(X)``          returns posterior-mean latent codes, one row
                            per sentence;
* ``inverse_transform(Z)``  decodes latent codes back into sentences;
* ``predict(X)``            reconstructs sentences (encode then decode);
* ``score(X)``              negative reconstruction entropy (higher is
                            better, sklearn convention).
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import metrics, model as mdl
from .config import TrainConfig
from .rng import RngStream
from .text import Corpus, build_vocab
from .training import train
from .validation import check_is_fitted, check_latent_codes, check_sentences

__all__ = ["SentenceAutoencoder"]


class SentenceAutoencoder(BaseEstimator, TransformerMixin):
    """GRU sentence auto-encoder trained with a mim / vae / vae+kl / ae objective.

    Parameters mirror the training configuration; see
    :class:`mimlm.config.TrainConfig` for semantics and valid ranges.
    Fitted attributes: ``vocab_``, ``params_``, ``checkpoint_``,
    ``history_``, ``n_params_``.
    """

    def __init__(self, objective: str = "mim", latent_dim: int = 16,
                 embed_dim: int = 32, hidden_dim: int = 64, max_epochs: int = 10,
                 batch_size: int = 20, optimizer: str = "adam",
                 learning_rate: Optional[float] = None, dropout: float = 0.5,
                 unk_corrupt_rate: float = 0.0, kl_anneal_steps: int = 10000,
                 plateau_patience: int = 2, max_len: int = 128,
                 max_vocab: Optional[int] = None, min_freq: int = 1,
                 decode_strategy: str = "greedy", seed: int = 0):
        self.objective = objective
        self.latent_dim = latent_dim
        self.embed_dim = embed_dim
        self.hidden_dim = hidden_dim
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.dropout = dropout
        self.unk_corrupt_rate = unk_corrupt_rate
        self.kl_anneal_steps = kl_anneal_steps
        self.plateau_patience = plateau_patience
        self.max_len = max_len
        self.max_vocab = max_vocab
        self.min_freq = min_freq
        self.decode_strategy = decode_strategy
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            objective=self.objective, latent_dim=self.latent_dim,
            embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
            max_epochs=self.max_epochs, batch_size=self.batch_size,
            optimizer=self.optimizer, learning_rate=self.learning_rate,
            dropout=self.dropout, unk_corrupt_rate=self.unk_corrupt_rate,
            kl_anneal_steps=self.kl_anneal_steps,
            plateau_patience=self.plateau_patience, max_len=self.max_len,
            max_vocab=self.max_vocab, min_freq=self.min_freq, seed=self.seed,
        ).validate()

    def fit(self, X, y=None):
        sentences = check_sentences(X)
        config = self._config()
        vocab = build_vocab(sentences, max_size=self.max_vocab, min_freq=self.min_freq)
        corpus = Corpus(vocab=vocab,
                        train=[vocab.encode(s, max_len=self.max_len) for s in sentences])
        ckpt, logs = train(config, corpus)
        self.vocab_ = vocab
        self.params_ = ckpt.best_params
        self.checkpoint_ = ckpt
        self.history_ = logs
        self.n_params_ = ckpt.best_params.param_count()
        return self

    def transform(self, X) -> np.ndarray:
        """Posterior-mean latent codes, shape (n_sentences, latent_dim)."""
        check_is_fitted(self, ("params_", "vocab_"))
        seqs = [self.vocab_.encode(s, max_len=self.max_len)
                for s in check_sentences(X)]
        mu, _ = metrics._posteriors(self.params_, seqs)
        return mu

    def inverse_transform(self, Z) -> list[str]:
        """Decode latent codes into sentences."""
        check_is_fitted(self, ("params_", "vocab_"))
        Z = check_latent_codes(Z, self.latent_dim)
        rng = RngStream(self.seed).split("inverse")
        return [self.vocab_.decode(
                    mdl.decode_sample(self.params_, z, strategy=self.decode_strategy,
                                      max_len=self.max_len, rng=rng.split(i)))
                for i, z in enumerate(Z)]

    def predict(self, X) -> list[str]:
        """Reconstruct sentences through the latent bottleneck."""
        return self.inverse_transform(self.transform(X))

    def score(self, X, y=None) -> float:
        """Negative mean reconstruction entropy of X (higher is better)."""
        check_is_fitted(self, ("params_", "vocab_"))
        seqs = [self.vocab_.encode(s, max_len=self.max_len)
                for s in check_sentences(X)]
        enc, _ = metrics.encoder_reconstruction(
            self.params_, seqs, RngStream(self.seed).split("score"), repeats=1)
        return -enc
