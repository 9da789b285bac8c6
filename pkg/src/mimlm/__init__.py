"""Latent-variable sentence auto-encoders with a shared GRU architecture.

Three objectives over one model: an encoder-sampled cross-entropy bound
("mim"), the negative ELBO with optional KL annealing ("vae", "vae+kl"),
and a deterministic auto-encoder ("ae"). Ships with the evaluation
battery (reconstruction entropies, BLEU-1, latent-entropy estimates,
collapse diagnostics), latent-space probes, question-answer ranking, a
CLI, and a scikit-learn style estimator.
"""

from .config import TrainConfig
from .errors import ConfigError, DataError, NumericError, ShapeError
from .estimator import SentenceAutoencoder
from .metrics import EvalReport, evaluate
from .rng import RngStream
from .text import Corpus, TokenSeq, Vocabulary, build_vocab, load_corpus
from .training import train

__version__ = "0.1.0"

__all__ = [
    "TrainConfig", "SentenceAutoencoder", "EvalReport", "evaluate", "train",
    "Corpus", "TokenSeq", "Vocabulary", "build_vocab", "load_corpus",
    "RngStream", "ConfigError", "DataError", "NumericError", "ShapeError",
    "__version__",
]
