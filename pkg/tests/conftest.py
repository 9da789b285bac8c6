"""Shared fixtures: synthetic grammar corpora and desk-scale trained models.

The trained fixtures are session-scoped because several test modules and
acceptance criteria share them; training is deterministic, so every run
of the suite sees identical models.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mimlm.config import TrainConfig
from mimlm.rng import RngStream
from mimlm.text import Corpus, build_vocab
from mimlm.training import train

SUBJECTS = ["anna", "ben", "carla", "dmitri", "elena", "farid", "grace", "hugo",
            "irene", "jonas", "karin", "liam"]
ADVERBS = ["quickly", "slowly", "quietly", "loudly", "carefully", "badly",
           "eagerly", "rarely"]
VERBS = ["paints", "builds", "sells", "buys", "breaks", "cleans", "moves",
         "fixes", "draws", "weighs"]
ADJECTIVES = ["red", "blue", "green", "small", "large", "old", "new", "heavy"]
OBJECTS = ["boxes", "chairs", "tables", "lamps", "plates", "shelves", "doors",
           "frames", "clocks", "wheels", "mirrors", "baskets"]


def grammar_sentence(rng) -> str:
    pick = lambda pool: pool[int(rng.integers(0, len(pool)))]
    return " ".join([pick(SUBJECTS), pick(ADVERBS), pick(VERBS),
                     pick(ADJECTIVES), pick(OBJECTS)])


def grammar_lines(n: int, seed: int) -> list[str]:
    """n distinct sentences from the subject-adverb-verb-adjective-object grammar."""
    rng = np.random.default_rng(seed)
    seen: dict[str, None] = {}
    while len(seen) < n:
        seen.setdefault(grammar_sentence(rng), None)
    return list(seen)


def corpus_from_lines(lines: list[str]) -> Corpus:
    vocab = build_vocab(lines)
    return Corpus(vocab=vocab, train=[vocab.encode(line) for line in lines])


@pytest.fixture(scope="session")
def grammar_corpus() -> Corpus:
    """500 distinct grammar sentences; evaluation happens on this split."""
    return corpus_from_lines(grammar_lines(500, seed=2024))


def desk_config(objective: str, **overrides) -> TrainConfig:
    base = dict(objective=objective, latent_dim=16, embed_dim=32, hidden_dim=96,
                batch_size=20, optimizer="adam", max_epochs=120, seed=7,
                dropout=0.0, max_len=32, plateau_patience=8)
    base.update(overrides)
    return TrainConfig(**base).validate()


@pytest.fixture(scope="session")
def trained_mim(grammar_corpus):
    ckpt, logs = train(desk_config("mim"), grammar_corpus)
    return ckpt


@pytest.fixture(scope="session")
def trained_vae(grammar_corpus):
    # plain ELBO, beta fixed at 1, no annealing
    ckpt, logs = train(desk_config("vae"), grammar_corpus)
    return ckpt


@pytest.fixture(scope="session")
def trained_ae(grammar_corpus):
    ckpt, logs = train(desk_config("ae"), grammar_corpus)
    return ckpt


@pytest.fixture(scope="session")
def memorized_corpus() -> Corpus:
    return corpus_from_lines(grammar_lines(20, seed=99))


@pytest.fixture(scope="session")
def memorized_mim(memorized_corpus):
    """A 20-sentence model trained to near-exact memorization."""
    config = desk_config("mim", hidden_dim=64, max_epochs=400)
    ckpt, logs = train(config, memorized_corpus)
    return ckpt
