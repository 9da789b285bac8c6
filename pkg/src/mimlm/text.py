"""Corpus ingestion, word-level vocabulary, and token-sequence codecs.

Tokenization is pure whitespace splitting: the intended corpora are
pre-tokenized, one sentence per line. Four reserved tokens occupy fixed
ids; corpus tokens that collide with a reserved surface form (a literal
"<UNK>" in the data, say) are not added twice and simply encode to the
reserved id.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import DataError
from .rng import RngStream

__all__ = [
    "BOT", "EOT", "UNK", "PAD", "RESERVED_TOKENS",
    "TokenSeq", "Vocabulary", "Corpus",
    "build_vocab", "reverse_for_encoder", "corrupt_unk", "load_corpus", "read_lines",
]

BOT = 0
EOT = 1
UNK = 2
PAD = 3
RESERVED_TOKENS = ("<BOT>", "<EOT>", "<UNK>", "<PAD>")


@dataclass(frozen=True)
class TokenSeq:
    """A tokenized sentence: content ids followed by a terminal <EOT>."""

    ids: tuple[int, ...]

    def __post_init__(self):
        if not self.ids or self.ids[-1] != EOT:
            raise DataError(f"token sequence must end with <EOT> (id {EOT}): {self.ids}")

    @property
    def content(self) -> tuple[int, ...]:
        """Ids without the terminal <EOT>."""
        return self.ids[:-1]

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


class Vocabulary:
    """Bijective token/id mapping with the four reserved ids fixed first."""

    def __init__(self, tokens: Iterable[str]):
        tokens = list(tokens)
        if tokens[: len(RESERVED_TOKENS)] != list(RESERVED_TOKENS):
            tokens = list(RESERVED_TOKENS) + tokens
        self.id_to_token: list[str] = tokens
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(tokens)}
        if len(self.token_to_id) != len(tokens):
            raise DataError("duplicate tokens in vocabulary")

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def token_id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def encode(self, line: str, max_len: Optional[int] = None) -> TokenSeq:
        """Whitespace-split, map to ids (unknown -> <UNK>), append <EOT>.

        Content longer than ``max_len`` tokens is truncated before the
        terminal <EOT>.
        """
        ids = [self.token_id(t) for t in line.split()]
        if max_len is not None:
            ids = ids[:max_len]
        return TokenSeq(tuple(ids) + (EOT,))

    def decode(self, seq: TokenSeq | Iterable[int], keep_markers: bool = False) -> str:
        ids = seq.ids if isinstance(seq, TokenSeq) else tuple(seq)
        if not keep_markers:
            ids = tuple(i for i in ids if i not in (BOT, EOT, PAD))
        return " ".join(self.id_to_token[i] for i in ids)

    def to_json(self) -> str:
        return json.dumps(self.id_to_token, ensure_ascii=False)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        tokens = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(tokens, list) or tokens[: len(RESERVED_TOKENS)] != list(RESERVED_TOKENS):
            raise DataError(f"vocabulary file {path} must be a JSON list starting with {RESERVED_TOKENS}")
        return cls(tokens)


def build_vocab(lines: Iterable[str], max_size: Optional[int] = None,
                min_freq: int = 1) -> Vocabulary:
    """Build a word vocabulary by descending frequency, ties lexicographic.

    ``max_size`` counts only non-reserved tokens; tokens below ``min_freq``
    or beyond the budget encode to <UNK>.
    """
    counts: Counter[str] = Counter()
    nonempty = 0
    for line in lines:
        words = line.split()
        if words:
            nonempty += 1
        counts.update(words)
    if nonempty == 0:
        raise DataError("cannot build vocabulary from an empty corpus")
    for reserved in RESERVED_TOKENS:
        counts.pop(reserved, None)
    kept = sorted((t for t, c in counts.items() if c >= min_freq),
                  key=lambda t: (-counts[t], t))
    if max_size is not None:
        kept = kept[:max_size]
    return Vocabulary(kept)


def reverse_for_encoder(x: TokenSeq) -> TokenSeq:
    """Reverse content order, keeping <EOT> terminal."""
    return TokenSeq(tuple(reversed(x.content)) + (EOT,))


def corrupt_unk(x: TokenSeq, rate: float, rng: RngStream) -> TokenSeq:
    """Replace each content token with <UNK> independently with probability ``rate``."""
    if not (0.0 <= rate < 1.0):
        from .errors import ConfigError

        raise ConfigError(f"corruption rate must be in [0, 1), got {rate}")
    if rate == 0.0 or not x.content:
        return x
    hits = rng.random(len(x.content)) < rate
    ids = tuple(UNK if hit else t for t, hit in zip(x.content, hits))
    return TokenSeq(ids + (EOT,))


@dataclass
class Corpus:
    """Train/valid/test partitions sharing one vocabulary."""

    vocab: Vocabulary
    train: list[TokenSeq]
    valid: list[TokenSeq] = field(default_factory=list)
    test: list[TokenSeq] = field(default_factory=list)
    line_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.train:
            raise DataError("corpus has no training sentences")
        V = self.vocab.size
        for name, part in (("train", self.train), ("valid", self.valid), ("test", self.test)):
            for seq in part:
                if any(i >= V or i < 0 for i in seq.ids):
                    raise DataError(f"{name} sequence contains id outside vocabulary of size {V}")


def read_lines(path: str | Path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def load_corpus(data_dir: str | Path, vocab: Optional[Vocabulary] = None,
                max_len: int = 128, max_vocab: Optional[int] = None,
                min_freq: int = 1) -> Corpus:
    """Load ``train.txt`` (required), ``valid.txt``/``test.txt`` (optional).

    Builds the vocabulary from the training split unless one is supplied.
    """
    data_dir = Path(data_dir)
    train_path = data_dir / "train.txt"
    if not train_path.exists():
        raise FileNotFoundError(f"missing corpus file: {train_path}")
    train_lines = read_lines(train_path)
    if vocab is None:
        vocab = build_vocab(train_lines, max_size=max_vocab, min_freq=min_freq)
    parts: dict[str, list[TokenSeq]] = {}
    counts: dict[str, int] = {}
    for name in ("train", "valid", "test"):
        path = data_dir / f"{name}.txt"
        if not path.exists():
            parts[name] = []
            continue
        lines = train_lines if name == "train" else read_lines(path)
        parts[name] = [vocab.encode(line, max_len=max_len) for line in lines]
        counts[name] = len(lines)
    return Corpus(vocab=vocab, train=parts["train"], valid=parts["valid"],
                  test=parts["test"], line_counts=counts)
