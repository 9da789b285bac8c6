"""Question answering with a frozen model: candidate ranking and
slot-based answer generation.

A question is paired with a candidate answer by concatenating the
question content, a literal "?" token, and the answer content. The
candidate is scored by how far the latent code of that pairing lands
from the code of the same question paired with a run of <UNK> slots of
the answer's length, normalized by the slot posterior's std:
score = ||z_unk - z_cand|| / sigma_unk. Lower is better.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import model as mdl
from .errors import ConfigError, DataError
from .model import ModelParams
from .rng import RngStream
from .text import EOT, UNK, TokenSeq, Vocabulary

__all__ = [
    "QAItem", "QAResult", "question_mark_id", "compose_pair", "score_candidate",
    "rank_candidates", "rank_and_metrics", "generate_answer", "load_qa_jsonl",
]


@dataclass(frozen=True)
class QAItem:
    """A question and ordered candidate answers; index 0 is ground truth."""

    question: TokenSeq
    answers: tuple[TokenSeq, ...]

    def __post_init__(self):
        if len(self.answers) < 2:
            raise DataError(f"QA item needs at least 2 candidate answers, got {len(self.answers)}")


@dataclass
class QAResult:
    rankings: list[list[int]]  # candidate indices, best first, per item
    true_ranks: list[int]  # 1-based rank of candidate 0
    p_at_1: float
    mrr: float


def question_mark_id(vocab: Vocabulary) -> int:
    qid = vocab.token_to_id.get("?")
    if qid is None:
        raise ConfigError('QA scoring requires a "?" token in the vocabulary')
    return qid


def compose_pair(question: TokenSeq, answer: TokenSeq | int, qmark_id: int) -> TokenSeq:
    """question content ++ "?" ++ answer content ++ <EOT>.

    Passing an int instead of an answer builds the unknown-answer variant
    with that many <UNK> slots.
    """
    if isinstance(answer, int):
        if answer < 1:
            raise ConfigError(f"unk slot length must be >= 1, got {answer}")
        tail: tuple[int, ...] = (UNK,) * answer
    else:
        tail = answer.content
    return TokenSeq(question.content + (qmark_id,) + tail + (EOT,))


def _scalar_sigma(sigma_vec: np.ndarray, reduce: str) -> float:
    if reduce == "l2":
        return float(np.linalg.norm(sigma_vec))
    if reduce == "mean":
        return float(sigma_vec.mean())
    raise ConfigError(f"sigma reduction must be 'l2' or 'mean', got {reduce!r}")


def _code(params: ModelParams, seq: TokenSeq, rng: Optional[RngStream],
          use_mean: bool):
    q = mdl.encode_posterior(params, seq)
    z = q.mu_array if use_mean else mdl.sample_latent(q, rng).data
    return z, q.sigma_array


def score_candidate(params: ModelParams, question: TokenSeq, answer: TokenSeq,
                    rng: RngStream, qmark_id: Optional[int] = None,
                    sigma_reduce: str = "l2", use_mean: bool = False,
                    method: str = "distance") -> float:
    """Score one candidate; lower ranks better.

    ``method='distance'`` is the normalized latent distance described
    above. ``method='neg_logq'`` is an experimental alternative: the
    negative log-density of the candidate code under the slot posterior.
    """
    if qmark_id is None:
        raise ConfigError("score_candidate needs the vocabulary's '?' id")
    slot_len = max(1, len(answer.content))
    z_cand, _ = _code(params, compose_pair(question, answer, qmark_id),
                      rng.split("cand"), use_mean)
    q_unk = mdl.encode_posterior(params, compose_pair(question, slot_len, qmark_id))
    z_unk = (q_unk.mu_array if use_mean
             else mdl.sample_latent(q_unk, rng.split("unk")).data)
    sigma_vec = q_unk.sigma_array
    if method == "distance":
        return float(np.linalg.norm(z_unk - z_cand)) / _scalar_sigma(sigma_vec, sigma_reduce)
    if method == "neg_logq":
        diff = z_cand - q_unk.mu_array
        logq = float(-0.5 * np.sum(diff ** 2 / sigma_vec ** 2)
                     - np.sum(np.log(sigma_vec))
                     - 0.5 * diff.size * np.log(2.0 * np.pi))
        return -logq
    raise ConfigError(f"unknown scoring method {method!r}")


def rank_candidates(params: ModelParams, item: QAItem, rng: RngStream,
                    qmark_id: int, **score_kwargs) -> list[int]:
    """Candidate indices sorted by ascending score; ties keep input order."""
    scores = [score_candidate(params, item.question, a, rng.split("cand_rng", k),
                              qmark_id=qmark_id, **score_kwargs)
              for k, a in enumerate(item.answers)]
    return sorted(range(len(scores)), key=lambda k: scores[k])


def rank_and_metrics(params: ModelParams, items: Sequence[QAItem], rng: RngStream,
                     qmark_id: Optional[int] = None, **score_kwargs) -> QAResult:
    """P@1 and mean reciprocal rank of the true answer (candidate 0)."""
    if not items:
        raise ConfigError("rank_and_metrics requires at least one item")
    rankings = []
    true_ranks = []
    for i, item in enumerate(items):
        ranking = rank_candidates(params, item, rng.split("item", i),
                                  qmark_id=qmark_id, **score_kwargs)
        rankings.append(ranking)
        true_ranks.append(ranking.index(0) + 1)
    n = len(items)
    p_at_1 = sum(1 for r in true_ranks if r == 1) / n
    mrr = sum(1.0 / r for r in true_ranks) / n
    return QAResult(rankings=rankings, true_ranks=true_ranks, p_at_1=p_at_1, mrr=mrr)


def generate_answer(params: ModelParams, question: TokenSeq, slot_len: int,
                    rng: RngStream, qmark_id: int, max_len: int = 128,
                    banned: frozenset[int] = frozenset({UNK})) -> TokenSeq:
    """Greedy answer generation through the unknown-slot pairing.

    Encodes question ++ "?" ++ <UNK>*slot_len, decodes greedily with
    <UNK> banned, and returns everything after the first generated "?"
    (empty if none appears). The slot count steers answer length.
    """
    q_unk = mdl.encode_posterior(params, compose_pair(question, slot_len, qmark_id))
    z = mdl.sample_latent(q_unk, rng.split("z")).data
    decoded = mdl.decode_sample(params, z, strategy="greedy", banned=banned,
                                max_len=max_len, rng=rng.split("decode"))
    content = decoded.content
    if qmark_id in content:
        content = content[content.index(qmark_id) + 1 :]
    else:
        content = ()
    return TokenSeq(content + (EOT,))


def load_qa_jsonl(path: str | Path, vocab: Vocabulary, max_len: int = 128) -> list[QAItem]:
    """Read items from JSON lines: {"question": str, "answers": [str, ...]}.

    ``answers[0]`` is the ground-truth answer.
    """
    items = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}:{lineno}: invalid JSON ({e})")
        if "question" not in obj or "answers" not in obj:
            raise DataError(f"{path}:{lineno}: expected 'question' and 'answers' keys")
        items.append(QAItem(
            question=vocab.encode(obj["question"], max_len=max_len),
            answers=tuple(vocab.encode(a, max_len=max_len) for a in obj["answers"]),
        ))
    if not items:
        raise DataError(f"{path}: no QA items found")
    return items
