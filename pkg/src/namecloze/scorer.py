"""Candidate scoring contract, argmax selection, and the training loss.

A scorer maps a mask-bearing text plus candidate strings to one log-score
per candidate; multi-token candidates must be scored as the mean of their
per-token log-probabilities.  Scores need not be normalized: selection
compares them, and the loss combines the correct and incorrect scores.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Protocol

from .common import MASK_TOKEN, ProtocolError


@dataclass(frozen=True)
class ScoreQuery:
    query_id: str
    masked_text: str            # contains exactly one mask token
    candidates: tuple[str, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("a score query needs at least one candidate")
        if self.masked_text.count(MASK_TOKEN) != 1:
            raise ValueError("masked_text must contain exactly one mask token")


@dataclass(frozen=True)
class CandidateScores:
    query_id: str
    logprobs: tuple[float, ...]


@dataclass(frozen=True)
class LossParams:
    alpha: float = 10.0
    beta: float = 0.2

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")


def loss(logp_a: float, logp_b: float, params: LossParams) -> float:
    """Negative log-likelihood of the correct candidate plus a max-margin
    penalty: -logp_a + alpha * max(0, logp_b - logp_a + beta)."""
    if not (math.isfinite(logp_a) and math.isfinite(logp_b)):
        raise ValueError("loss inputs must be finite")
    return -logp_a + params.alpha * max(0.0, logp_b - logp_a + params.beta)


def select_candidate(scores: CandidateScores) -> int:
    """Index of the best-scoring candidate; ties go to the lowest index."""
    if not scores.logprobs:
        raise ValueError("cannot select from empty scores")
    return max(range(len(scores.logprobs)), key=lambda i: scores.logprobs[i])


class Scorer(Protocol):
    def score(self, query: ScoreQuery) -> CandidateScores: ...


class UnigramScorer:
    """Context-free reference scorer over a token frequency table.

    Each token scores log(count / total); unseen tokens score as a
    configurable floor count.  A candidate scores the mean of its tokens.
    Immutable after construction, so safe for concurrent use.
    """

    def __init__(self, counts: Mapping[str, float], floor_count: float = 1.0):
        total = float(sum(counts.values()))
        if not counts or total <= 0:
            raise ValueError("the frequency table needs a positive total count")
        self._logprobs = {tok: math.log(c / total) for tok, c in counts.items() if c > 0}
        self._floor = math.log(floor_count / total)

    def token_logprobs(self, candidate: str) -> list[float]:
        tokens = candidate.split() or [candidate]
        return [self._logprobs.get(tok, self._floor) for tok in tokens]

    def score(self, query: ScoreQuery) -> CandidateScores:
        means = []
        for candidate in query.candidates:
            per_token = self.token_logprobs(candidate)
            means.append(sum(per_token) / len(per_token))
        return CandidateScores(query.query_id, tuple(means))


def reference_unigram_scorer(counts: Mapping[str, float], floor_count: float = 1.0) -> UnigramScorer:
    return UnigramScorer(counts, floor_count)


def score_candidates(query: ScoreQuery, scorer: Scorer) -> CandidateScores:
    """Run a scorer on a query and enforce the response contract."""
    result = scorer.score(query)
    if result.query_id != query.query_id:
        raise ProtocolError(
            f"scorer answered query {result.query_id!r} instead of {query.query_id!r}")
    if len(result.logprobs) != len(query.candidates):
        raise ProtocolError(
            f"scorer returned {len(result.logprobs)} scores for "
            f"{len(query.candidates)} candidates")
    if not all(math.isfinite(v) for v in result.logprobs):
        raise ProtocolError("scorer returned a non-finite score")
    return result
