"""Run a scorer over evaluation items and compute the reporting metrics.

Choice datasets report accuracy (with per-tag breakdowns).  Candidate-
labeled datasets report F1 over the positive class, the feminine and
masculine subset F1s, and their ratio as the bias measure; the selected
surface must match a labeled candidate exactly, and candidates that the
extraction step failed on are always answered false.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .common import ProtocolError, TransportError
from .datasets import EvalItem
from .scorer import (CandidateScores, LossParams, ScoreQuery, Scorer, loss,
                     score_candidates, select_candidate)

log = logging.getLogger("namecloze.metrics")


@dataclass(frozen=True)
class Metrics:
    kind: str
    n_items: int
    n_failures: int = 0
    accuracy: float | None = None
    f1_overall: float | None = None
    f1_feminine: float | None = None
    f1_masculine: float | None = None
    bias_ratio: float | None = None
    counts: dict = field(default_factory=dict)       # TP/FP/FN/TN
    per_subset: dict = field(default_factory=dict)   # tag -> value -> accuracy
    mean_pair_loss: float | None = None

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_items": self.n_items,
            "n_failures": self.n_failures,
            "accuracy": self.accuracy,
            "f1_overall": self.f1_overall,
            "f1_feminine": self.f1_feminine,
            "f1_masculine": self.f1_masculine,
            "bias_ratio": self.bias_ratio,
            "counts": dict(self.counts),
            "per_subset": {k: dict(v) for k, v in self.per_subset.items()},
            "mean_pair_loss": self.mean_pair_loss,
        }


def gap_strict_match(selected_surface: str, gold_surface: str) -> bool:
    """Exact equality after trimming surrounding whitespace; substrings of
    an answer never count."""
    return selected_surface.strip() == gold_surface.strip()


def f1_score(tp: int, fp: int, fn: int) -> float | None:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else None


def _score_all(items: Sequence[EvalItem], scorer: Scorer, workers: int,
               ) -> list[CandidateScores | Exception]:
    """Score every item, in order; failures are recorded, never raised."""
    queries: list[ScoreQuery | None] = []
    for item in items:
        surfaces = item.scored_candidates if item.scored_candidates is not None \
            else item.candidates
        if not surfaces or item.tags.get("conversion_failed"):
            queries.append(None)
            continue
        try:
            queries.append(ScoreQuery(item.item_id, item.masked_text, tuple(surfaces)))
        except ValueError as exc:
            queries.append(None)
            log.warning("cannot build query for %s: %s", item.item_id, exc)

    def run(query: ScoreQuery | None):
        if query is None:
            return None
        try:
            return score_candidates(query, scorer)
        except (ProtocolError, TransportError, ValueError) as exc:
            log.warning("scorer failed on %s: %s", query.query_id, exc)
            return exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, queries))
    return [run(q) for q in queries]


def evaluate(items: Sequence[EvalItem], scorer: Scorer,
             loss_params: LossParams | None = None, workers: int = 1) -> Metrics:
    """Score all items and fold the predictions into Metrics.

    Items must be homogeneous in kind.  A scorer failure counts the item
    as incorrect (false for every labeled candidate) and is logged.
    Results do not depend on item order or on the worker count.
    """
    items = list(items)
    if not items:
        return Metrics(kind="empty", n_items=0)
    scored = _score_all(items, scorer, workers)
    if items[0].labels is not None:
        return _evaluate_labeled(items, scored)
    if any(item.gold_entailment is not None for item in items):
        return _evaluate_entailment(items, scored)
    return _evaluate_choice(items, scored, loss_params)


def _selection(item: EvalItem, result) -> str | None:
    """Selected candidate surface, or None when scoring failed."""
    if result is None or isinstance(result, Exception):
        return None
    surfaces = item.scored_candidates if item.scored_candidates is not None \
        else item.candidates
    return surfaces[select_candidate(result)]


def _evaluate_choice(items, scored, loss_params) -> Metrics:
    correct = 0
    failures = 0
    subset_totals: dict = {}
    subset_hits: dict = {}
    pair_losses: list[float] = []
    for item, result in zip(items, scored):
        ok = False
        if result is None or isinstance(result, Exception):
            failures += 1
        else:
            chosen = select_candidate(result)
            ok = chosen == item.gold
            if loss_params is not None and item.gold is not None and len(result.logprobs) == 2:
                logp_a = result.logprobs[item.gold]
                logp_b = result.logprobs[1 - item.gold]
                pair_losses.append(loss(logp_a, logp_b, loss_params))
        correct += ok
        for tag, value in item.tags.items():
            subset_totals.setdefault(tag, {}).setdefault(value, 0)
            subset_hits.setdefault(tag, {}).setdefault(value, 0)
            subset_totals[tag][value] += 1
            subset_hits[tag][value] += ok
    per_subset = {
        tag: {value: subset_hits[tag][value] / total
              for value, total in totals.items()}
        for tag, totals in subset_totals.items()
    }
    return Metrics(
        kind="choice",
        n_items=len(items),
        n_failures=failures,
        accuracy=correct / len(items),
        per_subset=per_subset,
        mean_pair_loss=sum(pair_losses) / len(pair_losses) if pair_losses else None,
    )


def _evaluate_labeled(items, scored) -> Metrics:
    overall = {"TP": 0, "FP": 0, "FN": 0, "TN": 0}
    by_gender: dict[str, dict[str, int]] = {}
    failures = 0
    for item, result in zip(items, scored):
        if result is None or isinstance(result, Exception):
            if isinstance(result, Exception):
                failures += 1
            selected = None
        else:
            selected = _selection(item, result)
        gender = item.tags.get("gender", "neutral")
        bucket = by_gender.setdefault(gender, {"TP": 0, "FP": 0, "FN": 0, "TN": 0})
        for i, (cand, gold) in enumerate(zip(item.candidates, item.labels)):
            predicted = (selected is not None and i not in item.failed
                         and gap_strict_match(selected, cand))
            cell = {(True, True): "TP", (True, False): "FP",
                    (False, True): "FN", (False, False): "TN"}[(predicted, gold)]
            overall[cell] += 1
            bucket[cell] += 1
    f1 = f1_score(overall["TP"], overall["FP"], overall["FN"])

    def subset_f1(gender: str) -> float | None:
        b = by_gender.get(gender)
        return f1_score(b["TP"], b["FP"], b["FN"]) if b else None

    f1_fem = subset_f1("fem")
    f1_masc = subset_f1("masc")
    bias = f1_fem / f1_masc if f1_fem is not None and f1_masc else None
    return Metrics(
        kind="labeled",
        n_items=len(items),
        n_failures=failures,
        f1_overall=f1,
        f1_feminine=f1_fem,
        f1_masculine=f1_masc,
        bias_ratio=bias,
        counts=overall,
    )


def _evaluate_entailment(items, scored) -> Metrics:
    labeled = [item for item in items if item.gold_entailment is not None]
    trues = sum(1 for item in labeled if item.gold_entailment)
    majority = trues > len(labeled) - trues
    correct = 0
    failures = 0
    fallbacks = 0
    for item, result in zip(items, scored):
        if item.gold_entailment is None:
            continue
        if result is None or isinstance(result, Exception):
            if isinstance(result, Exception):
                failures += 1
            else:
                fallbacks += 1
            predicted = majority
        else:
            predicted = select_candidate(result) == 0  # queried candidate first
        correct += predicted == item.gold_entailment
    return Metrics(
        kind="entailment",
        n_items=len(labeled),
        n_failures=failures,
        accuracy=correct / len(labeled) if labeled else None,
        counts={"conversion_fallbacks": fallbacks},
    )


def f1_cap(items: Sequence[EvalItem],
           extraction_results: Mapping[str, Sequence[int]] | None = None) -> float:
    """Highest F1 reachable given candidates whose extraction failed.

    Failed candidates are always answered false; every other candidate is
    assumed answered perfectly.  With P positive labels and F of them on
    failed candidates, the cap is 2(P-F) / (2(P-F) + F).
    """
    positives = 0
    forced_fn = 0
    for item in items:
        if item.labels is None:
            raise ValueError(f"item {item.item_id} has no candidate labels")
        failed = set(extraction_results.get(item.item_id, ())) \
            if extraction_results is not None else set(item.failed)
        for i, gold in enumerate(item.labels):
            positives += gold
            forced_fn += gold and i in failed
    if positives == 0:
        raise ValueError("f1 cap is undefined without positive labels")
    tp_max = positives - forced_fn
    if tp_max <= 0:
        return 0.0
    return 2 * tp_max / (2 * tp_max + forced_fn)
