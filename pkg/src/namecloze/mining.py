"""Generate masked disambiguation examples from name repetitions.

A passage qualifies when a name key occurs at least twice and a distinct
alternative name appears before the repeated occurrence that gets masked:
either everything sits in one sentence (the repeat after both names), or
both names sit in the first sentence of a pair and the repeat in the
second.  When presence in the masked sentence separates the two
candidates (one is there, the other is not), the pair is discarded as too
easy.  Each surviving alternative yields one example.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

from .common import InputError, MASK_TOKEN
from .names import NameMention, name_key
from .textio import Passage

RECORD_FIELDS = ("example_id", "masked_text", "correct", "incorrect",
                 "doc_id", "mask_offset", "passage_start", "passage_end")


@dataclass(frozen=True)
class MaskedExample:
    example_id: str
    masked_text: str      # passage text with one occurrence replaced by [MASK]
    correct: str          # key surface of the masked name
    incorrect: str        # key surface of the alternative candidate
    doc_id: str
    mask_offset: int      # offset of the mask token within masked_text
    passage_start: int    # document char offsets of the source passage
    passage_end: int


def example_id(doc_id: str, absolute_mask_offset: int, incorrect: str) -> str:
    digest = hashlib.sha256(
        f"{doc_id}\t{absolute_mask_offset}\t{incorrect}".encode("utf-8")
    ).hexdigest()
    return digest[:16]


def _key_occurrences(mentions: Sequence[NameMention]) -> dict[str, list[NameMention]]:
    occs: dict[str, list[NameMention]] = {}
    for m in mentions:
        occs.setdefault(name_key(m.surface), []).append(m)
    return occs


def _build(passage: Passage, m: NameMention, alternative: str) -> MaskedExample:
    masked = passage.text[:m.start] + MASK_TOKEN + passage.text[m.end:]
    return MaskedExample(
        example_id=example_id(passage.doc_id, passage.start + m.start, alternative),
        masked_text=masked,
        correct=name_key(m.surface),
        incorrect=alternative,
        doc_id=passage.doc_id,
        mask_offset=m.start,
        passage_start=passage.start,
        passage_end=passage.end,
    )


def generate(passage: Passage, mentions: Sequence[NameMention],
             counters: dict | None = None) -> list[MaskedExample]:
    """Emit one example per (repeated name, alternative) the rules admit.

    Ineligible passages produce an empty list.  For a name repeating three
    or more times only the earliest eligible non-first occurrence is
    masked.  Output is ordered by (mask offset, alternative key).
    """
    def count(reason: str) -> None:
        if counters is not None:
            counters[reason] = counters.get(reason, 0) + 1

    if MASK_TOKEN in passage.text:
        count("mask_token_collision")
        return []
    occs = _key_occurrences(mentions)
    repeated = [k for k, v in occs.items() if len(v) >= 2]
    if not repeated or len(occs) < 2:
        count("no_repeated_name" if not repeated else "no_alternative")
        return []
    two_sentences = passage.boundary is not None
    out: list[MaskedExample] = []
    for key in repeated:
        site, alternatives = _mask_site(key, occs, two_sentences, count)
        if site is not None:
            out.extend(_build(passage, site, alt) for alt in alternatives)
    if not out:
        count("no_eligible_site")
    return sorted(out, key=lambda ex: (ex.mask_offset, ex.incorrect))


def _mask_site(key: str, occs: dict[str, list[NameMention]], two_sentences: bool,
               count) -> tuple[NameMention | None, list[str]]:
    """Earliest non-first occurrence of ``key`` with surviving alternatives."""
    mine = occs[key]
    others = [k for k in occs if k != key]
    for m in mine[1:]:
        if two_sentences:
            if m.sentence_index != 1:
                continue
            if not any(o.sentence_index == 0 for o in mine):
                continue
            eligible = [b for b in others
                        if any(o.sentence_index == 0 for o in occs[b])]
            own_in_masked = any(o is not m and o.sentence_index == 1 for o in mine)
            alternatives = []
            for b in eligible:
                alt_in_masked = any(o.sentence_index == 1 for o in occs[b])
                if own_in_masked != alt_in_masked:
                    count("discarded_same_sentence_rule")
                    continue
                alternatives.append(b)
        else:
            alternatives = [b for b in others
                            if any(o.start < m.start for o in occs[b])]
        if alternatives:
            return m, sorted(alternatives)
    return None, []


def brute_force_generate(passage: Passage, mentions: Sequence[NameMention]) -> list[MaskedExample]:
    """Test oracle: exhaustive enumeration with the rules restated literally.

    Every (repeated key, non-first occurrence, alternative key) triple is
    checked against its own predicate functions; shares nothing with
    ``generate`` beyond the data types.
    """
    if MASK_TOKEN in passage.text:
        return []
    keys: dict[str, list[NameMention]] = {}
    for mention in mentions:
        keys.setdefault(name_key(mention.surface), []).append(mention)
    single_sentence = passage.boundary is None

    def is_non_first(occ: NameMention, key: str) -> bool:
        return any(o.start < occ.start for o in keys[key])

    def positional_rule_holds(masked: NameMention, repeat: str, alt: str) -> bool:
        if single_sentence:
            repeat_before = any(o.start < masked.start for o in keys[repeat] if o is not masked)
            alt_before = any(o.start < masked.start for o in keys[alt])
            return repeat_before and alt_before
        in_following = masked.sentence_index == 1
        repeat_in_first = any(o.sentence_index == 0 for o in keys[repeat] if o is not masked)
        alt_in_first = any(o.sentence_index == 0 for o in keys[alt])
        return in_following and repeat_in_first and alt_in_first

    def same_sentence_discard(masked: NameMention, repeat: str, alt: str) -> bool:
        repeat_present = any(
            o is not masked and o.sentence_index == masked.sentence_index
            for o in keys[repeat]
        )
        alt_present = any(o.sentence_index == masked.sentence_index for o in keys[alt])
        return repeat_present != alt_present

    surviving: list[tuple[str, NameMention, str]] = []
    for repeat in sorted(keys):
        if len(keys[repeat]) < 2:
            continue
        for masked in keys[repeat]:
            if not is_non_first(masked, repeat):
                continue
            for alt in sorted(keys):
                if alt == repeat:
                    continue
                if not positional_rule_holds(masked, repeat, alt):
                    continue
                if same_sentence_discard(masked, repeat, alt):
                    continue
                surviving.append((repeat, masked, alt))

    out = []
    for repeat in sorted({r for r, _, _ in surviving}):
        triples = [t for t in surviving if t[0] == repeat]
        earliest = min(t[1].start for t in triples)
        for _, masked, alt in triples:
            if masked.start != earliest:
                continue
            text = passage.text
            masked_text = "".join((text[:masked.start], MASK_TOKEN, text[masked.end:]))
            out.append(MaskedExample(
                example_id=example_id(passage.doc_id, passage.start + masked.start, alt),
                masked_text=masked_text,
                correct=name_key(masked.surface),
                incorrect=alt,
                doc_id=passage.doc_id,
                mask_offset=masked.start,
                passage_start=passage.start,
                passage_end=passage.end,
            ))
    return sorted(out, key=lambda ex: (ex.mask_offset, ex.incorrect))


def holdout_split(examples: Iterable[MaskedExample], n: int, seed: int,
                  ) -> tuple[list[MaskedExample], list[MaskedExample]]:
    """Split into (train, validation) by seeded sampling without replacement.

    The validation set has exactly ``n`` examples; both halves keep the
    input order.  Raises ValueError when n exceeds the dataset size.
    """
    pool = list(examples)
    if n > len(pool):
        raise ValueError(f"holdout size {n} exceeds dataset size {len(pool)}")
    chosen = set(random.Random(seed).sample(range(len(pool)), n))
    validation = [ex for i, ex in enumerate(pool) if i in chosen]
    train = [ex for i, ex in enumerate(pool) if i not in chosen]
    return train, validation


# --- canonical dataset records ----------------------------------------------


def to_record(ex: MaskedExample) -> dict:
    data = asdict(ex)
    return {field: data[field] for field in RECORD_FIELDS}


def from_record(data: dict) -> MaskedExample:
    try:
        return MaskedExample(**{field: data[field] for field in RECORD_FIELDS})
    except KeyError as exc:
        raise InputError(f"dataset record is missing key {exc}") from exc


def write_records(target: str | Path | IO[str], examples: Iterable[MaskedExample]) -> int:
    """Write examples as UTF-8 line-delimited JSON; returns the count."""
    if hasattr(target, "write"):
        return _write_stream(target, examples)
    with open(target, "w", encoding="utf-8") as handle:
        return _write_stream(handle, examples)


def _write_stream(handle: IO[str], examples: Iterable[MaskedExample]) -> int:
    count = 0
    for ex in examples:
        handle.write(json.dumps(to_record(ex), ensure_ascii=False) + "\n")
        count += 1
    return count


def read_records(path: str | Path) -> Iterator[MaskedExample]:
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read dataset {path}: {exc}") from exc
    with handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield from_record(json.loads(line))
            except (json.JSONDecodeError, InputError, TypeError) as exc:
                raise InputError(f"{path}:{lineno}: bad dataset record: {exc}") from exc


def mine_document_passages(passages_with_mentions, counters: dict | None = None,
                           ) -> list[MaskedExample]:
    """Mine all windows of one document, deduplicating across windows.

    ``passages_with_mentions`` is an iterable of (passage, mentions) in
    window order (single sentences first, then pairs), so an example seen
    from a smaller window suppresses the identical (document, absolute
    mask offset, alternative) from a larger one.
    """
    seen: set[str] = set()
    kept: list[MaskedExample] = []
    for passage, mentions in passages_with_mentions:
        for ex in generate(passage, mentions, counters):
            if ex.example_id in seen:
                if counters is not None:
                    counters["dedup_suppressed"] = counters.get("dedup_suppressed", 0) + 1
                continue
            seen.add(ex.example_id)
            kept.append(ex)
    return kept
