"""Adapters that turn the evaluation datasets' release formats into items.

Each loader binds one public release format (tab-separated, XML, or plain
text) and produces generic disambiguation items: a mask-bearing text, an
ordered candidate list, and gold information.  Items carry subset tags
(pronoun gender, stereotype direction, split) used for breakdowns.
"""
from __future__ import annotations

import csv
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .common import MASK_TOKEN, DetectorError, InputError
from .names import name_key

MASCULINE_PRONOUNS = frozenset({"he", "him", "his", "himself"})
FEMININE_PRONOUNS = frozenset({"she", "her", "hers", "herself"})
NEUTRAL_PRONOUNS = frozenset({"they", "them", "their", "theirs", "themselves",
                              "it", "its", "itself"})
ALL_PRONOUNS = MASCULINE_PRONOUNS | FEMININE_PRONOUNS | NEUTRAL_PRONOUNS

DATASET_KINDS = ("wikicrem", "gap", "dpr", "wsc273", "pdp", "wnli",
                 "winogender", "winobias")


@dataclass(frozen=True)
class EvalItem:
    """One disambiguation instance in any of the supported datasets."""

    item_id: str
    masked_text: str
    candidates: tuple[str, ...]
    gold: int | None = None                      # index for choice datasets
    labels: tuple[bool, ...] | None = None       # per-candidate booleans (both may be false)
    gold_entailment: bool | None = None          # entailment-style items
    tags: dict = field(default_factory=dict)
    source_text: str | None = None               # unmasked passage, when known
    scored_candidates: tuple[str, ...] | None = None  # surfaces sent to the scorer
    failed: tuple[int, ...] = ()                 # candidate indices forced to false

    def __post_init__(self):
        if self.gold is not None and not (0 <= self.gold < len(self.candidates)):
            raise ValueError(f"gold index {self.gold} out of range for {self.item_id}")
        if self.labels is not None and len(self.labels) != len(self.candidates):
            raise ValueError(f"label arity mismatch on {self.item_id}")


def pronoun_gender(pronoun: str) -> str:
    p = pronoun.strip().lower()
    if p in MASCULINE_PRONOUNS:
        return "masc"
    if p in FEMININE_PRONOUNS:
        return "fem"
    return "neutral"


def _mask_span(text: str, start: int, end: int) -> str:
    return text[:start] + MASK_TOKEN + text[end:]


def _find_word(text: str, word: str, flags: int = 0) -> re.Match | None:
    return re.search(rf"(?<!\w){re.escape(word)}(?!\w)", text, flags)


def load_dataset(kind: str, path: str | Path, *, split: str | None = None,
                 noun_lexicon: frozenset[str] | None = None) -> list[EvalItem]:
    """Load one dataset file into items; raises InputError on bad records."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"dataset file not found: {path}")
    if kind == "wikicrem":
        return load_wikicrem(path)
    if kind == "gap":
        return load_gap(path, split=split)
    if kind == "dpr":
        return load_dpr(path, split=split)
    if kind in ("wsc273", "pdp"):
        return load_schema_xml(path, kind=kind)
    if kind == "wnli":
        return load_wnli(path, noun_lexicon=noun_lexicon)
    if kind == "winogender":
        return load_winogender(path)
    if kind == "winobias":
        return load_winobias(path)
    raise InputError(f"unknown dataset kind: {kind}")


# --- mined records ------------------------------------------------------------


def load_wikicrem(path: Path) -> list[EvalItem]:
    from .mining import read_records

    items = []
    for ex in read_records(path):
        items.append(EvalItem(
            item_id=ex.example_id,
            masked_text=ex.masked_text,
            candidates=(ex.correct, ex.incorrect),
            gold=0,
        ))
    return items


# --- GAP ----------------------------------------------------------------------

_GAP_HEADER = ["ID", "Text", "Pronoun", "Pronoun-offset", "A", "A-offset",
               "A-coref", "B", "B-offset", "B-coref", "URL"]


def _gap_split_from_name(name: str) -> str:
    low = name.lower()
    if "development" in low:
        return "train"
    if "validation" in low:
        return "val"
    if "test" in low:
        return "test"
    return "unknown"


def load_gap(path: Path, split: str | None = None) -> list[EvalItem]:
    split = split or _gap_split_from_name(path.name)
    items = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if header != _GAP_HEADER:
            raise InputError(f"{path}: unexpected header {header!r}")
        for recno, row in enumerate(reader, start=1):
            if len(row) != len(_GAP_HEADER):
                raise InputError(f"{path}: record {recno}: expected "
                                 f"{len(_GAP_HEADER)} columns, got {len(row)}")
            rid, text, pronoun, off, a, _, a_coref, b, _, b_coref, _ = row
            try:
                offset = int(off)
            except ValueError as exc:
                raise InputError(f"{path}: record {recno}: bad offset {off!r}") from exc
            if text[offset:offset + len(pronoun)] != pronoun:
                raise InputError(f"{path}: record {recno}: pronoun/offset mismatch")
            if a_coref not in ("TRUE", "FALSE") or b_coref not in ("TRUE", "FALSE"):
                raise InputError(f"{path}: record {recno}: bad coref label")
            items.append(EvalItem(
                item_id=rid,
                masked_text=_mask_span(text, offset, offset + len(pronoun)),
                candidates=(a, b),
                labels=(a_coref == "TRUE", b_coref == "TRUE"),
                tags={"split": split, "gender": pronoun_gender(pronoun)},
                source_text=text,
            ))
    return items


def gap_discard_unanswerable(items: Iterable[EvalItem]) -> list[EvalItem]:
    """Drop training items where neither candidate is correct.

    Validation and test items pass through untouched.
    """
    kept = []
    for item in items:
        if (item.tags.get("split") == "train" and item.labels is not None
                and not any(item.labels)):
            continue
        kept.append(item)
    return kept


def extract_gap_candidates(passage_text: str, detector) -> list[str]:
    """Ordered distinct person-name surfaces found in a passage."""
    seen = []
    for _, start, end in detector.detect_text(passage_text):
        key = name_key(passage_text[start:end])
        if key not in seen:
            seen.append(key)
    return seen


def prepare_gap(items: Sequence[EvalItem], detector) -> tuple[list[EvalItem], int]:
    """Attach extracted candidates and extraction-failure flags to items.

    A labeled candidate missing from the extracted list is flagged; its
    answer defaults to false during evaluation.  Detector failures flag
    the whole item and are counted.
    """
    prepared = []
    detector_failures = 0
    for item in items:
        text = item.source_text if item.source_text is not None else item.masked_text
        try:
            extracted = extract_gap_candidates(text, detector)
        except DetectorError:
            detector_failures += 1
            extracted = []
        surfaces = {c.strip() for c in extracted}
        failed = tuple(i for i, cand in enumerate(item.candidates)
                       if cand.strip() not in surfaces)
        prepared.append(replace(item, scored_candidates=tuple(extracted), failed=failed))
    return prepared, detector_failures


# --- DPR ------------------------------------------------------------------------


def _dpr_split_from_name(name: str) -> str:
    return "test" if "test" in name.lower() else "train"


def load_dpr(path: Path, split: str | None = None) -> list[EvalItem]:
    """DPR release format: blocks of four lines separated by blank lines,
    holding the sentence, the pronoun, the comma-separated candidate pair,
    and the correct candidate."""
    split = split or _dpr_split_from_name(path.name)
    raw = path.read_text("utf-8")
    blocks = [b for b in re.split(r"\n\s*\n", raw) if b.strip()]
    items = []
    for recno, block in enumerate(blocks, start=1):
        lines = [ln.strip() for ln in block.strip().splitlines()]
        if len(lines) != 4:
            raise InputError(f"{path}: record {recno}: expected 4 lines, got {len(lines)}")
        sentence, pronoun, cand_line, answer = lines
        candidates = tuple(c.strip() for c in cand_line.split(","))
        if len(candidates) != 2 or not all(candidates):
            raise InputError(f"{path}: record {recno}: bad candidate line {cand_line!r}")
        match = _find_word(sentence, pronoun)
        if match is None:
            raise InputError(f"{path}: record {recno}: pronoun {pronoun!r} not in sentence")
        gold = next((i for i, c in enumerate(candidates)
                     if c.lower() == answer.strip().lower()), None)
        if gold is None:
            raise InputError(f"{path}: record {recno}: answer {answer!r} "
                             f"matches neither candidate")
        items.append(EvalItem(
            item_id=f"dpr-{split}-{recno}",
            masked_text=_mask_span(sentence, match.start(), match.end()),
            candidates=candidates,
            gold=gold,
            tags={"split": split, "gender": pronoun_gender(pronoun)},
            source_text=sentence,
        ))
    return items


def _normalized_text(item: EvalItem) -> str:
    return re.sub(r"\s+", " ", item.masked_text).strip().casefold()


def dedupe_dpr(dpr_train: Sequence[EvalItem],
               wsc_items: Sequence[EvalItem]) -> tuple[list[EvalItem], int]:
    """Remove training items whose normalized text matches a schema item."""
    wsc_norms = {_normalized_text(item) for item in wsc_items}
    kept = [item for item in dpr_train if _normalized_text(item) not in wsc_norms]
    return kept, len(dpr_train) - len(kept)


# --- Winograd schema XML collections (wsc273, pdp) -------------------------------


def _collapse(text: str | None) -> str:
    return re.sub(r"\s+", " ", text or "").strip()


def load_schema_xml(path: Path, kind: str = "wsc273") -> list[EvalItem]:
    """XML collections of schemas: txt1 / pron / txt2 plus lettered answers."""
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise InputError(f"{path}: bad XML: {exc}") from exc
    items = []
    for recno, schema in enumerate(root.iter("schema"), start=1):
        text_el = schema.find("text")
        answers_el = schema.find("answers")
        correct_el = schema.find("correctAnswer")
        if text_el is None or answers_el is None or correct_el is None:
            raise InputError(f"{path}: record {recno}: missing schema elements")
        txt1 = _collapse(text_el.findtext("txt1"))
        pron = _collapse(text_el.findtext("pron"))
        txt2 = _collapse(text_el.findtext("txt2"))
        if not pron:
            raise InputError(f"{path}: record {recno}: missing pronoun")
        pieces = [p for p in (txt1, MASK_TOKEN, txt2) if p]
        masked = " ".join(pieces)
        candidates = tuple(_collapse(ans.text) for ans in answers_el.iter("answer"))
        if len(candidates) < 2:
            raise InputError(f"{path}: record {recno}: needs at least two answers")
        letter = _collapse(correct_el.text).rstrip(".").upper()
        gold = ord(letter) - ord("A") if len(letter) == 1 else -1
        if not (0 <= gold < len(candidates)):
            raise InputError(f"{path}: record {recno}: bad correctAnswer {letter!r}")
        items.append(EvalItem(
            item_id=f"{kind}-{recno}",
            masked_text=masked,
            candidates=candidates,
            gold=gold,
            tags={"gender": pronoun_gender(pron)},
        ))
    return items


# --- WNLI -------------------------------------------------------------------------

_WORD_RE = re.compile(r"[\w'’]+")


class ConversionError(Exception):
    """Premise/hypothesis alignment failed for an entailment pair."""


def default_noun_lexicon() -> frozenset[str]:
    text = resources.files("namecloze.data").joinpath("nouns.txt").read_text("utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines()
                     if line.strip() and not line.startswith("#"))


def find_noun_phrases(text: str, lexicon: frozenset[str]) -> list[str]:
    """Heuristic noun-phrase finder: determiner-led runs of known nouns or
    capitalized words, plus bare known nouns."""
    tokens = list(_WORD_RE.finditer(text))
    determiners = {"the", "a", "an", "this", "that", "these", "those"}

    def nominal(tok: re.Match) -> bool:
        word = tok.group()
        return word.lower() in lexicon or word[0].isupper()

    phrases = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.group().lower() in determiners and i + 1 < len(tokens) and nominal(tokens[i + 1]):
            j = i + 1
            while j + 1 < len(tokens) and nominal(tokens[j + 1]):
                j += 1
            phrases.append(text[tok.start():tokens[j].end()])
            i = j + 1
        elif tok.group().lower() in lexicon:
            phrases.append(tok.group())
            i += 1
        else:
            i += 1
    return phrases


def wnli_to_schema(premise: str, hypothesis: str,
                   noun_lexicon: frozenset[str] | None = None,
                   ) -> tuple[str, str, list[str]]:
    """Reverse the hypothesis construction: locate the premise span the
    hypothesis copied, mask the pronoun it replaced, and return
    (masked_premise, queried_candidate, alternative_candidates).

    The alignment maximizes the contiguous token overlap around the
    substituted position.  Raises ConversionError when no pronoun position
    aligns.
    """
    if not premise.strip() or not hypothesis.strip():
        raise ConversionError("empty premise or hypothesis")
    lexicon = noun_lexicon if noun_lexicon is not None else default_noun_lexicon()
    prem_tokens = list(_WORD_RE.finditer(premise))
    hyp_tokens = list(_WORD_RE.finditer(hypothesis))
    prem_words = [t.group().casefold() for t in prem_tokens]
    hyp_words = [t.group().casefold() for t in hyp_tokens]
    if not hyp_tokens:
        raise ConversionError("hypothesis has no tokens")

    best = None  # (matched, pronoun_index, left, right)
    for p, word in enumerate(prem_words):
        if word not in ALL_PRONOUNS:
            continue
        left = _longest_prefix_match(hyp_words, prem_words, p)
        right = _longest_suffix_match(hyp_words, prem_words, p, left)
        matched = left + right
        if matched >= 1 and (best is None or matched > best[0]):
            best = (matched, p, left, right)
    if best is None:
        raise ConversionError("no pronoun position aligns with the hypothesis")
    _, p, left, right = best
    cand_start = hyp_tokens[left].start()
    cand_end = hyp_tokens[len(hyp_tokens) - right - 1].end()
    queried = hypothesis[cand_start:cand_end]
    pron_tok = prem_tokens[p]
    masked = _mask_span(premise, pron_tok.start(), pron_tok.end())

    def norm(s: str) -> str:
        return re.sub(r"\s+", " ", s).strip().casefold()

    alternatives = []
    for phrase in find_noun_phrases(premise, lexicon):
        if norm(phrase) == norm(queried):
            continue
        if norm(phrase) not in {norm(a) for a in alternatives}:
            alternatives.append(phrase)
    return masked, queried, alternatives


def _longest_prefix_match(hyp_words: list[str], prem_words: list[str], p: int) -> int:
    """Longest k with hyp_words[:k] == prem_words[p-k:p]."""
    best = 0
    for k in range(1, min(len(hyp_words), p) + 1):
        if hyp_words[:k] == prem_words[p - k:p]:
            best = k
    return best


def _longest_suffix_match(hyp_words: list[str], prem_words: list[str],
                          p: int, left: int) -> int:
    """Longest k with hyp_words[-k:] == prem_words[p+1:p+1+k], leaving a
    nonempty middle."""
    best = 0
    limit = min(len(hyp_words) - left - 1, len(prem_words) - p - 1)
    for k in range(1, limit + 1):
        if hyp_words[len(hyp_words) - k:] == prem_words[p + 1:p + 1 + k]:
            best = k
    return best


def load_wnli(path: Path, noun_lexicon: frozenset[str] | None = None) -> list[EvalItem]:
    """GLUE-style tab-separated rows: index, sentence1, sentence2[, label]."""
    items = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if not header or header[0].lower() != "index":
            raise InputError(f"{path}: missing WNLI header")
        has_label = len(header) >= 4 and header[3].lower() == "label"
        for recno, row in enumerate(reader, start=1):
            if len(row) < 3:
                raise InputError(f"{path}: record {recno}: too few columns")
            index, premise, hypothesis = row[0], row[1], row[2]
            gold = None
            if has_label:
                if row[3] not in ("0", "1"):
                    raise InputError(f"{path}: record {recno}: bad label {row[3]!r}")
                gold = row[3] == "1"
            try:
                masked, queried, alternatives = wnli_to_schema(
                    premise, hypothesis, noun_lexicon)
                candidates = (queried, *alternatives)
                items.append(EvalItem(
                    item_id=f"wnli-{index}",
                    masked_text=masked,
                    candidates=candidates,
                    gold_entailment=gold,
                    tags={},
                    source_text=premise,
                    scored_candidates=candidates,
                ))
            except ConversionError:
                items.append(EvalItem(
                    item_id=f"wnli-{index}",
                    masked_text=premise,
                    candidates=(),
                    gold_entailment=gold,
                    tags={"conversion_failed": "1"},
                    source_text=premise,
                ))
    return items


# --- WinoGender ---------------------------------------------------------------

_WINOGENDER_PRONOUNS = {
    "male": ("he", "his", "him"),
    "female": ("she", "her", "hers"),
    "neutral": ("they", "their", "them", "theirs"),
}


def load_winogender(path: Path) -> list[EvalItem]:
    """Tab-separated sentid/sentence pairs; the sentid encodes occupation,
    participant, answer index, and pronoun gender."""
    items = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = next(reader, None)
        if not header or header[0].lower() != "sentid":
            raise InputError(f"{path}: missing winogender header")
        for recno, row in enumerate(reader, start=1):
            if len(row) != 2:
                raise InputError(f"{path}: record {recno}: expected 2 columns")
            sentid, sentence = row
            fields = sentid.split(".")
            if fields and fields[-1] == "txt":
                fields = fields[:-1]
            if len(fields) != 4:
                raise InputError(f"{path}: record {recno}: bad sentid {sentid!r}")
            occupation, participant, answer, gender = fields
            if gender not in _WINOGENDER_PRONOUNS or answer not in ("0", "1"):
                raise InputError(f"{path}: record {recno}: bad sentid {sentid!r}")
            match = None
            for pronoun in _WINOGENDER_PRONOUNS[gender]:
                match = _find_word(sentence, pronoun, re.IGNORECASE)
                if match:
                    break
            if match is None:
                raise InputError(f"{path}: record {recno}: no {gender} pronoun found")
            items.append(EvalItem(
                item_id=sentid,
                masked_text=_mask_span(sentence, match.start(), match.end()),
                candidates=(occupation, participant),
                gold=int(answer),
                tags={"gender": {"male": "masc", "female": "fem"}.get(gender, "neutral")},
                source_text=sentence,
            ))
    return items


# --- WinoBias -----------------------------------------------------------------


def default_occupations() -> tuple[str, ...]:
    text = resources.files("namecloze.data").joinpath("winobias_occupations.txt").read_text("utf-8")
    occs = [line.strip() for line in text.splitlines()
            if line.strip() and not line.startswith("#")]
    return tuple(sorted(occs, key=len, reverse=True))


def _winobias_tags(name: str) -> dict:
    low = name.lower()
    tags = {}
    if "type1" in low or "type_1" in low:
        tags["type"] = "type1"
    elif "type2" in low or "type_2" in low:
        tags["type"] = "type2"
    if "anti" in low:
        tags["stereo"] = "anti"
    elif "pro" in low:
        tags["stereo"] = "pro"
    if low.endswith(".dev") or ".dev." in low:
        tags["split"] = "val"
    elif low.endswith(".test") or ".test." in low:
        tags["split"] = "test"
    return tags


def load_winobias(path: Path) -> list[EvalItem]:
    """Numbered sentences with the referent and the pronoun in brackets."""
    occupations = default_occupations()
    occ_pattern = re.compile(
        r"\b(?:[Tt]he|[Aa]n?)\s+(?:" + "|".join(re.escape(o) for o in occupations) + r")\b")
    base_tags = _winobias_tags(path.name)
    items = []
    for recno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        line = re.sub(r"^\d+\s+", "", line)
        brackets = list(re.finditer(r"\[([^\]]+)\]", line))
        if len(brackets) != 2:
            raise InputError(f"{path}: record {recno}: expected 2 bracketed spans")
        contents = [b.group(1) for b in brackets]
        pron_pos = [i for i, c in enumerate(contents) if c.strip().lower() in ALL_PRONOUNS]
        if len(pron_pos) != 1:
            raise InputError(f"{path}: record {recno}: cannot tell pronoun from entity")
        pron_i = pron_pos[0]
        entity_i = 1 - pron_i
        # rebuild the sentence without brackets, tracking the two spans
        clean = []
        pos = 0
        spans = []
        for b in brackets:
            clean.append(line[pos:b.start()])
            start = sum(len(c) for c in clean)
            clean.append(b.group(1))
            spans.append((start, start + len(b.group(1))))
            pos = b.end()
        clean.append(line[pos:])
        text = "".join(clean)
        entity_span = spans[entity_i]
        pron_span = spans[pron_i]
        entity = text[entity_span[0]:entity_span[1]]
        alternative = None
        for m in occ_pattern.finditer(text):
            overlaps_entity = m.start() < entity_span[1] and m.end() > entity_span[0]
            if not overlaps_entity:
                alternative = m
                break
        if alternative is None:
            raise InputError(f"{path}: record {recno}: no alternative occupation found")
        first, second = sorted([(entity_span[0], entity, True),
                                (alternative.start(), alternative.group(), False)])
        candidates = (first[1], second[1])
        gold = 0 if first[2] else 1
        items.append(EvalItem(
            item_id=f"winobias-{path.name}-{recno}",
            masked_text=_mask_span(text, pron_span[0], pron_span[1]),
            candidates=candidates,
            gold=gold,
            tags=dict(base_tags,
                      gender=pronoun_gender(text[pron_span[0]:pron_span[1]])),
            source_text=text,
        ))
    return items
