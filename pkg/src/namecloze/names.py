"""Personal-name mention detection and name identity.

The built-in detector combines a given-name/surname gazetteer with
capitalization heuristics; the detector boundary is pluggable so an
external NER process can replace it (see the wire protocol in
``namecloze.wire``).  Name identity is the exact surface after stripping
a trailing possessive clitic, so "Adams'" and "Adams" repeat each other
while "John Adams" and "Adams" do not.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .common import DetectorError
from .textio import Passage, segment_sentences

_TOKEN_RE = re.compile(r"[^\W\d_][\w'’\-]*")
_CLITIC_RE = re.compile(r"(?:['’]s|['’])$")


@dataclass(frozen=True)
class NameMention:
    start: int           # char offsets into the passage text
    end: int
    surface: str
    sentence_index: int  # 0 or 1 within the passage


def name_key(surface: str) -> str:
    """Identity used for repetition checks: possessive clitic stripped."""
    return _CLITIC_RE.sub("", surface)


class NameDetector(Protocol):
    def detect(self, passage: Passage) -> list[NameMention]: ...


def load_gazetteer(path: str | Path | None = None) -> tuple[frozenset[str], frozenset[str]]:
    """Load (given, family) name sets from a '#given'/'#family' file."""
    if path is None:
        text = resources.files("namecloze.data").joinpath("gazetteer.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    given: set[str] = set()
    family: set[str] = set()
    current = given
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            section = line.lstrip("#").strip().lower()
            if section == "given":
                current = given
            elif section == "family":
                current = family
            continue
        current.add(line)
    return frozenset(given), frozenset(family)


def load_wordlist(path: str | Path | None = None, default: str = "stopwords.txt") -> frozenset[str]:
    if path is None:
        text = resources.files("namecloze.data").joinpath(default).read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(
        line.strip().lower()
        for line in text.splitlines()
        if line.strip() and not line.strip().startswith("#")
    )


@dataclass(frozen=True)
class _Token:
    start: int
    end: int
    surface: str
    sentence: int
    ordinal: int  # position within its sentence


class GazetteerDetector:
    """Gazetteer lookups plus capitalization heuristics.

    A maximal run of capitalized, non-stopword tokens is a mention when
    the gazetteer sanctions it (first token a given name, or last token a
    surname).  Unsanctioned capitalized runs count only when the same key
    also occurs somewhere in the passage that is not sentence-initial;
    this keeps ordinary sentence-opening words out.  Read-only after
    construction, safe to share across workers.
    """

    def __init__(self, given: Iterable[str] | None = None,
                 family: Iterable[str] | None = None,
                 stopwords: Iterable[str] | None = None):
        if given is None and family is None:
            given, family = load_gazetteer(None)
        self.given = frozenset(given or ())
        self.family = frozenset(family or ())
        self.stopwords = frozenset(stopwords) if stopwords is not None else load_wordlist(None)

    def detect(self, passage: Passage) -> list[NameMention]:
        spans = [(0, passage.boundary), (passage.boundary, len(passage.text))] \
            if passage.boundary is not None else [(0, len(passage.text))]
        regions = [(i, s, e) for i, (s, e) in enumerate(spans)]
        raw = self.detect_text(passage.text, regions=regions)
        return [NameMention(s, e, passage.text[s:e], si) for si, s, e in raw]

    def detect_text(self, text: str,
                    regions: Sequence[tuple[int, int, int]] | None = None) -> list[tuple[int, int, int]]:
        """Detect mentions in free text; returns (sentence_index, start, end).

        ``regions`` is a sequence of (sentence_index, start, end) spans; by
        default the text is segmented internally.
        """
        if regions is None:
            regions = [(s.index, s.start, s.end) for s in segment_sentences(text)]
        runs: list[tuple[int, list[_Token]]] = []  # (sentence_index, tokens)
        for sent_index, rstart, rend in regions:
            tokens = self._tokens(text, rstart, rend, sent_index)
            current: list[_Token] = []
            for tok in tokens:
                usable = tok.surface[0].isupper() and not self._is_stopword(tok.surface)
                adjacent = bool(current) and text[current[-1].end:tok.start].isspace() \
                    and tok.start > current[-1].end
                if usable and (not current or adjacent):
                    current.append(tok)
                    continue
                if current:
                    runs.append((sent_index, current))
                current = [tok] if usable else []
            if current:
                runs.append((sent_index, current))
        return self._select(text, runs)

    def _tokens(self, text: str, start: int, end: int, sentence: int) -> list[_Token]:
        out = []
        for k, m in enumerate(_TOKEN_RE.finditer(text, start, end)):
            s, e, surf = m.start(), m.end(), m.group()
            # A trailing bare apostrophe is possessive only after an "s";
            # otherwise it is a closing quote and not part of the token.
            if surf[-1] in "'’" and (len(surf) < 2 or surf[-2] not in "sS"):
                e -= 1
                surf = surf[:-1]
                if not surf:
                    continue
            out.append(_Token(s, e, surf, sentence, k))
        return out

    def _is_stopword(self, surface: str) -> bool:
        return name_key(surface).lower() in self.stopwords

    def _sanctioned(self, run: list[_Token]) -> bool:
        bases = [name_key(t.surface) for t in run]
        if len(bases) == 1:
            return bases[0] in self.given or bases[0] in self.family
        return bases[0] in self.given or bases[-1] in self.family

    def _select(self, text: str, runs: list[tuple[int, list[_Token]]]) -> list[tuple[int, int, int]]:
        infos = []
        for sent_index, run in runs:
            surface = text[run[0].start:run[-1].end]
            infos.append({
                "sentence": sent_index,
                "start": run[0].start,
                "end": run[-1].end,
                "key": name_key(surface),
                "sanctioned": self._sanctioned(run),
                "initial": run[0].ordinal == 0,
                "short": max(len(name_key(t.surface)) for t in run) < 2,
            })
        non_initial_keys = {info["key"] for info in infos if not info["initial"]}
        out = []
        for info in infos:
            if info["sanctioned"]:
                keep = True
            elif info["short"]:
                keep = False
            else:
                keep = info["key"] in non_initial_keys
            if keep:
                out.append((info["sentence"], info["start"], info["end"]))
        return sorted(out, key=lambda t: t[1])


def detect_names(passage: Passage, detector: NameDetector) -> list[NameMention]:
    """Run a detector on a passage and validate its output invariants."""
    try:
        mentions = detector.detect(passage)
    except DetectorError:
        raise
    except Exception as exc:  # diagnostics from external detectors
        raise DetectorError(f"detector failed on passage from {passage.doc_id}: {exc}") from exc
    prev_end = 0
    for m in mentions:
        if not (0 <= m.start < m.end <= len(passage.text)):
            raise DetectorError(f"mention offsets out of range: {m}")
        if m.start < prev_end:
            raise DetectorError(f"mentions overlap or are unordered at {m.start}")
        if passage.text[m.start:m.end] != m.surface:
            raise DetectorError(f"mention surface does not match its offsets: {m}")
        boundary = passage.boundary
        if boundary is not None and m.start < boundary < m.end:
            raise DetectorError(f"mention straddles the sentence boundary: {m}")
        if m.sentence_index != passage.sentence_index_at(m.start):
            raise DetectorError(f"wrong sentence index on mention: {m}")
        prev_end = m.end
    return mentions
