"""Corpus streaming, sentence segmentation, and candidate text windows.

Documents come from either a Wikipedia XML export (optionally gzip/bzip2
compressed, wiki markup stripped down to prose) or plain-text files.
Sentences are split with a rule-based segmenter; downstream stages consume
windows of one sentence or two adjacent sentences, never more.
"""
from __future__ import annotations

import bz2
import gzip
import html
import re
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

from .common import InputError

_TERMINALS = ".!?"
_CLOSERS = "\"'’”)]"
_OPENERS = "\"'‘“(["


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    source: str  # "wiki-dump" or "plain-text"


@dataclass(frozen=True)
class Sentence:
    start: int  # char offset into the document text
    end: int    # exclusive
    index: int  # ordinal within the document


@dataclass(frozen=True)
class Passage:
    """One sentence or two adjacent sentences of a document.

    ``text`` is the document slice covering the sentences, so passage
    offsets map to document offsets by adding ``start``.  ``boundary`` is
    the passage-relative offset where the second sentence begins, or None
    for single-sentence passages.
    """

    doc_id: str
    sentences: tuple[Sentence, ...]
    text: str
    boundary: int | None

    @property
    def start(self) -> int:
        return self.sentences[0].start

    @property
    def end(self) -> int:
        return self.sentences[-1].end

    def sentence_index_at(self, offset: int) -> int:
        """Map a passage-relative char offset to a sentence index (0 or 1)."""
        if self.boundary is not None and offset >= self.boundary:
            return 1
        return 0


def default_abbreviations() -> frozenset[str]:
    return load_abbreviations(None)


def load_abbreviations(path: str | Path | None) -> frozenset[str]:
    """Abbreviation list: one token per line, no trailing dot, # comments."""
    if path is None:
        text = resources.files("namecloze.data").joinpath("abbreviations.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    entries = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.add(line.lower())
    return frozenset(entries)


def _word_before(text: str, pos: int) -> str:
    """The dotted word immediately preceding ``pos`` (used on a '.')."""
    i = pos
    while i > 0 and (text[i - 1].isalnum() or text[i - 1] == "."):
        i -= 1
    return text[i:pos].lstrip(".")


def segment_sentences(text: str, abbreviations: frozenset[str] | None = None) -> list[Sentence]:
    """Split ``text`` into sentence spans.

    A sentence ends at a run of ``.!?`` (plus attached closing quotes or
    brackets) that is followed by whitespace and then an uppercase letter
    or an opening quote.  A lone ``.`` does not split after a known
    abbreviation or a single-letter initial.  Offsets are in Unicode
    scalar values; the gaps between consecutive spans are whitespace only.
    """
    if abbreviations is None:
        abbreviations = default_abbreviations()
    sentences: list[Sentence] = []
    n = len(text)
    start = 0
    while start < n and text[start].isspace():
        start += 1
    i = start
    while i < n:
        if text[i] not in _TERMINALS:
            i += 1
            continue
        run_start = i
        while i < n and text[i] in _TERMINALS:
            i += 1
        run = text[run_start:i]
        while i < n and text[i] in _CLOSERS:
            i += 1
        end = i
        j = i
        while j < n and text[j].isspace():
            j += 1
        if j == n:
            break  # the tail is handled after the loop
        if j == i:
            continue  # no whitespace after the terminal ("3.14", "U.S.A")
        if not (text[j].isupper() or text[j] in _OPENERS):
            continue
        if run == ".":
            word = _word_before(text, run_start)
            if word.lower() in abbreviations:
                continue
            if len(word) == 1 and word.isupper():
                continue  # name initial, "surveyed by Joseph C. Ives"
        sentences.append(Sentence(start, end, len(sentences)))
        start = j
        i = j
    tail_end = n
    while tail_end > start and text[tail_end - 1].isspace():
        tail_end -= 1
    if tail_end > start:
        sentences.append(Sentence(start, tail_end, len(sentences)))
    return sentences


def windows(doc: Document, sentences: Sequence[Sentence] | None = None) -> Iterator[Passage]:
    """Yield every single sentence, then every adjacent sentence pair.

    For n sentences this yields n + max(0, n-1) passages.
    """
    if sentences is None:
        sentences = segment_sentences(doc.text)
    for s in sentences:
        yield Passage(doc.doc_id, (s,), doc.text[s.start:s.end], None)
    for a, b in zip(sentences, sentences[1:]):
        yield Passage(doc.doc_id, (a, b), doc.text[a.start:b.end], b.start - a.start)


# --- corpus sources ---------------------------------------------------------


def stream_documents(source: str | Path, source_format: str = "auto",
                     warn: "callable | None" = None) -> Iterator[Document]:
    """Stream documents from a corpus source in deterministic order.

    ``source_format`` is "wiki-dump", "plain-text", or "auto" (decided by
    the path: .xml/.xml.gz/.xml.bz2 means a dump, anything else plain
    text).  Malformed dump pages are skipped with a warning callback,
    never aborting the stream; an unreadable source raises InputError.
    """
    path = Path(source)
    if source_format == "auto":
        name = path.name.lower()
        is_dump = name.endswith((".xml", ".xml.gz", ".xml.bz2"))
        source_format = "wiki-dump" if is_dump else "plain-text"
    if source_format == "wiki-dump":
        return _stream_wiki_dump(path, warn or _default_warn)
    if source_format == "plain-text":
        return _stream_plain_text(path)
    raise InputError(f"unknown source format: {source_format}")


def _default_warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _stream_plain_text(path: Path) -> Iterator[Document]:
    if not path.exists():
        raise InputError(f"corpus source not found: {path}")
    if path.is_dir():
        files = sorted(p for p in path.rglob("*") if p.is_file())
    else:
        files = [path]
    for fp in files:
        try:
            raw = fp.read_text("utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise InputError(f"cannot read {fp}: {exc}") from exc
        rel = fp.name if not path.is_dir() else fp.relative_to(path).as_posix()
        blocks = [b.strip() for b in re.split(r"\n\s*\n", raw) if b.strip()]
        if len(blocks) == 1:
            yield Document(rel, blocks[0], "plain-text")
        else:
            for k, block in enumerate(blocks):
                yield Document(f"{rel}#{k}", block, "plain-text")


def _open_maybe_compressed(path: Path):
    name = path.name.lower()
    if name.endswith(".gz"):
        return gzip.open(path, "rb")
    if name.endswith(".bz2"):
        return bz2.open(path, "rb")
    return open(path, "rb")


def _localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _stream_wiki_dump(path: Path, warn) -> Iterator[Document]:
    import xml.etree.ElementTree as ET

    if not path.exists():
        raise InputError(f"corpus source not found: {path}")
    try:
        stream = _open_maybe_compressed(path)
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with stream:
        try:
            for _, elem in ET.iterparse(stream, events=("end",)):
                if _localname(elem.tag) != "page":
                    continue
                try:
                    doc = _page_to_document(elem)
                    if doc is not None:
                        yield doc
                except InputError as exc:
                    warn(f"skipping malformed dump page: {exc}")
                finally:
                    elem.clear()
        except ET.ParseError as exc:
            raise InputError(f"broken XML in {path}: {exc}") from exc


def _page_to_document(page) -> Document | None:
    fields = {}
    redirect = False
    for child in page:
        name = _localname(child.tag)
        if name == "redirect":
            redirect = True
        elif name in ("title", "ns", "id"):
            fields[name] = (child.text or "").strip()
        elif name == "revision":
            for sub in child:
                if _localname(sub.tag) == "text":
                    fields["text"] = sub.text or ""
    if redirect or fields.get("ns", "0") not in ("", "0"):
        return None
    if "title" not in fields:
        raise InputError("page without a title")
    if "text" not in fields:
        raise InputError(f"page {fields['title']!r} has no revision text")
    markup = fields["text"]
    if markup.lstrip()[:9].upper() == "#REDIRECT":
        return None
    prose = strip_wikitext(markup)
    if not prose:
        return None
    doc_id = fields.get("id") or fields["title"]
    return Document(doc_id, prose, "wiki-dump")


# --- wikitext stripping -----------------------------------------------------

_COMMENT_RE = re.compile(r"<!--.*?-->", re.DOTALL)
_PAIRED_TAG_RE = re.compile(
    r"<(ref|math|code|source|gallery|timeline|score|syntaxhighlight)\b[^>/]*>.*?</\1\s*>",
    re.DOTALL | re.IGNORECASE,
)
_SELF_TAG_RE = re.compile(r"<ref\b[^>]*/>", re.IGNORECASE)
_ANY_TAG_RE = re.compile(r"</?[A-Za-z][^>]*>")
_TEMPLATE_RE = re.compile(r"\{\{[^{}]*\}\}", re.DOTALL)
_TABLE_RE = re.compile(r"\{\|(?:[^{}]|\{(?!\|)|\}(?!\}))*?\|\}", re.DOTALL)
_LINK_RE = re.compile(r"\[\[([^\[\]]*)\]\]")
_EXT_LINK_RE = re.compile(r"\[(?:https?|ftp)://[^\s\]]+\s*([^\]]*)\]")
_DROPPED_NAMESPACES = ("file:", "image:", "category:", "wikt:", "media:")


def _replace_link(match: re.Match) -> str:
    inner = match.group(1)
    low = inner.lower()
    if any(low.startswith(ns) for ns in _DROPPED_NAMESPACES):
        return ""
    if "|" in inner:
        return inner.rsplit("|", 1)[1]
    return inner


def strip_wikitext(markup: str) -> str:
    """Reduce wiki markup to plain prose.

    Templates, tables, references, headings, and non-prose lines (lists,
    table rows, preformatted blocks) are dropped; links keep their anchor
    text.  Infobox semantics and math markup are out of scope.
    """
    text = _COMMENT_RE.sub("", markup)
    text = _PAIRED_TAG_RE.sub("", text)
    text = _SELF_TAG_RE.sub("", text)
    for pattern in (_TEMPLATE_RE, _TABLE_RE):
        while True:
            text, count = pattern.subn("", text)
            if not count:
                break
    while True:
        text, count = _LINK_RE.subn(_replace_link, text)
        if not count:
            break
    text = _EXT_LINK_RE.sub(lambda m: m.group(1), text)
    text = _ANY_TAG_RE.sub("", text)
    text = text.replace("'''", "").replace("''", "")
    text = html.unescape(text)
    paragraphs: list[list[str]] = [[]]
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped:
            if paragraphs[-1]:
                paragraphs.append([])
            continue
        if line[:1].isspace() or stripped[0] in "*#;:|!=":
            continue
        paragraphs[-1].append(re.sub(r"[ \t]+", " ", stripped))
    chunks = [" ".join(par) for par in paragraphs if par]
    return "\n\n".join(chunks)
