import json
import random
import sys
from pathlib import Path

import pytest

from namecloze.names import GazetteerDetector, NameMention
from namecloze.textio import Passage, Sentence

DATA = Path(__file__).parent / "data"
EXTERNAL = DATA / "external"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def detector() -> GazetteerDetector:
    return GazetteerDetector()


@pytest.fixture(scope="session")
def vocab_counts() -> dict:
    return json.loads((DATA / "unigram_vocab.json").read_text("utf-8"))


@pytest.fixture(scope="session")
def refserver_cmd(data_dir) -> str:
    return (f"{sys.executable} -m namecloze.refserver --role scorer "
            f"--vocab {data_dir / 'unigram_vocab.json'}")


def external_path(name: str) -> Path | None:
    """Full-scale public dataset files, when the environment provides them."""
    candidate = EXTERNAL / name
    return candidate if candidate.exists() else None


# --- synthetic passage builder (shared by property and acceptance tests) ----

NAME_POOL = ("Ada", "Bo", "Cyrus", "Dee", "Eli", "Fay")
FILLER = ("met", "saw", "told", "the", "dog", "park", "ran", "by", "again",
          "while", "walking", "near", "home", "and", "then", "waved")


def random_passage(rng: random.Random) -> tuple[Passage, list[NameMention]]:
    """A random 1-2 sentence passage with known name mentions."""
    n_sentences = rng.choice((1, 2))
    pieces: list[str] = []
    mentions: list[NameMention] = []
    sentence_spans = []
    offset = 0
    for sent_index in range(n_sentences):
        start = offset
        n_tokens = rng.randint(2, 9)
        for t in range(n_tokens):
            if t > 0:
                pieces.append(" ")
                offset += 1
            if rng.random() < 0.45:
                name = rng.choice(NAME_POOL)
                surface = name + rng.choice(("", "", "", "'s", "'"))
                pieces.append(surface)
                mentions.append(NameMention(offset, offset + len(surface),
                                            surface, sent_index))
                offset += len(surface)
            else:
                word = rng.choice(FILLER)
                pieces.append(word)
                offset += len(word)
        pieces.append(".")
        offset += 1
        sentence_spans.append((start, offset))
        if sent_index + 1 < n_sentences:
            pieces.append(" ")
            offset += 1
    text = "".join(pieces)
    sentences = tuple(Sentence(s, e, i) for i, (s, e) in enumerate(sentence_spans))
    boundary = sentences[1].start if n_sentences == 2 else None
    passage = Passage("synthetic", sentences, text, boundary)
    for m in mentions:
        assert text[m.start:m.end] == m.surface
    return passage, mentions
