"""Dataset statistics: candidate gender counts and annotation reports."""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .common import InputError
from .mining import MaskedExample


class GenderClass(str, Enum):
    MALE = "male"
    MOSTLY_MALE = "mostly_male"
    FEMALE = "female"
    MOSTLY_FEMALE = "mostly_female"
    AMBIGUOUS = "ambiguous"
    UNKNOWN = "unknown"


def load_gender_table(path: str | Path | None = None) -> dict[str, GenderClass]:
    """Load a "name<TAB>class" table; keys are lowercased first names."""
    if path is None:
        text = resources.files("namecloze.data").joinpath("gender.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table: dict[str, GenderClass] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            name, label = line.split("\t")
            table[name.strip().lower()] = GenderClass(label.strip())
        except ValueError as exc:
            raise InputError(f"gender table line {lineno}: {exc}") from exc
    return table


def classify_gender(first_name: str, table: Mapping[str, GenderClass]) -> GenderClass:
    """Classify by exact case-insensitive lookup of the first token."""
    tokens = first_name.split()
    if not tokens:
        return GenderClass.UNKNOWN
    return table.get(tokens[0].lower(), GenderClass.UNKNOWN)


@dataclass(frozen=True)
class GenderStats:
    counts: dict[str, int]          # per GenderClass value
    female_male_ratio: float | None  # absent when no male-leaning names

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def gender_ratio(examples: Iterable[MaskedExample],
                 table: Mapping[str, GenderClass]) -> GenderStats:
    """Class counts and female/male ratio over correct candidates only."""
    counts = {cls.value: 0 for cls in GenderClass}
    for ex in examples:
        counts[classify_gender(ex.correct, table).value] += 1
    male = counts["male"] + counts["mostly_male"]
    female = counts["female"] + counts["mostly_female"]
    ratio = female / male if male else None
    return GenderStats(counts=counts, female_male_ratio=ratio)


@dataclass(frozen=True)
class AnnotationFixture:
    index: int
    text: str                       # passage with one mask token
    ambiguous: bool
    natural_pronoun: bool           # would a pronoun read naturally here
    annotator_answer: str | None    # absent for ambiguous items
    annotator_correct: bool | None


def default_annotations_path():
    return resources.files("namecloze.data").joinpath("annotations.jsonl")


def load_annotations(path: str | Path | None = None) -> list[AnnotationFixture]:
    source = default_annotations_path() if path is None else Path(path)
    fixtures = []
    try:
        lines = source.read_text("utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read annotations {source}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            fixture = AnnotationFixture(
                index=int(data["index"]),
                text=data["text"],
                ambiguous=bool(data["ambiguous"]),
                natural_pronoun=bool(data["natural_pronoun"]),
                annotator_answer=data["annotator_answer"],
                annotator_correct=data["annotator_correct"],
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"annotations line {lineno}: {exc}") from exc
        has_answer = fixture.annotator_answer is not None
        if has_answer == fixture.ambiguous or (fixture.annotator_correct is None) != fixture.ambiguous:
            raise InputError(
                f"annotations line {lineno}: annotator fields must be present "
                f"exactly when the item is not ambiguous"
            )
        fixtures.append(fixture)
    return fixtures


@dataclass(frozen=True)
class AnnotationReport:
    total: int
    unsolvable: int
    solvable: int
    annotator_accuracy: float | None
    natural_fraction: float | None


def annotation_report(fixtures: Iterable[AnnotationFixture]) -> AnnotationReport:
    items = list(fixtures)
    total = len(items)
    unsolvable = sum(1 for f in items if f.ambiguous)
    solvable = total - unsolvable
    correct = sum(1 for f in items if f.annotator_correct)
    natural = sum(1 for f in items if f.natural_pronoun)
    return AnnotationReport(
        total=total,
        unsolvable=unsolvable,
        solvable=solvable,
        annotator_accuracy=correct / solvable if solvable else None,
        natural_fraction=natural / total if total else None,
    )
