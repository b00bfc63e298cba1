"""Catalog subject label -> broad OECD field mapping."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable

OECD_FIELDS = (
    "Agricultural Sciences",
    "Art",
    "Biological Sciences",
    "Chemical Sciences",
    "Computer Science",
    "Earth and Environmental Sciences",
    "Economics, Business and Management",
    "Educational Sciences",
    "Engineering and Technology",
    "Health Sciences",
    "History and Archaeology",
    "Languages and Literature",
    "Mathematics",
    "Medical Sciences",
    "Philosophy, Ethics and Religion",
    "Physics and Astronomy",
    "Psychology",
    "Social Sciences",
)
UNMAPPED = "Unmapped"

# The eight social science, arts and humanities fields; the other ten are
# science, technology and biomedicine.
SOCIAL_ARTS_HUMANITIES = frozenset({
    "Art",
    "Economics, Business and Management",
    "Educational Sciences",
    "History and Archaeology",
    "Languages and Literature",
    "Philosophy, Ethics and Religion",
    "Psychology",
    "Social Sciences",
})


def field_group(oecd_field: str) -> str:
    if oecd_field in SOCIAL_ARTS_HUMANITIES:
        return "social_arts_humanities"
    if oecd_field in OECD_FIELDS:
        return "science"
    return UNMAPPED


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class SubjectMapping:
    rules: tuple[tuple[str, str], ...]

    def __post_init__(self):
        for label, target in self.rules:
            if target not in OECD_FIELDS:
                raise MappingError(f"subject {label!r} maps to unknown field {target!r}")

    @property
    def fields(self) -> tuple[str, ...]:
        return OECD_FIELDS

    @cached_property
    def _lookup(self) -> dict[str, str]:
        table: dict[str, str] = {}
        for label, target in self.rules:
            table.setdefault(label.strip().casefold(), target)
        return table

    @classmethod
    def from_csv_text(cls, text: str) -> SubjectMapping:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or {"catalog_subject", "oecd_field"} - set(reader.fieldnames):
            raise MappingError("mapping CSV needs a catalog_subject,oecd_field header")
        rules = []
        for row in reader:
            label, target = (row["catalog_subject"] or "").strip(), (row["oecd_field"] or "").strip()
            if not label:
                continue
            if target not in OECD_FIELDS:
                raise MappingError(f"line {reader.line_num}: unknown field {target!r}")
            rules.append((label, target))
        return cls(tuple(rules))

    @classmethod
    def from_csv(cls, path: str | Path) -> SubjectMapping:
        return cls.from_csv_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> SubjectMapping:
        text = resources.files("scholimpact").joinpath("data/subject_map.csv").read_text(encoding="utf-8")
        return cls.from_csv_text(text)

    def map_subjects(self, subjects: Iterable[str]) -> str:
        return map_subjects(subjects, self)


def map_subjects(subjects: Iterable[str], mapping: SubjectMapping) -> str:
    """Field of the first listed subject that has a rule, else ``UNMAPPED``."""
    table = mapping._lookup
    for subject in subjects:
        target = table.get(subject.strip().casefold())
        if target is not None:
            return target
    return UNMAPPED
