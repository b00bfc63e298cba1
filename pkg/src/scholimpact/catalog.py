"""Local dissertation catalog: loading, validation and normalization helpers.

The normalization functions here are shared by every other stage, so a
title or surname normalized in the harvester produces exactly the key the
catalog index was built with.
"""

from __future__ import annotations

import csv
import io
import json
import re
import string
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

ASCII_UPPER = frozenset(string.ascii_uppercase)
DEFAULT_DEGREE_BLOCKLIST = frozenset({"M.A.", "M.S.", "M.P.H.", "M.P.P."})

_NON_ALNUM = re.compile(r"[\W_]+")
_NAME_SPLIT = re.compile(r"[\s\-‐-―]+")

REQUIRED_FIELDS = ("id", "title", "author_last", "author_first", "year", "degree")


class CatalogError(ValueError):
    """Raised for malformed catalog input."""


def normalize_title(raw: str) -> str:
    """Lowercase, turn every non-alphanumeric run into one space, trim."""
    return _NON_ALNUM.sub(" ", raw.lower()).strip()


def last_name_key(name: str) -> str:
    """Normalized final whitespace token of a name ("JZ Fuller" -> "fuller")."""
    tokens = name.split()
    if not tokens:
        return ""
    return normalize_title(tokens[-1])


def initials_sequence(first_names: str) -> list[str]:
    """Initials in given-name order, duplicates kept once.

    A token whose first character is not an ASCII letter (for instance an
    accented capital) contributes nothing.
    """
    seen: list[str] = []
    for token in _NAME_SPLIT.split(first_names.strip()):
        if not token:
            continue
        head = token[0]
        if head.isascii() and head.isalpha():
            letter = head.upper()
            if letter not in seen:
                seen.append(letter)
    return seen


def extract_initials(first_names: str) -> frozenset[str]:
    return frozenset(initials_sequence(first_names))


def _degree_key(code: str) -> str:
    return _NON_ALNUM.sub("", code.lower())


def degree_is_doctoral(degree: str, blocklist: Iterable[str] | None = None) -> bool:
    """False iff the degree code is on the (masters) blocklist.

    Comparison ignores case and punctuation, so "ms" and "M.S." are the same.
    """
    codes = DEFAULT_DEGREE_BLOCKLIST if blocklist is None else blocklist
    return _degree_key(degree) not in {_degree_key(c) for c in codes}


@dataclass(frozen=True)
class DissertationRecord:
    id: str
    title: str
    author_last: str
    author_first: str
    year: int
    degree: str
    subjects: tuple[str, ...] = ()
    institution: str = ""
    country: str = ""
    has_copyright_phrase: bool = True
    degree_phrase: bool = True
    source_domains: tuple[str, ...] = ()
    # Citation count the simulated engine reports for this record.
    cited_by: int = 0

    @property
    def initials(self) -> frozenset[str]:
        return extract_initials(self.author_first)

    @property
    def match_key(self) -> tuple[str, str]:
        return (normalize_title(self.title), last_name_key(self.author_last))

    @property
    def author_display(self) -> str:
        """Author string the way a scholarly engine shows it: "MZA Durrani"."""
        letters = "".join(initials_sequence(self.author_first))
        return f"{letters} {self.author_last}".strip()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "author_last": self.author_last,
            "author_first": self.author_first,
            "year": self.year,
            "degree": self.degree,
            "subjects": list(self.subjects),
            "institution": self.institution,
            "country": self.country,
            "has_copyright_phrase": self.has_copyright_phrase,
            "degree_phrase": self.degree_phrase,
            "source_domains": list(self.source_domains),
            "cited_by": self.cited_by,
        }


def _as_bool(value, where: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        lowered = value.strip().lower()
        if lowered in {"true", "1", "yes", "y"}:
            return True
        if lowered in {"false", "0", "no", "n", ""}:
            return False
    raise CatalogError(f"{where}: cannot read {value!r} as a boolean")


def _as_list(value, where: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(";") if part.strip())
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    raise CatalogError(f"{where}: expected a list, got {type(value).__name__}")


def record_from_dict(row: dict, where: str = "record",
                     years: tuple[int, int] | None = None) -> DissertationRecord:
    missing = [name for name in REQUIRED_FIELDS if row.get(name) in (None, "")]
    if missing:
        raise CatalogError(f"{where}: missing required field(s) {', '.join(missing)}")
    try:
        year = int(row["year"])
    except (TypeError, ValueError):
        raise CatalogError(f"{where}: year {row['year']!r} is not an integer") from None
    if not 1000 <= year <= 9999:
        raise CatalogError(f"{where}: year {year} is not a 4-digit year")
    if years is not None and not years[0] <= year <= years[1]:
        raise CatalogError(f"{where}: year {year} outside study window {years[0]}-{years[1]}")
    try:
        cited_by = int(row.get("cited_by") or 0)
    except (TypeError, ValueError):
        raise CatalogError(f"{where}: cited_by {row.get('cited_by')!r} is not an integer") from None
    if cited_by < 0:
        raise CatalogError(f"{where}: cited_by must be >= 0")
    return DissertationRecord(
        id=str(row["id"]),
        title=str(row["title"]),
        author_last=str(row["author_last"]),
        author_first=str(row["author_first"]),
        year=year,
        degree=str(row["degree"]),
        subjects=_as_list(row.get("subjects"), where),
        institution=str(row.get("institution") or ""),
        country=str(row.get("country") or ""),
        has_copyright_phrase=_as_bool(row.get("has_copyright_phrase", True), where),
        degree_phrase=_as_bool(row.get("degree_phrase", True), where),
        source_domains=_as_list(row.get("source_domains"), where),
        cited_by=cited_by,
    )


@dataclass(frozen=True)
class Catalog:
    records: tuple[DissertationRecord, ...]
    index_by_match_key: dict[tuple[str, str], tuple[str, ...]] = field(repr=False)

    @classmethod
    def from_records(cls, records: Iterable[DissertationRecord]) -> Catalog:
        records = tuple(records)
        index: dict[tuple[str, str], list[str]] = defaultdict(list)
        seen: set[str] = set()
        for rec in records:
            if rec.id in seen:
                raise CatalogError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            index[rec.match_key].append(rec.id)
        return cls(records, {k: tuple(v) for k, v in index.items()})

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[DissertationRecord]:
        return iter(self.records)

    @property
    def by_id(self) -> dict[str, DissertationRecord]:
        return {r.id: r for r in self.records}

    @property
    def ambiguous_keys(self) -> dict[tuple[str, str], tuple[str, ...]]:
        """Match keys shared by more than one record; never merged."""
        return {k: ids for k, ids in self.index_by_match_key.items() if len(ids) > 1}

    @property
    def coverage_exceptions(self) -> list[str]:
        """Ids of records with no A-Z initial, which initial splitting cannot reach."""
        return [r.id for r in self.records if not r.initials]

    def lookup(self, key: tuple[str, str]) -> tuple[str, ...]:
        return self.index_by_match_key.get(key, ())

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in self.records)


def _iter_jsonl(lines: Iterable[str], years) -> Iterator[DissertationRecord]:
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(row, dict):
            raise CatalogError(f"line {lineno}: expected a JSON object")
        yield record_from_dict(row, f"line {lineno}", years)


def _iter_csv(text: str, years) -> Iterator[DissertationRecord]:
    reader = csv.DictReader(io.StringIO(text))
    for row in reader:
        # header is line 1
        yield record_from_dict(row, f"line {reader.line_num}", years)


def load_catalog(source, years: tuple[int, int] | None = None) -> Catalog:
    """Load a catalog from a JSONL/CSV path, a text blob, or an iterable of lines.

    ``.csv`` paths are read as CSV with the JSONL field names as columns;
    list-valued columns are ``;``-separated.
    """
    if isinstance(source, (str, Path)) and Path(source).suffix in {".jsonl", ".json", ".csv"}:
        path = Path(source)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".csv":
            return Catalog.from_records(_iter_csv(text, years))
        return Catalog.from_records(_iter_jsonl(text.splitlines(), years))
    if isinstance(source, str):
        return Catalog.from_records(_iter_jsonl(source.splitlines(), years))
    return Catalog.from_records(_iter_jsonl(source, years))
