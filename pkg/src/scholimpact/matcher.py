"""Link harvested hits to catalog records and filter to US doctoral dissertations."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .catalog import Catalog, degree_is_doctoral, normalize_title
from .harvester import RawResultSet
from .mendeley import STATUS_LABELS, StatusBreakdown
from .subjects import UNMAPPED, SubjectMapping

DEFAULT_COUNTRIES = ("United States",)
MATCHED_COLUMNS = ("record_id", "title", "author_last", "year", "degree", "country",
                   "oecd_field", "gs_citations", "mendeley_readers")


@dataclass(frozen=True)
class MatchedDissertation:
    record_id: str
    title: str
    author_last: str
    year: int
    degree: str
    country: str
    oecd_field: str
    gs_citations: int
    mendeley_readers: int | None = None
    reader_status: StatusBreakdown | None = None
    enrichment: str = "pending"

    def __post_init__(self):
        if self.gs_citations < 0:
            raise ValueError("gs_citations must be >= 0")


@dataclass
class MatchReport:
    matched: int = 0
    unmatched: int = 0
    ambiguous: int = 0
    filtered_degree: int = 0
    filtered_country: int = 0
    unmatched_keys: list[list[str]] = field(default_factory=list)
    ambiguous_keys: list[list[str]] = field(default_factory=list)
    unmapped_subjects: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.matched + self.unmatched + self.ambiguous

    def to_dict(self) -> dict:
        return {"input": self.total, **self.__dict__}


def batch_title_queries(titles: Sequence[str], max_operators: int = 1000) -> list[str]:
    """Command-line title searches, at most ``max_operators`` titles per batch."""
    if max_operators < 1:
        raise ValueError("max_operators must be >= 1")
    norm = [normalize_title(t) for t in titles]
    return [" OR ".join(f'TI("{t}")' for t in norm[i:i + max_operators])
            for i in range(0, len(norm), max_operators)]


def match_records(raw: RawResultSet | Iterable[RawResultSet], cat: Catalog,
                  mapping: SubjectMapping | None = None):
    """Exact (title, surname) lookup of every harvested key.

    Returns ``(matched, report)``. Keys that hit several catalog records are
    reported as ambiguous and left out.
    """
    sets = [raw] if isinstance(raw, RawResultSet) else list(raw)
    by_id = cat.by_id
    report = MatchReport()
    out: list[MatchedDissertation] = []
    unmapped: dict[str, int] = {}
    for rs in sets:
        for key in sorted(rs.hits_by_key):
            hit = rs.hits_by_key[key]
            ids = cat.lookup(key)
            if not ids:
                report.unmatched += 1
                report.unmatched_keys.append(list(key))
                continue
            if len(ids) > 1:
                report.ambiguous += 1
                report.ambiguous_keys.append(list(key))
                continue
            rec = by_id[ids[0]]
            oecd = mapping.map_subjects(rec.subjects) if mapping is not None else UNMAPPED
            if oecd == UNMAPPED:
                label = rec.subjects[0] if rec.subjects else "(none)"
                unmapped[label] = unmapped.get(label, 0) + 1
            report.matched += 1
            out.append(MatchedDissertation(rec.id, rec.title, rec.author_last, rec.year, rec.degree,
                                           rec.country, oecd, hit.cited_by))
    report.unmapped_subjects = dict(sorted(unmapped.items()))
    out.sort(key=lambda m: m.record_id)
    return out, report


def apply_filters(ms: Iterable[MatchedDissertation], degree_blocklist: Iterable[str] | None = None,
                  country_allowlist: Iterable[str] = DEFAULT_COUNTRIES,
                  report: MatchReport | None = None):
    """Drop blocklisted (masters) degrees, then countries outside the allowlist.

    Returns ``(kept, report)``; the counts are added to ``report`` if given.
    """
    report = report if report is not None else MatchReport()
    blocklist = None if degree_blocklist is None else tuple(degree_blocklist)
    countries = {c.strip().casefold() for c in country_allowlist}
    kept = []
    for m in ms:
        if not degree_is_doctoral(m.degree, blocklist):
            report.filtered_degree += 1
        elif m.country.strip().casefold() not in countries:
            report.filtered_country += 1
        else:
            kept.append(m)
    return kept, report


def to_csv(ms: Iterable[MatchedDissertation], enrichment_column: bool = False) -> str:
    """Matched dataset CSV; the enriched variant adds an ``enrichment`` column
    so unenriched rows stay distinguishable from zero-reader rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*MATCHED_COLUMNS, "enrichment"] if enrichment_column else MATCHED_COLUMNS)
    for m in ms:
        row = [m.record_id, m.title, m.author_last, m.year, m.degree, m.country,
               m.oecd_field, m.gs_citations,
               "" if m.mendeley_readers is None else m.mendeley_readers]
        if enrichment_column:
            row.append(m.enrichment)
        writer.writerow(row)
    return buf.getvalue()


def from_csv(text: str) -> list[MatchedDissertation]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        readers = row.get("mendeley_readers", "")
        out.append(MatchedDissertation(
            row["record_id"], row["title"], row["author_last"], int(row["year"]), row["degree"],
            row["country"], row["oecd_field"], int(row["gs_citations"]),
            int(readers) if readers not in ("", None) else None,
            enrichment=row.get("enrichment") or ("enriched" if readers not in ("", None) else "pending"),
        ))
    return out


def status_rows(ms: Iterable[MatchedDissertation]) -> str:
    """Per-record reader-status counts as CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["record_id", "oecd_field", "year", "enrichment", *STATUS_LABELS])
    for m in ms:
        counts = m.reader_status.counts if m.reader_status is not None else {}
        writer.writerow([m.record_id, m.oecd_field, m.year, m.enrichment,
                         *[counts.get(label, "") if m.reader_status is not None else "" for label in STATUS_LABELS]])
    return buf.getvalue()


def read_status_rows(text: str) -> dict[str, StatusBreakdown]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    out = {}
    for row in csv.DictReader(lines):
        if row["enrichment"] != "enriched":
            continue
        out[row["record_id"]] = StatusBreakdown({label: int(row[label] or 0) for label in STATUS_LABELS})
    return out
