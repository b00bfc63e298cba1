"""Reader counts from a Mendeley-style catalog service.

Each dissertation is looked up by title and author surname. Only candidates
whose source or type says they are a thesis or dissertation are kept; a
journal article that shares the title does not count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Protocol

log = logging.getLogger(__name__)

STATUS_LABELS = (
    "Ph.D. Student",
    "Doctoral Student",
    "Postgraduate Student",
    "Master Student",
    "Bachelor",
    "Professor",
    "Associate Professor",
    "Senior Lecturer",
    "Lecturer",
    "Researcher",
    "Librarian",
    "Other",
    "Unspecified",
)
STATUS_CLASSES = {
    "Students": ("Ph.D. Student", "Doctoral Student", "Postgraduate Student", "Master Student", "Bachelor"),
    "AcademicsResearchers": ("Professor", "Associate Professor", "Senior Lecturer", "Lecturer", "Researcher"),
    "Other": ("Librarian", "Other", "Unspecified"),
}

DISSERTATION_MARKERS = (
    "thesis",
    "phd thesis",
    "proquest dissertations and theses",
    "doctoral dissertation",
    "dissertation",
    "dissertation abstracts international",
    "pqdt",
    "phd thesis, columbia university",
)


class ServiceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReaderRecord:
    title: str
    authors: tuple[str, ...] = ()
    source: str = ""
    type: str = ""
    reader_count: int = 0
    status_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.reader_count < 0:
            raise ValueError("reader_count must be >= 0")
        unknown = set(self.status_counts) - set(STATUS_LABELS)
        if unknown:
            raise ValueError(f"unknown reader status labels {sorted(unknown)}")
        if sum(self.status_counts.values()) > self.reader_count:
            raise ValueError("status counts exceed the reader count")

    @classmethod
    def from_dict(cls, d: dict) -> ReaderRecord:
        return cls(
            title=d.get("title", ""),
            authors=tuple(d.get("authors", ())),
            source=d.get("source") or "",
            type=d.get("type") or "",
            reader_count=int(d.get("reader_count", 0)),
            status_counts={k: int(v) for k, v in (d.get("status_counts") or {}).items()},
        )

    def to_dict(self) -> dict:
        return {"title": self.title, "authors": list(self.authors), "source": self.source,
                "type": self.type, "reader_count": self.reader_count,
                "status_counts": dict(self.status_counts)}


@dataclass(frozen=True)
class StatusBreakdown:
    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(STATUS_LABELS, 0))

    @classmethod
    def from_reader(cls, rec: ReaderRecord) -> StatusBreakdown:
        counts = {label: rec.status_counts.get(label, 0) for label in STATUS_LABELS}
        # statuses the service left out are counted as unspecified
        counts["Unspecified"] += rec.reader_count - sum(rec.status_counts.values())
        return cls(counts)

    def __add__(self, other: StatusBreakdown) -> StatusBreakdown:
        return StatusBreakdown({k: self.counts[k] + other.counts[k] for k in STATUS_LABELS})

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def class_total(self, name: str) -> int:
        return sum(self.counts[label] for label in STATUS_CLASSES[name])

    @property
    def students(self) -> int:
        return self.class_total("Students")

    @property
    def academics_researchers(self) -> int:
        return self.class_total("AcademicsResearchers")

    @property
    def other(self) -> int:
        return self.class_total("Other")


def build_metadata_query(title: str, author_last: str) -> str:
    if not title:
        raise ValueError("title is required")
    return f"title:{title} AND author:{author_last}"


def is_dissertation_record(source: str, type: str, allowlist: Iterable[str] = DISSERTATION_MARKERS) -> bool:
    haystacks = ((source or "").lower(), (type or "").lower())
    return any(token.lower() in h for token in allowlist for h in haystacks)


def query_hash(query: str) -> str:
    return hashlib.sha256(query.encode("utf-8")).hexdigest()


class ReaderService(Protocol):
    def candidates(self, query: str) -> list[ReaderRecord]: ...


class FixtureStore:
    """Replay store: ``<dir>/<sha256(query)>.json`` holding a candidate list.

    A query with no file has no candidates unless ``strict`` is set, in which
    case it is a ``ServiceError`` like an unreachable service.
    """

    def __init__(self, directory: str | Path, strict: bool = False):
        self.directory = Path(directory)
        self.strict = strict

    def path_for(self, query: str) -> Path:
        return self.directory / f"{query_hash(query)}.json"

    def candidates(self, query: str) -> list[ReaderRecord]:
        path = self.path_for(query)
        if not path.exists():
            if self.strict:
                raise ServiceError(f"no fixture for {query!r}")
            return []
        payload = json.loads(path.read_text(encoding="utf-8"))
        items = payload["candidates"] if isinstance(payload, dict) else payload
        return [ReaderRecord.from_dict(d) for d in items]

    def save(self, query: str, records: Iterable[ReaderRecord]) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self.path_for(query)
        path.write_text(json.dumps({"query": query, "candidates": [r.to_dict() for r in records]},
                                   indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return path


class MendeleyClient:
    """Live catalog search client with a bearer token read from the environment.

    Requests are spaced to ``requests_per_second``. Responses can be
    mirrored into a ``FixtureStore`` for later offline runs.
    """

    def __init__(self, api_base: str = "https://api.mendeley.com",
                 token_env: str = "MENDELEY_ACCESS_TOKEN", requests_per_second: float = 2.0,
                 record_to: FixtureStore | None = None,
                 get: Callable[..., object] | None = None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.api_base = api_base.rstrip("/")
        self.token_env = token_env
        self.min_gap = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
        self.record_to = record_to
        self._get = get
        self._clock = clock
        self._sleep = sleep
        self._last: float | None = None

    def _headers(self) -> dict:
        token = os.environ.get(self.token_env)
        if not token:
            raise ServiceError(f"environment variable {self.token_env} is not set")
        return {"Authorization": f"Bearer {token}", "Accept": "application/vnd.mendeley-document.1+json"}

    def _pace(self) -> None:
        if self._last is not None:
            wait = self._last + self.min_gap - self._clock()
            if wait > 0:
                self._sleep(wait)
        self._last = self._clock()

    def candidates(self, query: str) -> list[ReaderRecord]:
        get = self._get
        if get is None:
            import requests

            get = requests.get
        self._pace()
        try:
            resp = get(f"{self.api_base}/search/catalog", params={"query": query, "view": "stats"},
                       headers=self._headers(), timeout=60)
            resp.raise_for_status()
            docs = resp.json()
        except ServiceError:
            raise
        except Exception as exc:
            raise ServiceError(str(exc)) from exc
        records = [_from_catalog_document(doc) for doc in docs]
        if self.record_to is not None:
            self.record_to.save(query, records)
        return records


_API_STATUS = {
    "Student  > Ph. D. Student": "Ph.D. Student",
    "Student  > Doctoral Student": "Doctoral Student",
    "Student  > Postgraduate": "Postgraduate Student",
    "Student  > Master": "Master Student",
    "Student  > Bachelor": "Bachelor",
    "Professor": "Professor",
    "Professor > Associate Professor": "Associate Professor",
    "Lecturer > Senior Lecturer": "Senior Lecturer",
    "Lecturer": "Lecturer",
    "Researcher": "Researcher",
    "Librarian": "Librarian",
    "Other": "Other",
    "Unspecified": "Unspecified",
}


def _from_catalog_document(doc: dict) -> ReaderRecord:
    statuses: dict[str, int] = {}
    for raw, n in (doc.get("reader_count_by_academic_status") or {}).items():
        label = _API_STATUS.get(raw, raw if raw in STATUS_LABELS else "Other")
        statuses[label] = statuses.get(label, 0) + int(n)
    authors = tuple(a.get("last_name", "") for a in doc.get("authors") or ())
    readers = int(doc.get("reader_count") or 0)
    if sum(statuses.values()) > readers:
        readers = sum(statuses.values())
    return ReaderRecord(doc.get("title", ""), authors, doc.get("source") or "", doc.get("type") or "",
                        readers, statuses)


@dataclass
class EnrichReport:
    queried: int = 0
    candidates_kept: int = 0
    candidates_discarded: int = 0
    with_readers: int = 0
    zero_readers: int = 0
    unenriched: int = 0
    unenriched_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def enrich(ms: list, service: ReaderService, combine: str = "sum", max_retries: int = 3,
           backoff_s: float = 1.0, allowlist: Iterable[str] = DISSERTATION_MARKERS,
           sleep: Callable[[float], None] = time.sleep):
    """Attach reader counts and status breakdowns to matched dissertations.

    Returns ``(enriched, report)``. A dissertation whose lookups keep failing
    is returned with ``mendeley_readers=None`` and status ``"unenriched"``,
    never as a zero-reader record.
    """
    if combine not in {"sum", "max"}:
        raise ValueError("combine must be 'sum' or 'max'")
    allowlist = tuple(allowlist)
    report = EnrichReport()
    out = []
    for m in ms:
        query = build_metadata_query(m.title, m.author_last)
        report.queried += 1
        candidates = None
        for attempt in range(max_retries + 1):
            try:
                candidates = service.candidates(query)
                break
            except ServiceError as exc:
                log.warning("lookup failed for %s (attempt %d): %s", m.record_id, attempt + 1, exc)
                if attempt < max_retries:
                    sleep(backoff_s * 2 ** attempt)
        if candidates is None:
            report.unenriched += 1
            report.unenriched_ids.append(m.record_id)
            out.append(replace(m, mendeley_readers=None, reader_status=None, enrichment="unenriched"))
            continue
        kept = [c for c in candidates if is_dissertation_record(c.source, c.type, allowlist)]
        report.candidates_kept += len(kept)
        report.candidates_discarded += len(candidates) - len(kept)
        breakdown = StatusBreakdown()
        if combine == "sum":
            for c in kept:
                breakdown = breakdown + StatusBreakdown.from_reader(c)
            readers = sum(c.reader_count for c in kept)
        else:
            best = max(kept, key=lambda c: c.reader_count, default=None)
            if best is not None:
                breakdown = StatusBreakdown.from_reader(best)
            readers = best.reader_count if best is not None else 0
        if readers:
            report.with_readers += 1
        else:
            report.zero_readers += 1
        out.append(replace(m, mendeley_readers=readers, reader_status=breakdown, enrichment="enriched"))
    return out, report
