"""Run a query plan against a backend and fold the hits into one deduplicated set."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .backend import BackendError, RawHit, SearchBackend
from .catalog import last_name_key, normalize_title
from .planner import QueryPlan, render_query

DEDUP_MODES = ("title_author", "title_only")


def dedup_key(hit: RawHit, mode: str = "title_author") -> tuple[str, str]:
    if mode == "title_only":
        return (normalize_title(hit.title), "")
    if mode != "title_author":
        raise ValueError(f"unknown dedup mode {mode!r}")
    return (normalize_title(hit.title), last_name_key(hit.author_display))


@dataclass(frozen=True)
class Cursor:
    query_index: int = 0
    page: int = 1

    def to_dict(self) -> dict:
        return {"query_index": self.query_index, "page": self.page}


@dataclass
class RawResultSet:
    year: int
    hits_by_key: dict[tuple[str, str], RawHit] = field(default_factory=dict)
    provenance: dict[tuple[str, str], list[int]] = field(default_factory=dict)
    truncation_warnings: list[dict] = field(default_factory=list)
    dedup: str = "title_author"

    def __len__(self) -> int:
        return len(self.hits_by_key)

    def add(self, hit: RawHit, query_index: int) -> None:
        key = dedup_key(hit, self.dedup)
        kept = self.hits_by_key.get(key)
        if kept is None or hit.cited_by > kept.cited_by:
            self.hits_by_key[key] = hit
        sources = self.provenance.setdefault(key, [])
        if query_index not in sources:
            sources.append(query_index)
            sources.sort()

    def to_jsonl(self) -> str:
        lines = []
        for key in sorted(self.hits_by_key):
            hit = self.hits_by_key[key]
            lines.append(json.dumps({
                "key": list(key),
                "title": hit.title,
                "author_display": hit.author_display,
                "year": hit.year,
                "cited_by": hit.cited_by,
                "source_domain": hit.source_domain,
                "queries": self.provenance[key],
            }, ensure_ascii=False))
        return "".join(line + "\n" for line in lines)

    def warnings_json(self) -> str:
        return json.dumps(self.truncation_warnings, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_jsonl(cls, text: str, year: int, dedup: str = "title_author",
                   warnings: list[dict] | None = None) -> RawResultSet:
        result = cls(year, dedup=dedup, truncation_warnings=list(warnings or []))
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            row = json.loads(line)
            key = tuple(row["key"])
            # rank is not persisted; 1 keeps RawHit valid
            result.hits_by_key[key] = RawHit(row["title"], row["author_display"], int(row["year"]),
                                             row["source_domain"], int(row["cited_by"]), 1)
            result.provenance[key] = [int(i) for i in row["queries"]]
        return result


class HarvestInterrupted(RuntimeError):
    """A backend failure stopped the plan; carries what was gathered so far."""

    def __init__(self, partial: RawResultSet, cursor: Cursor, cause: Exception):
        super().__init__(f"harvest stopped at query {cursor.query_index} page {cursor.page}: {cause}")
        self.partial = partial
        self.cursor = cursor
        self.cause = cause


def execute_plan(plan: QueryPlan, backend: SearchBackend, dedup: str = "title_author",
                 resume_from: Cursor | None = None,
                 partial: RawResultSet | None = None) -> RawResultSet:
    """Drain every page of every plan query, in plan order.

    Pass the ``partial`` result and ``cursor`` of a ``HarvestInterrupted``
    to pick up where a failed run stopped.
    """
    result = partial if partial is not None else RawResultSet(plan.year, dedup=dedup)
    start = resume_from or Cursor()
    for qi in range(start.query_index, len(plan.queries)):
        q = plan.queries[qi]
        page = start.page if qi == start.query_index else 1
        while True:
            try:
                resp = backend.search(q, page)
            except BackendError as exc:
                raise HarvestInterrupted(result, Cursor(qi, page), exc) from exc
            for hit in resp.hits:
                result.add(hit, qi)
            if page == 1 and resp.truncated_at_cap:
                result.truncation_warnings.append({
                    "query_index": qi,
                    "letter": q.include_letter,
                    "rendered": render_query(q),
                    "total_estimate": resp.total_estimate,
                    "cap": backend.cap,
                })
            if not resp.hits or resp.hits[-1].rank >= min(resp.total_estimate, backend.cap):
                break
            page += 1
    return result


def coverage_report(result: RawResultSet, expected: dict[tuple[str, str], str]) -> dict:
    """Compare harvested keys to a known ground truth (key -> record id)."""
    missing = sorted(expected[k] for k in expected.keys() - result.hits_by_key.keys())
    extra = sorted(result.hits_by_key.keys() - expected.keys())
    return {
        "expected": len(expected),
        "retrieved": len(expected) - len(missing),
        "missing_ids": missing,
        "unexpected_keys": [list(k) for k in extra],
    }


def save_partial(result: RawResultSet, cursor: Cursor, raw_path: Path, cursor_path: Path) -> None:
    raw_path.write_text(result.to_jsonl(), encoding="utf-8")
    cursor_path.write_text(json.dumps({**cursor.to_dict(), "warnings": result.truncation_warnings},
                                      indent=2) + "\n", encoding="utf-8")


def load_partial(raw_path: Path, cursor_path: Path, year: int,
                 dedup: str = "title_author") -> tuple[RawResultSet, Cursor]:
    state = json.loads(cursor_path.read_text(encoding="utf-8"))
    result = RawResultSet.from_jsonl(raw_path.read_text(encoding="utf-8"), year, dedup,
                                     state.get("warnings"))
    return result, Cursor(int(state["query_index"]), int(state["page"]))
