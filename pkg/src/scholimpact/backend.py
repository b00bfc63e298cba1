"""Capped scholarly search backends.

``SimulatorBackend`` answers queries over an in-memory corpus with the
engine's observable semantics (site restriction, phrase filters, author
initial include/exclude, year limit, result cap). ``ScholarHTTPBackend``
talks to a live engine, one request at a time with a politeness delay, and
can replay previously stored responses without touching the network.
"""

from __future__ import annotations

import hashlib
import logging
import random
import re
import time
from dataclasses import dataclass
from html import unescape
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Iterable, Protocol
from urllib.parse import urlencode

import numpy as np

from .catalog import DissertationRecord, normalize_title
from .planner import COPYRIGHT_PHRASE, DEFAULT_CAP, DOCTORAL_PHRASE, LETTERS, QuerySpec, render_query

log = logging.getLogger(__name__)

DEFAULT_PAGE_SIZE = 20


class BackendError(RuntimeError):
    """The search service could not answer."""


@dataclass(frozen=True)
class RawHit:
    title: str
    author_display: str
    year: int
    source_domain: str
    cited_by: int
    rank: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank starts at 1")
        if self.cited_by < 0:
            raise ValueError("cited_by must be >= 0")


@dataclass(frozen=True)
class SearchPage:
    hits: tuple[RawHit, ...]
    total_estimate: int
    truncated_at_cap: bool


class SearchBackend(Protocol):
    cap: int

    def count(self, q: QuerySpec) -> int: ...

    def search(self, q: QuerySpec, page: int = 1) -> SearchPage: ...


def site_matches(site: str, domain: str) -> bool:
    site, domain = site.lower().strip("."), domain.lower().strip(".")
    return domain == site or domain.endswith("." + site)


def matches(record: DissertationRecord, q: QuerySpec) -> bool:
    """Whether the engine would return ``record`` for ``q`` (ignoring the cap)."""
    if not any(site_matches(q.site, d) for d in record.source_domains):
        return False
    title = None
    for phrase in q.phrases:
        if phrase == COPYRIGHT_PHRASE:
            ok = record.has_copyright_phrase
        elif phrase == DOCTORAL_PHRASE:
            ok = record.degree_phrase
        else:
            if title is None:
                title = normalize_title(record.title)
            ok = normalize_title(phrase) in title
        if not ok:
            return False
    initials = record.initials
    if q.include_letter is not None and q.include_letter not in initials:
        return False
    if initials.intersection(q.exclude_letters):
        return False
    return q.year is None or record.year == q.year


def _letter_mask(letters: Iterable[str]) -> int:
    mask = 0
    for c in letters:
        mask |= 1 << (ord(c) - ord("A"))
    return mask


class SimulatorBackend:
    """Deterministic capped engine over a record corpus.

    Results are ordered by citation count (descending), then normalized
    title, then record id; the cap truncates that order before paging.
    """

    def __init__(self, records: Iterable[DissertationRecord], cap: int = DEFAULT_CAP,
                 page_size: int = DEFAULT_PAGE_SIZE):
        if page_size < 1:
            raise ValueError("page_size must be >= 1")
        if cap < 1:
            raise ValueError("cap must be >= 1")
        recs = list(records)
        order = sorted(range(len(recs)),
                       key=lambda i: (-recs[i].cited_by, normalize_title(recs[i].title), recs[i].id))
        self.records: list[DissertationRecord] = [recs[i] for i in order]
        self.cap = cap
        self.page_size = page_size
        n = len(self.records)
        self._years = np.fromiter((r.year for r in self.records), dtype=np.int64, count=n)
        self._initials = np.fromiter((_letter_mask(r.initials) for r in self.records),
                                     dtype=np.int64, count=n)
        self._copyright = np.fromiter((r.has_copyright_phrase for r in self.records), dtype=bool, count=n)
        self._doctoral = np.fromiter((r.degree_phrase for r in self.records), dtype=bool, count=n)
        self._site_cache: dict[str, np.ndarray] = {}
        self._last: tuple[QuerySpec, np.ndarray] | None = None

    def _site_mask(self, site: str) -> np.ndarray:
        if site not in self._site_cache:
            self._site_cache[site] = np.fromiter(
                (any(site_matches(site, d) for d in r.source_domains) for r in self.records),
                dtype=bool, count=len(self.records))
        return self._site_cache[site]

    def _matching(self, q: QuerySpec) -> np.ndarray:
        if self._last is not None and self._last[0] == q:
            return self._last[1]
        mask = self._site_mask(q.site).copy()
        if q.year is not None:
            mask &= self._years == q.year
        for phrase in q.phrases:
            if phrase == COPYRIGHT_PHRASE:
                mask &= self._copyright
            elif phrase == DOCTORAL_PHRASE:
                mask &= self._doctoral
            else:
                needle = normalize_title(phrase)
                mask &= np.fromiter((needle in normalize_title(r.title) for r in self.records),
                                    dtype=bool, count=len(self.records))
        if q.include_letter is not None:
            mask &= (self._initials & _letter_mask(q.include_letter)) != 0
        if q.exclude_letters:
            mask &= (self._initials & _letter_mask(q.exclude_letters)) == 0
        idx = np.flatnonzero(mask)
        self._last = (q, idx)
        return idx

    def count(self, q: QuerySpec) -> int:
        return int(self._matching(q).size)

    def hit_for(self, record: DissertationRecord, q: QuerySpec, rank: int) -> RawHit:
        domain = next((d for d in record.source_domains if site_matches(q.site, d)),
                      record.source_domains[0] if record.source_domains else "")
        return RawHit(record.title, record.author_display, record.year, domain,
                      record.cited_by, rank)

    def search(self, q: QuerySpec, page: int = 1) -> SearchPage:
        if page < 1:
            raise ValueError("page numbers start at 1")
        idx = self._matching(q)
        total = int(idx.size)
        visible = min(total, self.cap)
        start = (page - 1) * self.page_size
        stop = min(start + self.page_size, visible)
        hits = tuple(self.hit_for(self.records[i], q, rank + 1)
                     for rank, i in zip(range(start, stop), idx[start:stop]))
        return SearchPage(hits, total, total > self.cap)

    def letter_histogram(self, base: QuerySpec) -> dict[str, int]:
        return {c: self.count(base.with_letters(c)) for c in LETTERS}


# --- live engine -------------------------------------------------------------


class Throttle:
    """Enforce a minimum, jittered gap between consecutive requests."""

    def __init__(self, delay_ms: int, jitter_pct: float = 50.0, seed: int | None = None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.delay_ms = delay_ms
        self.jitter_pct = jitter_pct
        self._rng = random.Random(seed)
        self._clock = clock
        self._sleep = sleep
        self._last: float | None = None

    def next_gap(self) -> float:
        spread = self.jitter_pct / 100.0
        factor = 1.0 + self._rng.uniform(-spread, spread)
        return max(0.0, self.delay_ms * factor / 1000.0)

    def wait(self) -> None:
        now = self._clock()
        if self._last is not None:
            remaining = self._last + self.next_gap() - now
            if remaining > 0:
                self._sleep(remaining)
        self._last = self._clock()


class _ScholarPageParser(HTMLParser):
    """Pull hits out of a scholar-style result page.

    Only the fields the pipeline uses are read: title, author line (which
    also carries year and domain), and the "Cited by N" link.
    """

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.entries: list[dict] = []
        self.summary = ""
        self._stack: list[str | None] = []
        self._current: dict | None = None
        self._capture: str | None = None
        self._in_summary = False

    def handle_starttag(self, tag, attrs):
        classes = (dict(attrs).get("class") or "").split()
        role = None
        if "gs_ri" in classes:
            self._current = {"title": "", "author_line": "", "cited_by": 0, "cite_text": ""}
            self.entries.append(self._current)
            role = "entry"
        elif "gs_rt" in classes and self._current is not None:
            role = "title"
        elif "gs_a" in classes and self._current is not None:
            role = "author_line"
        elif "gs_fl" in classes and self._current is not None:
            role = "cite_text"
        elif "gs_ab_mdw" in classes:
            role = "summary"
        if tag in {"br", "img", "input", "meta", "link"}:
            if tag == "br":
                self.handle_data(" ")
            return
        self._stack.append(role)

    def handle_endtag(self, tag):
        if tag in {"br", "img", "input", "meta", "link"} or not self._stack:
            return
        role = self._stack.pop()
        if role == "entry":
            self._current = None

    def handle_data(self, data):
        roles = [r for r in self._stack if r]
        if not roles:
            return
        role = roles[-1]
        if role == "summary":
            self.summary += data
        elif self._current is not None and role in ("title", "author_line", "cite_text"):
            self._current[role] += data


_YEAR = re.compile(r"\b(1[89]\d\d|20\d\d)\b")
_CITED = re.compile(r"Cited by\s+([\d,]+)")
_TOTAL = re.compile(r"([\d][\d,\.]*)\s+results?")


def parse_result_page(html: str, offset: int = 0) -> tuple[list[RawHit], int]:
    """Extract hits and the reported total from a result page."""
    parser = _ScholarPageParser()
    parser.feed(html)
    hits = []
    for i, entry in enumerate(parser.entries, start=1):
        title = re.sub(r"^\s*\[[A-Z]+\]\s*", "", " ".join(entry["title"].split()))
        line = " ".join(unescape(entry["author_line"]).split())
        segments = [s.strip() for s in line.split(" - ")]
        author = segments[0].split(",")[0].replace("…", "").strip() if segments else ""
        year_match = _YEAR.search(line)
        domain = segments[-1] if len(segments) >= 2 else ""
        cited = _CITED.search(entry["cite_text"])
        hits.append(RawHit(
            title=title,
            author_display=author,
            year=int(year_match.group(1)) if year_match else 0,
            source_domain=domain,
            cited_by=int(cited.group(1).replace(",", "")) if cited else 0,
            rank=offset + i,
        ))
    total_match = _TOTAL.search(parser.summary.replace("\xa0", " "))
    total = int(re.sub(r"[,\.]", "", total_match.group(1))) if total_match else len(hits)
    return hits, total


def request_key(url: str, params: dict) -> str:
    payload = url + "?" + urlencode(sorted(params.items()))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ScholarHTTPBackend:
    """Sequential client for a live capped engine, with verbatim replay.

    In ``replay`` mode every response is read from ``replay_dir`` (one file
    per request, named by the request hash) and the network is never used;
    a missing file is a ``BackendError``. In ``live`` mode responses are
    fetched through ``fetch`` and written to ``replay_dir`` as they arrive.
    """

    def __init__(self, base_url: str = "https://scholar.google.com/scholar",
                 replay_dir: str | Path | None = None, mode: str = "replay",
                 delay_ms: int = 30_000, jitter_pct: float = 50.0, max_retries: int = 3,
                 user_agent: str = "scholimpact/0.1", cap: int = DEFAULT_CAP,
                 page_size: int = 10, fetch: Callable[[str, dict, dict], str] | None = None,
                 throttle: Throttle | None = None, sleep: Callable[[float], None] = time.sleep):
        if mode not in {"live", "replay"}:
            raise ValueError(f"unknown mode {mode!r}")
        self.base_url = base_url
        self.replay_dir = Path(replay_dir) if replay_dir is not None else None
        self.mode = mode
        self.max_retries = max_retries
        self.headers = {"User-Agent": user_agent}
        self.cap = cap
        self.page_size = page_size
        self._fetch = fetch or self._requests_fetch
        self._throttle = throttle or Throttle(delay_ms, jitter_pct, sleep=sleep)
        self._sleep = sleep

    @staticmethod
    def _requests_fetch(url: str, params: dict, headers: dict) -> str:
        import requests

        resp = requests.get(url, params=params, headers=headers, timeout=60)
        resp.raise_for_status()
        return resp.text

    def params_for(self, q: QuerySpec, page: int) -> dict:
        params = {"q": render_query(q), "start": str((page - 1) * self.page_size),
                  "num": str(self.page_size)}
        if q.year is not None:
            params["as_ylo"] = params["as_yhi"] = str(q.year)
        return params

    def _get(self, params: dict) -> str:
        key = request_key(self.base_url, params)
        stored = self.replay_dir / f"{key}.html" if self.replay_dir else None
        if self.mode == "replay":
            if stored is None or not stored.exists():
                raise BackendError(f"no recorded response for {params['q']!r} start={params['start']}")
            return stored.read_text(encoding="utf-8")
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            self._throttle.wait()
            try:
                body = self._fetch(self.base_url, params, self.headers)
            except Exception as exc:  # network stack raises many types
                last_exc = exc
                log.warning("request failed (attempt %d): %s", attempt + 1, exc)
                self._sleep(2.0 ** attempt)
                continue
            if stored is not None:
                stored.parent.mkdir(parents=True, exist_ok=True)
                stored.write_text(body, encoding="utf-8")
            return body
        raise BackendError(f"giving up after {self.max_retries + 1} attempts: {last_exc}")

    def search(self, q: QuerySpec, page: int = 1) -> SearchPage:
        if page < 1:
            raise ValueError("page numbers start at 1")
        offset = (page - 1) * self.page_size
        if offset >= self.cap:
            return SearchPage((), 0, False)
        hits, total = parse_result_page(self._get(self.params_for(q, page)), offset)
        hits = hits[: max(0, self.cap - offset)]
        return SearchPage(tuple(hits), total, total > self.cap)

    def count(self, q: QuerySpec) -> int:
        return self.search(q, 1).total_estimate
