"""Capped-search query rendering and per-year author-initial query plans.

A plan covers one year. Letters are searched from the rarest to the most
common; each query excludes as many previously searched letters as the
character budget allows, most frequent first.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field

LETTERS = tuple(string.ascii_uppercase)

COPYRIGHT_PHRASE = "The quality of this reproduction is dependent upon"
DOCTORAL_PHRASE = "Doctor of"
DEFAULT_PHRASES = (DOCTORAL_PHRASE, COPYRIGHT_PHRASE)
DEFAULT_SITE = "proquest.com"
DEFAULT_BUDGET = 256
DEFAULT_CAP = 1000

# " -author:X"
EXCLUSION_COST = 10
# " author:X"
INCLUSION_COST = 9


@dataclass(frozen=True)
class QuerySpec:
    site: str
    phrases: tuple[str, ...] = DEFAULT_PHRASES
    include_letter: str | None = None
    exclude_letters: tuple[str, ...] = ()
    year: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "phrases", tuple(self.phrases))
        object.__setattr__(self, "exclude_letters", tuple(self.exclude_letters))
        for letter in (self.include_letter, *self.exclude_letters):
            if letter is not None and letter not in LETTERS:
                raise ValueError(f"author letters must be A-Z, got {letter!r}")
        if self.include_letter is not None and self.include_letter in self.exclude_letters:
            raise ValueError(f"letter {self.include_letter} is both included and excluded")
        if len(set(self.exclude_letters)) != len(self.exclude_letters):
            raise ValueError("duplicate excluded letters")
        if any('"' in p for p in self.phrases):
            raise ValueError("phrases cannot contain double quotes")

    def with_letters(self, include: str | None, exclude=()) -> QuerySpec:
        return QuerySpec(self.site, self.phrases, include, tuple(exclude), self.year)

    def to_dict(self) -> dict:
        return {
            "rendered": render_query(self),
            "site": self.site,
            "phrases": list(self.phrases),
            "include": self.include_letter,
            "exclude": list(self.exclude_letters),
            "year": self.year,
        }

    @classmethod
    def from_dict(cls, d: dict) -> QuerySpec:
        return cls(d["site"], tuple(d["phrases"]), d.get("include"),
                   tuple(d.get("exclude", ())), d.get("year"))


def render_query(q: QuerySpec) -> str:
    """Render the query text; the year travels separately as a range filter."""
    parts = [f"site:{q.site}"]
    parts += [f'"{phrase}"' for phrase in q.phrases]
    if q.include_letter is not None:
        parts.append(f"author:{q.include_letter}")
    parts += [f"-author:{letter}" for letter in q.exclude_letters]
    return " ".join(parts)


def query_length(q: QuerySpec) -> int:
    return len(render_query(q))


def max_exclusions(base_len: int, budget: int) -> int:
    """How many ``-author:X`` clauses fit after a query of ``base_len`` chars."""
    if budget < base_len:
        return 0
    return (budget - base_len) // EXCLUSION_COST


@dataclass(frozen=True)
class LetterHistogram:
    year: int
    hits: dict[str, int]

    def __post_init__(self):
        missing = [c for c in LETTERS if c not in self.hits]
        if missing:
            raise ValueError(f"histogram for {self.year} lacks letters {''.join(missing)}")
        extra = set(self.hits) - set(LETTERS)
        if extra:
            raise ValueError(f"unexpected histogram keys {sorted(extra)}")
        if any(int(v) < 0 for v in self.hits.values()):
            raise ValueError("histogram counts must be non-negative")

    def to_dict(self) -> dict:
        return {"year": self.year, "hits": {c: int(self.hits[c]) for c in LETTERS}}

    @classmethod
    def from_dict(cls, d: dict) -> LetterHistogram:
        return cls(int(d["year"]), {k: int(v) for k, v in d["hits"].items()})


@dataclass(frozen=True)
class PlanWarning:
    letter: str
    predicted_overflow: bool
    residual_estimate: int
    excluded: int
    excludable: int

    def to_dict(self) -> dict:
        return {
            "letter": self.letter,
            "predicted_overflow": self.predicted_overflow,
            "residual_estimate": self.residual_estimate,
            "excluded": self.excluded,
            "excludable": self.excludable,
        }


@dataclass(frozen=True)
class QueryPlan:
    year: int
    budget: int
    cap: int
    queries: tuple[QuerySpec, ...]
    warnings: tuple[PlanWarning, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "year": self.year,
            "budget": self.budget,
            "cap": self.cap,
            "queries": [q.to_dict() for q in self.queries],
            "warnings": [w.to_dict() for w in self.warnings],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> QueryPlan:
        return cls(
            int(d["year"]), int(d["budget"]), int(d["cap"]),
            tuple(QuerySpec.from_dict(q) for q in d["queries"]),
            tuple(PlanWarning(**w) for w in d.get("warnings", ())),
        )


def plan_year(hist: LetterHistogram, base: QuerySpec, budget: int = DEFAULT_BUDGET,
              cap: int = DEFAULT_CAP) -> QueryPlan:
    """Greedy initial-splitting plan for one year.

    Letters run in ascending hit order (ties alphabetical). Each query
    excludes the previously run letters, highest hit count first, cut to
    whatever fits in ``budget``. A letter over ``cap`` that could not
    exclude every earlier letter gets a warning; if it excludes nothing
    its overflow is certain.
    """
    if base.include_letter is not None or base.exclude_letters:
        raise ValueError("base query must not carry author letters")
    base_len = query_length(base)
    if base_len + INCLUSION_COST > budget:
        raise ValueError(
            f"budget {budget} cannot hold the base query plus one author clause "
            f"({base_len + INCLUSION_COST} chars)")
    room = max_exclusions(base_len + INCLUSION_COST, budget)
    year = hist.year if base.year is None else base.year

    order = sorted((c for c in LETTERS if hist.hits[c] > 0), key=lambda c: (hist.hits[c], c))
    queries: list[QuerySpec] = []
    warnings: list[PlanWarning] = []
    done: list[str] = []
    for letter in order:
        earlier = sorted(done, key=lambda c: (-hist.hits[c], c))
        exclude = earlier[:room]
        queries.append(QuerySpec(base.site, base.phrases, letter, tuple(exclude), year))
        count = hist.hits[letter]
        if count > cap and len(exclude) < len(earlier):
            warnings.append(PlanWarning(
                letter=letter,
                predicted_overflow=not exclude,
                residual_estimate=count - cap,
                excluded=len(exclude),
                excludable=len(earlier),
            ))
        elif count > cap and not earlier:
            warnings.append(PlanWarning(letter, True, count - cap, 0, 0))
        done.append(letter)
    return QueryPlan(year, budget, cap, tuple(queries), tuple(warnings))
