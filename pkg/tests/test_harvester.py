import random

import pytest

from scholimpact.backend import BackendError, RawHit, SimulatorBackend
from scholimpact.harvester import (Cursor, HarvestInterrupted, RawResultSet, coverage_report, dedup_key,
                                   execute_plan, load_partial, save_partial)
from scholimpact.planner import DEFAULT_PHRASES, LetterHistogram, QueryPlan, QuerySpec, plan_year

from .conftest import make_record, random_corpus
from .oracles import eligible, expected_retrieval, overflowing_queries, record_key

BASE = QuerySpec("proquest.com", DEFAULT_PHRASES, year=2013)


def _plan(sim, cap, budget=256):
    return plan_year(LetterHistogram(2013, sim.letter_histogram(BASE)), BASE, budget, cap)


def test_dedup_key_examples():
    a = RawHit("Dual Fuel RCCI Combustion", "MZA Durrani", 2013, "proquest.com", 3, 1)
    b = RawHit("Dual fuel: RCCI combustion", "MZA Durrani", 2013, "proquest.com", 5, 4)
    assert dedup_key(a) == dedup_key(b)
    rs = RawResultSet(2013)
    rs.add(a, 0)
    rs.add(b, 7)
    assert len(rs) == 1
    (kept,) = rs.hits_by_key.values()
    assert kept.cited_by == 5
    assert rs.provenance[dedup_key(a)] == [0, 7]
    c = RawHit("Dual Fuel RCCI Combustion", "J Smith", 2013, "proquest.com", 0, 1)
    assert dedup_key(a) != dedup_key(c)
    assert dedup_key(a, "title_only") == dedup_key(c, "title_only")
    assert dedup_key(RawHit("x", "JZ Fuller", 2013, "d", 0, 1))[1] == "fuller"
    with pytest.raises(ValueError):
        dedup_key(a, "fuzzy")


def test_empty_plan():
    rs = execute_plan(QueryPlan(2013, 256, 1000, ()), SimulatorBackend([]))
    assert len(rs) == 0 and rs.truncation_warnings == []


@pytest.mark.parametrize("seed", range(6))
def test_coverage_when_no_overflow(seed):
    rng = random.Random(seed)
    corpus = random_corpus(rng, rng.randint(200, 3000))
    sim = SimulatorBackend(corpus, cap=1000, page_size=50)
    plan = _plan(sim, 1000)
    assert not overflowing_queries(corpus, plan, 1000)
    rs = execute_plan(plan, sim)
    truth = {record_key(r): r.id for r in eligible(corpus, BASE)}
    assert set(rs.hits_by_key) == set(truth)
    assert rs.truncation_warnings == []
    assert len(rs) <= sum(sim.count(q) for q in plan.queries)


def test_overflow_shortfall_is_truncated_residue():
    rng = random.Random(11)
    corpus = random_corpus(rng, 1500, skew=0.2)
    # 120 records carrying only the initial E overflow the E query at cap 100
    corpus += [make_record(50_000 + i, first="Exx", last=f"Over{i}", title=f"Overflow {i}",
                           cited_by=i % 5) for i in range(120)]
    sim = SimulatorBackend(corpus, cap=100, page_size=30)
    plan = _plan(sim, 100)
    over = overflowing_queries(corpus, plan, 100)
    assert over
    rs = execute_plan(plan, sim)
    truth = {record_key(r): r.id for r in eligible(corpus, BASE)}
    got = expected_retrieval(corpus, plan, 100)
    report = coverage_report(rs, truth)
    assert set(rs.hits_by_key) == set(got)
    assert report["missing_ids"] == sorted(truth[k] for k in truth.keys() - got.keys())
    assert report["missing_ids"]
    assert [w["query_index"] for w in rs.truncation_warnings] == over
    e_index = next(i for i, q in enumerate(plan.queries) if q.include_letter == "E")
    assert e_index in over
    assert any(w["letter"] == "E" for w in rs.truncation_warnings)


def test_idempotent():
    corpus = random_corpus(random.Random(3), 800)
    sim = SimulatorBackend(corpus, cap=60, page_size=25)
    plan = _plan(sim, 60)
    a, b = execute_plan(plan, sim), execute_plan(plan, sim)
    assert a.to_jsonl() == b.to_jsonl()
    assert a.warnings_json() == b.warnings_json()


class FlakyBackend:
    """Raises once at a chosen (query, page) call, then behaves."""

    def __init__(self, inner, fail_at):
        self.inner = inner
        self.cap = inner.cap
        self.fail_at = fail_at
        self.calls = 0

    def search(self, q, page=1):
        self.calls += 1
        if self.calls == self.fail_at:
            raise BackendError("simulated outage")
        return self.inner.search(q, page)

    def count(self, q):
        return self.inner.count(q)


@pytest.mark.parametrize("fail_at", [1, 2, 5, 17, 40])
def test_resume_matches_uninterrupted(tmp_path, fail_at):
    corpus = random_corpus(random.Random(8), 900)
    sim = SimulatorBackend(corpus, cap=60, page_size=20)
    plan = _plan(sim, 60)
    full = execute_plan(plan, sim)
    flaky = FlakyBackend(sim, fail_at)
    with pytest.raises(HarvestInterrupted) as info:
        execute_plan(plan, flaky)
    exc = info.value
    assert isinstance(exc.cursor, Cursor)
    save_partial(exc.partial, exc.cursor, tmp_path / "raw.jsonl", tmp_path / "cursor.json")
    partial, cursor = load_partial(tmp_path / "raw.jsonl", tmp_path / "cursor.json", 2013)
    assert cursor == exc.cursor
    resumed = execute_plan(plan, flaky, resume_from=cursor, partial=partial)
    assert resumed.to_jsonl() == full.to_jsonl()
    assert resumed.truncation_warnings == full.truncation_warnings


def test_jsonl_round_trip():
    corpus = random_corpus(random.Random(4), 300)
    sim = SimulatorBackend(corpus, cap=1000, page_size=100)
    rs = execute_plan(_plan(sim, 1000), sim)
    again = RawResultSet.from_jsonl(rs.to_jsonl(), 2013)
    assert again.to_jsonl() == rs.to_jsonl()
    assert all(again.provenance[k] for k in again.hits_by_key)
