import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scholimpact.planner import (DEFAULT_PHRASES, LETTERS, LetterHistogram, QueryPlan, QuerySpec,
                                 max_exclusions, plan_year, query_length, render_query)

M_EXCLUDES = tuple("AJSCLDRKEBTPHGNW")
BASE_TEXT = 'site:proquest.com "Doctor of" "The quality of this reproduction is dependent upon"'


def test_render_q_minus_u(base_query):
    q = base_query.with_letters("Q", ["U"])
    assert render_query(q) == BASE_TEXT + " author:Q -author:U"


def test_render_base(base_query):
    assert render_query(base_query) == BASE_TEXT


def test_render_m_query(base_query):
    q = base_query.with_letters("M", M_EXCLUDES)
    expected = BASE_TEXT + " author:M " + " ".join(f"-author:{c}" for c in M_EXCLUDES)
    assert render_query(q) == expected
    assert query_length(q) == 251


def test_lengths(base_query):
    # counted independently: 18 + 1 + 11 + 1 + 51 = 82
    assert len(BASE_TEXT) == 82
    assert query_length(base_query) == 82
    assert query_length(base_query.with_letters("M")) == 91


def test_year_not_rendered():
    q = QuerySpec("proquest.com", DEFAULT_PHRASES, "A", (), 2015)
    assert "2015" not in render_query(q)


@pytest.mark.parametrize("base_len, budget, expected", [(91, 256, 16), (256, 256, 0), (91, 131, 4),
                                                         (300, 256, 0)])
def test_max_exclusions(base_len, budget, expected):
    assert max_exclusions(base_len, budget) == expected


@pytest.mark.parametrize("kwargs", [
    dict(include_letter="A", exclude_letters=("A",)),
    dict(exclude_letters=("B", "B")),
    dict(include_letter="a"),
    dict(phrases=('say "hi"',)),
])
def test_query_spec_invariants(kwargs):
    with pytest.raises(ValueError):
        QuerySpec("proquest.com", **kwargs)


def test_histogram_validation():
    with pytest.raises(ValueError, match="lacks"):
        LetterHistogram(2013, {"A": 1})
    with pytest.raises(ValueError):
        LetterHistogram(2013, {**dict.fromkeys(LETTERS, 0), "A": -1})


def test_letter_hits_plan(letter_hist, base_query):
    plan = plan_year(letter_hist, base_query, 256, 1000)
    assert len(plan.queries) == 26
    assert (plan.queries[0].include_letter, plan.queries[0].exclude_letters) == ("U", ())
    assert (plan.queries[1].include_letter, plan.queries[1].exclude_letters) == ("Q", ("U",))
    m = next(q for q in plan.queries if q.include_letter == "M")
    assert m.exclude_letters == M_EXCLUDES
    assert query_length(m) == 251
    assert plan.queries[-1] is m
    # A precedes J at the 2,880 tie
    order = [q.include_letter for q in plan.queries]
    assert order.index("A") < order.index("J")
    assert all(query_length(q) <= 256 for q in plan.queries)
    assert {w.letter for w in plan.warnings} == set("MAJSCLDRK")
    assert not any(w.predicted_overflow for w in plan.warnings)


def test_all_zero_histogram(base_query):
    plan = plan_year(LetterHistogram(2013, dict.fromkeys(LETTERS, 0)), base_query)
    assert plan.queries == () and plan.warnings == ()


def test_uniform_histogram_huge_budget(base_query):
    plan = plan_year(LetterHistogram(2013, dict.fromkeys(LETTERS, 10)), base_query, budget=10_000)
    for k, q in enumerate(plan.queries):
        assert q.include_letter == LETTERS[k]
        assert q.exclude_letters == LETTERS[:k]


def test_zero_letters_skipped(letter_hist, base_query):
    hist = LetterHistogram(2013, {**letter_hist.hits, "U": 0, "X": 0})
    plan = plan_year(hist, base_query)
    assert [q.include_letter for q in plan.queries][:2] == ["Q", "Z"]
    assert len(plan.queries) == 24


def test_single_letter_over_cap_warns(base_query):
    hist = LetterHistogram(2013, {**dict.fromkeys(LETTERS, 0), "E": 1500})
    plan = plan_year(hist, base_query)
    assert len(plan.queries) == 1
    (w,) = plan.warnings
    assert (w.letter, w.predicted_overflow, w.residual_estimate) == ("E", True, 500)


def test_small_budget_no_room(letter_hist, base_query):
    plan = plan_year(letter_hist, base_query, budget=91, cap=1000)
    assert all(q.exclude_letters == () for q in plan.queries)
    overflow = {w.letter for w in plan.warnings if w.predicted_overflow}
    assert overflow == {c for c in LETTERS if letter_hist.hits[c] > 1000}


def test_budget_too_small_raises(letter_hist, base_query):
    with pytest.raises(ValueError, match="budget"):
        plan_year(letter_hist, base_query, budget=90)


def test_base_with_letters_rejected(letter_hist, base_query):
    with pytest.raises(ValueError):
        plan_year(letter_hist, base_query.with_letters("A"))


def test_plan_json_round_trip(letter_hist, base_query):
    plan = plan_year(letter_hist, base_query)
    d = json.loads(plan.to_json())
    assert set(d) == {"year", "budget", "cap", "queries", "warnings"}
    assert d["queries"][1]["rendered"].endswith("author:Q -author:U")
    assert QueryPlan.from_dict(d) == plan


histograms = st.lists(st.integers(0, 5000), min_size=26, max_size=26).map(
    lambda xs: LetterHistogram(2014, dict(zip(LETTERS, xs))))


@settings(max_examples=200, deadline=None)
@given(histograms, st.integers(91, 400), st.integers(1, 3000))
def test_plan_properties(hist, budget, cap):
    base = QuerySpec("proquest.com", DEFAULT_PHRASES, year=2014)
    plan = plan_year(hist, base, budget, cap)
    letters = [q.include_letter for q in plan.queries]
    assert sorted(letters) == sorted(c for c in LETTERS if hist.hits[c] > 0)
    counts = [hist.hits[c] for c in letters]
    assert counts == sorted(counts)
    for k, q in enumerate(plan.queries):
        assert query_length(q) <= budget
        earlier = sorted(letters[:k], key=lambda c: (-hist.hits[c], c))
        assert q.exclude_letters == tuple(earlier[:len(q.exclude_letters)])
        # longest prefix: one more would not fit
        if len(q.exclude_letters) < len(earlier):
            assert query_length(q) + 10 > budget
    assert plan_year(hist, base, budget, cap).to_json() == plan.to_json()


@settings(max_examples=100, deadline=None)
@given(histograms, st.integers(91, 300), st.integers(0, 200))
def test_exclusion_monotone_in_budget(hist, budget, extra):
    base = QuerySpec("proquest.com", DEFAULT_PHRASES, year=2014)
    lo = plan_year(hist, base, budget)
    hi = plan_year(hist, base, budget + extra)
    for a, b in zip(lo.queries, hi.queries):
        assert a.include_letter == b.include_letter
        assert len(a.exclude_letters) <= len(b.exclude_letters)
