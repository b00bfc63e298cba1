"""Independent, deliberately naive reference implementations used as test oracles."""

from __future__ import annotations

import bisect
import functools
import math
from fractions import Fraction

import mpmath

from scholimpact.backend import matches
from scholimpact.catalog import last_name_key, normalize_title


def record_key(rec):
    return (normalize_title(rec.title), last_name_key(rec.author_last))


def eligible(corpus, base):
    """Records the base query matches that carry at least one A-Z initial."""
    return [r for r in corpus if matches(r, base) and r.initials]


def expected_retrieval(corpus, plan, cap):
    """Union over plan queries of each query's first ``cap`` matches.

    Ordering is re-derived here from the documented rule rather than reused.
    """
    base_ok = [r for r in corpus if matches(r, plan.queries[0].with_letters(None))] if plan.queries else []
    got = {}
    for q in plan.queries:
        hits = [r for r in base_ok
                if q.include_letter in r.initials and not r.initials.intersection(q.exclude_letters)]
        hits.sort(key=lambda r: (-r.cited_by, normalize_title(r.title), r.id))
        for r in hits[:cap]:
            got[record_key(r)] = r.id
    return got


def overflowing_queries(corpus, plan, cap):
    out = []
    for i, q in enumerate(plan.queries):
        if sum(matches(r, q) for r in corpus) > cap:
            out.append(i)
    return out


def brute_force_harvest(corpus, plan, cap):
    """One pass per plan query over the base matches.

    Returns ``(retrieved, overflowing)``: key -> id for the union of each
    query's first ``cap`` records, and the indices of queries whose true
    count exceeds ``cap``.
    """
    if not plan.queries:
        return {}, []
    base = plan.queries[0].with_letters(None)
    pool = [r for r in corpus if matches(r, base)]
    pool.sort(key=lambda r: (-r.cited_by, normalize_title(r.title), r.id))
    pool = [(r, r.initials) for r in pool]
    got, overflowing = {}, []
    for i, q in enumerate(plan.queries):
        excl = set(q.exclude_letters)
        hits = [r for r, inits in pool if q.include_letter in inits and not excl & inits]
        if len(hits) > cap:
            overflowing.append(i)
        for r in hits[:cap]:
            got[record_key(r)] = r.id
    return got, overflowing


def geometric_mean_exact(values):
    """(prod(c+1))^(1/n) - 1 with an exact integer product and a 50-digit root."""
    prod = 1
    for v in values:
        prod *= int(v) + 1
    with mpmath.workdps(50):
        return float(mpmath.root(mpmath.mpf(prod), len(values)) - 1)


def naive_ranks(xs):
    """Average ranks by counting: rank = #less + (#equal + 1) / 2."""
    return [Fraction(r, 2) for r in doubled_ranks(xs)]


def naive_spearman(xs, ys):
    """Pearson on doubled integer ranks, exact until one final rounding to float."""
    rx, ry = doubled_ranks(xs), doubled_ranks(ys)
    n = len(xs)
    sa, sb = sum(rx), sum(ry)
    num = n * sum(a * b for a, b in zip(rx, ry)) - sa * sb
    va = n * sum(a * a for a in rx) - sa * sa
    vb = n * sum(b * b for b in ry) - sb * sb
    if va == 0 or vb == 0:
        return None
    return correctly_rounded_ratio(num, va, vb)


def weak_orderings(n):
    """Every vector of length n over {0..k-1} that uses all k levels (every tie pattern)."""
    def place(remaining, level, acc):
        if not remaining:
            yield tuple(acc)
            return
        items = sorted(remaining)
        # choose a non-empty subset of the remaining positions for this level
        for mask in range(1, 1 << len(items)):
            chosen = [items[i] for i in range(len(items)) if mask >> i & 1]
            for i in chosen:
                acc[i] = level
            yield from place(remaining - set(chosen), level + 1, acc)

    yield from place(set(range(n)), 0, [0] * n)


def doubled_ranks(xs):
    """2 x average rank as integers: 2*#less + #equal + 1 (counted by bisection)."""
    ordered = sorted(xs)
    out = []
    for x in xs:
        less = bisect.bisect_left(ordered, x)
        equal = bisect.bisect_right(ordered, x) - less
        out.append(2 * less + equal + 1)
    return out


@functools.lru_cache(maxsize=None)
def correctly_rounded_ratio(num, va, vb):
    """float(num / sqrt(va * vb)) from a 60-digit evaluation."""
    with mpmath.workdps(60):
        return float(mpmath.mpf(num) / mpmath.sqrt(mpmath.mpf(va) * vb))
