"""Impact indicators for skewed count data, tabulated by field and year.

Internal values keep full precision; rounding happens only in the
renderers at the bottom of the module.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Callable, Iterable, Sequence

from .mendeley import STATUS_CLASSES, STATUS_LABELS
from .subjects import OECD_FIELDS, field_group
from .tdist import t_quantile, t_sf

ALL = "All"
CITING_TYPES = ("journal", "dissertation", "book", "conference", "other")


class InsufficientDataError(ValueError):
    pass


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class IntervalEstimate:
    point: float
    lo: float
    hi: float
    level: float = 0.95
    n: int = 0
    sd: float | None = None
    t_crit: float | None = None


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    n: int
    p_value: float

    @property
    def stars(self) -> str:
        if self.p_value <= 0.01:
            return "**"
        if self.p_value <= 0.05:
            return "*"
        return ""


def _counts(values: Iterable[int]) -> list[int]:
    out = [int(v) for v in values]
    if any(v < 0 for v in out):
        raise ValueError("counts must be non-negative")
    return out


def geometric_mean(values: Sequence[int]) -> float:
    """exp(mean(ln(c + 1))) - 1, the offset geometric mean of counts."""
    counts = _counts(values)
    if not counts:
        raise InsufficientDataError("geometric mean of an empty vector")
    if min(counts) == max(counts):
        # exact, where the log/exp round trip is not
        return float(counts[0])
    logs = [math.log1p(c) for c in counts]
    return math.expm1(math.fsum(logs) / len(logs))


def geometric_mean_ci(values: Sequence[int], level: float = 0.95) -> IntervalEstimate:
    """t interval on ln(c + 1), mapped back with exp(l) - 1."""
    counts = _counts(values)
    n = len(counts)
    if n < 2:
        raise InsufficientDataError("a confidence interval needs at least two values")
    logs = [math.log1p(c) for c in counts]
    mean = math.fsum(logs) / n
    sd = math.sqrt(math.fsum((x - mean) ** 2 for x in logs) / (n - 1))
    t_crit = t_quantile(n - 1, 1.0 - (1.0 - level) / 2.0)
    half = t_crit * sd / math.sqrt(n)
    point = geometric_mean(counts)
    return IntervalEstimate(point, min(point, math.expm1(mean - half)),
                            max(point, math.expm1(mean + half)), level, n, sd, t_crit)


def proportion_nonzero(values: Sequence[int], level: float = 0.95,
                       method: str = "normal") -> IntervalEstimate:
    """Share of non-zero counts with a normal-approximation (or Wilson) interval."""
    counts = _counts(values)
    n = len(counts)
    if n == 0:
        raise InsufficientDataError("proportion of an empty vector")
    return proportion_interval(sum(1 for c in counts if c > 0), n, level, method)


def proportion_interval(successes: int, n: int, level: float = 0.95,
                        method: str = "normal") -> IntervalEstimate:
    if n <= 0:
        raise InsufficientDataError("proportion needs n >= 1")
    p = successes / n
    z = NormalDist().inv_cdf(1.0 - (1.0 - level) / 2.0)
    if method == "normal":
        half = z * math.sqrt(p * (1.0 - p) / n)
        lo, hi = max(0.0, p - half), min(1.0, p + half)
    elif method == "wilson":
        denom = 1.0 + z * z / n
        centre = (p + z * z / (2 * n)) / denom
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
        lo, hi = max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))
    else:
        raise ValueError(f"unknown interval method {method!r}")
    return IntervalEstimate(p, lo, hi, level, n)


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of the ranks they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def _rank_correlation(rx: Sequence[float], ry: Sequence[float]) -> float:
    """Pearson's r on average ranks, correctly rounded.

    Average ranks are multiples of 1/2, so the doubled ranks are integers
    and every sum is exact; only the final square-root ratio is rounded.
    """
    a = [int(2 * r) for r in rx]
    b = [int(2 * r) for r in ry]
    n = len(a)
    sa, sb = sum(a), sum(b)
    num = n * sum(p * q for p, q in zip(a, b)) - sa * sb
    va = n * sum(p * p for p in a) - sa * sa
    vb = n * sum(q * q for q in b) - sb * sb
    if va == 0 or vb == 0:
        raise UndefinedCorrelationError("a constant column has no rank correlation")
    # |r| = sqrt(num^2 / (va vb)); 128 spare bits plus a sticky bit give correct rounding
    shift = 128
    quot, rem = divmod(num * num << (2 * shift), va * vb)
    root = math.isqrt(quot)
    inexact = rem or root * root != quot
    mag = (2 * root + (1 if inexact else 0)) / (1 << (shift + 1))
    return math.copysign(min(mag, 1.0), num)


def spearman(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Spearman's rho with a two-sided t-approximation p-value."""
    if len(x) != len(y):
        raise ValueError("x and y differ in length")
    n = len(x)
    if n < 3:
        raise InsufficientDataError("spearman needs at least three pairs")
    rho = _rank_correlation(average_ranks(x), average_ranks(y))
    if abs(rho) >= 1.0:
        return CorrelationResult(rho, n, 0.0)
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = min(1.0, 2.0 * t_sf(abs(t), n - 2))
    return CorrelationResult(rho, n, p)


def weighted_precision(per_field: dict[str, tuple[int, int]], weights: dict[str, float]) -> float:
    """Population-weighted mean of per-field precision (verified / checked)."""
    num = den = 0.0
    for name, (verified, checked) in per_field.items():
        w = float(weights.get(name, 0.0))
        if w < 0:
            raise ValueError(f"negative weight for {name!r}")
        if w == 0:
            continue
        if checked <= 0:
            raise ValueError(f"field {name!r} has no checked citations")
        num += w * verified / checked
        den += w
    if den <= 0:
        raise ValueError("weights sum to zero")
    return num / den


# --- field x year tables -------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    n: int
    point: float | None = None
    lo: float | None = None
    hi: float | None = None
    p_value: float | None = None
    stars: str = ""

    @property
    def blank(self) -> bool:
        return self.point is None


def _interval_cell(n: int, est: IntervalEstimate) -> Cell:
    return Cell(n, est.point, est.lo, est.hi)


def _metric_n(rows) -> Cell:
    return Cell(len(rows), float(len(rows)))


def _gm_metric(attr: str) -> Callable:
    def cell(rows) -> Cell:
        vals = [getattr(r, attr) for r in rows if getattr(r, attr) is not None]
        if len(vals) >= 2:
            return _interval_cell(len(vals), geometric_mean_ci(vals))
        if len(vals) == 1:
            return Cell(1, geometric_mean(vals))
        return Cell(0)
    return cell


def _prop_metric(attr: str) -> Callable:
    def cell(rows) -> Cell:
        vals = [getattr(r, attr) for r in rows if getattr(r, attr) is not None]
        if not vals:
            return Cell(0)
        return _interval_cell(len(vals), proportion_nonzero(vals))
    return cell


def _spearman_metric(rows) -> Cell:
    pairs = [(r.gs_citations, r.mendeley_readers) for r in rows if r.mendeley_readers is not None]
    if len(pairs) < 3:
        return Cell(len(pairs))
    try:
        res = spearman([a for a, _ in pairs], [b for _, b in pairs])
    except UndefinedCorrelationError:
        return Cell(len(pairs))
    return Cell(len(pairs), res.rho, p_value=res.p_value, stars=res.stars)


METRICS: dict[str, Callable] = {
    "n": _metric_n,
    "gm_citations": _gm_metric("gs_citations"),
    "gm_readers": _gm_metric("mendeley_readers"),
    "prop_citations": _prop_metric("gs_citations"),
    "prop_readers": _prop_metric("mendeley_readers"),
    "spearman": _spearman_metric,
}


@dataclass
class IndicatorTable:
    metric: str
    fields: tuple[str, ...]
    years: tuple[int, ...]
    cells: dict[tuple[str, object], Cell] = field(default_factory=dict)
    unmapped: int = 0

    def cell(self, row: str, col) -> Cell:
        return self.cells[(row, col)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = [*self.years, ALL]
        header = ["field"]
        for y in cols:
            header += [f"{y}_point", f"{y}_lo", f"{y}_hi", f"{y}_n"]
            if self.metric == "spearman":
                header += [f"{y}_p"]
        writer.writerow(header)
        for row in [*self.fields, ALL]:
            out = [row]
            for y in cols:
                c = self.cells[(row, y)]
                out += [_fmt(c.point), _fmt(c.lo), _fmt(c.hi), c.n]
                if self.metric == "spearman":
                    out += [_fmt(c.p_value)]
            writer.writerow(out)
        return buf.getvalue()

    def to_markdown(self, digits: int | None = None) -> str:
        digits = digits if digits is not None else {"n": 0, "spearman": 3}.get(self.metric, 2)
        cols = [*self.years, ALL]
        head = "| Subject area | " + " | ".join(str(c) for c in cols) + " |"
        rule = "|---|" + "---:|" * len(cols)
        lines = [head, rule]
        for row in [*self.fields, ALL]:
            rendered = [render_cell(self.cells[(row, y)], self.metric, digits) for y in cols]
            lines.append(f"| {row} | " + " | ".join(rendered) + " |")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    return repr(float(v))


def render_rho(rho: float, digits: int = 3) -> str:
    text = f"{rho:.{digits}f}"
    # .103 style, as in correlation tables
    return text.replace("0.", ".", 1) if abs(rho) < 1 else text


def render_cell(c: Cell, metric: str, digits: int) -> str:
    if metric == "n":
        return f"{c.n:,}"
    if c.blank:
        return ""
    if metric == "spearman":
        return render_rho(c.point, digits) + c.stars
    if metric.startswith("prop"):
        return f"{100 * c.point:.0f}%"
    return f"{c.point:.{digits}f}"


def field_year_table(data: Iterable, metric: str, years: Iterable[int] | None = None,
                     fields: Sequence[str] = OECD_FIELDS) -> IndicatorTable:
    """Evaluate ``metric`` on every field x year cell plus the marginals.

    Records mapped to ``UNMAPPED`` (or any label outside ``fields``) are left
    out and counted in ``table.unmapped``.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    compute = METRICS[metric]
    rows = list(data)
    kept = [r for r in rows if r.oecd_field in fields]
    year_list = tuple(sorted(set(years) if years is not None else {r.year for r in kept}))
    kept = [r for r in kept if r.year in year_list]
    groups: dict[tuple[str, object], list] = defaultdict(list)
    for r in kept:
        groups[(r.oecd_field, r.year)].append(r)
        groups[(r.oecd_field, ALL)].append(r)
        groups[(ALL, r.year)].append(r)
        groups[(ALL, ALL)].append(r)
    table = IndicatorTable(metric, tuple(fields), year_list,
                           unmapped=sum(1 for r in rows if r.oecd_field not in fields))
    for f in [*fields, ALL]:
        for y in [*year_list, ALL]:
            table.cells[(f, y)] = compute(groups.get((f, y), []))
    return table


def compare_intervals(a: IndicatorTable, b: IndicatorTable) -> list[dict]:
    """Flag cells where two interval tables do not overlap (no formal test)."""
    out = []
    for key, ca in a.cells.items():
        cb = b.cells.get(key)
        if cb is None or ca.lo is None or cb.lo is None:
            continue
        if ca.lo > cb.hi:
            verdict = "first_higher"
        elif cb.lo > ca.hi:
            verdict = "second_higher"
        else:
            verdict = "overlap"
        out.append({"field": key[0], "year": key[1], "verdict": verdict})
    return out


# --- citation audit ----------------------------------------------------------


@dataclass(frozen=True)
class AuditRecord:
    dissertation_id: str
    citing_doc_id: str
    verified: bool
    citing_type: str
    self_citation: bool
    field: str

    def __post_init__(self):
        if self.citing_type not in CITING_TYPES:
            raise ValueError(f"citing_type must be one of {CITING_TYPES}, got {self.citing_type!r}")


def _flag(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in {"1", "true", "yes", "y"}:
        return True
    if lowered in {"0", "false", "no", "n", ""}:
        return False
    raise ValueError(f"cannot read {text!r} as a boolean")


def load_audit_csv(path_or_text: str | Path) -> list[AuditRecord]:
    text = (Path(path_or_text).read_text(encoding="utf-8")
            if isinstance(path_or_text, Path) or "\n" not in str(path_or_text)
            else str(path_or_text))
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    out = []
    for row in reader:
        out.append(AuditRecord(row["dissertation_id"], row["citing_doc_id"], _flag(row["verified"]),
                               row["citing_type"].strip().lower(), _flag(row["self_citation"]),
                               row["field"]))
    return out


def _audit_block(records: list[AuditRecord]) -> dict:
    checked = len(records)
    correct = [r for r in records if r.verified]
    types = Counter(r.citing_type for r in correct)
    return {
        "checked": checked,
        "verified": len(correct),
        "precision": len(correct) / checked if checked else None,
        "citing_type_shares": {t: types[t] / len(correct) for t in CITING_TYPES} if correct else {},
        "self_citation_share": (sum(r.self_citation for r in correct) / len(correct)) if correct else None,
    }


def aggregate_audit(records: Iterable[AuditRecord]) -> dict:
    """Precision, citing-source mix and self-citation share, overall and by field group.

    Shares are taken over verified citations only.
    """
    records = list(records)
    if not records:
        return {}
    summary = _audit_block(records)
    by_group: dict[str, list[AuditRecord]] = defaultdict(list)
    by_field: dict[str, list[AuditRecord]] = defaultdict(list)
    for r in records:
        by_group[field_group(r.field)].append(r)
        by_field[r.field].append(r)
    summary["by_group"] = {g: _audit_block(rs) for g, rs in sorted(by_group.items())}
    summary["per_field"] = {f: (sum(r.verified for r in rs), len(rs)) for f, rs in sorted(by_field.items())}
    return summary


# --- reader status -------------------------------------------------------------


def aggregate_reader_status(breakdowns: Iterable) -> dict:
    """Sum status breakdowns; percentages per label and per class of the total."""
    totals = dict.fromkeys(STATUS_LABELS, 0)
    for b in breakdowns:
        for label in STATUS_LABELS:
            totals[label] += b.counts.get(label, 0)
    total = sum(totals.values())
    classes = {name: sum(totals[label] for label in members) for name, members in STATUS_CLASSES.items()}
    if total == 0:
        return {"total": 0, "counts": totals, "class_counts": classes,
                "label_pct": dict.fromkeys(STATUS_LABELS), "class_pct": dict.fromkeys(STATUS_CLASSES)}
    return {
        "total": total,
        "counts": totals,
        "class_counts": classes,
        "label_pct": {k: 100.0 * v / total for k, v in totals.items()},
        "class_pct": {k: 100.0 * v / total for k, v in classes.items()},
    }
