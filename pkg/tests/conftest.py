import random

import pytest

from scholimpact.catalog import DissertationRecord
from scholimpact.planner import DEFAULT_PHRASES, LetterHistogram, QuerySpec

# Letter frequencies in first-name initials, 2013, as reported for the
# site:proquest.com "Doctor of" + copyright-phrase query.
LETTER_HITS_2013 = {
    "M": 3130, "A": 2880, "J": 2880, "S": 2250, "C": 1850, "L": 1800, "D": 1710,
    "R": 1600, "K": 1420, "E": 1370, "B": 1070, "T": 1040, "P": 961, "H": 808,
    "G": 739, "N": 721, "W": 657, "F": 512, "Y": 485, "V": 372, "O": 252,
    "I": 242, "X": 159, "Z": 136, "Q": 89, "U": 30,
}


@pytest.fixture
def letter_hist():
    return LetterHistogram(2013, dict(LETTER_HITS_2013))


@pytest.fixture
def base_query():
    return QuerySpec("proquest.com", DEFAULT_PHRASES, year=2013)


def make_record(i, first="Zachary B.", last="Haber", year=2013, **kw):
    defaults = dict(
        id=f"R{i:05d}", title=f"Dissertation number {i}", author_last=last, author_first=first,
        year=year, degree="Ph.D.", subjects=("Education",), institution="U", country="United States",
        has_copyright_phrase=True, degree_phrase=True, source_domains=("proquest.com",), cited_by=0,
    )
    defaults.update(kw)
    return DissertationRecord(**defaults)


def random_corpus(rng: random.Random, n: int, year: int = 2013, skew: float = 1.2,
                  with_noise: bool = True):
    """Records whose initials follow a Zipf-like letter distribution."""
    letters = [chr(ord("A") + i) for i in range(26)]
    rng.shuffle(letters)
    weights = [1.0 / (k + 1) ** skew for k in range(26)]
    out = []
    for i in range(n):
        k = rng.choices([1, 2, 3], weights=[6, 3, 1])[0]
        initials = rng.choices(letters, weights=weights, k=k)
        first = " ".join(c + "xx" for c in initials)
        if with_noise and rng.random() < 0.01:
            first = "Ábel"
        kw = {}
        if with_noise:
            r = rng.random()
            if r < 0.03:
                kw["source_domains"] = ("repository.example.edu",)
            elif r < 0.05:
                kw["has_copyright_phrase"] = False
            elif r < 0.07:
                kw["year"] = year + 1
        out.append(make_record(i, first=first, last=f"Last{i % 97}", title=f"Title {i} of corpus",
                               cited_by=rng.randrange(0, 40), **({"year": year} | kw)))
    return out


@pytest.fixture
def datadir():
    from pathlib import Path

    return Path(__file__).parent / "data"


def filter_fixture(n_masters=1111, n_foreign=2538, n_total=81_533, seed=0):
    """Matched records with a known count of masters and (among the rest) non-US records."""
    from scholimpact.matcher import MatchedDissertation

    rng = random.Random(seed)
    masters = ["M.A.", "M.S.", "M.P.H.", "M.P.P.", "MS", "m.a."]
    doctoral = ["Ph.D.", "Ed.D.", "Psy.D.", "D.N.P.", "PhD"]
    foreign = ["United Kingdom", "Canada", "Singapore", "Australia"]
    kinds = ["masters"] * n_masters + ["foreign"] * n_foreign
    kinds += ["keep"] * (n_total - len(kinds))
    rng.shuffle(kinds)
    out = []
    for i, kind in enumerate(kinds):
        degree = rng.choice(masters) if kind == "masters" else rng.choice(doctoral)
        # masters theses come from anywhere; their country must not matter
        if kind == "masters":
            country = rng.choice(["United States", *foreign])
        else:
            country = rng.choice(foreign) if kind == "foreign" else "United States"
        out.append(MatchedDissertation(f"D{i:06d}", f"Title {i}", "Smith", 2013 + i % 5, degree, country,
                                       "Educational Sciences", i % 3))
    return out


# Reader-status shares (percent) over all readers of the collection.
READER_STATUS_PCT = {
    "Ph.D. Student": 25.4, "Doctoral Student": 12.8, "Postgraduate Student": 2.6, "Master Student": 20.3,
    "Bachelor": 8.3, "Professor": 1.6, "Associate Professor": 1.8, "Senior Lecturer": 0.6, "Lecturer": 1.7,
    "Researcher": 10.2, "Librarian": 3.3, "Other": 3.3, "Unspecified": 8.0,
}
READER_TOTAL = 50_202


def reader_totals_record():
    """One reader record reproducing the totals row; the rounding remainder is left unreported."""
    from scholimpact.mendeley import ReaderRecord

    counts = {k: round(v / 100 * READER_TOTAL) for k, v in READER_STATUS_PCT.items()}
    counts.pop("Unspecified")
    return ReaderRecord("Totals", ("All",), "Thesis", "thesis", READER_TOTAL, counts)


# --- acceptance summary ---------------------------------------------------------
# Tests marked ``acceptance(n, title)`` get one PASS/FAIL line in the terminal summary.

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or report.failed:
        previous = _ACCEPTANCE.get(number, (title, "PASS"))[1]
        verdict = "FAIL" if report.failed or previous == "FAIL" else "PASS"
        _ACCEPTANCE[number] = (title, verdict)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, verdict = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} {title}: {verdict}")
