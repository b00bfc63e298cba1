"""Synthetic, seeded fixture for running the whole pipeline offline.

The demo corpus mimics the shape of a repository crawl: most records are
US doctoral dissertations hosted on the target site, with a sprinkling of
masters theses, foreign records, records on other domains or lacking the
phrase fingerprints, and a few search-engine records absent from the
catalog. Citation and reader counts are zero-inflated.
"""

from __future__ import annotations

import csv
import io
import json
import random
from pathlib import Path

from .catalog import DissertationRecord
from .mendeley import STATUS_LABELS, FixtureStore, ReaderRecord, build_metadata_query
from .subjects import OECD_FIELDS, SubjectMapping

FIRST_NAMES = [
    "Michael", "Maria", "Mary", "Mohammed", "Matthew", "Megan", "Anna", "Andrew", "Amanda", "Ahmed",
    "Alexander", "Amy", "Jennifer", "James", "John", "Jessica", "Jose", "Joseph", "Sarah", "Steven",
    "Samantha", "Sean", "Christopher", "Catherine", "Carlos", "Laura", "Lisa", "Linda", "David", "Daniel",
    "Robert", "Rachel", "Kevin", "Katherine", "Kim", "Elizabeth", "Emily", "Eric", "Brian", "Benjamin",
    "Thomas", "Tiffany", "Patricia", "Paul", "Heather", "Hannah", "George", "Grace", "Nicole", "Nathan",
    "William", "Wei", "Frank", "Fatima", "Yan", "Yuki", "Victoria", "Vincent", "Olivia", "Omar",
    "Isaac", "Irene", "Xin", "Xavier", "Zachary", "Zoe", "Quentin", "Qing", "Uma", "Ulysses",
    "Jean-Marie", "Mary Ann", "Ángel", "Émile", "Özlem",
]
MIDDLE = ["", "", "", "A.", "B.", "C.", "D.", "E.", "J.", "L.", "M.", "R.", "S.", "T.", "Z.", "K.", "Q."]
LAST_NAMES = [
    "Smith", "Johnson", "Williams", "Brown", "Jones", "Garcia", "Miller", "Davis", "Rodriguez", "Martinez",
    "Hernandez", "Lopez", "Gonzalez", "Wilson", "Anderson", "Taylor", "Moore", "Jackson", "Lee", "Lai",
    "Haber", "Fuller", "Durrani", "Gillespie", "Peppers", "Greenwood", "Pavlak", "Gabriel", "Nguyen", "Kim",
    "Chen", "Wang", "Patel", "Okafor", "Van Dyke", "O'Brien", "Schmidt", "Kowalski", "Rossi", "Silva",
]
WORDS = [
    "adaptive", "analysis", "approach", "assessment", "behavior", "bridge", "clinical", "community", "compression",
    "construction", "control", "design", "development", "dynamics", "education", "effects", "energy", "evaluation",
    "exposure", "framework", "fuel", "health", "identity", "impact", "implementation", "interventions", "learning",
    "leadership", "management", "model", "networks", "outcomes", "patterns", "perceptions", "policy", "practice",
    "quality", "regimes", "reform", "risk", "rural", "schools", "seismic", "spectroscopy", "strategies", "students",
    "study", "success", "systems", "teachers", "technology", "theory", "transport", "urban", "women", "youth",
]
OTHER_DEGREES = ["Ph.D.", "Ph.D.", "Ph.D.", "Ph.D.", "Ph.D.", "Ed.D.", "Psy.D.", "D.N.P.", "D.B.A.", "D.M.A."]
MASTERS = ["M.A.", "M.S.", "M.P.H.", "M.P.P."]
FOREIGN = ["United Kingdom", "Singapore", "Canada", "Australia"]
MARKERS = ["Thesis", "PhD Thesis", "ProQuest Dissertations and Theses", "Doctoral Dissertation",
           "Dissertation", "Dissertation Abstracts International", "PQDT", "PhD Thesis, Columbia University"]
JOURNALS = ["National Teacher Education Journal", "Journal of Applied Research", "Education Review"]


def _title(rng: random.Random) -> str:
    words = rng.sample(WORDS, rng.randint(6, 10))
    words[0] = words[0].capitalize()
    if rng.random() < 0.3:
        words.insert(rng.randint(2, len(words) - 1), rng.choice(["in", "of", "and", "for"]))
    text = " ".join(words)
    if rng.random() < 0.25:
        text = text.replace(" ", ": ", 1).replace("of ", "of Sub-", 1)
    return text


def _zero_inflated(rng: random.Random, p_nonzero: float, scale: float) -> int:
    if rng.random() >= p_nonzero:
        return 0
    return 1 + int(rng.expovariate(1.0 / scale))


def synthetic_corpus(seed: int = 2018, per_year: int = 1300,
                     years: tuple[int, ...] = (2013, 2014, 2015, 2016, 2017)) -> tuple[list, list]:
    """Return ``(catalog_records, extra_engine_records)``."""
    rng = random.Random(seed)
    subjects = [label for label, _ in SubjectMapping.default().rules] + ["Recreation"]
    catalog: list[DissertationRecord] = []
    extra: list[DissertationRecord] = []
    serial = 0
    for year in years:
        for _ in range(per_year):
            serial += 1
            first = rng.choice(FIRST_NAMES)
            middle = rng.choice(MIDDLE)
            roll = rng.random()
            domains = ("proquest.com",) if roll < 0.85 else \
                ("search.proquest.com",) if roll < 0.93 else \
                ("proquest.com", "scholarworks.example.edu") if roll < 0.97 else ("scholarworks.example.edu",)
            masters = rng.random() < 0.014
            age = max(years) - year
            rec = DissertationRecord(
                id=f"PQ{serial:06d}",
                title=f"{_title(rng)} {serial}",
                author_last=rng.choice(LAST_NAMES),
                author_first=f"{first} {middle}".strip(),
                year=year,
                degree=rng.choice(MASTERS) if masters else rng.choice(OTHER_DEGREES),
                subjects=tuple(rng.sample(subjects, rng.randint(1, 3))),
                institution=f"University {rng.randint(1, 120)}",
                country="United States" if rng.random() < 0.97 else rng.choice(FOREIGN),
                has_copyright_phrase=rng.random() < 0.96,
                degree_phrase=(rng.random() < 0.5) if masters else (rng.random() < 0.98),
                source_domains=domains,
                cited_by=_zero_inflated(rng, 0.08 + 0.04 * age, 2.0),
            )
            if rng.random() < 0.02:
                extra.append(rec)
            else:
                catalog.append(rec)
    # two catalog entries sharing a match key, kept apart and flagged ambiguous
    twin = catalog[7]
    catalog.append(DissertationRecord(**{**twin.to_dict(), "id": "PQ999999", "subjects": twin.subjects,
                                         "source_domains": ("library.example.org",)}))
    extra = [DissertationRecord(**{**r.to_dict(), "id": "GS" + r.id[2:], "subjects": r.subjects,
                                   "source_domains": r.source_domains}) for r in extra]
    return catalog, extra


def _reader_record(rng: random.Random, rec: DissertationRecord, source: str, type_: str,
                   readers: int) -> ReaderRecord:
    weights = [25.4, 12.8, 2.6, 20.3, 8.3, 1.6, 1.8, 0.6, 1.7, 10.2, 3.3, 3.3, 8.0]
    counts = dict.fromkeys(STATUS_LABELS, 0)
    for label in rng.choices(STATUS_LABELS, weights=weights, k=readers):
        counts[label] += 1
    # the service sometimes drops a status bucket; it folds into Unspecified later
    if readers and rng.random() < 0.1:
        counts["Unspecified"] = 0
    return ReaderRecord(rec.title, (rec.author_last,), source, type_, readers,
                        {k: v for k, v in counts.items() if v})


def write_demo(directory: str | Path, seed: int = 2018, per_year: int = 1300) -> Path:
    """Write catalog, engine corpus, reader fixtures, audit file and config; return the config path."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    catalog, extra = synthetic_corpus(seed, per_year)
    rng = random.Random(seed + 1)
    (root / "catalog.jsonl").write_text(
        "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in catalog), encoding="utf-8")
    engine = [r for r in catalog if r.id != "PQ999999"] + extra
    engine.sort(key=lambda r: r.id)
    (root / "corpus.jsonl").write_text(
        "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in engine), encoding="utf-8")

    store = FixtureStore(root / "mendeley")
    for rec in catalog:
        age = 2017 - rec.year
        candidates = []
        if rng.random() < 0.18 - 0.01 * age:
            readers = 1 + int(rng.expovariate(1 / 3.0))
            candidates.append(_reader_record(rng, rec, rng.choice(MARKERS), "thesis", readers))
            if rng.random() < 0.05:
                candidates.append(_reader_record(rng, rec, "", rng.choice(MARKERS), rng.randint(1, 4)))
        if rng.random() < 0.01:
            candidates.append(_reader_record(rng, rec, rng.choice(JOURNALS), "journal", rng.randint(1, 20)))
        if candidates:
            store.save(build_metadata_query(rec.title, rec.author_last), candidates)

    mapping = SubjectMapping.default()
    cited = [r for r in catalog if r.cited_by > 0 and r.country == "United States"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dissertation_id", "citing_doc_id", "verified", "citing_type", "self_citation", "field"])
    for oecd in OECD_FIELDS:
        pool = [r for r in cited if mapping.map_subjects(r.subjects) == oecd]
        for rec in rng.sample(pool, min(20, len(pool))):
            for k in range(min(rec.cited_by, 3)):
                verified = rng.random() < 0.966
                ctype = rng.choices(["journal", "dissertation", "book", "conference", "other"],
                                    weights=[56, 29, 6, 5, 4])[0]
                writer.writerow([rec.id, f"{rec.id}-C{k + 1}", str(verified).lower(), ctype,
                                 str(rng.random() < 0.22).lower(), oecd])
    (root / "audit.csv").write_text(buf.getvalue(), encoding="utf-8")

    config = root / "scholimpact.ini"
    config.write_text(
        "[scholimpact]\n"
        "catalog_path = catalog.jsonl\n"
        "corpus_path = corpus.jsonl\n"
        "output_dir = out\n"
        "backend = simulator\n"
        "site = proquest.com\n"
        "years = 2013-2017\n"
        "budget = 256\n"
        "cap = 1000\n"
        "page_size = 100\n"
        "mendeley_mode = fixture\n"
        "mendeley_fixture_dir = mendeley\n"
        "audit_path = audit.csv\n",
        encoding="utf-8")
    return config
