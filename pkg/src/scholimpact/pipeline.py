"""File-based pipeline stages: plan, harvest, match, enrich, analyze, report.

Stages only talk through files under ``output_dir``. Every text artifact
starts with a ``# scholimpact ...`` header (JSON artifacts carry a ``meta``
object) recording the stage, its version and the config hash; downstream
stages refuse inputs written under a different configuration.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

from .backend import BackendError, ScholarHTTPBackend, SimulatorBackend
from .catalog import load_catalog
from .config import PipelineConfig
from .harvester import (HarvestInterrupted, RawResultSet, execute_plan, load_partial,
                        save_partial)
from .indicators import (ALL, aggregate_audit, aggregate_reader_status, compare_intervals,
                         field_year_table, load_audit_csv, render_rho, weighted_precision)
from .matcher import (apply_filters, batch_title_queries, from_csv, match_records,
                      read_status_rows, status_rows, to_csv)
from .mendeley import STATUS_CLASSES, STATUS_LABELS, FixtureStore, MendeleyClient, enrich
from .planner import LETTERS, LetterHistogram, QueryPlan, QuerySpec, plan_year
from .subjects import OECD_FIELDS, SubjectMapping

log = logging.getLogger(__name__)

STAGE_VERSION = {"plan": 1, "harvest": 1, "match": 1, "enrich": 1, "analyze": 1, "report": 1}
TABLE_METRICS = ("n", "gm_citations", "gm_readers", "prop_citations", "prop_readers", "spearman")


class PrerequisiteError(RuntimeError):
    """An upstream artifact is missing or was produced under another config."""


class StageBackendError(RuntimeError):
    """A remote service failed during a stage; partial output was kept."""


# --- artifact helpers ---------------------------------------------------------


def _meta(cfg: PipelineConfig, stage: str) -> dict:
    return {"stage": stage, "version": STAGE_VERSION[stage], "config": cfg.config_hash}


def _header(cfg: PipelineConfig, stage: str) -> str:
    m = _meta(cfg, stage)
    return f"# scholimpact stage={m['stage']} version={m['version']} config={m['config']}\n"


def write_text(cfg: PipelineConfig, stage: str, path: Path, body: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_header(cfg, stage) + body, encoding="utf-8")
    return path


def write_json(cfg: PipelineConfig, stage: str, path: Path, data: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"meta": _meta(cfg, stage), **data}
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=False) + "\n",
                    encoding="utf-8")
    return path


def artifact_hash(path: Path) -> str | None:
    if path.suffix == ".json":
        return json.loads(path.read_text(encoding="utf-8")).get("meta", {}).get("config")
    with path.open(encoding="utf-8") as fh:
        first = fh.readline()
    for part in first.split():
        if part.startswith("config="):
            return part.split("=", 1)[1]
    return None


def require(cfg: PipelineConfig, *paths: Path) -> None:
    for p in paths:
        if not p.exists():
            raise PrerequisiteError(f"missing prerequisite {p}; run the upstream stage first")
        found = artifact_hash(p)
        if found != cfg.config_hash:
            raise PrerequisiteError(
                f"{p} was written under config {found}, current config is {cfg.config_hash}")


def read_json(path: Path) -> dict:
    data = json.loads(path.read_text(encoding="utf-8"))
    data.pop("meta", None)
    return data


def _strip_header(text: str) -> str:
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("# scholimpact"))


def stage_dir(cfg: PipelineConfig, stage: str) -> Path:
    return cfg.output_dir / stage


def _years(cfg: PipelineConfig, year: int | None) -> tuple[int, ...]:
    if year is None:
        return cfg.years
    if year not in cfg.years:
        raise PrerequisiteError(f"year {year} is not in the configured years {cfg.years}")
    return (year,)


def make_backend(cfg: PipelineConfig):
    if cfg.backend == "simulator":
        corpus = load_catalog(cfg.corpus_path or cfg.catalog_path)
        return SimulatorBackend(corpus.records, cap=cfg.cap, page_size=cfg.page_size)
    return ScholarHTTPBackend(cfg.base_url, cfg.replay_dir, mode=cfg.backend, delay_ms=cfg.delay_ms,
                              jitter_pct=cfg.jitter_pct, max_retries=cfg.max_retries,
                              user_agent=cfg.user_agent, cap=cfg.cap, page_size=cfg.page_size)


def _mapping(cfg: PipelineConfig) -> SubjectMapping:
    return SubjectMapping.from_csv(cfg.mapping_path) if cfg.mapping_path else SubjectMapping.default()


# --- stages -------------------------------------------------------------------


def cmd_plan(cfg: PipelineConfig, year: int | None = None, backend=None) -> list[Path]:
    backend = backend or make_backend(cfg)
    out = stage_dir(cfg, "plan")
    written = []
    for y in _years(cfg, year):
        base = QuerySpec(cfg.site, cfg.phrases, year=y)
        hits: dict[str, int] = {}
        for letter in LETTERS:
            try:
                hits[letter] = backend.count(base.with_letters(letter))
            except BackendError as exc:
                write_json(cfg, "plan", out / f"histogram_{y}.partial.json", {"year": y, "hits": hits})
                raise StageBackendError(f"count probe for {letter} in {y} failed: {exc}") from exc
        hist = LetterHistogram(y, hits)
        plan = plan_year(hist, base, cfg.budget, cfg.cap)
        for w in plan.warnings:
            log.warning("%d author:%s has %d hits; %d of %d earlier letters excluded%s", y, w.letter,
                        hist.hits[w.letter], w.excluded, w.excludable,
                        " (overflow certain)" if w.predicted_overflow else "")
        written.append(write_json(cfg, "plan", out / f"histogram_{y}.json", hist.to_dict()))
        written.append(write_json(cfg, "plan", out / f"plan_{y}.json", plan.to_dict()))
        partial = out / f"histogram_{y}.partial.json"
        if partial.exists():
            partial.unlink()
    return written


def cmd_harvest(cfg: PipelineConfig, year: int | None = None, resume: bool = False,
                backend=None) -> list[Path]:
    years = _years(cfg, year)
    plan_paths = [stage_dir(cfg, "plan") / f"plan_{y}.json" for y in years]
    require(cfg, *plan_paths)
    backend = backend or make_backend(cfg)
    out = stage_dir(cfg, "harvest")
    written = []
    for y, plan_path in zip(years, plan_paths):
        plan = QueryPlan.from_dict(read_json(plan_path))
        raw_path, cursor_path = out / f"raw_{y}.jsonl", out / f"cursor_{y}.json"
        partial, cursor = None, None
        if resume and cursor_path.exists():
            partial, cursor = load_partial(raw_path, cursor_path, y, cfg.dedup)
        try:
            result = execute_plan(plan, backend, cfg.dedup, cursor, partial)
        except HarvestInterrupted as exc:
            out.mkdir(parents=True, exist_ok=True)
            save_partial(exc.partial, exc.cursor, raw_path, cursor_path)
            raise StageBackendError(f"harvest of {y} interrupted; resume with --resume ({exc})") from exc
        written.append(write_text(cfg, "harvest", raw_path, result.to_jsonl()))
        written.append(write_json(cfg, "harvest", out / f"warnings_{y}.json",
                                  {"year": y, "queries": len(plan.queries), "records": len(result),
                                   "truncation_warnings": result.truncation_warnings}))
        if cursor_path.exists():
            cursor_path.unlink()
    return written


def _load_raw(cfg: PipelineConfig) -> list[RawResultSet]:
    out = stage_dir(cfg, "harvest")
    paths = [out / f"raw_{y}.jsonl" for y in cfg.years]
    require(cfg, *paths)
    sets = []
    for y, p in zip(cfg.years, paths):
        warnings = read_json(out / f"warnings_{y}.json")["truncation_warnings"] \
            if (out / f"warnings_{y}.json").exists() else []
        sets.append(RawResultSet.from_jsonl(p.read_text(encoding="utf-8"), y, cfg.dedup, warnings))
    return sets


def cmd_match(cfg: PipelineConfig) -> list[Path]:
    sets = _load_raw(cfg)
    catalog = load_catalog(cfg.catalog_path)
    matched, report = match_records(sets, catalog, _mapping(cfg))
    kept, report = apply_filters(matched, cfg.degree_blocklist, cfg.country_allowlist, report)
    out = stage_dir(cfg, "match")
    titles = [h.title for rs in sets for _, h in sorted(rs.hits_by_key.items())]
    queries = batch_title_queries(titles)
    return [
        write_text(cfg, "match", out / "matched.csv", to_csv(kept)),
        write_json(cfg, "match", out / "match_report.json",
                   {**report.to_dict(), "retained": len(kept), "ambiguous_catalog_keys": len(catalog.ambiguous_keys),
                    "coverage_exceptions": catalog.coverage_exceptions}),
        write_text(cfg, "match", out / "ti_queries.txt", "".join(q + "\n" for q in queries)),
    ]


def _reader_service(cfg: PipelineConfig):
    if cfg.mendeley_mode == "fixture":
        if cfg.mendeley_fixture_dir is None:
            raise PrerequisiteError("mendeley_fixture_dir is not configured")
        return FixtureStore(cfg.mendeley_fixture_dir)
    store = FixtureStore(cfg.mendeley_fixture_dir) if cfg.mendeley_fixture_dir else None
    return MendeleyClient(cfg.mendeley_api_base, cfg.mendeley_token_env, cfg.mendeley_rate, store)


def cmd_enrich(cfg: PipelineConfig, service=None) -> list[Path]:
    matched_path = stage_dir(cfg, "match") / "matched.csv"
    require(cfg, matched_path)
    ms = from_csv(matched_path.read_text(encoding="utf-8"))
    enriched, report = enrich(ms, service or _reader_service(cfg), combine=cfg.mendeley_combine,
                              max_retries=cfg.max_retries)
    out = stage_dir(cfg, "enrich")
    return [
        write_text(cfg, "enrich", out / "enriched.csv", to_csv(enriched, enrichment_column=True)),
        write_text(cfg, "enrich", out / "reader_status.csv", status_rows(enriched)),
        write_json(cfg, "enrich", out / "enrich_report.json", report.to_dict()),
    ]


def _load_enriched(cfg: PipelineConfig):
    enriched_path = stage_dir(cfg, "enrich") / "enriched.csv"
    status_path = stage_dir(cfg, "enrich") / "reader_status.csv"
    require(cfg, enriched_path, status_path)
    rows = from_csv(enriched_path.read_text(encoding="utf-8"))
    statuses = read_status_rows(status_path.read_text(encoding="utf-8"))
    return rows, statuses


def _status_by_field(rows, statuses) -> dict:
    by_field: dict[str, list] = {f: [] for f in OECD_FIELDS}
    for r in rows:
        if r.record_id in statuses and r.oecd_field in by_field:
            by_field[r.oecd_field].append(statuses[r.record_id])
    result = {f: aggregate_reader_status(b) for f, b in by_field.items()}
    result[ALL] = aggregate_reader_status(statuses[r.record_id] for r in rows if r.record_id in statuses)
    return result


def cmd_analyze(cfg: PipelineConfig) -> list[Path]:
    rows, statuses = _load_enriched(cfg)
    out = stage_dir(cfg, "analyze")
    written = []
    tables = {}
    for metric in TABLE_METRICS:
        table = field_year_table(rows, metric, years=cfg.years)
        tables[metric] = table
        written.append(write_text(cfg, "analyze", out / f"{metric}.csv", table.to_csv()))
    comparisons = {
        "gm": compare_intervals(tables["gm_citations"], tables["gm_readers"]),
        "proportion": compare_intervals(tables["prop_citations"], tables["prop_readers"]),
    }
    written.append(write_json(cfg, "analyze", out / "ci_comparison.json",
                              {"first": "citations", "second": "readers", **comparisons}))
    written.append(write_json(cfg, "analyze", out / "reader_status.json", _status_by_field(rows, statuses)))
    audit: dict = {}
    if cfg.audit_path is not None:
        if not cfg.audit_path.exists():
            raise PrerequisiteError(f"audit file {cfg.audit_path} not found")
        audit = aggregate_audit(load_audit_csv(cfg.audit_path))
        if audit:
            populations = {f: tables["n"].cell(f, ALL).n for f in OECD_FIELDS}
            per_field = {f: tuple(v) for f, v in audit["per_field"].items() if f in populations}
            try:
                audit["weighted_precision"] = weighted_precision(per_field, populations)
            except ValueError:
                audit["weighted_precision"] = None
    written.append(write_json(cfg, "analyze", out / "audit.json", audit))
    written.append(write_json(cfg, "analyze", out / "diagnostics.json", {
        "records": len(rows),
        "unmapped": tables["n"].unmapped,
        "enrichment": {k: sum(1 for r in rows if r.enrichment == k)
                       for k in ("enriched", "unenriched", "pending")},
    }))
    return written


def _read_table_csv(path: Path) -> list[dict]:
    return list(csv.DictReader(io.StringIO(_strip_header(path.read_text(encoding="utf-8")))))


def _figure_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt_pct(v) -> str:
    return "" if v is None else f"{v:.1f}%"


def cmd_report(cfg: PipelineConfig) -> list[Path]:
    an, mt, en = stage_dir(cfg, "analyze"), stage_dir(cfg, "match"), stage_dir(cfg, "enrich")
    needed = [an / f"{m}.csv" for m in TABLE_METRICS] + [
        an / "reader_status.json", an / "audit.json", an / "ci_comparison.json", an / "diagnostics.json",
        mt / "match_report.json", en / "enrich_report.json"]
    require(cfg, *needed)
    # tables are rebuilt from the enriched rows so markdown matches the csv
    rows, statuses = _load_enriched(cfg)
    tables = {m: field_year_table(rows, m, years=cfg.years) for m in TABLE_METRICS}
    match_report = read_json(mt / "match_report.json")
    enrich_report = read_json(en / "enrich_report.json")
    status = read_json(an / "reader_status.json")
    audit = read_json(an / "audit.json")
    comparisons = read_json(an / "ci_comparison.json")
    diagnostics = read_json(an / "diagnostics.json")

    md = ["# Dissertation impact report", ""]
    md += ["## Data collection", "",
           f"- Harvested keys: {match_report['input']:,}",
           f"- Matched to catalog: {match_report['matched']:,} "
           f"(unmatched {match_report['unmatched']:,}, ambiguous {match_report['ambiguous']:,})",
           f"- Removed as non-doctoral: {match_report['filtered_degree']:,}",
           f"- Removed as outside the country allowlist: {match_report['filtered_country']:,}",
           f"- Analysed: {match_report['retained']:,}",
           f"- Records without a mapped field: {diagnostics['unmapped']:,}",
           f"- Reader lookups: {enrich_report['queried']:,}; candidates kept {enrich_report['candidates_kept']:,}, "
           f"discarded {enrich_report['candidates_discarded']:,}; unenriched {enrich_report['unenriched']:,}", ""]
    titles = {
        "n": "Dissertations by field and year",
        "gm_citations": "Geometric mean citations",
        "gm_readers": "Geometric mean readers",
        "prop_citations": "Share with at least one citation",
        "prop_readers": "Share with at least one reader",
        "spearman": "Spearman correlation, citations vs readers (* p <= .05, ** p <= .01)",
    }
    for m in TABLE_METRICS:
        md += [f"## {titles[m]}", "", tables[m].to_markdown()]
    for name, items in (("geometric means", comparisons["gm"]), ("proportions", comparisons["proportion"])):
        counts = {v: sum(1 for c in items if c["verdict"] == v) for v in ("first_higher", "second_higher", "overlap")}
        md += [f"Non-overlapping 95% intervals for {name}: citations higher in {counts['first_higher']}, "
               f"readers higher in {counts['second_higher']}, overlapping {counts['overlap']} cells.", ""]
    overall = status.get(ALL, {})
    md += ["## Reader status", "", f"Total readers: {overall.get('total', 0):,}", "",
           "| Class | Share |", "|---|---:|"]
    for cls in STATUS_CLASSES:
        md.append(f"| {cls} | {_fmt_pct(overall.get('class_pct', {}).get(cls))} |")
    md += ["", "| Status | Share |", "|---|---:|"]
    for label in STATUS_LABELS:
        md.append(f"| {label} | {_fmt_pct(overall.get('label_pct', {}).get(label))} |")
    md.append("")
    if audit:
        md += ["## Citation audit", "",
               f"- Precision: {100 * audit['precision']:.1f}% ({audit['verified']} of {audit['checked']})"]
        if audit.get("weighted_precision") is not None:
            md.append(f"- Field-weighted precision: {100 * audit['weighted_precision']:.1f}%")
        if audit.get("self_citation_share") is not None:
            md.append(f"- Self-citations: {100 * audit['self_citation_share']:.0f}%")
        shares = ", ".join(f"{t} {100 * s:.0f}%" for t, s in audit["citing_type_shares"].items())
        md += [f"- Citing sources: {shares}", ""]
    else:
        md += ["## Citation audit", "", "No audit file configured.", ""]

    out = stage_dir(cfg, "report")
    written = [write_text(cfg, "report", out / "report.md", "\n".join(md))]
    figs = out / "figures"

    # overall nonzero shares by year
    rows3 = []
    for y in cfg.years:
        pc, pr = tables["prop_citations"].cell(ALL, y), tables["prop_readers"].cell(ALL, y)
        rows3.append([y, pc.n, _num(pc.point), _num(pc.lo), _num(pc.hi), _num(pr.point), _num(pr.lo), _num(pr.hi)])
    written.append(write_text(cfg, "report", figs / "nonzero_by_year.csv", _figure_csv(
        ["year", "n", "cited_share", "cited_lo", "cited_hi", "read_share", "read_lo", "read_hi"], rows3)))
    for y in cfg.years:
        for a, b, stem in (("gm_citations", "gm_readers", "geometric_means"),
                             ("prop_citations", "prop_readers", "nonzero_shares")):
            frows = []
            for f in OECD_FIELDS:
                ca, cb = tables[a].cell(f, y), tables[b].cell(f, y)
                frows.append([f, ca.n, _num(ca.point), _num(ca.lo), _num(ca.hi),
                              _num(cb.point), _num(cb.lo), _num(cb.hi)])
            written.append(write_text(cfg, "report", figs / f"{stem}_{y}.csv", _figure_csv(
                ["field", "n", "citations", "citations_lo", "citations_hi", "readers", "readers_lo", "readers_hi"],
                frows)))
    srows = []
    for f in [*OECD_FIELDS, ALL]:
        s = status.get(f, {})
        srows.append([f, s.get("total", 0)] + [_num((s.get("class_pct") or {}).get(c)) for c in STATUS_CLASSES]
                     + [_num((s.get("label_pct") or {}).get(label)) for label in STATUS_LABELS])
    written.append(write_text(cfg, "report", figs / "reader_status.csv", _figure_csv(
        ["field", "readers", *STATUS_CLASSES, *STATUS_LABELS], srows)))
    spearman_rows = [[f] + [_spearman_text(tables["spearman"].cell(f, y)) for y in cfg.years] for f in OECD_FIELDS]
    written.append(write_text(cfg, "report", figs / "spearman_by_field_year.csv",
                              _figure_csv(["field", *cfg.years], spearman_rows)))
    return written


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _spearman_text(cell) -> str:
    return "" if cell.blank else render_rho(cell.point) + cell.stars


STAGES = {
    "plan": cmd_plan,
    "harvest": cmd_harvest,
    "match": cmd_match,
    "enrich": cmd_enrich,
    "analyze": cmd_analyze,
    "report": cmd_report,
}


def run_all(cfg: PipelineConfig) -> None:
    cmd_plan(cfg)
    cmd_harvest(cfg)
    cmd_match(cfg)
    cmd_enrich(cfg)
    cmd_analyze(cfg)
    cmd_report(cfg)
