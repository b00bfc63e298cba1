"""Pipeline configuration: a flat ``key = value`` file plus environment overrides.

The file is INI-style with a single ``[scholimpact]`` section. Any key can
be overridden by ``SCHOLIMPACT_<KEY>`` in the environment. Relative paths
resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .catalog import DEFAULT_DEGREE_BLOCKLIST
from .planner import (DEFAULT_BUDGET, DEFAULT_CAP, DEFAULT_PHRASES, DEFAULT_SITE, INCLUSION_COST,
                      QuerySpec, query_length)

SECTION = "scholimpact"
ENV_PREFIX = "SCHOLIMPACT_"
# output_dir is where results go, not what they are; it stays out of the hash.
_UNHASHED = {"output_dir"}


class ConfigError(ValueError):
    pass


def _list(text: str, sep: str = ";") -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(sep) if part.strip())


def _years(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in _list(text.replace(",", ";")):
        if "-" in part:
            lo, hi = (int(x) for x in part.split("-", 1))
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    return tuple(sorted(set(out)))


@dataclass(frozen=True)
class PipelineConfig:
    catalog_path: Path
    output_dir: Path
    corpus_path: Path | None = None
    backend: str = "simulator"
    replay_dir: Path | None = None
    base_url: str = "https://scholar.google.com/scholar"
    site: str = DEFAULT_SITE
    phrases: tuple[str, ...] = DEFAULT_PHRASES
    years: tuple[int, ...] = (2013, 2014, 2015, 2016, 2017)
    budget: int = DEFAULT_BUDGET
    cap: int = DEFAULT_CAP
    page_size: int = 20
    delay_ms: int = 30_000
    jitter_pct: float = 50.0
    max_retries: int = 3
    user_agent: str = "scholimpact/0.1 (research use)"
    degree_blocklist: tuple[str, ...] = tuple(sorted(DEFAULT_DEGREE_BLOCKLIST))
    country_allowlist: tuple[str, ...] = ("United States",)
    mapping_path: Path | None = None
    mendeley_mode: str = "fixture"
    mendeley_fixture_dir: Path | None = None
    mendeley_api_base: str = "https://api.mendeley.com"
    mendeley_token_env: str = "MENDELEY_ACCESS_TOKEN"
    mendeley_rate: float = 2.0
    mendeley_combine: str = "sum"
    audit_path: Path | None = None
    dedup: str = "title_author"
    raw: tuple[tuple[str, str], ...] = ()

    @property
    def base_query(self) -> QuerySpec:
        return QuerySpec(self.site, self.phrases)

    @property
    def config_hash(self) -> str:
        payload = json.dumps([kv for kv in self.raw if kv[0] not in _UNHASHED], sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def validate(self) -> None:
        if not self.years:
            raise ConfigError("years must not be empty")
        base_len = query_length(self.base_query)
        if self.budget < base_len + INCLUSION_COST:
            raise ConfigError(f"budget {self.budget} cannot hold the base query ({base_len} chars) "
                              f"plus an author clause")
        if self.page_size < 1:
            raise ConfigError("page_size must be >= 1")
        if self.cap < self.page_size:
            raise ConfigError(f"cap {self.cap} is smaller than page_size {self.page_size}")
        if self.backend not in {"simulator", "replay", "live"}:
            raise ConfigError(f"backend must be simulator, replay or live, not {self.backend!r}")
        if self.backend in {"replay", "live"} and self.replay_dir is None:
            raise ConfigError(f"backend {self.backend} needs replay_dir")
        if self.mendeley_mode not in {"fixture", "live"}:
            raise ConfigError("mendeley_mode must be fixture or live")
        if self.mendeley_combine not in {"sum", "max"}:
            raise ConfigError("mendeley_combine must be sum or max")
        if self.dedup not in {"title_author", "title_only"}:
            raise ConfigError("dedup must be title_author or title_only")


_PATHS = {"catalog_path", "output_dir", "corpus_path", "replay_dir", "mapping_path",
          "mendeley_fixture_dir", "audit_path"}
_INTS = {"budget", "cap", "page_size", "delay_ms", "max_retries"}
_FLOATS = {"jitter_pct", "mendeley_rate"}
_KNOWN = {f.name for f in fields(PipelineConfig)} - {"raw"}


def _convert(key: str, value: str, base_dir: Path):
    if key in _PATHS:
        p = Path(value).expanduser()
        return p if p.is_absolute() else base_dir / p
    if key in _INTS:
        return int(value)
    if key in _FLOATS:
        return float(value)
    if key == "years":
        return _years(value)
    if key == "phrases":
        return _list(value, "|")
    if key in {"degree_blocklist", "country_allowlist"}:
        return _list(value)
    return value.strip()


def load_config(path: str | Path, environ: dict | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if SECTION not in parser:
        raise ConfigError(f"{path}: missing [{SECTION}] section")
    values = dict(parser[SECTION])
    env = os.environ if environ is None else environ
    for name, value in env.items():
        if name.startswith(ENV_PREFIX):
            values[name[len(ENV_PREFIX):].lower()] = value
    unknown = set(values) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    for required in ("catalog_path", "output_dir"):
        if not values.get(required):
            raise ConfigError(f"{required} is required")
    base_dir = path.parent
    try:
        kwargs = {k: _convert(k, v, base_dir) for k, v in values.items() if v.strip() != ""}
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    cfg = PipelineConfig(**kwargs, raw=tuple(sorted(values.items())))
    cfg.validate()
    return cfg
