"""Command-line entry point: ``scholimpact <stage> --config FILE``."""

from __future__ import annotations

import argparse
import logging
import sys

from .backend import BackendError
from .catalog import CatalogError
from .config import ConfigError, load_config
from .mendeley import ServiceError
from .pipeline import STAGES, PrerequisiteError, StageBackendError
from .subjects import MappingError

EXIT_OK, EXIT_CONFIG, EXIT_PREREQ, EXIT_BACKEND = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scholimpact", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="flat key=value config file")
        if name in ("plan", "harvest"):
            p.add_argument("--year", type=int, help="restrict to one configured year")
        if name == "harvest":
            p.add_argument("--resume", action="store_true", help="continue from a saved cursor")
    demo = sub.add_parser("demo", help="write the bundled simulator fixture and a config")
    demo.add_argument("directory")
    demo.add_argument("--seed", type=int, default=2018)
    demo.add_argument("--per-year", type=int, default=1300)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "demo":
        from .demo import write_demo

        path = write_demo(args.directory, seed=args.seed, per_year=args.per_year)
        print(path)
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        kwargs = {}
        if getattr(args, "year", None) is not None:
            kwargs["year"] = args.year
        if getattr(args, "resume", False):
            kwargs["resume"] = True
        written = STAGES[args.command](cfg, **kwargs)
    except (ConfigError, MappingError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PrerequisiteError, CatalogError, FileNotFoundError) as exc:
        print(f"prerequisite error: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except (StageBackendError, BackendError, ServiceError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
