"""Command-line entry point.

    teleclass <stage|run-all> --config <file> [--force] [--workdir <dir>]
              [--set key=value ...]

Exit codes: 0 success, 2 validation error, 3 stage failure, 4 backend failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from teleclass import kernels
from teleclass.config import load_config
from teleclass.errors import (
    BackendError,
    ConfigError,
    StageError,
    TeleclassError,
)
from teleclass.pipeline import STAGE_ORDER, Pipeline, WorkdirLock

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE = 3
EXIT_BACKEND = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teleclass",
        description="Minimally supervised hierarchical text classification pipeline",
    )
    parser.add_argument(
        "command",
        choices=list(STAGE_ORDER) + ["run-all"],
        help="pipeline stage to run, or run-all for the full sequence",
    )
    parser.add_argument("--config", required=True, help="path to the key=value config file")
    parser.add_argument("--workdir", help="override the configured working directory")
    parser.add_argument(
        "--force", action="store_true", help="run even when recorded digests mismatch"
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        overrides = {}
        for item in args.overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value
        if args.workdir:
            overrides["workdir"] = args.workdir
        cfg = load_config(args.config, overrides)
        pipeline = Pipeline(cfg)
        kernels.warmup()
        if args.command == "run-all":
            report = pipeline.run_all(force=args.force)
            print(json.dumps(report, sort_keys=True))
        else:
            with WorkdirLock(cfg.workdir):
                result = pipeline.run_stage(args.command, force=args.force)
            print(
                json.dumps(
                    {
                        "stage": result.stage,
                        "status": result.status,
                        "warnings": result.warnings,
                    }
                )
            )
        return EXIT_OK
    except ConfigError as e:
        log.error("%s", e)
        return EXIT_VALIDATION
    except BackendError as e:
        log.error("%s", e)
        return EXIT_BACKEND
    except (StageError, TeleclassError) as e:
        log.error("%s", e)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
