"""
Command-line entry point
"""

import argparse
import sys
from typing import List, Optional

from starswipt import __version__
from starswipt.cli import simulate, sweep, validate
from starswipt.core.config import settings
from starswipt.core.exceptions import ConfigError, StarSwiptError
from starswipt.core.log import setup_logging


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="starswipt", description=settings.app_description)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="override STAR_SWIPT_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)
    simulate.register(subparsers)
    sweep.register(subparsers)
    validate.register(subparsers)
    return parser


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Exit 0 on success, 1 on a failed run, 2 on configuration or usage errors"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage to stderr
        return int(exc.code or 0)

    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc.detail}", file=sys.stderr)
        return exc.status_code
    except StarSwiptError as exc:
        print(f"run failed: {exc.detail}", file=sys.stderr)
        return exc.status_code


if __name__ == "__main__":
    sys.exit(cli_main())
