"""Command-line entry point of the holonomy laboratory."""

import argparse
import logging
import sys

from holonomy_lab.cli.commands import handle, register_commands
from holonomy_lab.core.config import settings
from holonomy_lab.core.exceptions import LabError
from holonomy_lab.core.logging import configure_logging

logger = logging.getLogger(__name__)


def create_parser() -> argparse.ArgumentParser:
    """
    Create and configure the argument parser.

    Returns:
        Parser with one subcommand per laboratory command
    """
    parser = argparse.ArgumentParser(prog="holonomy-lab", description=settings.title)
    parser.add_argument("--version", action="version", version=settings.version)
    sub = parser.add_subparsers(dest="command")
    register_commands(sub)
    return parser


def main(argv: list[str] | None = None) -> int:
    """
    Run one command and return its exit code.

    0 when every check passes, 1 when a check fails, and the error's own
    code (2 or 64) when the run is aborted.
    """
    parser = create_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 64
    configure_logging(args.log_level)
    try:
        code = handle(args)
    except LabError as e:
        logger.error("%s failed: %s", args.command, e.detail)
        return e.exit_code
    if code is None:
        parser.print_help()
        return 64
    return code


if __name__ == "__main__":
    sys.exit(main())
