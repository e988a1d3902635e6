import argparse
import sys
from typing import List, Optional

import structlog

from brinkman_vem import __version__
from brinkman_vem.cli import convergence, mesh, solve
from brinkman_vem.core.config import settings
from brinkman_vem.core.errors import BrinkmanError
from brinkman_vem.core.logging import configure_logging
from brinkman_vem.models.operations import OperationStatus

logger = structlog.get_logger(__name__)

EXIT_SUCCESS = 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brinkman-vem",
        description="Divergence-conforming virtual element solver for the Brinkman equations",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.log_level)
    parser.add_argument("--log-format", choices=["console", "json"], default=settings.log_format)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (mesh, solve, convergence):
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    try:
        result = args.handler(args)
    except BrinkmanError as e:
        logger.error("Command failed", command=args.command, error=str(e), error_type=type(e).__name__)
        return e.exit_code
    print(result.model_dump_json(indent=2))
    if result.status != OperationStatus.SUCCESS:
        return result.exit_code
    return EXIT_SUCCESS


if __name__ == "__main__":
    sys.exit(main())
