import argparse

import structlog

from brinkman_vem.models.operations import OperationResult
from brinkman_vem.models.run_config import load_run_config
from brinkman_vem.services.solver_service import SolverService

logger = structlog.get_logger(__name__)


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("solve", help="Assemble and solve one configuration")
    parser.add_argument("config", help="TOML run configuration")
    parser.add_argument("-o", "--output-dir", default=None, help="overrides output_dir of the config")
    parser.add_argument(
        "--kappa",
        type=float,
        action="append",
        default=None,
        help="solve once per value with K = kappa I (repeatable)",
    )
    parser.add_argument("--workers", type=int, default=None, help="threads for the element loop")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> OperationResult:
    """Solve a configuration"""
    config = load_run_config(args.config)
    logger.info("Received solve command", config=args.config, order=config.order, nu=config.nu)
    service = SolverService(output_dir=args.output_dir, workers=args.workers)
    return service.run_solve(config, kappas=args.kappa)
