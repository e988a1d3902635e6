import argparse

import structlog

from brinkman_vem.models.operations import OperationResult
from brinkman_vem.models.run_config import load_run_config
from brinkman_vem.services.mesh import MeshFamily
from brinkman_vem.services.solver_service import SolverService

logger = structlog.get_logger(__name__)


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(
        "convergence", help="Run a mesh ladder (cells x4 per level) and write the error table as CSV"
    )
    parser.add_argument("config", help="TOML run configuration with an [exact] section")
    parser.add_argument("--levels", type=int, default=None)
    parser.add_argument("--n-start", type=int, default=None, help="cells on the coarsest level")
    parser.add_argument(
        "--family", action="append", default=None, choices=[f.value for f in MeshFamily], help="repeatable"
    )
    parser.add_argument("--nu", type=float, action="append", default=None, help="viscosity sweep (repeatable)")
    parser.add_argument("--kappa", type=float, action="append", default=None, help="K = kappa I sweep (repeatable)")
    parser.add_argument("-o", "--output-dir", default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> OperationResult:
    """Run a convergence study"""
    config = load_run_config(args.config)
    logger.info("Received convergence command", config=args.config, families=args.family, nus=args.nu)
    service = SolverService(output_dir=args.output_dir, workers=args.workers)
    return service.run_convergence(
        config,
        nus=args.nu,
        families=args.family,
        kappas=args.kappa,
        levels=args.levels,
        n_start=args.n_start,
    )
