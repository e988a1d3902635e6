import argparse

import structlog

from brinkman_vem.models.geometry import BackwardStep, CylinderChannel, Rectangle
from brinkman_vem.models.operations import OperationResult
from brinkman_vem.services.mesh import MeshFamily
from brinkman_vem.services.solver_service import SolverService

logger = structlog.get_logger(__name__)

DOMAINS = {
    "square": Rectangle,
    "cylinder": CylinderChannel,
    "step": BackwardStep,
}


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("mesh", help="Generate a polygonal mesh and write it as mesh-json")
    parser.add_argument("--family", required=True, choices=[f.value for f in MeshFamily])
    parser.add_argument("--n", dest="n_cells", type=int, required=True, help="number of cells")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--domain", choices=sorted(DOMAINS), default="square")
    parser.add_argument("-o", "--output", required=True, help="mesh-json file to write")
    parser.set_defaults(handler=run)
    return parser


def run(args: argparse.Namespace) -> OperationResult:
    """Generate a mesh"""
    logger.info("Received mesh command", family=args.family, n_cells=args.n_cells, domain=args.domain)
    return SolverService().run_mesh(
        family=args.family,
        n_cells=args.n_cells,
        output=args.output,
        seed=args.seed,
        domain=DOMAINS[args.domain](),
    )
