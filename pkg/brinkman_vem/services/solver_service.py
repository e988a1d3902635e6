import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import structlog

from brinkman_vem.core.config import settings
from brinkman_vem.core.errors import BrinkmanError, ConfigError
from brinkman_vem.models.geometry import Domain
from brinkman_vem.models.operations import OperationResult, OperationStatus
from brinkman_vem.models.run_config import (
    DirichletConfig,
    OutflowConfig,
    RunConfig,
    SlipConfig,
)
from brinkman_vem.services.analysis import (
    ManufacturedCase,
    boundary_trace_error,
    convergence_study,
    evaluate_errors,
)
from brinkman_vem.services.assembly import DiscreteSolution, ProblemData, assemble, solve
from brinkman_vem.services.mesh import MeshFamily, PolygonalMesh, generate, read_mesh, tag_boundary, write_mesh
from brinkman_vem.services.nitsche import (
    BoundarySpec,
    Dirichlet,
    ExpressionField,
    FreeOutflow,
    NitscheParams,
    Slip,
    describe,
)
from brinkman_vem.services.vtk_writer import write_boundary_traces, write_convergence, write_dofs, write_vtk

logger = structlog.get_logger(__name__)


def _failure(message: str, error: BrinkmanError, start_time: float) -> OperationResult:
    logger.error(message, error=str(error), error_type=type(error).__name__)
    return OperationResult(
        status=OperationStatus.FAILED,
        message=f"{message}: {error}",
        details={"error_type": type(error).__name__},
        execution_time=time.time() - start_time,
        exit_code=error.exit_code,
    )


def _boundary_spec(config: RunConfig) -> BoundarySpec:
    conditions = {}
    for tag, condition in config.boundary.items():
        if isinstance(condition, DirichletConfig):
            conditions[tag] = Dirichlet(g=ExpressionField(*condition.g))
        elif isinstance(condition, SlipConfig):
            conditions[tag] = Slip(g1=ExpressionField(*condition.g1), g2=ExpressionField(*condition.g2))
        elif isinstance(condition, OutflowConfig):
            conditions[tag] = FreeOutflow()
    return BoundarySpec(conditions)


def manufactured_case(config: RunConfig, kappa: Optional[float] = None) -> ManufacturedCase:
    if config.exact is None:
        raise ConfigError("this command needs an [exact] section", location="exact")
    permeability = kappa if kappa is not None else config.permeability.value()
    u1, u2 = config.exact.u
    return ManufacturedCase(u1, u2, config.exact.p, nu=config.nu, permeability=permeability)


def _suffix(nu: Optional[float] = None, kappa: Optional[float] = None, family: Optional[str] = None) -> str:
    parts = []
    if family is not None:
        parts.append(family)
    if nu is not None:
        parts.append(f"nu{nu:g}")
    if kappa is not None:
        parts.append(f"kappa{kappa:g}")
    return "_" + "_".join(parts) if parts else ""


class SolverService:
    """Runs the mesh, solve and convergence operations and writes their result files."""

    def __init__(self, output_dir: Optional[Union[str, Path]] = None, workers: Optional[int] = None):
        self.output_dir = Path(output_dir) if output_dir is not None else None
        self.workers = workers

    def _output(self, config: Optional[RunConfig] = None) -> Path:
        if self.output_dir is not None:
            return self.output_dir
        if config is not None and config.output_dir:
            return Path(config.output_dir)
        return Path(settings.output_dir)

    def build_mesh(self, config: RunConfig) -> PolygonalMesh:
        if config.mesh.file is not None:
            mesh = read_mesh(config.mesh.file)
        else:
            mesh = generate(config.mesh.family, config.mesh.n_cells, seed=config.mesh.seed, domain=config.mesh.domain)
        if config.tags:
            mesh = tag_boundary(mesh, config.tags)
        return mesh

    def run_mesh(
        self,
        family: Union[MeshFamily, str],
        n_cells: int,
        output: Union[str, Path],
        seed: int = 0,
        domain: Optional[Domain] = None,
    ) -> OperationResult:
        """Generate a mesh and write it as mesh-json."""
        start_time = time.time()
        try:
            logger.info("Generating mesh", family=str(family), n_cells=n_cells, seed=seed)
            mesh = generate(family, n_cells, seed=seed, domain=domain)
            path = write_mesh(mesh, output)
            return OperationResult(
                status=OperationStatus.SUCCESS,
                message=f"Mesh with {mesh.n_cells} cells written to {path}",
                details={"path": str(path), **mesh.summary()},
                execution_time=time.time() - start_time,
            )
        except BrinkmanError as e:
            return _failure("Mesh generation failed", e, start_time)

    def solve_config(self, config: RunConfig, kappa: Optional[float] = None) -> DiscreteSolution:
        mesh = self.build_mesh(config)
        if config.exact is not None:
            case = manufactured_case(config, kappa)
            problem = case.problem()
            boundary = case.boundary_spec(config.boundary_kinds)
        else:
            permeability = kappa if kappa is not None else config.permeability.value()
            problem = ProblemData(nu=config.nu, permeability=permeability, source=ExpressionField(*config.source))
            boundary = _boundary_spec(config)
        logger.info("Boundary conditions", conditions=describe(boundary))
        params = NitscheParams.default(config.order, config.nitsche.factor)
        system = assemble(mesh, config.order, problem, boundary, params=params, workers=self.workers)
        return solve(system)

    def run_solve(self, config: RunConfig, kappas: Optional[Sequence[float]] = None) -> OperationResult:
        """Solve once per permeability value and write VTK, DOF and boundary-trace files."""
        start_time = time.time()
        try:
            output = self._output(config)
            runs: Dict[str, dict] = {}
            for kappa in kappas or [None]:
                solution = self.solve_config(config, kappa)
                stem = output / f"{config.name}{_suffix(kappa=kappa)}"
                velocity, _, _ = solution.cell_means()
                summary = {
                    "vtk": str(write_vtk(Path(f"{stem}.vtk"), solution.system.mesh, solution, config.name)),
                    "dofs": str(write_dofs(Path(f"{stem}_dofs.csv"), solution)),
                    "traces": str(write_boundary_traces(Path(f"{stem}_traces.csv"), solution)),
                    "n_cells": solution.system.mesh.n_cells,
                    "n_dofs": solution.system.size,
                    "residual": solution.residual,
                    "residual_within_tol": solution.residual <= settings.solver_residual_tol,
                    "max_speed": float(np.linalg.norm(velocity, axis=1).max()),
                    "pressure_mean": solution.pressure_mean(),
                    "trace_errors": {
                        tag: boundary_trace_error(solution, tag)
                        for tag in solution.system.mesh.tags
                        if not isinstance(solution.system.boundary[tag], FreeOutflow)
                    },
                }
                if config.exact is not None:
                    errors = evaluate_errors(solution, manufactured_case(config, kappa))
                    summary.update(e_u=errors.e_u, e_u_volume=errors.e_u_volume, e_p=errors.e_p)
                runs[stem.name] = summary
                logger.info("Solve finished", run=stem.name, residual=solution.residual)
            return OperationResult(
                status=OperationStatus.SUCCESS,
                message=f"{len(runs)} solve(s) written to {output}",
                details={"runs": runs, "residual_tol": settings.solver_residual_tol},
                execution_time=time.time() - start_time,
            )
        except BrinkmanError as e:
            return _failure("Solve failed", e, start_time)

    def run_convergence(
        self,
        config: RunConfig,
        nus: Optional[Sequence[float]] = None,
        families: Optional[Sequence[str]] = None,
        kappas: Optional[Sequence[float]] = None,
        levels: Optional[int] = None,
        n_start: Optional[int] = None,
    ) -> OperationResult:
        """One convergence table per (family, nu, kappa) combination."""
        start_time = time.time()
        try:
            if config.mesh.file is not None:
                raise ConfigError("convergence studies need a mesh generator, not a file", location="mesh.file")
            for nu in nus or []:
                if not 0.0 < nu <= 1.0:
                    raise ConfigError(f"viscosity nu={nu} must lie in (0, 1]", location="--nu")
            output = self._output(config)
            tables: Dict[str, List[dict]] = {}
            max_residual = 0.0
            sweep_nu = nus is not None and len(nus) > 0
            sweep_kappa = kappas is not None and len(kappas) > 0
            for family in families or [config.mesh.family]:
                for nu in nus or [config.nu]:
                    for kappa in kappas or [None]:
                        case = manufactured_case(config.model_copy(update={"nu": nu}), kappa)
                        records = convergence_study(
                            case,
                            family,
                            config.order,
                            levels=levels or config.convergence.levels,
                            n_start=n_start or config.convergence.n_start,
                            seed=config.mesh.seed,
                            domain=config.mesh.domain,
                            rules=config.tags,
                            kinds=config.boundary_kinds,
                            params=NitscheParams.default(config.order, config.nitsche.factor),
                            workers=self.workers,
                        )
                        name = f"{config.name}{_suffix(nu if sweep_nu else None, kappa if sweep_kappa else None, family)}"
                        path = write_convergence(output / f"{name}.csv", records)
                        tables[str(path)] = [record.model_dump() for record in records]
                        max_residual = max([max_residual] + [record.residual or 0.0 for record in records])
            return OperationResult(
                status=OperationStatus.SUCCESS,
                message=f"{len(tables)} convergence table(s) written to {output}",
                details={
                    "tables": tables,
                    "max_residual": max_residual,
                    "residual_within_tol": max_residual <= settings.solver_residual_tol,
                },
                execution_time=time.time() - start_time,
            )
        except BrinkmanError as e:
            return _failure("Convergence study failed", e, start_time)
