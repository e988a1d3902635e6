"""
Global assembly of the Nitsche saddle-point system and its direct solution.

Global velocity DOFs: two per mesh vertex, then 2(k-1) per mesh edge (nodes
ordered from the lower to the higher vertex index), then the interior moments
cell by cell. Pressures are P_{k-1} coefficients in each cell's scaled
monomials, cell-major.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import structlog
from scipy.sparse.linalg import norm as sparse_norm
from scipy.sparse.linalg import splu

from brinkman_vem.core.config import settings
from brinkman_vem.core.errors import AssemblyError, SolverError
from brinkman_vem.services.element import (
    CellGeometry,
    DofLayout,
    EdgeTrace,
    ElementKernel,
    build_local_forms,
)
from brinkman_vem.services.mesh import BoundaryEdge, PolygonalMesh
from brinkman_vem.services.nitsche import (
    BoundaryCondition,
    BoundarySpec,
    NitscheParams,
    VectorField,
    boundary_norm_matrix,
    edge_forms,
    edge_rhs,
)
from brinkman_vem.services.polyspace import poly_dim

logger = structlog.get_logger(__name__)

# name -> matrix parts kept on the system; "velocity" is their sum
VELOCITY_PARTS = ("mass", "viscous", "penalty", "consistency")
NORM_PARTS = ("divergence_gram", "boundary_norm")


Permeability = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class ProblemData:
    """Coefficients of the Brinkman problem."""

    nu: float = 1.0
    permeability: Permeability = 1.0
    source: Optional[VectorField] = None

    def __post_init__(self):
        if not 0.0 < self.nu <= 1.0:
            raise AssemblyError(f"viscosity nu={self.nu} must lie in (0, 1]")

    def permeability_at(self, point: np.ndarray) -> np.ndarray:
        value = self.permeability
        if callable(value):
            value = value(point)
        value = np.asarray(value, dtype=float)
        if value.ndim == 0:
            return float(value) * np.eye(2)
        return value

    def source_field(self) -> Optional[Callable[[np.ndarray], np.ndarray]]:
        if self.source is None:
            return None
        return lambda points: self.source(points, None)


@dataclass(frozen=True)
class CellView:
    """Per-cell data a solved system needs for post-processing."""

    index: int
    centroid: np.ndarray
    diameter: float
    area: float
    apex: np.ndarray
    permeability: np.ndarray
    velocity_dofs: np.ndarray
    pressure_dofs: np.ndarray
    monomial_integrals: np.ndarray
    zero_k: np.ndarray
    eps: np.ndarray
    divergence: np.ndarray
    boundary_traces: Tuple[Tuple[BoundaryEdge, EdgeTrace], ...]


@dataclass
class _LocalContribution:
    view: CellView
    blocks: Dict[str, np.ndarray]
    coupling: np.ndarray
    coupling_boundary: np.ndarray
    pressure_mass: np.ndarray
    load: np.ndarray
    pressure_load: np.ndarray
    mean_weights: np.ndarray


class DofNumbering:
    """Global velocity and pressure numbering for a mesh and order."""

    def __init__(self, mesh: PolygonalMesh, order: int):
        self.mesh = mesh
        self.order = order
        self.edge_offset = 2 * mesh.n_vertices
        self.moment_offset = self.edge_offset + 2 * (order - 1) * mesh.n_edges
        self.moments_per_cell = poly_dim(order - 3) + poly_dim(order - 1) - 1
        self.n_velocity = self.moment_offset + mesh.n_cells * self.moments_per_cell
        self.pressure_per_cell = poly_dim(order - 1)
        self.n_pressure = mesh.n_cells * self.pressure_per_cell

    def velocity_dofs(self, cell: int, layout: DofLayout) -> np.ndarray:
        k = self.order
        vertices = self.mesh.cells[cell]
        nv = len(vertices)
        dofs = np.empty(layout.size, dtype=int)
        dofs[0 : 2 * nv : 2] = 2 * vertices
        dofs[1 : 2 * nv : 2] = 2 * vertices + 1
        for e in range(nv):
            edge_id = self.mesh.cell_edges[cell][e]
            forward = vertices[e] < vertices[(e + 1) % nv]
            for node in range(k - 1):
                global_node = node if forward else k - 2 - node
                base = self.edge_offset + 2 * ((k - 1) * edge_id + global_node)
                dofs[layout.edge_dof(e, node, 0)] = base
                dofs[layout.edge_dof(e, node, 1)] = base + 1
        start = self.moment_offset + cell * self.moments_per_cell
        dofs[layout.complement_offset :] = start + np.arange(self.moments_per_cell)
        return dofs

    def pressure_dofs(self, cell: int) -> np.ndarray:
        return cell * self.pressure_per_cell + np.arange(self.pressure_per_cell)


@dataclass
class SaddleSystem:
    """[A B^T; B 0] (optionally bordered by the pressure mean row) and its loads."""

    mesh: PolygonalMesh
    order: int
    problem: ProblemData
    boundary: BoundarySpec
    params: NitscheParams
    numbering: DofNumbering
    velocity: sp.csr_matrix
    coupling: sp.csr_matrix
    load: np.ndarray
    pressure_load: np.ndarray
    mean_weights: np.ndarray
    mean_constraint: bool
    parts: Dict[str, sp.csr_matrix]
    cells: List[CellView]

    @property
    def n_velocity(self) -> int:
        return self.numbering.n_velocity

    @property
    def n_pressure(self) -> int:
        return self.numbering.n_pressure

    @property
    def size(self) -> int:
        return self.n_velocity + self.n_pressure + int(self.mean_constraint)

    def matrix(self) -> sp.csc_matrix:
        blocks = [[self.velocity, self.coupling.T], [self.coupling, None]]
        if self.mean_constraint:
            c = sp.csr_matrix(self.mean_weights.reshape(-1, 1))
            blocks = [
                [self.velocity, self.coupling.T, None],
                [self.coupling, None, c],
                [None, c.T, None],
            ]
        return sp.bmat(blocks, format="csc")

    def rhs(self) -> np.ndarray:
        parts = [self.load, self.pressure_load]
        if self.mean_constraint:
            parts.append(np.zeros(1))
        return np.concatenate(parts)


def _triplets(rows: np.ndarray, cols: np.ndarray, block: np.ndarray):
    return np.repeat(rows, len(cols)), np.tile(cols, len(rows)), block.ravel()


def _local_contribution(
    mesh: PolygonalMesh,
    cell: int,
    order: int,
    problem: ProblemData,
    boundary: BoundarySpec,
    params: NitscheParams,
    numbering: DofNumbering,
    boundary_edges: List[BoundaryEdge],
) -> _LocalContribution:
    geometry = CellGeometry.from_mesh(mesh, cell)
    kernel = ElementKernel(geometry, order)
    permeability = problem.permeability_at(geometry.centroid)
    forms = build_local_forms(kernel, problem.nu, permeability, problem.source_field())
    n, n_p = kernel.n_dofs, kernel.dim_km1

    penalty = np.zeros((n, n))
    consistency = np.zeros((n, n))
    boundary_gram = np.zeros((n, n))
    coupling_boundary = np.zeros((n_p, n))
    load = forms.load.copy()
    pressure_load = np.zeros(n_p)
    traces = []
    for edge in boundary_edges:
        condition: BoundaryCondition = boundary[edge.tag]
        trace = kernel.edges[edge.local]
        traces.append((edge, trace))
        local = edge_forms(kernel, trace, condition, problem.nu, params)
        if local is None:
            continue
        penalty += local.penalty
        consistency += local.consistency + local.consistency.T
        coupling_boundary += local.coupling
        boundary_gram += boundary_norm_matrix(kernel, trace, condition)
        contribution = edge_rhs(kernel, trace, condition, problem.nu, params)
        load += contribution.velocity
        pressure_load += contribution.pressure

    dim = kernel.dim_km1
    pressure_mass = kernel.mono_mass[:dim, :dim]
    divergence = kernel.divergence_coefficients
    view = CellView(
        index=cell,
        centroid=geometry.centroid,
        diameter=geometry.diameter,
        area=geometry.area,
        apex=geometry.apex,
        permeability=permeability,
        velocity_dofs=numbering.velocity_dofs(cell, kernel.layout),
        pressure_dofs=numbering.pressure_dofs(cell),
        monomial_integrals=kernel.mono_mass[0, : kernel.dim_k].copy(),
        zero_k=kernel.projections.zero_k,
        eps=kernel.projections.eps,
        divergence=divergence,
        boundary_traces=tuple(traces),
    )
    return _LocalContribution(
        view=view,
        blocks={
            "mass": forms.mass,
            "viscous": forms.viscous,
            "penalty": penalty,
            "consistency": consistency,
            "divergence_gram": divergence.T @ pressure_mass @ divergence,
            "boundary_norm": boundary_gram,
        },
        coupling=forms.coupling,
        coupling_boundary=coupling_boundary,
        pressure_mass=pressure_mass,
        load=load,
        pressure_load=pressure_load,
        mean_weights=kernel.mono_mass[0, :dim].copy(),
    )


def assemble(
    mesh: PolygonalMesh,
    order: int,
    problem: ProblemData,
    boundary: BoundarySpec,
    params: Optional[NitscheParams] = None,
    mean_constraint: Optional[bool] = None,
    workers: Optional[int] = None,
) -> SaddleSystem:
    """Assemble the global saddle-point system.

    ``mean_constraint=None`` enables the zero-mean pressure row unless some
    boundary edge is free outflow.
    """
    start_time = time.time()
    if order < 2:
        raise AssemblyError(f"order k={order} is not supported, the space needs k >= 2")
    boundary.check(mesh.tags)
    params = params or NitscheParams.default(order)
    if mean_constraint is None:
        mean_constraint = not boundary.has_outflow(mesh.tags)
    workers = settings.workers if workers is None else workers
    numbering = DofNumbering(mesh, order)

    by_cell: Dict[int, List[BoundaryEdge]] = {}
    for edge in mesh.boundary_edges:
        by_cell.setdefault(edge.cell, []).append(edge)

    def work(cell: int) -> _LocalContribution:
        return _local_contribution(
            mesh, cell, order, problem, boundary, params, numbering, by_cell.get(cell, [])
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            contributions = list(executor.map(work, range(mesh.n_cells)))
    else:
        contributions = [work(c) for c in range(mesh.n_cells)]

    n_u, n_p = numbering.n_velocity, numbering.n_pressure
    parts: Dict[str, sp.csr_matrix] = {}
    for name in VELOCITY_PARTS + NORM_PARTS:
        triplets = [
            _triplets(c.view.velocity_dofs, c.view.velocity_dofs, c.blocks[name]) for c in contributions
        ]
        rows, cols, vals = (np.concatenate(t) for t in zip(*triplets))
        parts[name] = sp.coo_matrix((vals, (rows, cols)), shape=(n_u, n_u)).tocsr()

    coupling_triplets = [
        _triplets(c.view.pressure_dofs, c.view.velocity_dofs, c.coupling + c.coupling_boundary)
        for c in contributions
    ]
    rows, cols, vals = (np.concatenate(t) for t in zip(*coupling_triplets))
    coupling = sp.coo_matrix((vals, (rows, cols)), shape=(n_p, n_u)).tocsr()

    pressure_triplets = [
        _triplets(c.view.pressure_dofs, c.view.pressure_dofs, c.pressure_mass) for c in contributions
    ]
    rows, cols, vals = (np.concatenate(t) for t in zip(*pressure_triplets))
    parts["pressure_mass"] = sp.coo_matrix((vals, (rows, cols)), shape=(n_p, n_p)).tocsr()

    load = np.zeros(n_u)
    pressure_load = np.zeros(n_p)
    mean_weights = np.zeros(n_p)
    for c in contributions:
        np.add.at(load, c.view.velocity_dofs, c.load)
        pressure_load[c.view.pressure_dofs] += c.pressure_load
        mean_weights[c.view.pressure_dofs] = c.mean_weights

    velocity = sum((parts[name] for name in VELOCITY_PARTS[1:]), parts[VELOCITY_PARTS[0]]).tocsr()
    system = SaddleSystem(
        mesh=mesh,
        order=order,
        problem=problem,
        boundary=boundary,
        params=params,
        numbering=numbering,
        velocity=velocity,
        coupling=coupling,
        load=load,
        pressure_load=pressure_load,
        mean_weights=mean_weights,
        mean_constraint=mean_constraint,
        parts=parts,
        cells=[c.view for c in contributions],
    )
    logger.info(
        "Assembled saddle system",
        n_cells=mesh.n_cells,
        order=order,
        n_velocity=n_u,
        n_pressure=n_p,
        mean_constraint=mean_constraint,
        workers=workers,
        execution_time=time.time() - start_time,
    )
    return system


@dataclass(frozen=True)
class DiscreteSolution:
    system: SaddleSystem
    velocity: np.ndarray
    pressure: np.ndarray
    multiplier: float
    residual: float

    def cell_velocity(self, cell: int) -> np.ndarray:
        return self.velocity[self.system.cells[cell].velocity_dofs]

    def cell_pressure(self, cell: int) -> np.ndarray:
        """P_{k-1} coefficients of p_h in the cell's scaled monomials."""
        return self.pressure[self.system.cells[cell].pressure_dofs]

    def projected_velocity(self, cell: int) -> np.ndarray:
        """Raw [P_k]^2 coefficients of Pi_0 u_h."""
        return self.system.cells[cell].zero_k @ self.cell_velocity(cell)

    def strain_projection(self, cell: int) -> np.ndarray:
        """Raw [P_k]^2 coefficients of Pi_eps u_h."""
        return self.system.cells[cell].eps @ self.cell_velocity(cell)

    def divergence(self, cell: int) -> np.ndarray:
        """P_{k-1} coefficients of div u_h."""
        return self.system.cells[cell].divergence @ self.cell_velocity(cell)

    def cell_means(self):
        """Cell averages of Pi_0 u_h, div u_h and p_h."""
        k = self.system.order
        dim, dim_km1 = poly_dim(k), poly_dim(k - 1)
        velocity = np.zeros((len(self.system.cells), 2))
        divergence = np.zeros(len(self.system.cells))
        pressure = np.zeros(len(self.system.cells))
        for view in self.system.cells:
            weights = self.system.mean_weights[view.pressure_dofs] / view.area
            coefficients = self.projected_velocity(view.index)
            velocity[view.index] = [
                view.monomial_integrals @ coefficients[:dim] / view.area,
                view.monomial_integrals @ coefficients[dim:] / view.area,
            ]
            divergence[view.index] = weights @ self.divergence(view.index)[:dim_km1]
            pressure[view.index] = weights @ self.cell_pressure(view.index)
        return velocity, divergence, pressure

    def pressure_mean(self) -> float:
        total_area = sum(view.area for view in self.system.cells)
        return float(self.system.mean_weights @ self.pressure) / total_area


def solve(system: SaddleSystem) -> DiscreteSolution:
    """Factor the (bordered) saddle matrix with SuperLU and solve."""
    start_time = time.time()
    n_u, n_p = system.n_velocity, system.n_pressure

    if not system.mean_constraint and not system.boundary.has_outflow(system.mesh.tags):
        constants = np.zeros(n_p)
        constants[:: system.numbering.pressure_per_cell] = 1.0
        leak = np.linalg.norm(system.coupling.T @ constants)
        scale = sparse_norm(system.coupling) * np.linalg.norm(constants)
        if leak <= 1e-10 * scale:
            raise SolverError(
                "pressure null mode: constant pressures are not controlled; "
                "enable the mean constraint or add an outflow boundary"
            )

    matrix = system.matrix()
    rhs = system.rhs()
    try:
        factor = splu(matrix)
    except RuntimeError as e:
        raise SolverError(
            f"sparse factorization failed ({e}); inspect the Nitsche penalty and the mesh"
        ) from e
    x = factor.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("solution contains non-finite values; inspect the Nitsche penalty and the mesh")

    rhs_norm = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(matrix @ x - rhs) / (rhs_norm if rhs_norm > 0 else 1.0))
    if residual > settings.solver_residual_tol:
        logger.warning("Solver residual above tolerance", residual=residual, tol=settings.solver_residual_tol)

    solution = DiscreteSolution(
        system=system,
        velocity=x[:n_u],
        pressure=x[n_u : n_u + n_p],
        multiplier=float(x[-1]) if system.mean_constraint else 0.0,
        residual=residual,
    )
    logger.info(
        "Solved saddle system",
        size=system.size,
        nnz=matrix.nnz,
        residual=residual,
        execution_time=time.time() - start_time,
    )
    return solution
