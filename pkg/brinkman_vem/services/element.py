"""
Local virtual element spaces.

For one polygonal cell and order k >= 2 this module lays out the degrees of
freedom, computes the projections Pi_nabla, Pi_eps, Pi_0 (orders k and k-1)
and the exact divergence, and builds the local mass, viscous, coupling and
load arrays.

Local DOF order: two values per vertex (CCW), two values at each of the k-1
interior Gauss-Lobatto nodes of every edge (edges CCW, nodes from the edge
start), complement moments (1/|K|) int v . x_perp m_g for |g| <= k-3, then
divergence moments (h/|K|) int div(v) (m_a - mean(m_a)) for 1 <= |a| <= k-1.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, List, Optional

import numpy as np
import structlog
from scipy.linalg import lu_factor, lu_solve

from brinkman_vem.core.errors import ElementError
from brinkman_vem.services.mesh import PolygonalMesh, fan_apex, outward_normals, polygon_area, polygon_centroid
from brinkman_vem.services.polyspace import (
    QuadratureRule,
    ScaledMonomialBasis,
    cell_basis,
    fan_rule,
    gauss_lobatto_interior,
    grad_complement_split,
    lagrange_matrix,
    monomial_exponents,
    monomial_index,
    poly_dim,
    unit_gauss,
)

logger = structlog.get_logger(__name__)

PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class CellGeometry:
    vertices: np.ndarray
    centroid: np.ndarray
    area: float
    diameter: float
    normals: np.ndarray
    lengths: np.ndarray
    apex: np.ndarray
    index: Optional[int] = None

    @classmethod
    def from_points(cls, points: np.ndarray, index: Optional[int] = None) -> "CellGeometry":
        points = np.asarray(points, dtype=float)
        area = polygon_area(points)
        if area <= 0:
            raise ElementError("cell is not counter-clockwise", index)
        centroid = polygon_centroid(points)
        diameter = float(max(np.hypot(*(points[i] - points[j])) for i in range(len(points)) for j in range(i)))
        normals, lengths = outward_normals(points)
        return cls(
            vertices=points,
            centroid=centroid,
            area=area,
            diameter=diameter,
            normals=normals,
            lengths=lengths,
            apex=fan_apex(points, centroid, diameter),
            index=index,
        )

    @classmethod
    def from_mesh(cls, mesh: PolygonalMesh, cell: int) -> "CellGeometry":
        points = mesh.cell_points(cell)
        normals, lengths = outward_normals(points)
        centroid = mesh.centroids[cell]
        diameter = float(mesh.diameters[cell])
        return cls(
            vertices=points,
            centroid=centroid,
            area=float(mesh.areas[cell]),
            diameter=diameter,
            normals=normals,
            lengths=lengths,
            apex=fan_apex(points, centroid, diameter),
            index=cell,
        )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class DofLayout:
    order: int
    n_vertices: int

    @property
    def nodes_per_edge(self) -> int:
        return self.order - 1

    @property
    def n_vertex_dofs(self) -> int:
        return 2 * self.n_vertices

    @property
    def n_edge_dofs(self) -> int:
        return 2 * self.n_vertices * self.nodes_per_edge

    @property
    def n_complement(self) -> int:
        return poly_dim(self.order - 3)

    @property
    def n_divergence(self) -> int:
        return poly_dim(self.order - 1) - 1

    @property
    def n_moments(self) -> int:
        return self.n_complement + self.n_divergence

    @property
    def complement_offset(self) -> int:
        return self.n_vertex_dofs + self.n_edge_dofs

    @property
    def divergence_offset(self) -> int:
        return self.complement_offset + self.n_complement

    @property
    def size(self) -> int:
        return self.divergence_offset + self.n_divergence

    @property
    def n_pressure(self) -> int:
        return poly_dim(self.order - 1)

    def vertex_dof(self, vertex: int, component: int) -> int:
        return 2 * vertex + component

    def edge_dof(self, edge: int, node: int, component: int) -> int:
        return self.n_vertex_dofs + 2 * (self.nodes_per_edge * edge + node) + component

    def edge_trace_dofs(self, edge: int) -> np.ndarray:
        """DOF indices (k+1, 2) of the nodes along ``edge``, start to end."""
        nv = self.n_vertices
        rows = [[self.vertex_dof(edge, 0), self.vertex_dof(edge, 1)]]
        rows += [[self.edge_dof(edge, l, 0), self.edge_dof(edge, l, 1)] for l in range(self.nodes_per_edge)]
        end = (edge + 1) % nv
        rows.append([self.vertex_dof(end, 0), self.vertex_dof(end, 1)])
        return np.array(rows, dtype=int)


def build_dof_layout(geometry: CellGeometry, order: int) -> DofLayout:
    if order < 2:
        raise ElementError(f"order k={order} is not supported, the space needs k >= 2", geometry.index)
    return DofLayout(order=order, n_vertices=geometry.n_vertices)


def edge_nodes(order: int) -> np.ndarray:
    """Parameters of the k+1 trace nodes on [0, 1]."""
    return np.concatenate([[0.0], gauss_lobatto_interior(order), [1.0]])


@dataclass(frozen=True)
class EdgeTrace:
    """Quadrature on one cell edge and the polynomial trace of every local basis function."""

    index: int
    start: np.ndarray
    end: np.ndarray
    length: float
    normal: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    trace: np.ndarray  # (2, n_points, n_dofs)

    @property
    def tangent(self) -> np.ndarray:
        return np.array([-self.normal[1], self.normal[0]])

    def moments(self, fields: np.ndarray) -> np.ndarray:
        """Rows int_e F_f . v over basis functions; ``fields`` is (n_points, 2, n_fields)."""
        return np.einsum("q,qcf,cqn->fn", self.weights, fields, self.trace)

    def values(self, dofs: np.ndarray) -> np.ndarray:
        """Trace of a DOF vector at the quadrature points, shape (n_points, 2)."""
        return np.stack([self.trace[0] @ dofs, self.trace[1] @ dofs], axis=1)


def build_edge_trace(geometry: CellGeometry, layout: DofLayout, edge: int, n_points: int) -> EdgeTrace:
    k = layout.order
    start = geometry.vertices[edge]
    end = geometry.vertices[(edge + 1) % geometry.n_vertices]
    t, w = unit_gauss(n_points)
    lagrange = lagrange_matrix(edge_nodes(k), t)
    trace = np.zeros((2, n_points, layout.size))
    dofs = layout.edge_trace_dofs(edge)
    for component in (0, 1):
        trace[component][:, dofs[:, component]] = lagrange
    length = float(geometry.lengths[edge])
    return EdgeTrace(
        index=edge,
        start=start,
        end=end,
        length=length,
        normal=geometry.normals[edge],
        points=start + np.outer(t, end - start),
        weights=w * length,
        trace=trace,
    )


@dataclass(frozen=True)
class ProjectionSet:
    """DOF-to-coefficient matrices; vector coefficients use the raw [P_m]^2 layout."""

    nabla: np.ndarray
    eps: np.ndarray
    zero_k: np.ndarray
    zero_km1: np.ndarray
    divergence: np.ndarray
    interpolation: np.ndarray  # DOF values of the raw [P_k]^2 basis, (n_dofs, 2 dim P_k)


@dataclass(frozen=True)
class LocalForms:
    mass: np.ndarray
    viscous: np.ndarray
    coupling: np.ndarray
    load: np.ndarray
    stab_mass: np.ndarray
    stab_viscous: np.ndarray


def _solve(matrix: np.ndarray, rhs: np.ndarray, what: str, cell: Optional[int]) -> np.ndarray:
    lu, piv = lu_factor(matrix, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if not np.all(np.isfinite(pivots)) or pivots.min() <= PIVOT_TOL * pivots.max():
        raise ElementError(f"singular {what} system, check the cell geometry", cell)
    return lu_solve((lu, piv), rhs, check_finite=False)


def _vector_block(values: np.ndarray) -> np.ndarray:
    """Raw vector basis values (n_points, 2, 2n) from scalar values (n_points, n)."""
    n_points, n = values.shape
    out = np.zeros((n_points, 2, 2 * n))
    out[:, 0, :n] = values
    out[:, 1, n:] = values
    return out


def _strain_components(gx: np.ndarray, gy: np.ndarray):
    """eps_11, eps_22, eps_12 of the raw vector basis from scalar gradients."""
    zeros = np.zeros_like(gx)
    e11 = np.hstack([gx, zeros])
    e22 = np.hstack([zeros, gy])
    e12 = 0.5 * np.hstack([gy, gx])
    return e11, e22, e12


class ElementKernel:
    """Everything the assembly needs from one cell."""

    def __init__(self, geometry: CellGeometry, order: int):
        self.geometry = geometry
        self.order = order
        self.layout = build_dof_layout(geometry, order)
        self.basis: ScaledMonomialBasis = cell_basis(geometry.centroid, geometry.diameter, order + 1)
        try:
            self.rule: QuadratureRule = fan_rule(geometry.vertices, geometry.apex, 2 * order + 2)
        except ValueError as e:
            raise ElementError(str(e), geometry.index) from e

        values = self.basis.evaluate(self.rule.points)
        self._values = values
        self.mono_mass = values.T @ (self.rule.weights[:, None] * values)
        self.edges: List[EdgeTrace] = [
            build_edge_trace(geometry, self.layout, e, order + 2) for e in range(geometry.n_vertices)
        ]
        self._edge_values = [self.basis.evaluate(edge.points) for edge in self.edges]
        self.projections = build_projections(self)

    # dimensions

    @property
    def n_dofs(self) -> int:
        return self.layout.size

    @property
    def dim_k(self) -> int:
        return poly_dim(self.order)

    @property
    def dim_km1(self) -> int:
        return poly_dim(self.order - 1)

    @property
    def index(self) -> Optional[int]:
        return self.geometry.index

    # quadrature-level helpers

    def cell_gradients(self):
        dim = self.dim_k
        return self._values @ self.basis.dx[:, :dim], self._values @ self.basis.dy[:, :dim]

    def edge_gradients(self, edge: int):
        dim = self.dim_k
        values = self._edge_values[edge]
        return values @ self.basis.dx[:, :dim], values @ self.basis.dy[:, :dim]

    def edge_scalar_values(self, edge: int, dim: int) -> np.ndarray:
        return self._edge_values[edge][:, :dim]

    def edge_strain(self, edge: int) -> np.ndarray:
        """(3, n_points, n_dofs): eps_11, eps_22, eps_12 of Pi_eps phi_j on the edge."""
        gx, gy = self.edge_gradients(edge)
        components = _strain_components(gx, gy)
        return np.stack([c @ self.projections.eps for c in components])

    @cached_property
    def strain_gram(self) -> np.ndarray:
        """int_K eps(p_r) : eps(p_s) over the raw [P_k]^2 basis."""
        w = self.rule.weights[:, None]
        e11, e22, e12 = _strain_components(*self.cell_gradients())
        return e11.T @ (w * e11) + e22.T @ (w * e22) + 2.0 * e12.T @ (w * e12)

    def vector_mass(self, dim: int) -> np.ndarray:
        block = self.mono_mass[:dim, :dim]
        zeros = np.zeros_like(block)
        return np.block([[block, zeros], [zeros, block]])

    # functionals of the DOFs

    @cached_property
    def normal_moments(self) -> np.ndarray:
        """Rows int_dK (v.n) m_b for every monomial of degree <= k+1."""
        total = np.zeros((len(self.basis), self.n_dofs))
        for edge, values in zip(self.edges, self._edge_values):
            fields = edge.normal[None, :, None] * values[:, None, :]
            total += edge.moments(fields)
        return total

    @cached_property
    def divergence_moments(self) -> np.ndarray:
        """Rows int_K div(v) m_a for |a| <= k-1."""
        geometry, layout = self.geometry, self.layout
        dim = self.dim_km1
        moments = np.zeros((dim, self.n_dofs))
        moments[0] = self.normal_moments[0]
        for a in range(1, dim):
            mean = self.mono_mass[0, a] / geometry.area
            moments[a] = mean * moments[0]
            moments[a, layout.divergence_offset + a - 1] += geometry.area / geometry.diameter
        return moments

    @cached_property
    def divergence_coefficients(self) -> np.ndarray:
        dim = self.dim_km1
        return _solve(self.mono_mass[:dim, :dim], self.divergence_moments, "divergence", self.index)

    @cached_property
    def gradient_moments(self) -> np.ndarray:
        """Rows int_K v . (h grad m_b); row 0 is unused."""
        dim = self.dim_km1
        volume = self.mono_mass[:, :dim] @ self.divergence_coefficients
        return self.geometry.diameter * (self.normal_moments - volume)

    def _complement_weights(self, g1: int, g2: int) -> np.ndarray:
        """Coefficients w with int_K p . x_perp m_g = w . raw(p) for p in [P_k]^2."""
        dim = self.dim_k
        return np.concatenate(
            [
                self.mono_mass[:dim, monomial_index(g1, g2 + 1)],
                -self.mono_mass[:dim, monomial_index(g1 + 1, g2)],
            ]
        )

    def raw_moments(self, order: int, nabla: Optional[np.ndarray] = None) -> np.ndarray:
        """Rows int_K v . r for the raw basis r of [P_order]^2.

        Complement moments of degree above k-3 come from Pi_nabla v, which
        is what the enhanced space prescribes.
        """
        split = grad_complement_split(order)
        rows = [self.gradient_moments[b] for b in range(1, poly_dim(order + 1))]
        if order >= 1:
            for g, (g1, g2) in enumerate(monomial_exponents(order - 1)):
                if g1 + g2 <= self.order - 3:
                    row = np.zeros(self.n_dofs)
                    row[self.layout.complement_offset + g] = self.geometry.area
                else:
                    if nabla is None:
                        raise ElementError("complement moment requested before Pi_nabla", self.index)
                    row = self._complement_weights(g1, g2) @ nabla
                rows.append(row)
        return split.inverse_transpose @ np.array(rows)


def _interpolation_matrix(kernel: ElementKernel) -> np.ndarray:
    """DOF values of the raw [P_k]^2 basis functions."""
    geometry, layout = kernel.geometry, kernel.layout
    k, dim = kernel.order, kernel.dim_k
    matrix = np.zeros((layout.size, 2 * dim))

    vertex_values = kernel.basis.evaluate(geometry.vertices)[:, :dim]
    for j in range(geometry.n_vertices):
        matrix[layout.vertex_dof(j, 0), :dim] = vertex_values[j]
        matrix[layout.vertex_dof(j, 1), dim:] = vertex_values[j]

    interior = gauss_lobatto_interior(k)
    for e, edge in enumerate(kernel.edges):
        points = edge.start + np.outer(interior, edge.end - edge.start)
        node_values = kernel.basis.evaluate(points)[:, :dim]
        for l in range(layout.nodes_per_edge):
            matrix[layout.edge_dof(e, l, 0), :dim] = node_values[l]
            matrix[layout.edge_dof(e, l, 1), dim:] = node_values[l]

    for g, (g1, g2) in enumerate(monomial_exponents(k - 3) if k >= 3 else []):
        matrix[layout.complement_offset + g] = kernel._complement_weights(g1, g2) / geometry.area

    mass = kernel.mono_mass
    scale = geometry.diameter / geometry.area
    for a in range(1, kernel.dim_km1):
        centered = mass[:, a] - mass[0, a] / geometry.area * mass[:, 0]
        row = layout.divergence_offset + a - 1
        matrix[row, :dim] = scale * (kernel.basis.dx[:, :dim].T @ centered)
        matrix[row, dim:] = scale * (kernel.basis.dy[:, :dim].T @ centered)
    return matrix


def _nabla_projection(kernel: ElementKernel) -> np.ndarray:
    geometry = kernel.geometry
    k, dim = kernel.order, kernel.dim_k
    dim_km2 = poly_dim(k - 2)
    w = kernel.rule.weights[:, None]
    gx, gy = kernel.cell_gradients()
    stiffness = gx.T @ (w * gx) + gy.T @ (w * gy)
    zeros = np.zeros_like(stiffness)
    gram = np.block([[stiffness, zeros], [zeros, stiffness]])

    dx, dy = kernel.basis.dx, kernel.basis.dy
    laplacian = (dx @ dx + dy @ dy)[:dim_km2, :dim]
    moments_km2 = kernel.raw_moments(k - 2)
    rhs = -np.vstack([laplacian.T @ moments_km2[:dim_km2], laplacian.T @ moments_km2[dim_km2:]])
    for e, edge in enumerate(kernel.edges):
        ex, ey = kernel.edge_gradients(e)
        flux = ex * edge.normal[0] + ey * edge.normal[1]
        fields = _vector_block(flux)
        rhs += edge.moments(fields)

    means = kernel.raw_moments(0) / geometry.area
    mean_row = kernel.mono_mass[0, :dim] / geometry.area
    gram[0] = np.concatenate([mean_row, np.zeros(dim)])
    gram[dim] = np.concatenate([np.zeros(dim), mean_row])
    rhs[0] = means[0]
    rhs[dim] = means[1]
    return _solve(gram, rhs, "Pi_nabla", kernel.index)


def _eps_projection(kernel: ElementKernel, nabla: np.ndarray) -> np.ndarray:
    geometry = kernel.geometry
    k, dim = kernel.order, kernel.dim_k
    dim_km2 = poly_dim(k - 2)
    gram = kernel.strain_gram

    dx, dy = kernel.basis.dx, kernel.basis.dy
    dxx = (dx @ dx)[:dim_km2, :dim]
    dyy = (dy @ dy)[:dim_km2, :dim]
    dxy = (dx @ dy)[:dim_km2, :dim]
    div_eps = np.block([[dxx + 0.5 * dyy, 0.5 * dxy], [0.5 * dxy, 0.5 * dxx + dyy]])
    rhs = -div_eps.T @ kernel.raw_moments(k - 2)
    for e, edge in enumerate(kernel.edges):
        e11, e22, e12 = _strain_components(*kernel.edge_gradients(e))
        n1, n2 = edge.normal
        fields = np.stack([e11 * n1 + e12 * n2, e12 * n1 + e22 * n2], axis=1)
        rhs += edge.moments(fields)

    # rigid motions (1, 0), (0, 1), x_perp in raw coefficients
    rigid = np.zeros((3, 2 * dim))
    rigid[0, 0] = 1.0
    rigid[1, dim] = 1.0
    rigid[2, monomial_index(0, 1)] = 1.0
    rigid[2, dim + monomial_index(1, 0)] = -1.0
    rigid_p1 = np.zeros((3, 6))
    rigid_p1[0, 0] = 1.0
    rigid_p1[1, 3] = 1.0
    rigid_p1[2, 2] = 1.0
    rigid_p1[2, 3 + 1] = -1.0
    constraint = rigid @ kernel.vector_mass(dim) / geometry.area
    constraint_rhs = rigid_p1 @ kernel.raw_moments(1, nabla) / geometry.area

    saddle = np.block([[gram, constraint.T], [constraint, np.zeros((3, 3))]])
    solution = _solve(saddle, np.vstack([rhs, constraint_rhs]), "Pi_eps", kernel.index)
    return solution[: 2 * dim]


def build_projections(kernel: ElementKernel) -> ProjectionSet:
    """Pi_nabla, Pi_eps, Pi_0 (k and k-1) and the divergence, all computed from DOFs."""
    k = kernel.order
    nabla = _nabla_projection(kernel)
    eps = _eps_projection(kernel, nabla)
    zero_k = _solve(kernel.vector_mass(poly_dim(k)), kernel.raw_moments(k, nabla), "Pi_0", kernel.index)
    zero_km1 = _solve(
        kernel.vector_mass(poly_dim(k - 1)), kernel.raw_moments(k - 1, nabla), "Pi_0", kernel.index
    )
    return ProjectionSet(
        nabla=nabla,
        eps=eps,
        zero_k=zero_k,
        zero_km1=zero_km1,
        divergence=kernel.divergence_coefficients,
        interpolation=_interpolation_matrix(kernel),
    )


def check_permeability(permeability: np.ndarray, cell: Optional[int] = None) -> np.ndarray:
    permeability = np.asarray(permeability, dtype=float)
    if permeability.shape != (2, 2) or not np.allclose(permeability, permeability.T, rtol=1e-12, atol=0.0):
        raise ElementError("permeability must be a symmetric 2x2 matrix", cell)
    if np.linalg.eigvalsh(permeability).min() <= 0.0:
        raise ElementError("permeability is not positive definite", cell)
    return permeability


def build_local_forms(
    kernel: ElementKernel,
    nu: float,
    permeability: np.ndarray,
    source: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> LocalForms:
    """Local m_h, a_h, b and load arrays with dofi-dofi stabilization."""
    permeability = check_permeability(permeability, kernel.index)
    inverse = np.linalg.inv(permeability)
    geometry, projections = kernel.geometry, kernel.projections
    dim, dim_km1 = kernel.dim_k, kernel.dim_km1
    identity = np.eye(kernel.n_dofs)
    interpolation = projections.interpolation

    residual_zero = identity - interpolation @ projections.zero_k
    stab_mass = geometry.area * 0.5 * np.trace(inverse) * residual_zero.T @ residual_zero
    mass_poly = np.kron(inverse, kernel.mono_mass[:dim, :dim])
    mass = projections.zero_k.T @ mass_poly @ projections.zero_k + stab_mass

    residual_eps = identity - interpolation @ projections.eps
    stab_viscous = nu * residual_eps.T @ residual_eps
    viscous = nu * projections.eps.T @ kernel.strain_gram @ projections.eps + stab_viscous

    coupling = -kernel.divergence_moments

    load = np.zeros(kernel.n_dofs)
    if source is not None:
        values = np.asarray(source(kernel.rule.points), dtype=float)
        basis = kernel._values[:, :dim_km1] * kernel.rule.weights[:, None]
        moments = np.concatenate([basis.T @ values[:, 0], basis.T @ values[:, 1]])
        load = projections.zero_km1.T @ moments

    return LocalForms(
        mass=0.5 * (mass + mass.T),
        viscous=0.5 * (viscous + viscous.T),
        coupling=coupling,
        load=load,
        stab_mass=stab_mass,
        stab_viscous=stab_viscous,
    )
