"""
Nitsche boundary terms on Dirichlet and slip edges.

Every term is evaluated with the exact polynomial trace of the local basis on
the edge and the strain of Pi_eps of the owning cell. Free-outflow edges are
natural and contribute nothing.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Mapping, Optional, Union

import numpy as np
import structlog

from brinkman_vem.core.config import settings
from brinkman_vem.core.errors import AssemblyError
from brinkman_vem.services.dataexpr import ScalarField
from brinkman_vem.services.element import EdgeTrace, ElementKernel

logger = structlog.get_logger(__name__)

# A vector field receives the points (n, 2) and the outward unit normal (2,)
# of the edge they lie on and returns values (n, 2).
VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ExpressionField:
    """Vector field given by two expressions in x and y."""

    def __init__(self, x_component: Union[str, float, ScalarField], y_component: Union[str, float, ScalarField]):
        self.components = tuple(
            c if isinstance(c, ScalarField) else ScalarField(c) for c in (x_component, y_component)
        )

    def __call__(self, points: np.ndarray, normal: Optional[np.ndarray] = None) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.column_stack([c(points[:, 0], points[:, 1]) for c in self.components])

    def __repr__(self) -> str:
        return f"ExpressionField({self.components[0].text!r}, {self.components[1].text!r})"


def zero_field(points: np.ndarray, normal: Optional[np.ndarray] = None) -> np.ndarray:
    return np.zeros((len(np.atleast_2d(points)), 2))


@dataclass(frozen=True)
class Dirichlet:
    g: VectorField = zero_field


@dataclass(frozen=True)
class Slip:
    """u.n = g1.n and tangential traction (nu eps(u) n).t = g2.t."""

    g1: VectorField = zero_field
    g2: VectorField = zero_field


@dataclass(frozen=True)
class FreeOutflow:
    pass


BoundaryCondition = Union[Dirichlet, Slip, FreeOutflow]


@dataclass(frozen=True)
class BoundarySpec:
    conditions: Mapping[str, BoundaryCondition] = field(default_factory=dict)

    def __getitem__(self, tag: str) -> BoundaryCondition:
        return self.conditions[tag]

    def check(self, tags: Iterable[str]) -> None:
        missing = sorted(set(tags) - set(self.conditions))
        if missing:
            raise AssemblyError(f"no boundary condition for tags: {', '.join(missing)}")

    def has_outflow(self, tags: Iterable[str]) -> bool:
        return any(isinstance(self.conditions[t], FreeOutflow) for t in tags)


@dataclass(frozen=True)
class NitscheParams:
    gamma_d: float
    gamma_n: float

    def __post_init__(self):
        if self.gamma_d <= 0 or self.gamma_n <= 0:
            raise ValueError("Nitsche penalties must be positive")

    @classmethod
    def default(cls, order: int, factor: Optional[float] = None) -> "NitscheParams":
        gamma = settings.nitsche_penalty(order) if factor is None else factor * (order + 1) ** 2
        return cls(gamma_d=gamma, gamma_n=gamma)


@dataclass(frozen=True)
class EdgeForms:
    penalty: np.ndarray
    consistency: np.ndarray
    coupling: np.ndarray


@dataclass(frozen=True)
class EdgeLoad:
    velocity: np.ndarray
    pressure: np.ndarray


def _edge(kernel: ElementKernel, edge: Union[int, EdgeTrace]) -> EdgeTrace:
    return kernel.edges[edge] if isinstance(edge, (int, np.integer)) else edge


def _traction(kernel: ElementKernel, edge: EdgeTrace, nu: float):
    """nu eps(Pi_eps phi_j) n at the edge points, as x and y arrays (n_points, n_dofs)."""
    e11, e22, e12 = kernel.edge_strain(edge.index)
    n1, n2 = edge.normal
    return nu * (e11 * n1 + e12 * n2), nu * (e12 * n1 + e22 * n2)


def _normal_trace(edge: EdgeTrace, direction: np.ndarray) -> np.ndarray:
    return direction[0] * edge.trace[0] + direction[1] * edge.trace[1]


def edge_forms_dirichlet(kernel: ElementKernel, edge: Union[int, EdgeTrace], nu: float, gamma: float) -> EdgeForms:
    edge = _edge(kernel, edge)
    w = edge.weights[:, None]
    t0, t1 = edge.trace
    penalty = gamma / edge.length * (t0.T @ (w * t0) + t1.T @ (w * t1))
    sx, sy = _traction(kernel, edge, nu)
    consistency = -(t0.T @ (w * sx) + t1.T @ (w * sy))
    pressure = kernel.edge_scalar_values(edge.index, kernel.dim_km1)
    coupling = pressure.T @ (w * _normal_trace(edge, edge.normal))
    return EdgeForms(penalty=penalty, consistency=consistency, coupling=coupling)


def edge_forms_slip(kernel: ElementKernel, edge: Union[int, EdgeTrace], nu: float, gamma: float) -> EdgeForms:
    edge = _edge(kernel, edge)
    w = edge.weights[:, None]
    tn = _normal_trace(edge, edge.normal)
    penalty = gamma / edge.length * (tn.T @ (w * tn))
    sx, sy = _traction(kernel, edge, nu)
    snn = edge.normal[0] * sx + edge.normal[1] * sy
    consistency = -(tn.T @ (w * snn))
    pressure = kernel.edge_scalar_values(edge.index, kernel.dim_km1)
    coupling = pressure.T @ (w * tn)
    return EdgeForms(penalty=penalty, consistency=consistency, coupling=coupling)


def edge_forms(
    kernel: ElementKernel,
    edge: Union[int, EdgeTrace],
    condition: BoundaryCondition,
    nu: float,
    params: NitscheParams,
) -> Optional[EdgeForms]:
    if isinstance(condition, Dirichlet):
        return edge_forms_dirichlet(kernel, edge, nu, params.gamma_d)
    if isinstance(condition, Slip):
        return edge_forms_slip(kernel, edge, nu, params.gamma_n)
    return None


def edge_rhs(
    kernel: ElementKernel,
    edge: Union[int, EdgeTrace],
    condition: BoundaryCondition,
    nu: float,
    params: NitscheParams,
) -> EdgeLoad:
    edge = _edge(kernel, edge)
    velocity = np.zeros(kernel.n_dofs)
    pressure = np.zeros(kernel.dim_km1)
    if isinstance(condition, FreeOutflow):
        return EdgeLoad(velocity, pressure)

    w = edge.weights
    t0, t1 = edge.trace
    sx, sy = _traction(kernel, edge, nu)
    basis = kernel.edge_scalar_values(edge.index, kernel.dim_km1)
    normal, tangent = edge.normal, edge.tangent

    if isinstance(condition, Dirichlet):
        g = np.asarray(condition.g(edge.points, normal), dtype=float)
        gw = g * w[:, None]
        velocity = (
            params.gamma_d / edge.length * (t0.T @ gw[:, 0] + t1.T @ gw[:, 1])
            - (sx.T @ gw[:, 0] + sy.T @ gw[:, 1])
        )
        pressure = basis.T @ (w * (g @ normal))
        return EdgeLoad(velocity, pressure)

    if isinstance(condition, Slip):
        g_normal = np.asarray(condition.g1(edge.points, normal), dtype=float) @ normal
        g_tangent = np.asarray(condition.g2(edge.points, normal), dtype=float) @ tangent
        tn = _normal_trace(edge, normal)
        tt = _normal_trace(edge, tangent)
        snn = normal[0] * sx + normal[1] * sy
        velocity = (
            params.gamma_n / edge.length * (tn.T @ (w * g_normal))
            - snn.T @ (w * g_normal)
            + tt.T @ (w * g_tangent)
        )
        pressure = basis.T @ (w * g_normal)
        return EdgeLoad(velocity, pressure)

    raise AssemblyError(f"unknown boundary condition {condition!r}")


def boundary_norm_matrix(kernel: ElementKernel, edge: Union[int, EdgeTrace], condition: BoundaryCondition) -> Optional[np.ndarray]:
    """Gram matrix of h_e^-1 ||v||_e^2 (Dirichlet) or h_e^-1 ||v.n||_e^2 (slip)."""
    edge = _edge(kernel, edge)
    w = edge.weights[:, None]
    if isinstance(condition, Dirichlet):
        t0, t1 = edge.trace
        return (t0.T @ (w * t0) + t1.T @ (w * t1)) / edge.length
    if isinstance(condition, Slip):
        tn = _normal_trace(edge, edge.normal)
        return tn.T @ (w * tn) / edge.length
    return None


def describe(spec: BoundarySpec) -> Dict[str, str]:
    return {tag: type(condition).__name__ for tag, condition in spec.conditions.items()}
