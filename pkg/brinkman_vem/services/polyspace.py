"""
Scaled monomials, vector polynomial splittings and polygon quadrature.

Polynomials are stored as coefficient vectors in the scaled monomial basis
m_a(x) = ((x - x_K) / h_K)^a of a cell, ordered by total degree and, inside a
degree, by decreasing power of x. Prefixes of that ordering are the bases of
the lower degree spaces, so P_m coefficients are the first dim(P_m) entries of
a P_k coefficient vector.

Vector polynomials [P_m]^2 use the "raw" layout: x-component coefficients
followed by y-component coefficients.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import structlog
from numpy.polynomial import legendre

logger = structlog.get_logger(__name__)


def poly_dim(order: int) -> int:
    """Dimension of P_order in two variables; zero for negative orders."""
    if order < 0:
        return 0
    return (order + 1) * (order + 2) // 2


def monomial_index(a1: int, a2: int) -> int:
    degree = a1 + a2
    return poly_dim(degree - 1) + a2


@lru_cache(maxsize=None)
def monomial_exponents(order: int) -> np.ndarray:
    exponents = [(d - j, j) for d in range(order + 1) for j in range(d + 1)]
    result = np.array(exponents, dtype=int).reshape(-1, 2)
    result.setflags(write=False)
    return result


@lru_cache(maxsize=None)
def _derivative_matrices(order: int):
    """Coefficient maps of d/dx and d/dy for h = 1; divide by h_K to scale."""
    n = poly_dim(order)
    dx = np.zeros((n, n))
    dy = np.zeros((n, n))
    for col, (a1, a2) in enumerate(monomial_exponents(order)):
        if a1 > 0:
            dx[monomial_index(a1 - 1, a2), col] = a1
        if a2 > 0:
            dy[monomial_index(a1, a2 - 1), col] = a2
    dx.setflags(write=False)
    dy.setflags(write=False)
    return dx, dy


class ScaledMonomialBasis:
    """The scaled monomials of degree <= order attached to one cell."""

    def __init__(self, center: Sequence[float], diameter: float, order: int):
        if order < 0:
            raise ValueError("polynomial order must be non-negative")
        if diameter <= 0:
            raise ValueError("cell diameter must be positive")
        self.center = np.asarray(center, dtype=float)
        self.diameter = float(diameter)
        self.order = order
        self.exponents = monomial_exponents(order)
        unit_dx, unit_dy = _derivative_matrices(order)
        self.dx = unit_dx / self.diameter
        self.dy = unit_dy / self.diameter

    def __len__(self) -> int:
        return poly_dim(self.order)

    def scaled(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.center) / self.diameter

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values of all monomials, shape (n_points, dim)."""
        xi = self.scaled(points)
        powers_x = xi[:, 0:1] ** np.arange(self.order + 1)
        powers_y = xi[:, 1:2] ** np.arange(self.order + 1)
        return powers_x[:, self.exponents[:, 0]] * powers_y[:, self.exponents[:, 1]]

    def gradient(self, points: np.ndarray):
        """Pair (d/dx, d/dy) of value arrays, each (n_points, dim)."""
        values = self.evaluate(points)
        return values @ self.dx, values @ self.dy


def cell_basis(center: Sequence[float], diameter: float, order: int) -> ScaledMonomialBasis:
    return ScaledMonomialBasis(center, diameter, order)


@dataclass(frozen=True)
class VectorPolySplit:
    """[P_m]^2 written as h grad P_{m+1} (no constants) followed by x_perp P_{m-1}."""

    order: int
    n_gradient: int
    n_complement: int
    change_of_basis: np.ndarray
    inverse_transpose: np.ndarray
    condition_number: float

    @property
    def dim(self) -> int:
        return self.n_gradient + self.n_complement

    def split_coefficients(self, raw: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.change_of_basis, raw)


@lru_cache(maxsize=None)
def grad_complement_split(order: int) -> VectorPolySplit:
    """
    Gradient part: h grad m_b = (b1 m_{b-e1}, b2 m_{b-e2}) for 1 <= |b| <= m+1.
    Complement part: x_perp m_g = (m_{g+e2}, -m_{g+e1}) for |g| <= m-1.

    Both are expressed exactly in raw coefficients, which makes the
    change of basis independent of the cell.
    """
    if order < 0:
        raise ValueError("polynomial order must be non-negative")
    n = poly_dim(order)
    columns = []
    for b1, b2 in monomial_exponents(order + 1)[1:]:
        column = np.zeros(2 * n)
        if b1 > 0:
            column[monomial_index(b1 - 1, b2)] = b1
        if b2 > 0:
            column[n + monomial_index(b1, b2 - 1)] = b2
        columns.append(column)
    n_gradient = len(columns)
    for g1, g2 in monomial_exponents(order - 1) if order >= 1 else []:
        column = np.zeros(2 * n)
        column[monomial_index(g1, g2 + 1)] = 1.0
        column[n + monomial_index(g1 + 1, g2)] = -1.0
        columns.append(column)
    change = np.column_stack(columns)
    inverse_t = np.linalg.inv(change).T
    change.setflags(write=False)
    inverse_t.setflags(write=False)
    return VectorPolySplit(
        order=order,
        n_gradient=n_gradient,
        n_complement=len(columns) - n_gradient,
        change_of_basis=change,
        inverse_transpose=inverse_t,
        condition_number=float(np.linalg.cond(change)),
    )


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self) -> int:
        return len(self.weights)


def integrate(rule: QuadratureRule, f: Callable[[np.ndarray], np.ndarray]):
    """Apply the rule to a field evaluated at the rule points.

    ``f`` returns shape (n_points,) or (n_points, ...); the result drops the
    first axis.
    """
    values = np.asarray(f(rule.points), dtype=float)
    return np.tensordot(rule.weights, values, axes=(0, 0))


@lru_cache(maxsize=None)
def _gauss_legendre_unit(n_points: int):
    nodes, weights = legendre.leggauss(n_points)
    return 0.5 * (nodes + 1.0), 0.5 * weights


@lru_cache(maxsize=None)
def _collapsed_triangle_rule(degree: int):
    """Gauss rule on the reference triangle (0,0),(1,0),(0,1) through the
    collapsed square map; the Jacobian (1 - u) costs one extra point in u."""
    n_u = max(1, int(np.ceil((degree + 2) / 2)))
    n_v = max(1, int(np.ceil((degree + 1) / 2)))
    u, wu = _gauss_legendre_unit(n_u)
    v, wv = _gauss_legendre_unit(n_v)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ww = np.outer(wu, wv) * (1.0 - uu)
    ref = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
    return ref, ww.ravel()


def triangle_rule(a, b, c, degree: int) -> QuadratureRule:
    ref, weights = _collapsed_triangle_rule(degree)
    a, b, c = (np.asarray(p, dtype=float) for p in (a, b, c))
    jacobian = np.column_stack([b - a, c - a])
    area2 = abs(np.linalg.det(jacobian))
    points = a + ref @ jacobian.T
    return QuadratureRule(points, weights * area2, degree)


def fan_rule(vertices: np.ndarray, apex: Sequence[float], degree: int) -> QuadratureRule:
    """Cell rule from triangles (apex, v_i, v_{i+1}); the apex must see every edge."""
    vertices = np.asarray(vertices, dtype=float)
    apex = np.asarray(apex, dtype=float)
    ref, ref_weights = _collapsed_triangle_rule(degree)
    points, weights = [], []
    nv = len(vertices)
    for i in range(nv):
        a, b = vertices[i], vertices[(i + 1) % nv]
        jacobian = np.column_stack([a - apex, b - apex])
        area2 = np.linalg.det(jacobian)
        if area2 <= 0.0:
            raise ValueError("fan apex does not see every edge of the polygon")
        points.append(apex + ref @ jacobian.T)
        weights.append(ref_weights * area2)
    return QuadratureRule(np.vstack(points), np.concatenate(weights), degree)


def edge_rule(a: Sequence[float], b: Sequence[float], n_points: int) -> QuadratureRule:
    """Gauss-Legendre points on the segment; weights carry the length."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t, w = _gauss_legendre_unit(n_points)
    length = float(np.hypot(*(b - a)))
    return QuadratureRule(a + np.outer(t, b - a), w * length, 2 * n_points - 1)


def unit_gauss(n_points: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    return _gauss_legendre_unit(n_points)


@lru_cache(maxsize=None)
def gauss_lobatto_interior(order: int) -> np.ndarray:
    """The order-1 interior Gauss-Lobatto nodes on [0, 1], symmetric about 1/2 up to rounding."""
    if order < 2:
        return np.zeros(0)
    roots = legendre.Legendre.basis(order).deriv().roots()
    nodes = np.sort(0.5 * (np.real(roots) + 1.0))
    nodes = 0.5 * (nodes + (1.0 - nodes[::-1]))
    nodes.setflags(write=False)
    return nodes


def lagrange_matrix(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """L[q, j] = l_j(points[q]) for the Lagrange basis on ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    points = np.asarray(points, dtype=float)
    result = np.ones((len(points), len(nodes)))
    for j, tj in enumerate(nodes):
        for m, tm in enumerate(nodes):
            if m != j:
                result[:, j] *= (points - tm) / (tj - tm)
    return result
