import numpy as np
import pytest

from brinkman_vem.core.errors import ElementError
from brinkman_vem.services.element import (
    CellGeometry,
    ElementKernel,
    build_local_forms,
    check_permeability,
    edge_nodes,
)
from brinkman_vem.services.mesh import generate
from brinkman_vem.services.polyspace import poly_dim

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
PENTAGON = np.array([[0.0, 0.0], [1.2, 0.1], [1.4, 0.9], [0.6, 1.5], [-0.2, 0.8]])


def _nonconvex_cell():
    mesh = generate("nonconvex", 16)
    for c in range(mesh.n_cells):
        points = mesh.cell_points(c)
        d = np.roll(points, -1, axis=0) - points
        cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
        if np.any(cross < 0):
            return points
    raise AssertionError("no reentrant cell in the non-convex family")


def _kernel(points, order):
    return ElementKernel(CellGeometry.from_points(points), order)


def _random_polynomial(kernel, degree, seed=0):
    """Raw [P_k]^2 coefficients of a random vector polynomial of the given degree."""
    coefficients = np.zeros(2 * kernel.dim_k)
    n = poly_dim(degree)
    rng = np.random.default_rng(seed)
    coefficients[:n] = rng.standard_normal(n)
    coefficients[kernel.dim_k : kernel.dim_k + n] = rng.standard_normal(n)
    return coefficients


CELLS = [
    pytest.param(UNIT_SQUARE, id="square"),
    pytest.param(PENTAGON, id="pentagon"),
    pytest.param(_nonconvex_cell(), id="nonconvex"),
]


@pytest.mark.parametrize("order, expected", [(2, 18), (3, 30), (4, 44)])
def test_local_dof_counts_on_square(order, expected):
    kernel = _kernel(UNIT_SQUARE, order)
    assert kernel.n_dofs == expected
    assert kernel.layout.n_pressure == poly_dim(order - 1)


def test_order_one_is_rejected():
    with pytest.raises(ElementError):
        _kernel(UNIT_SQUARE, 1)


def test_clockwise_cell_is_rejected():
    with pytest.raises(ElementError):
        CellGeometry.from_points(UNIT_SQUARE[::-1])


def test_edge_nodes_include_endpoints():
    nodes = edge_nodes(3)
    assert nodes[0] == 0.0 and nodes[-1] == 1.0
    assert len(nodes) == 4


@pytest.mark.parametrize("points", CELLS)
@pytest.mark.parametrize("order", [2, 3])
def test_projections_reproduce_polynomials(points, order):
    kernel = _kernel(points, order)
    projections = kernel.projections
    coefficients = _random_polynomial(kernel, order, seed=order)
    dofs = projections.interpolation @ coefficients

    assert projections.nabla @ dofs == pytest.approx(coefficients, abs=1e-8)
    assert projections.eps @ dofs == pytest.approx(coefficients, abs=1e-8)
    assert projections.zero_k @ dofs == pytest.approx(coefficients, abs=1e-8)

    dim, dim_km1 = kernel.dim_k, kernel.dim_km1
    dx = kernel.basis.dx[:dim_km1, :dim]
    dy = kernel.basis.dy[:dim_km1, :dim]
    divergence = dx @ coefficients[:dim] + dy @ coefficients[dim:]
    assert projections.divergence @ dofs == pytest.approx(divergence, abs=1e-8)


@pytest.mark.parametrize("points", CELLS)
def test_lower_order_projection_reproduces_lower_degree(points):
    kernel = _kernel(points, 3)
    coefficients = _random_polynomial(kernel, 2, seed=5)
    dofs = kernel.projections.interpolation @ coefficients
    dim, dim_km1 = kernel.dim_k, kernel.dim_km1
    expected = np.concatenate([coefficients[:dim_km1], coefficients[dim : dim + dim_km1]])
    assert kernel.projections.zero_km1 @ dofs == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("points", CELLS)
def test_edge_traces_match_polynomial_values(points):
    kernel = _kernel(points, 3)
    coefficients = _random_polynomial(kernel, 3, seed=2)
    dofs = kernel.projections.interpolation @ coefficients
    dim = kernel.dim_k
    for edge in kernel.edges:
        values = kernel.basis.evaluate(edge.points)[:, :dim]
        expected = np.column_stack([values @ coefficients[:dim], values @ coefficients[dim:]])
        assert edge.values(dofs) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("order", [2, 3])
@pytest.mark.parametrize("points", CELLS)
def test_divergence_integrates_to_boundary_flux(points, order):
    kernel = _kernel(points, order)
    dofs = np.random.default_rng(order).standard_normal(kernel.n_dofs)
    volume = kernel.mono_mass[0, : kernel.dim_km1] @ (kernel.divergence_coefficients @ dofs)
    flux = sum(edge.weights @ (edge.values(dofs) @ edge.normal) for edge in kernel.edges)
    assert volume == pytest.approx(flux, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("points", CELLS)
def test_local_forms_are_consistent_on_polynomials(points):
    kernel = _kernel(points, 2)
    permeability = np.array([[2.0, 0.5], [0.5, 1.0]])
    forms = build_local_forms(kernel, nu=0.1, permeability=permeability, source=lambda p: np.tile([1.0, 2.0], (len(p), 1)))
    p = _random_polynomial(kernel, 2, seed=7)
    q = _random_polynomial(kernel, 2, seed=8)
    dp = kernel.projections.interpolation @ p
    dq = kernel.projections.interpolation @ q

    expected_viscous = 0.1 * p @ kernel.strain_gram @ q
    assert dp @ forms.viscous @ dq == pytest.approx(expected_viscous, rel=1e-8)

    dim = kernel.dim_k
    inverse = np.linalg.inv(permeability)
    expected_mass = p @ np.kron(inverse, kernel.mono_mass[:dim, :dim]) @ q
    assert dp @ forms.mass @ dq == pytest.approx(expected_mass, rel=1e-8)

    # div of p integrated against constants
    divergence = kernel.projections.divergence @ dp
    assert forms.coupling[0] @ dp == pytest.approx(-kernel.mono_mass[0, : kernel.dim_km1] @ divergence)


@pytest.mark.parametrize("points", CELLS)
def test_local_forms_symmetry_and_kernels(points):
    kernel = _kernel(points, 3)
    forms = build_local_forms(kernel, nu=1.0, permeability=np.eye(2))
    assert forms.mass == pytest.approx(forms.mass.T)
    assert forms.viscous == pytest.approx(forms.viscous.T)
    assert np.linalg.eigvalsh(forms.mass).min() > 0.0

    dim = kernel.dim_k
    rigid = np.zeros((3, 2 * dim))
    rigid[0, 0] = 1.0
    rigid[1, dim] = 1.0
    rigid[2, 2] = 1.0
    rigid[2, dim + 1] = -1.0
    for motion in rigid:
        dofs = kernel.projections.interpolation @ motion
        assert np.linalg.norm(forms.viscous @ dofs) < 1e-9 * np.linalg.norm(forms.viscous)

    eigenvalues = np.linalg.eigvalsh(forms.viscous)
    assert eigenvalues.min() > -1e-10
    assert np.sum(eigenvalues < 1e-10 * eigenvalues.max()) == 3


def test_load_uses_lower_order_projection():
    kernel = _kernel(PENTAGON, 2)
    forms = build_local_forms(kernel, nu=1.0, permeability=np.eye(2), source=lambda p: np.tile([1.0, -3.0], (len(p), 1)))
    # constant v = (a, b) has int f . v = |K| (a - 3 b)
    dofs = kernel.projections.interpolation @ np.concatenate([[2.0], np.zeros(kernel.dim_k - 1), [1.0], np.zeros(kernel.dim_k - 1)])
    assert forms.load @ dofs == pytest.approx(kernel.geometry.area * (2.0 - 3.0))


def test_permeability_checks():
    with pytest.raises(ElementError):
        check_permeability(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ElementError):
        check_permeability(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ElementError):
        check_permeability(np.eye(3))
