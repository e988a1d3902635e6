import numpy as np
import pytest

from brinkman_vem.core.config import Settings
from brinkman_vem.core.errors import AssemblyError
from brinkman_vem.services.element import CellGeometry, ElementKernel
from brinkman_vem.services.nitsche import (
    BoundarySpec,
    Dirichlet,
    ExpressionField,
    FreeOutflow,
    NitscheParams,
    Slip,
    boundary_norm_matrix,
    describe,
    edge_forms,
    edge_rhs,
    zero_field,
)
from brinkman_vem.services.polyspace import poly_dim

PENTAGON = np.array([[0.0, 0.0], [1.2, 0.1], [1.4, 0.9], [0.6, 1.5], [-0.2, 0.8]])
NU = 0.3
PARAMS = NitscheParams(gamma_d=50.0, gamma_n=70.0)


@pytest.fixture(scope="module")
def kernel():
    return ElementKernel(CellGeometry.from_points(PENTAGON), 2)


def _polynomial(kernel, seed):
    rng = np.random.default_rng(seed)
    coefficients = rng.standard_normal(2 * kernel.dim_k)
    dofs = kernel.projections.interpolation @ coefficients
    dim = kernel.dim_k

    def field(points, normal=None):
        values = kernel.basis.evaluate(points)[:, :dim]
        return np.column_stack([values @ coefficients[:dim], values @ coefficients[dim:]])

    return dofs, field


def test_default_penalty_scales_with_order():
    params = NitscheParams.default(2)
    assert params.gamma_d == pytest.approx(900.0)
    assert params.gamma_d == params.gamma_n
    assert NitscheParams.default(3, factor=10.0).gamma_n == pytest.approx(160.0)
    with pytest.raises(ValueError):
        NitscheParams(gamma_d=0.0, gamma_n=1.0)


@pytest.mark.parametrize("order", [2, 3, 4])
@pytest.mark.parametrize("factor", [1.0, 100.0, 1e6])
def test_penalty_is_factor_times_order_squared(order, factor):
    expected = factor * (order + 1) ** 2
    assert Settings(nitsche_factor=factor).nitsche_penalty(order) == pytest.approx(expected, rel=1e-15)
    params = NitscheParams.default(order, factor)
    assert params.gamma_d == params.gamma_n == pytest.approx(expected, rel=1e-15)


def test_boundary_spec_lookup_and_checks():
    spec = BoundarySpec({"wall": Dirichlet(), "outlet": FreeOutflow()})
    assert isinstance(spec["wall"], Dirichlet)
    assert spec.has_outflow(["wall", "outlet"])
    assert not spec.has_outflow(["wall"])
    spec.check(["wall"])
    with pytest.raises(AssemblyError) as info:
        spec.check(["wall", "lid"])
    assert "lid" in str(info.value)
    assert describe(spec) == {"wall": "Dirichlet", "outlet": "FreeOutflow"}


def test_expression_field_values():
    field = ExpressionField("x + y", 2.0)
    values = field(np.array([[1.0, 2.0], [0.5, 0.5]]), np.array([1.0, 0.0]))
    assert values == pytest.approx(np.array([[3.0, 2.0], [1.0, 2.0]]))
    assert zero_field(np.zeros((4, 2))).shape == (4, 2)


@pytest.mark.parametrize("condition", [Dirichlet(), Slip()])
def test_edge_penalty_is_symmetric_and_semidefinite(kernel, condition):
    forms = edge_forms(kernel, 0, condition, NU, PARAMS)
    assert forms.penalty == pytest.approx(forms.penalty.T)
    assert np.linalg.eigvalsh(forms.penalty).min() > -1e-10


def test_outflow_edges_contribute_nothing(kernel):
    assert edge_forms(kernel, 1, FreeOutflow(), NU, PARAMS) is None
    load = edge_rhs(kernel, 1, FreeOutflow(), NU, PARAMS)
    assert not load.velocity.any() and not load.pressure.any()
    assert boundary_norm_matrix(kernel, 1, FreeOutflow()) is None


def test_dirichlet_penalty_measures_trace(kernel):
    dofs, field = _polynomial(kernel, 1)
    edge = kernel.edges[2]
    values = field(edge.points)
    expected = PARAMS.gamma_d / edge.length * np.sum(edge.weights * np.sum(values**2, axis=1))
    forms = edge_forms(kernel, 2, Dirichlet(), NU, PARAMS)
    assert dofs @ forms.penalty @ dofs == pytest.approx(expected)
    norm = boundary_norm_matrix(kernel, 2, Dirichlet())
    assert dofs @ norm @ dofs == pytest.approx(expected / PARAMS.gamma_d)


@pytest.mark.parametrize("edge", range(len(PENTAGON)))
def test_dirichlet_load_matches_forms_for_discrete_data(kernel, edge):
    u, g = _polynomial(kernel, 3)
    v, _ = _polynomial(kernel, 4)
    forms = edge_forms(kernel, edge, Dirichlet(), NU, PARAMS)
    load = edge_rhs(kernel, edge, Dirichlet(g=g), NU, PARAMS)
    assert load.velocity @ v == pytest.approx(v @ (forms.penalty + forms.consistency.T) @ u)
    assert load.pressure == pytest.approx(forms.coupling @ u)


@pytest.mark.parametrize("edge", range(len(PENTAGON)))
def test_slip_load_matches_forms_for_discrete_data(kernel, edge):
    u, g = _polynomial(kernel, 5)
    v, _ = _polynomial(kernel, 6)
    forms = edge_forms(kernel, edge, Slip(), NU, PARAMS)
    load = edge_rhs(kernel, edge, Slip(g1=g), NU, PARAMS)
    assert load.velocity @ v == pytest.approx(v @ (forms.penalty + forms.consistency.T) @ u)
    assert load.pressure == pytest.approx(forms.coupling @ u)


def test_slip_tangential_data_is_a_traction(kernel):
    v, field = _polynomial(kernel, 8)
    edge = kernel.edges[0]
    traction = lambda points, normal: np.tile([2.0, -1.0], (len(points), 1))
    load = edge_rhs(kernel, 0, Slip(g2=traction), NU, PARAMS)
    tangential = field(edge.points) @ edge.tangent
    expected = np.sum(edge.weights * tangential) * (np.array([2.0, -1.0]) @ edge.tangent)
    assert load.velocity @ v == pytest.approx(expected)
    assert not load.pressure.any()


def test_slip_penalty_ignores_tangential_motion(kernel):
    edge = kernel.edges[1]
    forms = edge_forms(kernel, 1, Slip(), NU, PARAMS)
    # the constant field along the edge tangent has zero normal trace there
    dim = kernel.dim_k
    coefficients = np.zeros(2 * dim)
    coefficients[0], coefficients[dim] = edge.tangent
    dofs = kernel.projections.interpolation @ coefficients
    assert dofs @ forms.penalty @ dofs == pytest.approx(0.0, abs=1e-10)
    assert poly_dim(kernel.order - 1) == forms.coupling.shape[0]
