import numpy as np
import pytest

from brinkman_vem.services.polyspace import (
    ScaledMonomialBasis,
    edge_rule,
    fan_rule,
    gauss_lobatto_interior,
    grad_complement_split,
    integrate,
    lagrange_matrix,
    monomial_exponents,
    monomial_index,
    poly_dim,
    triangle_rule,
)

HEXAGON = np.array([[0.0, 0.0], [2.0, 0.0], [3.0, 1.0], [2.0, 2.0], [0.0, 2.0], [-1.0, 1.0]])


def test_dimensions_and_ordering():
    assert [poly_dim(m) for m in (-1, 0, 1, 2, 3)] == [0, 1, 3, 6, 10]
    exponents = monomial_exponents(2)
    assert exponents.tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
    for i, (a1, a2) in enumerate(monomial_exponents(4)):
        assert monomial_index(a1, a2) == i


def test_scaled_basis_values_and_gradient():
    basis = ScaledMonomialBasis([1.0, 2.0], 0.5, 2)
    point = np.array([[1.25, 1.5]])
    values = basis.evaluate(point)[0]
    xi, eta = 0.5, -1.0
    assert values == pytest.approx([1.0, xi, eta, xi * xi, xi * eta, eta * eta])
    dx, dy = basis.gradient(point)
    assert dx[0] == pytest.approx([0.0, 2.0, 0.0, 4.0 * xi, 2.0 * eta, 0.0])
    assert dy[0] == pytest.approx([0.0, 0.0, 2.0, 0.0, 2.0 * xi, 4.0 * eta])


def test_basis_rejects_bad_arguments():
    with pytest.raises(ValueError):
        ScaledMonomialBasis([0.0, 0.0], 0.0, 2)
    with pytest.raises(ValueError):
        ScaledMonomialBasis([0.0, 0.0], 1.0, -1)


@pytest.mark.parametrize("degree", [0, 1, 4, 7])
def test_triangle_rule_is_exact(degree):
    rule = triangle_rule([0.0, 0.0], [1.0, 0.0], [0.0, 1.0], degree)
    # int x^a y^b over the unit triangle = a! b! / (a + b + 2)!
    from math import factorial

    for a in range(degree + 1):
        b = degree - a
        exact = factorial(a) * factorial(b) / factorial(a + b + 2)
        value = integrate(rule, lambda p: p[:, 0] ** a * p[:, 1] ** b)
        assert value == pytest.approx(exact, rel=1e-12, abs=1e-15)


def test_fan_rule_area_and_moments_match_shoelace():
    rule = fan_rule(HEXAGON, HEXAGON.mean(axis=0), 3)
    x, y = HEXAGON[:, 0], HEXAGON[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert integrate(rule, lambda p: np.ones(len(p))) == pytest.approx(area)
    centroid = integrate(rule, lambda p: p) / area
    assert centroid == pytest.approx([1.0, 1.0])


def test_fan_rule_rejects_apex_that_misses_an_edge():
    with pytest.raises(ValueError):
        fan_rule(HEXAGON, [3.0, 1.0], 2)


def test_edge_rule_integrates_polynomials():
    rule = edge_rule([0.0, 0.0], [3.0, 4.0], 3)
    assert rule.degree == 5
    assert integrate(rule, lambda p: np.ones(len(p))) == pytest.approx(5.0)
    # s in [0, 5] along the edge, x = 3 s / 5
    assert integrate(rule, lambda p: p[:, 0] ** 5) == pytest.approx((3.0 / 5.0) ** 5 * 5.0**6 / 6.0)


@pytest.mark.parametrize("order", [0, 1, 2, 3, 4])
def test_gradient_complement_split_is_a_basis(order):
    split = grad_complement_split(order)
    assert split.dim == 2 * poly_dim(order)
    assert split.n_gradient == poly_dim(order + 1) - 1
    assert split.n_complement == poly_dim(order - 1)
    raw = np.random.default_rng(order).standard_normal(split.dim)
    assert split.change_of_basis @ split.split_coefficients(raw) == pytest.approx(raw)
    assert np.isfinite(split.condition_number)


def test_gradient_part_is_curl_free():
    split = grad_complement_split(2)
    n = poly_dim(2)
    basis = ScaledMonomialBasis([0.0, 0.0], 1.0, 2)
    points = np.random.default_rng(3).random((7, 2))
    dx, dy = basis.gradient(points)
    for column in split.change_of_basis.T[: split.n_gradient]:
        curl = dx @ column[n:] - dy @ column[:n]
        assert np.max(np.abs(curl)) < 1e-12


@pytest.mark.parametrize("order", [2, 3, 4, 5])
def test_gauss_lobatto_nodes_are_symmetric(order):
    nodes = gauss_lobatto_interior(order)
    assert len(nodes) == order - 1
    assert np.all((nodes > 0.0) & (nodes < 1.0))
    assert nodes == pytest.approx(1.0 - nodes[::-1], rel=0.0, abs=1e-15)


def test_lagrange_matrix_is_identity_on_nodes():
    nodes = gauss_lobatto_interior(4)
    assert lagrange_matrix(nodes, nodes) == pytest.approx(np.eye(len(nodes)))
    points = np.linspace(0.0, 1.0, 9)
    assert lagrange_matrix(nodes, points).sum(axis=1) == pytest.approx(np.ones(9))


@pytest.mark.parametrize("order", [0, 1, 2, 3, 4])
def test_gradient_complement_split_is_well_conditioned(order):
    assert grad_complement_split(order).condition_number < 1e8
