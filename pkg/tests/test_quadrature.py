"""Quadrature rules against closed-form monomial integrals."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from versatile_ns.quadrature import MAX_DEGREE, edge_rule, triangle_rule


def tri_monomial_integral(a: int, b: int) -> float:
    # int_T x^a y^b over the unit reference triangle
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def test_weights_sum_to_triangle_area():
    for d in range(1, MAX_DEGREE + 1):
        r = triangle_rule(d)
        assert abs(r.weights.sum() - 0.5) < 1e-14
        assert (r.weights > 0).all()


def test_edge_weights_sum_to_one():
    for d in range(1, MAX_DEGREE + 1):
        r = edge_rule(d)
        assert abs(r.weights.sum() - 1.0) < 1e-14
        assert (r.weights > 0).all()
        assert ((r.points > 0) & (r.points < 1)).all()


def test_degree_one_rule_is_barycenter():
    r = triangle_rule(1)
    assert r.points.shape == (1, 2)
    np.testing.assert_allclose(r.points[0], [1 / 3, 1 / 3], atol=1e-15)
    assert abs(r.weights[0] - 0.5) < 1e-15


def test_points_inside_triangle():
    for d in range(1, MAX_DEGREE + 1):
        p = triangle_rule(d).points
        assert (p > 0).all() and (p.sum(axis=1) < 1).all()


def test_monomials_exact_up_to_stated_degree():
    for d in range(1, MAX_DEGREE + 1):
        r = triangle_rule(d)
        for a in range(d + 1):
            for b in range(d + 1 - a):
                got = (r.weights * r.points[:, 0] ** a * r.points[:, 1] ** b).sum()
                assert abs(got - tri_monomial_integral(a, b)) < 1e-13, (d, a, b)


def test_known_triangle_values():
    r = triangle_rule(8)
    xy = (r.weights * r.points[:, 0] * r.points[:, 1]).sum()
    assert abs(xy - 1.0 / 24.0) < 1e-15
    x4y4 = (r.weights * r.points[:, 0] ** 4 * r.points[:, 1] ** 4).sum()
    assert abs(x4y4 - 1.5873015873015873e-04) < 1e-15


def test_known_edge_values():
    r3 = edge_rule(3)
    assert len(r3.points) == 2
    assert abs((r3.weights * r3.points ** 3).sum() - 0.25) < 1e-15
    r5 = edge_rule(5)
    assert len(r5.points) == 3
    assert abs((r5.weights * r5.points ** 5).sum() - 1.0 / 6.0) < 1e-15


def test_edge_monomials_exact():
    for d in range(1, MAX_DEGREE + 1):
        r = edge_rule(d)
        for a in range(d + 1):
            assert abs((r.weights * r.points ** a).sum() - 1.0 / (a + 1)) < 1e-14


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=1, max_value=MAX_DEGREE),
    st.data(),
)
def test_random_polynomials_integrate_exactly(d, data):
    r = triangle_rule(d)
    n = (d + 1) * (d + 2) // 2
    coeffs = data.draw(
        st.lists(st.floats(-10, 10, allow_nan=False), min_size=n, max_size=n)
    )
    exact = 0.0
    approx = np.zeros(())
    i = 0
    for a in range(d + 1):
        for b in range(d + 1 - a):
            exact += coeffs[i] * tri_monomial_integral(a, b)
            approx = approx + coeffs[i] * (
                r.weights * r.points[:, 0] ** a * r.points[:, 1] ** b
            ).sum()
            i += 1
    assert abs(approx - exact) <= 1e-12 * max(1.0, abs(exact))


def test_out_of_range_degree_rejected():
    for bad in (0, -3, MAX_DEGREE + 1):
        with pytest.raises(ValueError):
            triangle_rule(bad)
        with pytest.raises(ValueError):
            edge_rule(bad)
