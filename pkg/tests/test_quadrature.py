import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gdm.quadrature import collapsed_gauss, line_rule, triangle_rule


def monomial_integral(i, j):
    # int over {x, y >= 0, x + y <= 1} of x^i y^j = i! j! / (i + j + 2)!
    return math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)


def rule_integral(rule, i, j):
    x, y = rule.points[:, 1], rule.points[:, 2]
    return 0.5 * np.dot(rule.weights, x ** i * y ** j)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6, 8, 12])
def test_rules_exact_up_to_degree(degree):
    rule = triangle_rule(degree)
    assert rule.degree >= degree
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(rule.points.sum(axis=1), 1.0, atol=1e-14)
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            assert rule_integral(rule, i, j) == pytest.approx(monomial_integral(i, j), rel=1e-12)


def test_degree_two_rule_not_exact_for_cubics():
    rule = triangle_rule(2)
    assert rule.npoints == 3
    errs = [abs(rule_integral(rule, i, 3 - i) - monomial_integral(i, 3 - i)) for i in range(4)]
    assert max(errs) > 1e-6


@given(st.integers(min_value=1, max_value=5),
       st.lists(st.floats(-3, 3), min_size=21, max_size=21))
def test_random_polynomials(degree, coeffs):
    # random polynomial of total degree <= rule degree, integrated term by term
    rule = triangle_rule(degree)
    terms = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    exact = sum(c * monomial_integral(i, j) for c, (i, j) in zip(coeffs, terms))
    approx = sum(c * rule_integral(rule, i, j) for c, (i, j) in zip(coeffs, terms))
    scale = sum(abs(c) * monomial_integral(i, j) for c, (i, j) in zip(coeffs, terms)) + 1e-300
    assert abs(approx - exact) <= 1e-12 * scale


def test_collapsed_gauss_high_degree():
    rule = collapsed_gauss(15)
    assert rule_integral(rule, 7, 8) == pytest.approx(monomial_integral(7, 8), rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_line_rule(n):
    s, w = line_rule(n)
    assert w.sum() == pytest.approx(1.0)
    assert np.all((s > 0) & (s < 1))
    # Gauss-Legendre with n points is exact to degree 2n - 1
    assert np.dot(w, s ** (2 * n - 1)) == pytest.approx(1.0 / (2 * n), rel=1e-13)
