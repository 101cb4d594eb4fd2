"""Oracle checks for the Hermite and Gauss-Hermite layer.

Expected values come from independent hand computations: double factorials
for Gaussian moments, orthogonality i! delta_ij, and the moment expansion
E[He_3(x)^3 x] = 945 - 945 + 405 - 81 = 324 obtained by expanding
(x^3 - 3x)^3 * x into pure moments.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batchreuse.hermite import (
    HermiteBasis,
    QuadratureRule,
    gauss_expectation,
    gauss_hermite_rule,
    gaussian_moment,
    hermite_coefficients,
    hermite_eval,
)

RULE_1D = gauss_hermite_rule()


def test_hermite_eval_low_degree_values():
    assert hermite_eval(0, 7.3) == 1.0
    assert hermite_eval(1, -2.5) == -2.5
    assert hermite_eval(3, 2.0) == pytest.approx(2.0, abs=1e-12)
    assert hermite_eval(4, 0.0) == pytest.approx(3.0, abs=1e-12)


def test_hermite_eval_rejects_negative_degree():
    with pytest.raises(ValueError):
        hermite_eval(-1, 0.0)


def test_hermite_eval_vectorized_matches_scalar():
    xs = np.linspace(-3, 3, 7)
    vals = hermite_eval(5, xs)
    assert isinstance(vals, np.ndarray)
    for x, v in zip(xs, vals):
        assert hermite_eval(5, float(x)) == pytest.approx(v, rel=1e-14, abs=1e-14)


def test_recurrence_identity_at_random_points():
    # He_{n+1}(x) = x He_n(x) - n He_{n-1}(x) at 100 points in [-5, 5],
    # comparing against the exact-integer Horner path so the two sides do
    # not share a floating-point history.
    rng = np.random.default_rng(20260822)
    xs = rng.uniform(-5.0, 5.0, size=100)
    basis = HermiteBasis(max_degree=11)
    for n in range(1, 10):
        for x in xs:
            lhs = basis.eval_from_table(n + 1, float(x))
            rhs = x * hermite_eval(n, float(x)) - n * hermite_eval(n - 1, float(x))
            scale = max(1.0, abs(lhs))
            assert abs(lhs - rhs) / scale < 1e-10


def test_coefficient_table_recurrence_exact():
    # Coefficient-wise He_{n+1} = x He_n - n He_{n-1} in integer arithmetic.
    basis = HermiteBasis()
    for n in range(1, basis.max_degree):
        cur = basis.polynomial(n)
        prev = basis.polynomial(n - 1)
        nxt = [0] * (n + 2)
        for i, c in enumerate(cur):
            nxt[i + 1] += c
        for i, c in enumerate(prev):
            nxt[i] -= n * c
        assert tuple(nxt) == basis.polynomial(n + 1)


def test_coefficient_table_known_rows():
    basis = HermiteBasis(max_degree=4)
    assert basis.polynomial(0) == (1,)
    assert basis.polynomial(1) == (0, 1)
    assert basis.polynomial(2) == (-1, 0, 1)
    assert basis.polynomial(3) == (0, -3, 0, 1)
    assert basis.polynomial(4) == (3, 0, -6, 0, 1)


@given(st.integers(min_value=0, max_value=12), st.floats(-5.0, 5.0))
@settings(max_examples=200)
def test_parity(j, x):
    left = hermite_eval(j, -x)
    right = (-1.0) ** j * hermite_eval(j, x)
    assert left == pytest.approx(right, rel=1e-12, abs=1e-12)


def test_gaussian_moment_values():
    assert gaussian_moment(0) == 1.0
    assert gaussian_moment(4) == 3.0
    assert gaussian_moment(7) == 0.0
    assert gaussian_moment(10) == 945.0
    with pytest.raises(ValueError):
        gaussian_moment(-2)


def test_gaussian_moment_matches_quadrature():
    for k in range(13):
        quad = gauss_expectation(lambda x, k=k: x**k, RULE_1D)
        assert abs(quad - gaussian_moment(k)) < 1e-8


def test_orthogonality_table():
    import math

    for i in range(11):
        for j in range(11):
            val = gauss_expectation(
                lambda x, i=i, j=j: hermite_eval(i, x) * hermite_eval(j, x), RULE_1D
            )
            expected = math.factorial(i) if i == j else 0.0
            assert abs(val - expected) < 1e-8


def test_gauss_expectation_1d_oracles():
    assert gauss_expectation(lambda x: x**2, RULE_1D) == pytest.approx(1.0, abs=1e-12)
    assert gauss_expectation(lambda x: hermite_eval(3, x) ** 2, RULE_1D) == pytest.approx(
        6.0, abs=1e-10
    )
    assert gauss_expectation(
        lambda x: hermite_eval(3, x) ** 3 * x, RULE_1D
    ) == pytest.approx(324.0, abs=1e-8)


def test_gauss_expectation_tensor_product():
    # E[z1^2 z2^2] = 1 and E[He_2(z1) He_2(z2)] = 0 under N(0, I_2).
    rule2 = gauss_hermite_rule(n_nodes=20, dimension=2)
    val = gauss_expectation(lambda z: z[:, 0] ** 2 * z[:, 1] ** 2, rule2)
    assert val == pytest.approx(1.0, abs=1e-10)
    val = gauss_expectation(
        lambda z: hermite_eval(2, z[:, 0]) * hermite_eval(2, z[:, 1]), rule2
    )
    assert val == pytest.approx(0.0, abs=1e-10)


def test_gauss_expectation_chunked_grid_matches_small_grid():
    # 3D product of squares: E[z1^2 z2^2 z3^2] = 1, exercised with enough
    # nodes that the grid spans multiple evaluation chunks.
    rule3 = gauss_hermite_rule(n_nodes=40, dimension=3)
    val = gauss_expectation(lambda z: np.prod(z**2, axis=1), rule3)
    assert val == pytest.approx(1.0, abs=1e-9)


def test_rule_validation():
    with pytest.raises(ValueError):
        gauss_hermite_rule(n_nodes=0)
    with pytest.raises(ValueError):
        gauss_hermite_rule(dimension=6)
    nodes, weights = RULE_1D.nodes, RULE_1D.weights
    with pytest.raises(ValueError):
        QuadratureRule(nodes, weights * 2.0, 1)
    with pytest.raises(ValueError):
        QuadratureRule(nodes, -weights, 1)


def test_hermite_coefficients_of_he3():
    nu = hermite_coefficients(lambda x: hermite_eval(3, x), 4, RULE_1D)
    assert np.allclose(nu, [0.0, 0.0, 0.0, 6.0, 0.0], atol=1e-9)


def test_hermite_coefficients_of_identity():
    nu = hermite_coefficients(lambda x: x, 5, RULE_1D)
    expected = np.zeros(6)
    expected[1] = 1.0
    assert np.allclose(nu, expected, atol=1e-10)


def test_hermite_coefficients_of_tanh():
    # nu_1 = E[tanh(xi) xi] = E[sech^2(xi)] by Gaussian integration by
    # parts; value frozen from a converged 200-node computation.
    nu = hermite_coefficients(np.tanh, 4, RULE_1D)
    assert nu[1] == pytest.approx(0.6057055096, abs=1e-6)
    assert nu[1] > 0
    # tanh is odd, so every even coefficient vanishes.
    assert abs(nu[0]) < 1e-12
    assert abs(nu[2]) < 1e-10
    assert abs(nu[4]) < 1e-8


def test_hermite_coefficients_rejects_tensor_rule():
    rule2 = gauss_hermite_rule(n_nodes=10, dimension=2)
    with pytest.raises(ValueError):
        hermite_coefficients(np.tanh, 2, rule2)
