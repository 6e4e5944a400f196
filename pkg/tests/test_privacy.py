import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from dcmm.privacy import cost_matrix, mechanism_cost, to_approx_dp, to_gaussian_dp, total_cost


def test_mechanism_cost_examples(rng):
    assert mechanism_cost([[1.0]], [[1.0]]) == 1
    assert mechanism_cost(np.eye(2), 4 * np.eye(2)) == pytest.approx(0.25)
    B = rng.normal(size=(3, 3))
    assert mechanism_cost(B, np.eye(3)) == pytest.approx(np.diag(B.T @ B).max())
    S = np.array([[2.0, 0.5, 0], [0.5, 1.0, 0.2], [0, 0.2, 3.0]])
    assert mechanism_cost(B, S) == pytest.approx(np.diag(B.T @ np.linalg.inv(S) @ B).max())
    # diagonal given as a vector
    assert mechanism_cost(B, np.array([2.0, 1.0, 3.0])) == pytest.approx(mechanism_cost(B, np.diag([2.0, 1.0, 3.0])))


def test_singular_sigma():
    with pytest.raises(np.linalg.LinAlgError):
        mechanism_cost(np.eye(2), np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(np.linalg.LinAlgError):
        mechanism_cost(np.eye(2), np.array([1.0, 0.0]))


def test_total_cost_examples():
    a = (np.array([[1.0, 0.0]]), np.eye(1))
    b = (np.array([[0.0, 1.0]]), np.eye(1))
    assert total_cost([a, b]) == 1
    assert total_cost([a, a]) == 2
    with pytest.raises(ValueError):
        total_cost([a, (np.eye(3), np.eye(3))])


@given(st.integers(0, 2**31), st.integers(1, 4))
def test_total_cost_subadditive_and_monotone(seed, k):
    rng = np.random.default_rng(seed)
    mechs = [(rng.normal(size=(2, 3)), rng.uniform(0.5, 2, 2)) for _ in range(k)]
    tot = total_cost(mechs)
    assert tot <= sum(mechanism_cost(*m) for m in mechs) + 1e-12
    assert total_cost(mechs[:-1]) <= tot + 1e-12


def test_gaussian_dp():
    assert to_gaussian_dp(0) == 0 and to_gaussian_dp(1) == 1 and to_gaussian_dp(4) == 2


def test_approx_dp_at_zero_epsilon():
    Phi_half = 0.5 * (1 + math.erf(0.5 / math.sqrt(2)))
    assert to_approx_dp(1, 0) == pytest.approx(2 * Phi_half - 1, abs=1e-12)
    assert to_approx_dp(0, 0) == 0


def _phi_by_quadrature(x):
    val, _ = integrate.quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), -math.inf, x, epsabs=1e-14, epsrel=1e-13)
    return val


def test_approx_dp_against_quadrature():
    rho, eps = 1.0, 1.0
    mu = math.sqrt(rho)
    want = _phi_by_quadrature(mu / 2 - eps / mu) - math.exp(eps) * _phi_by_quadrature(-mu / 2 - eps / mu)
    assert to_approx_dp(rho, eps) == pytest.approx(want, abs=1e-12)


@given(st.floats(1e-4, 50), st.floats(0, 20), st.floats(0, 20))
def test_delta_monotone_and_bounded(rho, e1, e2):
    lo, hi = sorted((e1, e2))
    d_lo, d_hi = to_approx_dp(rho, lo), to_approx_dp(rho, hi)
    assert 0 <= d_hi <= d_lo <= 1
    assert to_approx_dp(rho, lo) <= to_approx_dp(rho * 1.5, lo) + 1e-15


def test_invalid_inputs():
    with pytest.raises(ValueError):
        to_approx_dp(-1, 0)
    with pytest.raises(ValueError):
        to_gaussian_dp(-1)


def test_cost_matrix_shape():
    assert cost_matrix(np.ones((2, 5)), np.ones(2)).shape == (5, 5)
