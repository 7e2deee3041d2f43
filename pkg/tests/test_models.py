import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fimissing.diagnostics import model_derivative_errors
from fimissing.exceptions import InadmissibleParams, OutOfSupport
from fimissing.models import (TruncatedGGM, exponential_1d, gaussian_shape_1d,
                              strictly_copositive)

from conftest import SIGMA


def test_log_unnorm_identity_precision():
    m = TruncatedGGM(2)
    th = m.theta_from_precision(np.eye(2))
    assert m.log_unnorm(th, [1.0, 2.0]) == pytest.approx(-2.5)
    assert m.log_unnorm(th, [0.0, 0.0]) == 0.0


def test_log_unnorm_against_hand_inverse():
    a, b, d = SIGMA[0, 0], SIGMA[0, 1], SIGMA[1, 1]
    det = a * d - b * b
    lam = np.array([[d, -b], [-b, a]]) / det
    x = np.array([1.0, 1.0])
    m = TruncatedGGM(2)
    got = m.log_unnorm(m.theta_from_precision(lam), x)
    assert got == pytest.approx(-0.5 * x @ lam @ x, rel=1e-14)


def test_grad_theta_quadratic_form():
    m = TruncatedGGM(2)
    g = m.grad_theta_log_unnorm(m.theta_from_precision(np.eye(2)), [1.0, 2.0])
    np.testing.assert_allclose(g, [-0.5, -2.0, -2.0])


def test_score_x_examples():
    m = TruncatedGGM(2)
    np.testing.assert_allclose(m.score_x(m.theta_from_precision(np.eye(2)), [1.0, 2.0]),
                               [-1.0, -2.0])
    e = exponential_1d()
    assert e.score_x([1.7], [0.3]) == pytest.approx(-1.7)
    assert e.score_x([1.7], [4.0]) == pytest.approx(-1.7)


def test_score_derivatives_structure():
    m = TruncatedGGM(3)
    lam = np.array([[2.0, 0.3, 0.1], [0.3, 1.5, 0.2], [0.1, 0.2, 1.0]])
    der = m.score_x_derivatives(m.theta_from_precision(lam), [0.5, 1.0, 2.0])
    np.testing.assert_allclose(der.dc_dx, -np.diag(lam))
    g = gaussian_shape_1d()
    der = g.score_x_derivatives([2.0], [1.5])
    # grad_theta c_s is the x-gradient of the sufficient statistic
    np.testing.assert_allclose(der.dc_dtheta, [[-1.5]])


@pytest.mark.parametrize("make", [lambda: TruncatedGGM(3), gaussian_shape_1d, exponential_1d])
def test_derivatives_match_finite_differences(make):
    m = make()
    rng = np.random.default_rng(0)
    if isinstance(m, TruncatedGGM):
        theta = m.theta_from_precision(np.array([[2.0, 0.4, -0.2], [0.4, 1.5, 0.3],
                                                 [-0.2, 0.3, 1.2]]))
    else:
        theta = np.array([1.3])
    X = rng.exponential(1.0, size=(100, m.x_dim)) + 0.05
    worst = model_derivative_errors(m, theta, X)
    assert max(worst.values()) <= 1e-6, worst


def test_support_and_admissibility():
    m = TruncatedGGM(2)
    with pytest.raises(OutOfSupport):
        m.log_unnorm(m.theta_from_precision(np.eye(2)), [-1.0, 0.0])
    with pytest.raises(InadmissibleParams):
        m.check_params(m.theta_from_precision(np.array([[1.0, 2.0], [2.0, 1.0]])))
    with pytest.raises(InadmissibleParams):
        exponential_1d().check_params([-1.0])


def test_copositive_admissibility_accepts_indefinite_positive_matrix():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])
    assert strictly_copositive(A)
    assert not strictly_copositive(np.array([[1.0, -2.0], [-2.0, 1.0]]))
    m = TruncatedGGM(2, admissibility="copositive")
    m.check_params(m.theta_from_precision(A))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_copositivity_agrees_with_orthant_minimum(vals):
    a, b, c = vals
    A = np.array([[a, b], [b, c]])
    # on the nonneg quarter circle the quadratic form is positive iff copositive
    t = np.linspace(0, np.pi / 2, 2001)
    q = a * np.cos(t) ** 2 + 2 * b * np.cos(t) * np.sin(t) + c * np.sin(t) ** 2
    if abs(q.min()) > 1e-3:
        assert strictly_copositive(A) == (q.min() > 0)


def test_precision_round_trip_and_edges():
    m = TruncatedGGM(4)
    lam = np.eye(4)
    lam[0, 2] = lam[2, 0] = 0.3
    th = m.theta_from_precision(lam)
    np.testing.assert_array_equal(m.precision(th), lam)
    assert m.edges(th) == {(0, 2)}
    assert m.param_names[m.pair_index(0, 2)] == "L[0,2]"
