import numpy as np
import pytest

from fimissing.diagnostics import central_difference, relative_error
from fimissing.models import TruncatedGGM, exponential_1d, gaussian_shape_1d
from fimissing.sampling import sample_truncated_mvn
from fimissing.score import (expfam_quadratic, fit_score_complete, fit_score_expfam,
                             sm_estimating_fn, sm_loss, sm_loss_expfam)

from conftest import SIGMA


def test_loss_examples():
    assert sm_loss([[1.0]], [1.0], gaussian_shape_1d(), "basic") == pytest.approx(-0.5)
    assert sm_loss([[1.0]], [2.0], exponential_1d(), "nonneg") == pytest.approx(-2.0)


def test_ggm_basic_loss_direct_summation():
    rng = np.random.default_rng(4)
    X = rng.exponential(size=(10, 2))
    lam = np.array([[1.5, 0.4], [0.4, 0.8]])
    m = TruncatedGGM(2)
    total = 0.0
    for x in X:
        for s in range(2):
            c = -(lam[s, 0] * x[0] + lam[s, 1] * x[1])
            total += 0.5 * c * c - lam[s, s]
    assert sm_loss(X, m.theta_from_precision(lam), m, "basic") == pytest.approx(total / 10)


@pytest.mark.parametrize("variant", ["basic", "nonneg"])
def test_estimating_fn_is_loss_gradient(variant):
    m = TruncatedGGM(3)
    rng = np.random.default_rng(5)
    X = rng.exponential(size=(50, 3))
    worst = 0.0
    for _ in range(100):
        A = rng.normal(size=(3, 3))
        theta = m.theta_from_precision(A @ A.T + 3 * np.eye(3))
        g = sm_estimating_fn(X, theta, m, variant)
        fd = central_difference(lambda t: sm_loss(X, t, m, variant), theta)
        worst = max(worst, relative_error(g, fd))
    assert worst <= 1e-6


def test_closed_form_stationary_points():
    rng = np.random.default_rng(6)
    x = rng.normal(0, 0.7, size=(300, 1))
    lam = x.shape[0] / np.sum(x ** 2)
    assert abs(sm_estimating_fn(x, [lam], gaussian_shape_1d(), "basic")[0]) < 1e-12
    e = rng.exponential(0.5, size=(300, 1))
    lam_e = 2 * e.sum() / np.sum(e ** 2)
    assert abs(sm_estimating_fn(e, [lam_e], exponential_1d(), "nonneg")[0]) < 1e-12


def test_fit_recovers_closed_forms():
    rng = np.random.default_rng(7)
    x = rng.normal(0, 0.7, size=(400, 1))
    r = fit_score_complete(x, gaussian_shape_1d(), "basic")
    assert r.params[0] == pytest.approx(400 / np.sum(x ** 2), rel=1e-8)
    e = rng.exponential(0.5, size=(400, 1))
    want = 2 * e.sum() / np.sum(e ** 2)
    assert fit_score_complete(e, exponential_1d(), "nonneg").params[0] == pytest.approx(want, rel=1e-8)
    assert fit_score_expfam(e, exponential_1d(), "nonneg").params[0] == pytest.approx(want, rel=1e-8)
    assert fit_score_expfam(x, gaussian_shape_1d(), "basic").params[0] == pytest.approx(
        400 / np.sum(x ** 2), rel=1e-8)


def test_expfam_form_matches_loss_gradient():
    m = TruncatedGGM(3)
    rng = np.random.default_rng(8)
    X = rng.exponential(size=(40, 3))
    Q, b = expfam_quadratic(X, m, "nonneg")
    for _ in range(5):
        A = rng.normal(size=(3, 3))
        theta = m.theta_from_precision(A @ A.T + np.eye(3))
        np.testing.assert_allclose(Q @ theta + b, sm_estimating_fn(X, theta, m, "nonneg"),
                                   rtol=1e-10, atol=1e-12)
    assert sm_loss_expfam(X[:1], np.zeros(m.param_dim), m) == 0.0


def test_ggm_consistency():
    m = TruncatedGGM(2)
    lam = np.linalg.inv(SIGMA)
    X = sample_truncated_mvn(lam, 5000, 9)
    r = fit_score_complete(X, m, "nonneg", init=m.theta_from_precision(np.eye(2)))
    truth = m.theta_from_precision(lam)
    assert np.all(np.abs(r.params - truth) <= 3 * r.std_errors)
