import numpy as np
import pytest

from fimissing.distributions import exponential_product
from fimissing.exceptions import MissingCovariance, SingularBread, UnsupportedDivergence
from fimissing.imputation import FractionalImputation
from fimissing.inference import (_attach, confidence_intervals, fince_sandwich,
                                 fiscore_sandwich, sandwich, select_graph)
from fimissing.models import TruncatedGGM, exponential_1d
from fimissing.nce import NoiseSample
from fimissing.report import EstimateReport


def _report(params, se, names=None, theta_slice=slice(None)):
    params = np.asarray(params, dtype=float)
    names = names or [f"p{i}" for i in range(params.size)]
    return EstimateReport(params=params, param_names=names, method="test",
                          covariance=np.diag(np.asarray(se, float) ** 2),
                          theta_slice=theta_slice)


def test_ci_examples():
    ci = confidence_intervals(_report([1.0], [0.5]), 0.95)
    assert ci.lower[0] == pytest.approx(1 - 1.959964 * 0.5, abs=1e-6)
    assert ci.upper[0] == pytest.approx(1.980, abs=5e-4)
    ci0 = confidence_intervals(_report([2.0], [0.0]))
    assert ci0.lower[0] == ci0.upper[0] == 2.0
    r = _report([0.3, -1.0], [0.2, 0.4])
    a, b = confidence_intervals(r, 0.90), confidence_intervals(r, 0.95)
    assert np.all(a.lower > b.lower) and np.all(a.upper < b.upper)
    with pytest.raises(MissingCovariance):
        confidence_intervals(EstimateReport(np.ones(1), ["a"], "x"))


def test_select_graph_examples():
    m = TruncatedGGM(3)
    theta = m.theta_from_precision(np.eye(3))
    assert select_graph(_report(theta, np.full(6, 0.1)), m) == set()
    theta = theta.copy()
    theta[m.pair_index(1, 2)] = 0.5
    assert select_graph(_report(theta, np.full(6, 0.1)), m) == {(1, 2)}
    # offset by the log-normalizer when present
    r = _report(np.concatenate([[0.0], theta]), np.full(7, 0.1), theta_slice=slice(1, None))
    assert select_graph(r, m) == {(1, 2)}


def test_singular_bread():
    with pytest.raises(SingularBread):
        sandwich(np.array([[1.0, 1.0], [1.0, 1.0]]), np.eye(2))
    rep = EstimateReport(np.ones(2), ["a", "b"], "x")

    def bad():
        raise SingularBread("singular", condition=np.inf)

    assert _attach(rep, bad) is None
    assert rep.covariance is None and "singular" in rep.extras["covariance_error"]


def test_fiscore_complete_data_reduction():
    m = TruncatedGGM(2)
    rng = np.random.default_rng(0)
    X = rng.exponential(size=(40, 2))
    theta = m.theta_from_precision(np.array([[1.2, 0.3], [0.3, 0.9]]))
    pieces = fiscore_sandwich(FractionalImputation.complete(X), theta, m, "basic")
    _, Z = m.sm_terms(theta, X, "basic")
    der = m.score_x_derivatives(theta, X)
    H = sum(np.outer(der.dc_dtheta[i, s], der.dc_dtheta[i, s]) for i in range(40) for s in range(2))
    np.testing.assert_allclose(pieces.bread, H / 40, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(pieces.meat, np.cov(Z.T) / 40, rtol=1e-12)


def test_fiscore_hand_instance():
    m = exponential_1d()
    X = np.array([[0.5], [1.5], [0.7], [2.0]])
    imp = FractionalImputation(X=X, record=np.array([0, 0, 1, 1]), starts=np.array([0, 2]),
                               counts=np.array([2, 2]), log_b=np.zeros(4),
                               weights=np.array([0.25, 0.75, 0.6, 0.4]),
                               observed=np.array([[False], [False]]))
    lam = 1.3
    pieces = fiscore_sandwich(imp, [lam], m, "nonneg")
    # per completion: u = 2x - lam x^2 (gradient of 2x(-lam) + x^2 lam^2 / 2), du = x^2, t = -x
    u = lambda x: -2 * x + lam * x * x
    bread = 0.0
    ubar = []
    for i in range(2):
        xs, ws = X[2 * i:2 * i + 2, 0], imp.weights[2 * i:2 * i + 2]
        ub = sum(w * u(x) for w, x in zip(ws, xs))
        tb = sum(w * -x for w, x in zip(ws, xs))
        bread += sum(w * x * x for w, x in zip(ws, xs)) + sum(w * u(x) * -x for w, x in zip(ws, xs)) - ub * tb
        ubar.append(ub)
    bread /= 2
    meat = (ubar[0] - ubar[1]) ** 2 / 4
    np.testing.assert_allclose(pieces.bread[0, 0], bread, rtol=1e-12)
    np.testing.assert_allclose(pieces.meat[0, 0], meat, rtol=1e-12)
    np.testing.assert_allclose(pieces.covariance[0, 0], meat / bread ** 2, rtol=1e-12)


def test_fince_complete_data_reduction():
    m = TruncatedGGM(2)
    rng = np.random.default_rng(1)
    X = rng.exponential(size=(30, 2))
    noise = NoiseSample.draw(exponential_product([1.0, 1.0]), 25, 2)
    tau = np.concatenate([[0.2], m.theta_from_precision(np.array([[1.0, 0.2], [0.2, 1.0]]))])
    pieces = fince_sandwich(FractionalImputation.complete(X), noise, tau, m)
    lr = -tau[0] + m.log_unnorm(tau[1:], X) - noise.log_density(X)
    V = np.column_stack([-np.ones(30), m.grad_theta_log_unnorm(tau[1:], X)])
    want = (V / (1 + np.exp(lr))[:, None]).T @ V / 30
    np.testing.assert_allclose(pieces.bread, want, rtol=1e-12)


def test_fince_hand_instance():
    m = exponential_1d()
    X = np.array([[0.4], [1.1]])
    Y = np.array([[0.2], [0.9], [1.7]])
    a = exponential_product([1.0])
    noise = NoiseSample(Y, a)
    c, lam = 0.1, 1.4
    imp = FractionalImputation.complete(X)
    pieces = fince_sandwich(imp, noise, [c, lam], m)

    def r(x):
        return np.exp(-c - lam * x) / np.exp(-x)

    def v(x):
        return np.array([-1.0, -x])

    B = sum(np.outer(v(x) / (1 + r(x)), v(x)) for x in X[:, 0]) / 2
    z1 = [-v(x) / (1 + r(x)) for x in X[:, 0]]
    z2 = [r(y) / (1 + r(y)) * v(y) for y in Y[:, 0]]
    meat = sum(np.outer(z - np.mean(z1, 0), z - np.mean(z1, 0)) for z in z1) / (2 * 1)
    meat += sum(np.outer(z - np.mean(z2, 0), z - np.mean(z2, 0)) for z in z2) / (3 * 2)
    Binv = np.linalg.inv(B)
    np.testing.assert_allclose(pieces.bread, B, rtol=1e-12)
    np.testing.assert_allclose(pieces.covariance, Binv @ meat @ Binv.T, rtol=1e-10)


def test_closed_form_only_for_nce():
    m = exponential_1d()
    noise = NoiseSample(np.array([[0.5]]), exponential_product([1.0]))
    with pytest.raises(UnsupportedDivergence):
        fince_sandwich(FractionalImputation.complete(np.ones((2, 1))), noise, [0.0, 1.0], m,
                       kind="log_linear")
