import math

import numpy as np
import pytest

from fimissing.diagnostics import central_difference, relative_error
from fimissing.distributions import exponential_product, normal_product
from fimissing.models import TruncatedGGM, exponential_1d, gaussian_shape_1d
from fimissing.nce import (NCEProblem, NoiseSample, fit_nce_complete, nce_estimating_fn,
                           nce_jacobian, nce_objective)
from fimissing.report import ExtendedParams
from fimissing.solver import SolverOpts


def _matched_gaussian(lam, n, seed):
    """Noise equal to the normalized model, so ``r = 1`` at c = log Z."""
    noise = NoiseSample.draw(normal_product([0.0], [1 / math.sqrt(lam)]), n, seed)
    return noise, 0.5 * math.log(2 * math.pi / lam)


def test_objective_at_unit_ratio():
    noise, logz = _matched_gaussian(2.0, 30, 0)
    val = nce_objective(noise.points, noise, [logz, 2.0], "nce", gaussian_shape_1d())
    # -f'(1) = log 2 from the data and f'(1) - f(1) = log 2 from the noise
    assert val == pytest.approx(2 * math.log(2), abs=1e-12)


def test_log_linear_large_c_limit():
    m = gaussian_shape_1d()
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 1))
    noise = NoiseSample.draw(normal_product([0.0], [1.0]), 20, 2)
    p0 = NCEProblem(m, "log_linear", X, noise)
    noise_term = lambda c: float(np.mean(p0.fn.ratio_terms(p0.noise_side([c, 1.0])[0])[1]))
    data_term = lambda c: float(np.mean(p0.fn.ratio_terms(p0.data_side([c, 1.0])[0])[0]))
    assert abs(noise_term(10.0)) < abs(noise_term(0.0)) and noise_term(10.0) < 1e-3
    assert data_term(10.0) > data_term(0.0)


def test_objective_scalar_loop_oracle():
    m = gaussian_shape_1d()
    rng = np.random.default_rng(3)
    x = rng.normal(0, 1.2, 20)
    y = rng.normal(0, 1.5, 20)
    noise = NoiseSample(y[:, None], normal_product([0.0], [1.5]))

    def a(v):
        return math.exp(-0.5 * (v / 1.5) ** 2) / (1.5 * math.sqrt(2 * math.pi))

    def fp(u):
        return math.log(u) - math.log1p(u)

    def f(u):
        return u * math.log(u) - (1 + u) * math.log1p(u)

    total = 0.0
    for v in x:
        r = math.exp(-0.5 * v * v) / a(v)
        total += -fp(r) / 20
    for v in y:
        r = math.exp(-0.5 * v * v) / a(v)
        total += (fp(r) * r - f(r)) / 20
    got = nce_objective(x[:, None], noise, [0.0, 1.0], "nce", m)
    assert got == pytest.approx(total, rel=1e-12)


@pytest.mark.parametrize("kind", ["nce", "log_linear", "quadratic"])
def test_estimating_fn_and_jacobian_match_finite_differences(kind):
    m = TruncatedGGM(2)
    rng = np.random.default_rng(4)
    noise = NoiseSample.draw(exponential_product([1.0, 1.0]), 40, 5)
    worst_g = worst_j = 0.0
    for _ in range(100):
        X = rng.exponential(size=(15, 2))
        A = rng.normal(size=(2, 2))
        tau = np.concatenate([[rng.normal()], m.theta_from_precision(A @ A.T + np.eye(2))])
        g = nce_estimating_fn(X, noise, tau, kind, m)
        fd = central_difference(lambda t: nce_objective(X, noise, t, kind, m), tau)
        worst_g = max(worst_g, relative_error(g, fd))
        J = nce_jacobian(X, noise, tau, kind, m)
        fdj = central_difference(lambda t: nce_estimating_fn(X, noise, t, kind, m), tau)
        worst_j = max(worst_j, relative_error(J, fdj))
    assert worst_g <= 1e-6
    assert worst_j <= 1e-6


def test_unit_ratio_with_identical_samples_gives_zero():
    noise, logz = _matched_gaussian(3.0, 25, 6)
    z = nce_estimating_fn(noise.points, noise, [logz, 3.0], "nce", gaussian_shape_1d())
    np.testing.assert_allclose(z, 0.0, atol=1e-14)


def test_log_linear_point_terms():
    m = TruncatedGGM(2)
    rng = np.random.default_rng(7)
    X = rng.exponential(size=(10, 2))
    noise = NoiseSample.draw(exponential_product([1.0, 1.0]), 10, 8)
    tau = np.concatenate([[0.3], m.theta_from_precision(np.eye(2))])
    p = NCEProblem(m, "log_linear", X, noise)
    z1, z2 = p.point_terms(tau)
    _, Vx = p.data_side(tau)
    ly, Vy = p.noise_side(tau)
    np.testing.assert_allclose(z1, -Vx, rtol=1e-14)
    np.testing.assert_allclose(z2, np.exp(ly)[:, None] * Vy, rtol=1e-13)


def test_recovers_noise_parameters():
    a = exponential_product([0.5])
    X = a.sample(5000, np.random.default_rng(9))
    noise = NoiseSample.draw(a, 5000, 10)
    r = fit_nce_complete(X, noise, "nce", exponential_1d(), ExtendedParams([1.0]))
    truth = np.array([math.log(0.5), 2.0])
    assert np.all(np.abs(r.params - truth) <= 3 * r.std_errors)


def test_agrees_with_grid_search():
    a = exponential_product([1.0])
    X = exponential_product([0.6]).sample(2000, np.random.default_rng(11))
    noise = NoiseSample.draw(a, 2000, 12)
    m = exponential_1d()
    r = fit_nce_complete(X, noise, "nce", m, ExtendedParams([1.0]))
    cs = np.linspace(r.params[0] - 0.3, r.params[0] + 0.3, 121)
    ls = np.linspace(r.params[1] - 0.4, r.params[1] + 0.4, 121)
    vals = np.array([[nce_objective(X, noise, [c, l], "nce", m) for l in ls] for c in cs])
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    assert abs(cs[i] - r.params[0]) <= 3 * r.std_errors[0]
    assert abs(ls[j] - r.params[1]) <= 3 * r.std_errors[1]


def test_each_kind_solves_its_own_equation():
    a = exponential_product([1.0])
    X = exponential_product([0.6]).sample(500, np.random.default_rng(13))
    noise = NoiseSample.draw(a, 500, 14)
    m = exponential_1d()
    opts = SolverOpts()
    fits = {}
    for kind in ("nce", "log_linear"):
        r = fit_nce_complete(X, noise, kind, m, ExtendedParams([1.0]), opts)
        assert np.max(np.abs(nce_estimating_fn(X, noise, r.params, kind, m))) <= opts.grad_tol
        fits[kind] = r.params
    assert not np.allclose(fits["nce"], fits["log_linear"], atol=1e-8)
