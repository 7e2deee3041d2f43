import numpy as np
import pytest
from scipy import stats

from fimissing.distributions import match_truncnorm_moments, moment_matched
from fimissing.exceptions import InadmissibleParams, NonConvergence
from fimissing.solver import SolverOpts, damped_newton, numerical_jacobian


def test_newton_solves_smooth_system():
    fun = lambda x: np.array([x[0] ** 2 + x[1] - 3, x[0] - x[1] ** 3 + 1])
    res = damped_newton(fun, [1.0, 1.0])
    assert np.max(np.abs(fun(res.x))) <= 1e-8


def test_newton_respects_admissible_region():
    def fun(x):
        if x[0] <= 0:
            raise InadmissibleParams("x must be positive")
        return np.array([np.log(x[0]) - 2.0])

    res = damped_newton(fun, [0.1])
    assert res.x[0] == pytest.approx(np.exp(2.0))


def test_newton_reports_nonconvergence():
    with pytest.raises(NonConvergence):
        damped_newton(lambda x: np.array([x[0] ** 2 + 1.0]), [1.0],
                      opts=SolverOpts(max_inner_iter=5))


def test_opts_validation():
    with pytest.raises(ValueError):
        SolverOpts(em_tol=0)


def test_numerical_jacobian():
    fun = lambda x: np.array([np.sin(x[0]) * x[1], x[1] ** 2])
    x = np.array([0.3, 1.2])
    want = np.array([[np.cos(0.3) * 1.2, np.sin(0.3)], [0.0, 2.4]])
    np.testing.assert_allclose(numerical_jacobian(fun, x), want, rtol=1e-6, atol=1e-9)


def test_truncnorm_moment_matching():
    for loc, scale in [(1.0, 0.5), (-0.5, 1.0), (0.0, 2.0)]:
        d = stats.truncnorm(-loc / scale, np.inf, loc=loc, scale=scale)
        got = match_truncnorm_moments(d.mean(), d.std())
        np.testing.assert_allclose(got, (loc, scale), rtol=1e-6, atol=1e-8)
    with pytest.raises(ValueError):
        match_truncnorm_moments(1.0, 1.5)


def test_moment_matched_ignores_missing_entries():
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.gamma(9.0, 0.2, 2000), rng.lognormal(0.0, 1.0, 2000)])
    X[::3, 0] = np.nan
    dens = moment_matched(X)
    np.testing.assert_allclose(dens.mean(), np.nanmean(X, axis=0), rtol=1e-6)
    assert dens.marginals[1].dist.name == "expon"
