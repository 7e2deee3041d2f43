"""Generalized noise contrastive estimation on complete (or weighted) data.

The extended model is ``q(x; tau) = exp(-c) p~(x; theta)`` with
``tau = (c, theta)``, so ``grad_tau log q = (-1, grad_theta log p~)``.
"""
import numpy as np
from scipy.special import logsumexp

from .divergence import get_divergence
from .exceptions import DomainError, InadmissibleParams
from .report import EstimateReport, ExtendedParams
from .solver import SolverOpts, damped_newton


class NoiseSample:
    """Noise points ``y_j`` together with their density ``a``.

    Parameters
    ----------
    points : ndarray, shape (n_y, d)
    density : object
        Anything with ``logpdf(X)`` and ``sample(n, rng)``, e.g. a
        :class:`~fimissing.distributions.ProductDensity`.
    """

    def __init__(self, points, density):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.density = density
        self.log_values = self.log_density(self.points)
        if not np.all(np.isfinite(self.log_values)):
            raise DomainError("noise density is not finite at every noise point")

    @classmethod
    def draw(cls, density, n, rng_seed):
        rng = np.random.default_rng(rng_seed)
        return cls(density.sample(n, rng), density)

    def log_density(self, X):
        return self.density.logpdf(np.atleast_2d(X))

    def resample(self, n, rng_seed):
        return NoiseSample.draw(self.density, n, rng_seed)

    def __len__(self):
        return self.points.shape[0]


def log_normalizer_is(model, theta, noise):
    """Importance-sampling estimate of ``log Z(theta)`` from the noise sample."""
    lp = model.log_unnorm(theta, noise.points)
    return float(logsumexp(lp - noise.log_values) - np.log(len(noise)))


def _as_tau(model, tau, noise=None):
    if isinstance(tau, ExtendedParams):
        if tau.c is None:
            if noise is None:
                raise ValueError("c=None needs a noise sample for initialization")
            tau = ExtendedParams(tau.theta, log_normalizer_is(model, tau.theta, noise))
        tau = tau.as_vector()
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (model.param_dim + 1,):
        raise InadmissibleParams(
            f"expected {model.param_dim + 1} extended parameters, got shape {tau.shape}")
    return tau


class NCEProblem:
    """The (possibly weighted) NCE objective and estimating equation.

    Data points ``X`` carry weights ``w`` and the data sums are divided by
    ``n_records``; with unit weights and ``n_records = len(X)`` this is the
    ordinary complete-data problem. Fractional imputation passes the stacked
    completions with their normalized weights instead.
    """

    def __init__(self, model, fn, X, noise, weights=None, n_records=None):
        self.model = model
        self.fn = get_divergence(fn)
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        model.check_support(self.X)
        model.check_support(noise.points)
        self.noise = noise
        self.log_a_x = noise.log_density(self.X)
        if not np.all(np.isfinite(self.log_a_x)):
            raise DomainError("noise density vanishes at a data point")
        self.log_a_y = noise.log_values
        self.n_records = self.X.shape[0] if n_records is None else int(n_records)
        self.set_weights(np.ones(self.X.shape[0]) if weights is None else weights)
        self._linear = model.linear_in_theta
        if self._linear:
            dummy = np.zeros(model.param_dim)
            self._Fx = model._grad_theta(dummy, self.X)
            self._Fy = model._grad_theta(dummy, noise.points)

    def set_weights(self, weights):
        self.w = np.asarray(weights, dtype=float)

    # -- pointwise pieces -------------------------------------------------
    def _side(self, tau, X, log_a, F):
        tau = np.asarray(tau, dtype=float)
        theta = self.model.check_params(tau[1:])
        if F is not None:
            lp, G = F @ theta, F
        else:
            lp, G = self.model._log_unnorm(theta, X), self.model._grad_theta(theta, X)
        log_r = -tau[0] + lp - log_a
        V = np.empty((X.shape[0], tau.size))
        V[:, 0] = -1.0
        V[:, 1:] = G
        return log_r, V

    def data_side(self, tau):
        return self._side(tau, self.X, self.log_a_x, self._Fx if self._linear else None)

    def noise_side(self, tau):
        return self._side(tau, self.noise.points, self.log_a_y,
                          self._Fy if self._linear else None)

    def point_terms(self, tau):
        """Per-point ``z_nc1`` at the data and ``z_nc2`` at the noise."""
        tau = np.asarray(tau, dtype=float)
        lx, Vx = self.data_side(tau)
        ly, Vy = self.noise_side(tau)
        _, _, g1, _, _, _ = self.fn.ratio_terms(lx)
        _, _, _, g2, _, _ = self.fn.ratio_terms(ly)
        return -g1[:, None] * Vx, g2[:, None] * Vy

    # -- aggregate quantities ---------------------------------------------
    def objective(self, tau):
        tau = np.asarray(tau, dtype=float)
        lx, _ = self.data_side(tau)
        ly, _ = self.noise_side(tau)
        m1 = self.fn.ratio_terms(lx)[0]
        m2 = self.fn.ratio_terms(ly)[1]
        return float(self.w @ m1 / self.n_records + np.mean(m2))

    def estimating_fn(self, tau):
        z1, z2 = self.point_terms(tau)
        return self.w @ z1 / self.n_records + z2.mean(axis=0)

    def _hess_tau(self, tau, X):
        H = np.zeros((X.shape[0], tau.size, tau.size))
        H[:, 1:, 1:] = self.model._hess_theta(tau[1:], X)
        return H

    @property
    def has_jacobian(self):
        if self.fn.f3 is None:
            return False
        if self._linear:
            return True
        try:
            self.model._hess_theta(np.zeros(self.model.param_dim), self.X[:1])
        except NotImplementedError:
            return False
        except InadmissibleParams:
            pass
        return True

    def data_jacobian_sum(self, tau):
        """``sum_k w_k grad_tau z_nc1(x_k)`` over the stacked data points."""
        tau = np.asarray(tau, dtype=float)
        lx, Vx = self.data_side(tau)
        _, _, g1, _, dg1, _ = self.fn.ratio_terms(lx)
        J = -(Vx * (self.w * dg1)[:, None]).T @ Vx
        if not self._linear:
            J -= np.einsum("n,nij->ij", self.w * g1, self._hess_tau(tau, self.X))
        return J

    def noise_jacobian_mean(self, tau):
        tau = np.asarray(tau, dtype=float)
        ly, Vy = self.noise_side(tau)
        _, _, _, g2, _, dg2 = self.fn.ratio_terms(ly)
        J = (Vy * dg2[:, None]).T @ Vy
        if not self._linear:
            J += np.einsum("n,nij->ij", g2, self._hess_tau(tau, self.noise.points))
        return J / ly.size

    def jacobian(self, tau):
        return self.data_jacobian_sum(tau) / self.n_records + self.noise_jacobian_mean(tau)

    def solve(self, tau0, opts):
        jac = self.jacobian if self.has_jacobian else None
        return damped_newton(self.estimating_fn, tau0, jac=jac, opts=opts)


def _complete_data(model, data):
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[1] != model.x_dim:
        raise ValueError(f"expected {model.x_dim} columns, got {X.shape[1]}")
    if np.isnan(X).any():
        raise ValueError("complete-data estimators need data without missing entries")
    return X


def nce_objective(data, noise, tau, fn, model):
    """``M_nc1 + M_nc2``: mean of ``-f'(r)`` over data plus mean of ``f'(r) r - f(r)`` over noise."""
    problem = NCEProblem(model, fn, _complete_data(model, data), noise)
    return problem.objective(_as_tau(model, tau))


def nce_estimating_fn(data, noise, tau, fn, model):
    """Gradient of :func:`nce_objective` in ``tau = (c, theta)``."""
    problem = NCEProblem(model, fn, _complete_data(model, data), noise)
    return problem.estimating_fn(_as_tau(model, tau))


def nce_jacobian(data, noise, tau, fn, model):
    problem = NCEProblem(model, fn, _complete_data(model, data), noise)
    return problem.jacobian(_as_tau(model, tau))


def nce_param_names(model):
    return ["c"] + list(model.param_names)


def fit_nce_complete(data, noise, fn, model, init, opts=None, seed=None,
                     covariance=True):
    """Minimize the NCE objective by damped Newton on its estimating equation.

    Parameters
    ----------
    data : ndarray, shape (n, d)
    noise : NoiseSample
    fn : str or DivergenceFn
    model : UnnormalizedModel
    init : ExtendedParams or array_like
        ``c=None`` starts the log-normalizer at its importance-sampling estimate.
    opts : SolverOpts, optional
    covariance : bool
        Attach the sandwich covariance.

    Returns
    -------
    EstimateReport
    """
    from .imputation import FractionalImputation
    from .inference import nce_covariance

    opts = opts or SolverOpts()
    X = _complete_data(model, data)
    problem = NCEProblem(model, fn, X, noise)
    tau0 = _as_tau(model, init, noise)
    res = problem.solve(tau0, opts)
    report = EstimateReport(
        params=res.x, param_names=nce_param_names(model), method="nce_complete",
        theta_slice=slice(1, None), iterations=res.iterations,
        inner_iterations=res.iterations, residual=res.residual_norm, seed=seed,
        extras={"kind": problem.fn.kind})
    if covariance:
        imp = FractionalImputation.complete(X)
        nce_covariance(report, imp, noise, model, problem.fn)
    return report
