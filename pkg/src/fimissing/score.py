"""Generalized score matching: the basic loss and the nonnegative-orthant variant."""
import numpy as np

from .models import TruncExpFamily, check_variant
from .report import EstimateReport
from .solver import SolverOpts, damped_newton, numerical_jacobian


class ScoreProblem:
    """Weighted score matching loss ``n^-1 sum_k w_k m_sc(x_k; theta)``."""

    def __init__(self, model, X, variant="basic", weights=None, n_records=None):
        self.model = model
        self.variant = check_variant(model, variant)
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        model.check_support(self.X)
        self.n_records = self.X.shape[0] if n_records is None else int(n_records)
        self.set_weights(np.ones(self.X.shape[0]) if weights is None else weights)

    def set_weights(self, weights):
        self.w = np.asarray(weights, dtype=float)

    def point_terms(self, theta):
        theta = self.model.check_params(theta)
        return self.model.sm_terms(theta, self.X, self.variant)

    def loss(self, theta):
        return float(self.w @ self.point_terms(theta)[0] / self.n_records)

    def estimating_fn(self, theta):
        return self.w @ self.point_terms(theta)[1] / self.n_records

    def hessian_sum(self, theta):
        """``sum_k w_k grad_theta z_sc(x_k)``."""
        theta = self.model.check_params(theta)
        if self.model.linear_in_theta:
            return self.model.sm_hessian(theta, self.X, self.w, self.variant)
        return numerical_jacobian(lambda t: self.w @ self.point_terms(t)[1], theta)

    def jacobian(self, theta):
        return self.hessian_sum(theta) / self.n_records

    def solve(self, theta0, opts):
        return damped_newton(self.estimating_fn, theta0, jac=self.jacobian, opts=opts)


def _complete(model, data):
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[1] != model.x_dim:
        raise ValueError(f"expected {model.x_dim} columns, got {X.shape[1]}")
    if np.isnan(X).any():
        raise ValueError("complete-data estimators need data without missing entries")
    return X


def sm_loss(data, theta, model, variant="basic"):
    """Average score matching loss over the sample.

    ``basic`` sums ``0.5 c_s^2 + dc_s/dx_s`` over coordinates; ``nonneg``
    sums ``2 x_s c_s + x_s^2 (0.5 c_s^2 + dc_s/dx_s)``.
    """
    return ScoreProblem(model, _complete(model, data), variant).loss(theta)


def sm_estimating_fn(data, theta, model, variant="basic"):
    """Exact theta-gradient of :func:`sm_loss`."""
    return ScoreProblem(model, _complete(model, data), variant).estimating_fn(theta)


def fit_score_complete(data, model, variant="basic", init=None, opts=None, seed=None,
                       covariance=True):
    """Minimize :func:`sm_loss` by damped Newton on its gradient.

    Returns
    -------
    EstimateReport
    """
    from .imputation import FractionalImputation
    from .inference import score_covariance

    opts = opts or SolverOpts()
    X = _complete(model, data)
    problem = ScoreProblem(model, X, variant)
    theta0 = np.ones(model.param_dim) if init is None else np.asarray(init, dtype=float)
    res = problem.solve(theta0, opts)
    report = EstimateReport(
        params=res.x, param_names=list(model.param_names), method="score_complete",
        iterations=res.iterations, inner_iterations=res.iterations,
        residual=res.residual_norm, seed=seed, extras={"variant": problem.variant})
    if covariance:
        score_covariance(report, FractionalImputation.complete(X), model, problem.variant)
    return report


def _expfam_blocks(X, model, variant):
    if not isinstance(model, TruncExpFamily):
        raise TypeError("the K1/K2 form needs a TruncExpFamily model")
    check_variant(model, variant)
    model.check_support(X)
    K1 = model.stats_grad(X)
    K2 = model.stats_hess(X)
    if variant == "nonneg":
        # x-weighted K1 and the boundary-corrected linear term
        k2 = np.einsum("npd,nd->np", K1, 2.0 * X) + np.einsum("npd,nd->np", K2, X ** 2)
        K1 = K1 * X[:, None, :]
    else:
        k2 = K2.sum(axis=2)
    return K1, k2


def expfam_quadratic(data, model, variant="nonneg"):
    """``(Q, b)`` with per-sample loss average ``0.5 theta^T Q theta + theta^T b``."""
    X = _complete(model, data)
    K1, k2 = _expfam_blocks(X, model, variant)
    n = X.shape[0]
    Q = np.einsum("npd,nqd->pq", K1, K1) / n
    return Q, k2.sum(axis=0) / n


def sm_loss_expfam(data, theta, model, variant="nonneg"):
    """Score matching loss of a truncated exponential family in its K1/K2 form.

    Per point this is ``0.5 theta^T K1 K1^T theta + theta^T k2``. For the
    nonneg variant ``K1`` has entries ``x_b dF_a/dx_b`` and ``k2`` sums
    ``2 x_b dF_a/dx_b + x_b^2 d^2F_a/dx_b^2`` over ``b``; the result equals
    :func:`sm_loss` exactly.
    """
    Q, b = expfam_quadratic(data, model, variant)
    theta = np.asarray(theta, dtype=float)
    return float(0.5 * theta @ Q @ theta + theta @ b)


def fit_score_expfam(data, model, variant="nonneg", seed=None, covariance=True):
    """Closed-form score matching estimate ``theta = -Q^-1 b``.

    A ridge of ``1e-10 * trace(Q)`` is added when ``Q`` is singular.
    """
    from .imputation import FractionalImputation
    from .inference import score_covariance

    X = _complete(model, data)
    Q, b = expfam_quadratic(X, model, variant)
    try:
        theta = np.linalg.solve(Q, -b)
        ridge = 0.0
    except np.linalg.LinAlgError:
        ridge = 1e-10 * np.trace(Q)
        theta = np.linalg.solve(Q + ridge * np.eye(Q.shape[0]), -b)
    resid = Q @ theta + b
    report = EstimateReport(
        params=theta, param_names=list(model.param_names), method="score_complete",
        residual=float(np.max(np.abs(resid))), seed=seed,
        extras={"variant": variant, "ridge": ridge, "solver": "expfam_linear"})
    if covariance:
        score_covariance(report, FractionalImputation.complete(X), model, variant)
    return report
