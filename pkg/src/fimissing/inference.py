"""Sandwich covariances, Wald intervals and graph selection.

All fractional-imputation sandwiches share one construction. With
per-completion estimating functions ``u``, weight scores
``t = grad log(p~ [pi])`` and frozen-weight Jacobians ``grad u``, the bread is

    n^-1 sum_i [ sum_k w_ik grad u_ik + sum_k w_ik u_ik t_ik^T - u_i t_i^T ]

with ``u_i = sum_k w_ik u_ik`` (the last two terms are the conditional
covariance coming from the weights' dependence on the parameters), and the
meat is ``(n (n-1))^-1 sum_i (u_i - mean u)^{x2}`` plus the analogous noise
term for NCE. The original-NCE estimator has its own closed form,
:func:`fince_sandwich`.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .divergence import get_divergence
from .exceptions import MissingCovariance, SingularBread, UnsupportedDivergence
from .nce import NCEProblem
from .report import ConfidenceInterval
from .score import ScoreProblem
from .solver import numerical_jacobian

COND_LIMIT = 1e12


@dataclass
class SandwichPieces:
    bread: np.ndarray
    meat: np.ndarray
    covariance: np.ndarray
    condition: float
    symmetrization: float


def sandwich(bread, meat, cond_limit=COND_LIMIT):
    """``bread^-1 meat bread^-T``, symmetrized.

    Raises
    ------
    SingularBread
        When the condition number of ``bread`` exceeds ``cond_limit``.
    """
    bread = np.atleast_2d(bread)
    cond = float(np.linalg.cond(bread))
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularBread(f"bread matrix is singular (condition {cond:.3g})", condition=cond)
    binv = np.linalg.inv(bread)
    raw = binv @ meat @ binv.T
    cov = 0.5 * (raw + raw.T)
    scale = max(float(np.max(np.abs(raw))), np.finfo(float).tiny)
    return SandwichPieces(bread, meat, cov, cond, float(np.max(np.abs(raw - cov))) / scale)


def centered_meat(per_unit):
    """``(n (n-1))^-1 sum_i (u_i - mean u)^{x2}``: the variance of the mean."""
    per_unit = np.atleast_2d(per_unit)
    n = per_unit.shape[0]
    D = per_unit - per_unit.mean(axis=0)
    return D.T @ D / (n * max(n - 1, 1))


def fi_bread(imp, U, dU_sum, T):
    """Bread of a weighted estimating equation whose weights depend on the parameters."""
    Ubar = imp.weighted_record_sum(U)
    Tbar = imp.weighted_record_sum(T)
    cross = (U * imp.weights[:, None]).T @ T - Ubar.T @ Tbar
    return (dU_sum + cross) / imp.n_records


def _block_diag(A, B):
    out = np.zeros((A.shape[0] + B.shape[0], A.shape[1] + B.shape[1]))
    out[:A.shape[0], :A.shape[1]] = A
    out[A.shape[0]:, A.shape[1]:] = B
    return out


def _propensity_pieces(imp, propensity, phi):
    delta = imp.delta(propensity.target)
    S_phi = propensity.score(phi, delta, imp.X)
    return S_phi, propensity.hessian_sum(phi, imp.X, imp.weights)


def fiscore_sandwich(imp, theta_hat, model, variant, propensity=None, phi=None):
    """Sandwich for FISCORE, stacked with the propensity score in MNAR mode.

    ``imp.weights`` must already be evaluated at the estimate. The Hessian
    term is ``sum_k w_ik sum_s omega_s grad c_s grad c_s^T`` for models
    linear in theta (``omega = 1`` basic, ``x_s^2`` nonneg); for the
    truncated exponential family this is the weighted ``K1 K1^T`` form.
    """
    theta = model.check_params(theta_hat)
    problem = ScoreProblem(model, imp.X, variant, imp.weights, imp.n_records)
    _, Z = problem.point_terms(theta)
    S = model._grad_theta(theta, imp.X)
    H = problem.hessian_sum(theta)
    if propensity is None:
        U, T, dU = Z, S, H
    else:
        S_phi, H_phi = _propensity_pieces(imp, propensity, phi)
        U = np.hstack([Z, S_phi])
        T = np.hstack([S, S_phi])
        dU = _block_diag(H, H_phi)
    bread = fi_bread(imp, U, dU, T)
    meat = centered_meat(imp.weighted_record_sum(U))
    return sandwich(bread, meat)


def fince_sandwich(imp, noise, tau_hat, model, kind="nce"):
    """Closed-form sandwich of FINCE under the original NCE divergence (MAR).

    Bread ``n^-1 sum_i (sum_k w v / (1 + r)) (sum_k w v)^T`` with
    ``v = grad_tau log q``; meat is the sum of the centered second moments
    of the record-level ``z_nc1`` and the noise-level ``z_nc2``.
    """
    if get_divergence(kind).kind != "nce":
        raise UnsupportedDivergence(
            f"the closed-form FINCE sandwich covers the nce divergence only, not {kind!r}")
    problem = NCEProblem(model, "nce", imp.X, noise, imp.weights, imp.n_records)
    tau = np.asarray(tau_hat, dtype=float)
    lx, Vx = problem.data_side(tau)
    ly, Vy = problem.noise_side(tau)
    inv1p = 1.0 / (1.0 + np.exp(lx))
    A = imp.weighted_record_sum(Vx * inv1p[:, None])
    B = imp.weighted_record_sum(Vx)
    bread = A.T @ B / imp.n_records
    ry = np.exp(ly)
    z2 = Vy * (ry / (1.0 + ry))[:, None]
    meat = centered_meat(-A) + centered_meat(z2)
    return sandwich(bread, meat)


def nce_sandwich(imp, noise, tau_hat, model, fn, propensity=None, phi=None):
    """General FINCE sandwich for any divergence, stacked with ``phi`` in MNAR mode."""
    fn = get_divergence(fn)
    tau = np.asarray(tau_hat, dtype=float)
    problem = NCEProblem(model, fn, imp.X, noise, imp.weights, imp.n_records)
    z1, z2 = problem.point_terms(tau)
    if problem.has_jacobian:
        dU = problem.data_jacobian_sum(tau)
        dN = problem.noise_jacobian_mean(tau)
    else:
        dU = numerical_jacobian(lambda t: problem.w @ problem.point_terms(t)[0], tau)
        dN = numerical_jacobian(lambda t: problem.point_terms(t)[1].mean(axis=0), tau)
    S = np.zeros_like(z1)
    S[:, 1:] = model._grad_theta(tau[1:], imp.X)
    U, T = z1, S
    if propensity is not None:
        S_phi, H_phi = _propensity_pieces(imp, propensity, phi)
        U = np.hstack([z1, S_phi])
        T = np.hstack([S, S_phi])
        dU = _block_diag(dU, H_phi)
        dN = _block_diag(dN, np.zeros_like(H_phi))
        z2 = np.hstack([z2, np.zeros((z2.shape[0], S_phi.shape[1]))])
    bread = fi_bread(imp, U, dU, T) + dN
    meat = centered_meat(imp.weighted_record_sum(U)) + centered_meat(z2)
    return sandwich(bread, meat)


def _attach(report, compute):
    try:
        pieces = compute()
    except SingularBread as exc:
        report.covariance = None
        report.extras["covariance_error"] = str(exc)
        return None
    report.covariance = pieces.covariance
    report.extras["bread_condition"] = pieces.condition
    return pieces


def nce_covariance(report, imp, noise, model, fn, propensity=None, phi=None):
    """Attach the FINCE sandwich to ``report`` (closed form for MAR + nce)."""
    fn = get_divergence(fn)
    tau = report.params[:model.param_dim + 1]
    if fn.kind == "nce" and propensity is None:
        return _attach(report, lambda: fince_sandwich(imp, noise, tau, model))
    return _attach(report, lambda: nce_sandwich(imp, noise, tau, model, fn, propensity, phi))


def score_covariance(report, imp, model, variant, propensity=None, phi=None):
    theta = report.params[:model.param_dim]
    return _attach(report, lambda: fiscore_sandwich(imp, theta, model, variant,
                                                    propensity, phi))


def normal_quantile(p):
    return float(ndtri(p))


def confidence_intervals(report, level=0.95):
    """Wald intervals ``point +- z se`` with ``z`` the ``(1 + level) / 2`` normal quantile."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if report.covariance is None:
        raise MissingCovariance("the report carries no covariance")
    z = normal_quantile(0.5 * (1.0 + level))
    se = report.std_errors
    return ConfidenceInterval(list(report.param_names), report.params.copy(),
                              report.params - z * se, report.params + z * se, se, level)


def select_graph(report, model, level=0.95):
    """Edges ``(i, j)``, ``i < j``, whose precision interval excludes zero."""
    ci = confidence_intervals(report, level)
    offset = report.theta_slice.start or 0
    edges = set()
    for k, (i, j) in enumerate(zip(model.rows, model.cols)):
        if i == j:
            continue
        if ci.lower[offset + k] > 0 or ci.upper[offset + k] < 0:
            edges.add((int(i), int(j)))
    return edges
