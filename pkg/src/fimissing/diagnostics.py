"""Numerical self-checks: derivative consistency and the missing-information identity.

The identity check works on a truncated Gaussian model with one coordinate
subject to MAR missingness. Conditional expectations given the observed
coordinate are computed by Gauss-Legendre quadrature over the missing one,
so ``I1`` (the derivative of the observed-data estimating function) can be
obtained by finite differences independently of ``I2`` and ``I3``.
"""
from dataclasses import dataclass, field

import numpy as np

from .distributions import moment_matched
from .divergence import get_divergence
from .imputation import normalize_log_weights
from .missing import LogisticMAR
from .models import TruncatedGGM, check_variant
from .nce import NCEProblem, NoiseSample
from .sampling import sample_truncated_mvn
from .solver import numerical_jacobian

ESTIMATORS = ("score", "nce_loglinear", "nce")


def truncated_gaussian_log_normalizer_2d(precision):
    """``log`` of the integral of ``exp(-x^T P x / 2)`` over the positive quadrant."""
    S = np.linalg.inv(precision)
    rho = S[0, 1] / np.sqrt(S[0, 0] * S[1, 1])
    orthant = 0.25 + np.arcsin(rho) / (2 * np.pi)
    return float(np.log(2 * np.pi) + 0.5 * np.log(np.linalg.det(S)) + np.log(orthant))


@dataclass
class IdentityReport:
    I1: np.ndarray
    I2: np.ndarray
    I3: np.ndarray
    residual: np.ndarray
    residual_norm: float
    mc_se: float
    spectral_radius: float = float("nan")
    extras: dict = field(default_factory=dict)

    @property
    def tolerance(self):
        # the floor absorbs finite-difference error when the MC noise vanishes
        return 3.0 * self.mc_se + 1e-6 * (1.0 + float(np.linalg.norm(self.I3)))

    @property
    def passed(self):
        ok = self.residual_norm <= self.tolerance
        if np.isfinite(self.spectral_radius):
            ok = ok and self.spectral_radius < 1.0
        return bool(ok)


class _PointTerms:
    """Per-point estimating function ``z`` and its Jacobian for one estimator."""

    def __init__(self, model, estimator, variant, noise):
        self.model = model
        self.estimator = estimator
        self.variant = variant
        self.noise = noise
        if estimator != "score":
            self.fn = get_divergence("log_linear" if estimator == "nce_loglinear" else "nce")

    def weight_theta(self, params):
        return params if self.estimator == "score" else params[1:]

    def z(self, params, X):
        if self.estimator == "score":
            return self.model.sm_terms(params, X, self.variant)[1]
        return NCEProblem(self.model, self.fn, X, self.noise).point_terms(params)[0]

    def weight_score(self, params, X):
        """Gradient of ``log p~`` in the estimated parameters (zero for ``c``)."""
        G = self.model._grad_theta(self.weight_theta(params), X)
        if self.estimator == "score":
            return G
        return np.hstack([np.zeros((X.shape[0], 1)), G])

    def jac(self, params, X):
        """Per-point ``grad z``, shape (n, p, p)."""
        if self.estimator == "score":
            der = self.model._score_x_derivatives(params, X)
            omega = np.ones_like(X) if self.variant == "basic" else X ** 2
            return np.einsum("nsp,ns,nsq->npq", der.dc_dtheta, omega, der.dc_dtheta)
        problem = NCEProblem(self.model, self.fn, X, self.noise)
        lx, V = problem.data_side(params)
        _, _, _, _, dg1, _ = self.fn.ratio_terms(lx)
        return -dg1[:, None, None] * V[:, :, None] * V[:, None, :]

    def noise_jac_mean(self, params):
        if self.estimator == "score":
            return 0.0
        problem = NCEProblem(self.model, self.fn, self.noise.points[:1], self.noise)
        return problem.noise_jacobian_mean(params)


def _grid(model, theta, x_obs, target, n_grid):
    """Quadrature nodes over the missing coordinate for every incomplete record."""
    P = model.precision(theta)
    other = [j for j in range(model.dim) if j != target]
    mu = -(x_obs[:, other] @ P[target, other]) / P[target, target]
    sd = 1.0 / np.sqrt(P[target, target])
    upper = np.maximum(mu, 0.0) + 12.0 * sd
    nodes, weights = np.polynomial.legendre.leggauss(n_grid)
    t = 0.5 * (nodes + 1.0)
    vals = upper[:, None] * t[None, :]
    logw = np.log(0.5 * weights)[None, :] + np.log(upper)[:, None]
    X = np.repeat(x_obs[:, None, :], n_grid, axis=1)
    X[:, :, target] = vals
    return X.reshape(-1, model.dim), logw.ravel()


def _conditional(model, terms, params, grid_X, grid_logw, n_rec, n_grid, theta_w):
    lp = model._log_unnorm(theta_w, grid_X)
    starts = np.arange(n_rec) * n_grid
    w = normalize_log_weights(lp + grid_logw, starts)
    return w, starts


def information_identity_check(model, true_params, estimator="score", n_mc=4000, rng_seed=0,
                               mechanism=None, n_grid=64, fd_step=1e-5, variant="nonneg"):
    """Monte-Carlo check of ``I3 = I1 + I2`` at the true parameters.

    Parameters
    ----------
    model : TruncatedGGM
        Two-dimensional; coordinate 1 is subject to missingness.
    true_params : array_like
        ``theta`` (score) or ``(c, theta)`` (NCE estimators). For NCE a
        ``theta``-only vector is completed with the exact log-normalizer.
    estimator : {"score", "nce_loglinear", "nce"}
    n_mc : int
        Complete-data Monte-Carlo sample size (also the noise sample size).
    mechanism : MissingMechanism, optional
        Defaults to the logistic MAR mechanism on the first coordinate.

    Returns
    -------
    IdentityReport
        ``residual_norm`` is the Frobenius norm of ``I3 - I1 - I2`` and
        ``mc_se`` its Monte-Carlo standard error (root of the summed
        entrywise variances); the check passes when the norm is within three
        standard errors, plus a small finite-difference floor. For ``nce_loglinear`` the spectral radius of
        ``I3^-1 I2`` is reported as well.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    if not isinstance(model, TruncatedGGM) or model.dim != 2:
        raise ValueError("the identity check needs a two-dimensional TruncatedGGM")
    if estimator == "score":
        check_variant(model, variant)
    mechanism = mechanism or LogisticMAR(target=1, drivers=(0,), offset=0.9, scale=0.3)
    target = 1
    params = np.asarray(true_params, dtype=float)
    ss = np.random.SeedSequence(rng_seed).spawn(3)
    theta = params if estimator == "score" or params.size == model.param_dim else params[1:]
    model.check_params(theta)
    P = model.precision(theta)
    X = sample_truncated_mvn(P, n_mc, ss[0])
    noise = None
    if estimator != "score":
        if params.size == model.param_dim:
            params = np.concatenate([[truncated_gaussian_log_normalizer_2d(P)], params])
        noise = NoiseSample.draw(moment_matched(X), n_mc, ss[1])
    terms = _PointTerms(model, estimator, variant, noise)
    rng = np.random.default_rng(ss[2])
    prob = mechanism.observe_prob(X, rng)[:, target]
    missing = rng.random(n_mc) >= prob
    p = params.size

    # complete-data information, per sample
    J3 = terms.jac(params, X)
    noise_part = terms.noise_jac_mean(params)

    # conditional quantities over the missing coordinate
    Xm = X[missing]
    n_inc = Xm.shape[0]
    grid_X, grid_logw = _grid(model, theta, Xm, target, n_grid)

    def cond_mean_z(par):
        w, starts = _conditional(model, terms, par, grid_X, grid_logw, n_inc, n_grid,
                                 terms.weight_theta(par))
        return np.add.reduceat(w[:, None] * terms.z(par, grid_X), starts, axis=0)

    # I1 per incomplete sample by central differences of E[z | x_obs; params]
    J1m = np.empty((n_inc, p, p))
    for k in range(p):
        h = fd_step * max(1.0, abs(params[k]))
        e = np.zeros(p)
        e[k] = h
        J1m[:, :, k] = (cond_mean_z(params + e) - cond_mean_z(params - e)) / (2 * h)

    # I2 per incomplete sample: minus the conditional covariance of (z, score)
    w, starts = _conditional(model, terms, params, grid_X, grid_logw, n_inc, n_grid, theta)
    Zg = terms.z(params, grid_X)
    Sg = terms.weight_score(params, grid_X)
    Zbar = np.add.reduceat(w[:, None] * Zg, starts, axis=0)
    Sbar = np.add.reduceat(w[:, None] * Sg, starts, axis=0)
    cross = np.add.reduceat(w[:, None, None] * Zg[:, :, None] * Sg[:, None, :], starts, axis=0)
    J2m = -(cross - Zbar[:, :, None] * Sbar[:, None, :])

    J1 = J3.copy()
    J1[missing] = J1m
    J2 = np.zeros_like(J3)
    J2[missing] = J2m
    I1 = J1.mean(axis=0) + noise_part
    I2 = J2.mean(axis=0)
    I3 = J3.mean(axis=0) + noise_part
    per = J3 - J1 - J2
    residual = per.mean(axis=0)
    mc_se = float(np.sqrt(np.sum(per.var(axis=0, ddof=1)) / n_mc))
    report = IdentityReport(I1, I2, I3, residual, float(np.linalg.norm(residual)), mc_se,
                            extras={"estimator": estimator, "n_mc": n_mc,
                                    "missing_rate": float(missing.mean())})
    if estimator == "nce_loglinear":
        report.spectral_radius = float(np.max(np.abs(np.linalg.eigvals(np.linalg.solve(I3, I2)))))
    return report


# -- derivative checks ---------------------------------------------------------------
@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.value <= self.tolerance)


def relative_error(a, b, floor=1e-8):
    """Largest absolute discrepancy relative to the largest magnitude involved."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), floor)
    return float(np.max(np.abs(a - b)) / scale)


def central_difference(fun, x, step=1e-5):
    """Central differences with absolute step ``step`` (scaled by ``max(1, |x|)``)."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x), dtype=float)
    J = np.empty(f0.shape + x.shape)
    for k in range(x.size):
        h = step * max(1.0, abs(x.flat[k]))
        e = np.zeros_like(x)
        e.flat[k] = h
        J[..., k] = (np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h)
    return J


def model_derivative_errors(model, theta, points, step=1e-5):
    """Largest relative FD discrepancy of each model derivative over ``points``."""
    worst = {"grad_theta": 0.0, "score_x": 0.0, "dc_dx": 0.0, "dc_dtheta": 0.0,
             "d2c_dx_dtheta": 0.0}
    for x in np.asarray(points, dtype=float).reshape(-1, model.x_dim):
        g = model.grad_theta_log_unnorm(theta, x)
        worst["grad_theta"] = max(worst["grad_theta"], relative_error(
            g, central_difference(lambda t: model.log_unnorm(t, x), theta, step)))
        c = model.score_x(theta, x)
        worst["score_x"] = max(worst["score_x"], relative_error(
            c, central_difference(lambda y: model.log_unnorm(theta, y), x, step)))
        der = model.score_x_derivatives(theta, x)
        dcdx = np.diag(central_difference(lambda y: model.score_x(theta, y), x, step))
        worst["dc_dx"] = max(worst["dc_dx"], relative_error(der.dc_dx, dcdx))
        worst["dc_dtheta"] = max(worst["dc_dtheta"], relative_error(
            der.dc_dtheta, central_difference(lambda t: model.score_x(t, x), theta, step)))
        mixed = central_difference(
            lambda y: model.score_x_derivatives(theta, y).dc_dtheta, x, step)
        d = x.size
        mixed_diag = mixed[np.arange(d), :, np.arange(d)]
        worst["d2c_dx_dtheta"] = max(worst["d2c_dx_dtheta"],
                                     relative_error(der.d2c_dx_dtheta, mixed_diag))
    return worst


def estimating_fn_error(objective, estimating_fn, x, step=1e-5):
    return relative_error(estimating_fn(x), central_difference(objective, x, step))


def jacobian_error(fun, jac, x):
    return relative_error(jac(x), numerical_jacobian(fun, x))


class _BrokenGGM(TruncatedGGM):
    """Test hook: a GGM whose theta-gradient is deliberately wrong."""

    def _grad_theta(self, theta, X):
        return 1.01 * super()._grad_theta(theta, X)


def run_invariant_suite(seed=0, n_mc=4000, estimators=ESTIMATORS, inject_fault=False):
    """Derivative, weight-normalization, FICD and identity checks on the 2-D model.

    Returns a list of :class:`CheckResult`; ``inject_fault`` swaps in a model
    with a broken derivative so the gradient check must fail.
    """
    from .cd import ficd_gradient
    from .imputation import draw_imputations, fractional_weights
    from .missing import apply_missingness
    from .score import ScoreProblem

    P = np.array([[2.0, 1.3], [1.3, 2.0]])
    P = np.linalg.inv(P)
    model = _BrokenGGM(2) if inject_fault else TruncatedGGM(2)
    theta = model.theta_from_precision(P)
    ss = np.random.SeedSequence(seed).spawn(4)
    X = sample_truncated_mvn(P, 400, ss[0])
    out = []

    worst = model_derivative_errors(model, theta, X[:100])
    for name, val in worst.items():
        out.append(CheckResult(f"derivative:{name}", val, 1e-5))

    for variant in ("basic", "nonneg"):
        sp = ScoreProblem(model, X, variant)
        out.append(CheckResult(f"score_gradient:{variant}",
                               estimating_fn_error(sp.loss, sp.estimating_fn, theta), 1e-5))
    ds = apply_missingness(X, LogisticMAR(target=1, drivers=(0,), offset=0.9, scale=0.3), ss[1])
    dens = moment_matched(ds.values)
    noise = NoiseSample.draw(dens, 400, ss[2])
    imp = draw_imputations(ds, dens, 20, ss[3])
    imp.weights = fractional_weights(imp, model, theta)
    sums = imp.record_sum(imp.weights)
    out.append(CheckResult("weights:normalized", float(np.max(np.abs(sums - 1.0))), 1e-12))
    tau = np.concatenate([[truncated_gaussian_log_normalizer_2d(P)], theta])
    for kind in ("nce", "log_linear", "quadratic"):
        pr = NCEProblem(model, kind, imp.X, noise, imp.weights, ds.n)
        out.append(CheckResult(f"nce_gradient:{kind}",
                               estimating_fn_error(pr.objective, pr.estimating_fn, tau), 1e-5))
        out.append(CheckResult(f"nce_jacobian:{kind}",
                               jacobian_error(pr.estimating_fn, pr.jacobian, tau), 1e-4))
    # FICD equals minus the profiled log-linear FINCE equation
    lr = model._log_unnorm(theta, noise.points) - noise.log_values
    c = -np.log(len(noise) / np.exp(lr).sum())
    pr = NCEProblem(model, "log_linear", imp.X, noise, imp.weights, ds.n)
    ee = pr.estimating_fn(np.concatenate([[c], theta]))
    g = ficd_gradient(ds, imp, noise, theta, model).gradient
    out.append(CheckResult("ficd:equivalence", float(np.max(np.abs(ee[1:] + g))), 1e-10))

    for est in estimators:
        rep = information_identity_check(TruncatedGGM(2), theta, est, n_mc=n_mc, rng_seed=seed)
        out.append(CheckResult(f"identity:{est}", rep.residual_norm, rep.tolerance))
        if est == "nce_loglinear":
            out.append(CheckResult("identity:spectral_radius", rep.spectral_radius, 1.0 - 1e-12))
    return out
