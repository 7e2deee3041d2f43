"""FINCE and FISCORE: EM-style fitting with fractional imputation.

Completions are drawn once. Each EM iteration recomputes the weights at the
current parameters (W-step) and solves the weighted estimating equation with
those weights frozen (M-step). In MNAR mode the frozen-weight system splits
into the model block and a weighted logistic regression for ``phi``, which
are solved one after the other.
"""
import numpy as np

from .divergence import get_divergence
from .exceptions import InadmissibleParams, NonConvergence
from .imputation import draw_imputations, fractional_weights
from .inference import nce_covariance, score_covariance
from .models import check_variant
from .nce import NCEProblem, _as_tau, nce_param_names
from .report import EstimateReport
from .score import ScoreProblem
from .solver import SolverOpts, damped_newton


def _solve_phi(propensity, imp, phi0, opts):
    delta = imp.delta(propensity.target)
    n = imp.n_records

    def fun(phi):
        return imp.weights @ propensity.score(phi, delta, imp.X) / n

    def jac(phi):
        return propensity.hessian_sum(phi, imp.X, imp.weights) / n

    return damped_newton(fun, phi0, jac=jac, opts=opts)


def _inner(solve, it):
    try:
        return solve()
    except NonConvergence as exc:
        raise NonConvergence(f"EM iteration {it}: {exc}", iterations=it) from exc
    except InadmissibleParams as exc:
        raise InadmissibleParams(f"EM iteration {it}: {exc}") from exc


def _em_loop(imp, model, theta_of, m_step, params0, propensity, phi0, opts, record):
    """Alternate W- and M-steps until the parameter change drops below ``em_tol``.

    ``m_step(params, it)`` returns ``(new_params, inner_iterations)``; the
    propensity block is appended when ``propensity`` is given.
    """
    params = np.asarray(params0, dtype=float)
    phi = None if propensity is None else np.asarray(phi0, dtype=float)
    trajectory = [np.concatenate([params, phi]) if phi is not None else params.copy()]
    inner_total = 0
    for it in range(1, opts.max_em_iter + 1):
        imp.weights = fractional_weights(imp, model, theta_of(params), propensity, phi)
        new, n_inner = m_step(params, it)
        inner_total += n_inner
        change = np.max(np.abs(new - params))
        if propensity is not None:
            res = _inner(lambda: _solve_phi(propensity, imp, phi, opts), it)
            change = max(change, np.max(np.abs(res.x - phi)))
            phi = res.x
            inner_total += res.iterations
        params = new
        if record:
            trajectory.append(np.concatenate([params, phi]) if phi is not None else params.copy())
        if change < opts.em_tol:
            break
    else:
        return params, phi, it, inner_total, trajectory, False
    return params, phi, it, inner_total, trajectory, True


def _finish(imp, model, theta, propensity, phi):
    # weights at the solution, for the residual and the sandwich
    imp.weights = fractional_weights(imp, model, theta, propensity, phi)


def _phi_residual(propensity, imp, phi):
    delta = imp.delta(propensity.target)
    return imp.weights @ propensity.score(phi, delta, imp.X) / imp.n_records


def fince_fit(dataset, noise, proposal, fn, model, m, init, opts=None, rng_seed=0,
              mnar=None, phi_init=None, covariance=True, record_trajectory=True):
    """Fractional-imputation NCE fitted by EM.

    Parameters
    ----------
    dataset : IncompleteDataset
    noise : NoiseSample
    proposal : ProductDensity or compatible
        Density ``b`` of the imputed coordinates.
    fn : str or DivergenceFn
    model : UnnormalizedModel
    m : int
        Completions per incomplete record.
    init : ExtendedParams or array_like
    opts : SolverOpts, optional
    rng_seed : int
        Seed of the completion draws.
    mnar : LogisticPropensity, optional
        Response model; enables MNAR mode.
    phi_init : array_like, optional

    Returns
    -------
    EstimateReport
        ``params`` holds ``(c, theta)`` followed by ``phi`` in MNAR mode.

    Raises
    ------
    NonConvergence
        After ``max_em_iter`` iterations; the partial report is attached.
    """
    opts = opts or SolverOpts()
    fn = get_divergence(fn)
    dataset.check_support(model)
    imp = draw_imputations(dataset, proposal, m, rng_seed)
    problem = NCEProblem(model, fn, imp.X, noise, imp.weights, dataset.n)
    tau0 = _as_tau(model, init, noise)
    phi0 = None
    if mnar is not None:
        phi0 = mnar.default_init(dataset) if phi_init is None else np.asarray(phi_init, float)

    def m_step(tau, it):
        problem.set_weights(imp.weights)
        res = _inner(lambda: problem.solve(tau, opts), it)
        return res.x, res.iterations

    tau, phi, iters, inner, traj, ok = _em_loop(
        imp, model, lambda t: t[1:], m_step, tau0, mnar, phi0, opts, record_trajectory)
    _finish(imp, model, tau[1:], mnar, phi)
    problem.set_weights(imp.weights)
    resid = problem.estimating_fn(tau)
    names = nce_param_names(model)
    params = tau
    phi_slice = None
    if mnar is not None:
        resid = np.concatenate([resid, _phi_residual(mnar, imp, phi)])
        names = names + mnar.param_names
        phi_slice = slice(tau.size, tau.size + phi.size)
        params = np.concatenate([tau, phi])
    report = EstimateReport(
        params=params, param_names=names, method="fince", theta_slice=slice(1, tau.size),
        phi_slice=phi_slice, converged=ok, iterations=iters, inner_iterations=inner,
        residual=float(np.max(np.abs(resid))), seed=rng_seed, trajectory=traj,
        extras={"kind": fn.kind, "m": int(m), "mnar": mnar is not None})
    report.extras["imputation"] = imp
    if covariance:
        nce_covariance(report, imp, noise, model, fn, mnar, phi)
    if not ok:
        raise NonConvergence(f"FINCE did not converge in {opts.max_em_iter} EM iterations",
                             iterations=iters, report=report)
    return report


def fiscore_fit(dataset, proposal, model, variant, m, init, opts=None, rng_seed=0,
                mnar=None, phi_init=None, covariance=True, record_trajectory=True):
    """Fractional-imputation score matching fitted by EM.

    The M-step minimizes ``n^-1 sum_i sum_k w_ik m_sc(x_ik; theta)`` with the
    weights frozen. Arguments mirror :func:`fince_fit`; ``init`` is ``theta``.
    """
    opts = opts or SolverOpts()
    variant = check_variant(model, variant)
    dataset.check_support(model)
    imp = draw_imputations(dataset, proposal, m, rng_seed)
    problem = ScoreProblem(model, imp.X, variant, imp.weights, dataset.n)
    theta0 = model.check_params(init)
    phi0 = None
    if mnar is not None:
        phi0 = mnar.default_init(dataset) if phi_init is None else np.asarray(phi_init, float)

    def m_step(theta, it):
        problem.set_weights(imp.weights)
        res = _inner(lambda: problem.solve(theta, opts), it)
        return res.x, res.iterations

    theta, phi, iters, inner, traj, ok = _em_loop(
        imp, model, lambda t: t, m_step, theta0, mnar, phi0, opts, record_trajectory)
    _finish(imp, model, theta, mnar, phi)
    problem.set_weights(imp.weights)
    resid = problem.estimating_fn(theta)
    names = list(model.param_names)
    params = theta
    phi_slice = None
    if mnar is not None:
        resid = np.concatenate([resid, _phi_residual(mnar, imp, phi)])
        names = names + mnar.param_names
        phi_slice = slice(theta.size, theta.size + phi.size)
        params = np.concatenate([theta, phi])
    report = EstimateReport(
        params=params, param_names=names, method="fiscore",
        theta_slice=slice(0, theta.size), phi_slice=phi_slice, converged=ok,
        iterations=iters, inner_iterations=inner, residual=float(np.max(np.abs(resid))),
        seed=rng_seed, trajectory=traj,
        extras={"variant": variant, "m": int(m), "mnar": mnar is not None})
    report.extras["imputation"] = imp
    if covariance:
        score_covariance(report, imp, model, variant, mnar, phi)
    if not ok:
        raise NonConvergence(f"FISCORE did not converge in {opts.max_em_iter} EM iterations",
                             iterations=iters, report=report)
    return report


def em_trajectory(fit_call):
    """Parameter iterates of an EM fit, one row per iteration (initial value first).

    ``fit_call`` is either a report or a zero-argument callable returning one.
    """
    report = fit_call() if callable(fit_call) else fit_call
    return np.array(report.trajectory)
