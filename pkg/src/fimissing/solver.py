"""Damped Newton iteration for square estimating equations."""
from dataclasses import dataclass

import numpy as np

from .exceptions import InadmissibleParams, NonConvergence


@dataclass
class SolverOpts:
    """Tolerances shared by the inner solver and the EM loops.

    ``grad_tol`` bounds the sup-norm of the estimating function at an inner
    solution; ``em_tol`` bounds the sup-norm of the parameter change between
    EM iterations.
    """

    grad_tol: float = 1e-8
    em_tol: float = 1e-6
    max_em_iter: int = 500
    max_inner_iter: int = 200

    def __post_init__(self):
        for name in ("grad_tol", "em_tol", "max_em_iter", "max_inner_iter"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SolverResult:
    x: np.ndarray
    residual: np.ndarray
    iterations: int

    @property
    def residual_norm(self):
        return float(np.max(np.abs(self.residual)))


def numerical_jacobian(fun, x, f0=None, rel_step=1e-6):
    """Central-difference Jacobian, one-sided where a side is inadmissible."""
    x = np.asarray(x, dtype=float)
    if f0 is None:
        f0 = fun(x)
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = rel_step * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        try:
            fp = fun(x + e)
        except InadmissibleParams:
            fp = None
        try:
            fm = fun(x - e)
        except InadmissibleParams:
            fm = None
        if fp is not None and fm is not None:
            J[:, j] = (fp - fm) / (2 * h)
        elif fp is not None:
            J[:, j] = (fp - f0) / h
        elif fm is not None:
            J[:, j] = (f0 - fm) / h
        else:
            raise InadmissibleParams("no admissible finite-difference step")
    return J


def damped_newton(fun, x0, jac=None, opts=None, max_halvings=30):
    """Solve ``fun(x) = 0`` by Newton steps with backtracking.

    A step is halved while the trial point is inadmissible or does not
    decrease ``||fun||_2``. Iteration stops once ``||fun||_inf <= grad_tol``.

    Parameters
    ----------
    fun : callable
        ``x -> residual`` of the same length as ``x``. May raise
        ``InadmissibleParams``.
    x0 : array_like
    jac : callable, optional
        Analytic Jacobian; central differences are used when omitted.
    opts : SolverOpts, optional

    Returns
    -------
    SolverResult
    """
    opts = opts or SolverOpts()
    x = np.array(x0, dtype=float)
    F = fun(x)
    for it in range(opts.max_inner_iter + 1):
        if np.max(np.abs(F)) <= opts.grad_tol:
            return SolverResult(x, F, it)
        if it == opts.max_inner_iter:
            break
        J = jac(x) if jac is not None else numerical_jacobian(fun, x, F)
        try:
            step = -np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(J, F, rcond=None)[0]
        merit = np.linalg.norm(F)
        t = 1.0
        n_inadmissible = 0
        for _ in range(max_halvings):
            trial = x + t * step
            try:
                F_trial = fun(trial)
            except InadmissibleParams:
                n_inadmissible += 1
                t *= 0.5
                continue
            if np.all(np.isfinite(F_trial)) and np.linalg.norm(F_trial) < merit:
                x, F = trial, F_trial
                break
            t *= 0.5
        else:
            if n_inadmissible == max_halvings:
                raise InadmissibleParams(
                    "line search could not restore admissible parameters")
            raise NonConvergence(
                f"line search failed at iteration {it} "
                f"(residual {np.max(np.abs(F)):.3g})", iterations=it)
    raise NonConvergence(
        f"no convergence in {opts.max_inner_iter} Newton iterations "
        f"(residual {np.max(np.abs(F)):.3g})", iterations=opts.max_inner_iter)
