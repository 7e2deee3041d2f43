"""Unnormalized models and the derivatives the estimators consume.

All point-wise operations are vectorized: ``X`` may be a single point of
shape ``(d,)`` or a batch of shape ``(n, d)``; outputs follow the same
leading shape.
"""
from dataclasses import dataclass

from itertools import combinations

import numpy as np

from .exceptions import InadmissibleParams, OutOfSupport

FULL_SPACE = "full_space"
NONNEG_ORTHANT = "nonneg_orthant"

SCORE_VARIANTS = ("basic", "nonneg")


@dataclass
class ScoreDerivatives:
    """Derivatives of ``c_s(x) = d/dx_s log p~(x)`` for every coordinate.

    Attributes
    ----------
    dc_dx : ndarray, shape (n, d)
        ``d c_s / d x_s``.
    dc_dtheta : ndarray, shape (n, d, p)
        ``grad_theta c_s``.
    d2c_dx_dtheta : ndarray, shape (n, d, p)
        ``d/dx_s grad_theta c_s``.
    """

    dc_dx: np.ndarray
    dc_dtheta: np.ndarray
    d2c_dx_dtheta: np.ndarray

    def squeeze(self):
        return ScoreDerivatives(self.dc_dx[0], self.dc_dtheta[0], self.d2c_dx_dtheta[0])


def strictly_copositive(A, tol=0.0):
    """Whether ``x^T A x > 0`` for every nonzero ``x >= 0``.

    Uses the principal-submatrix criterion: ``A`` fails exactly when some
    principal submatrix has an eigenvalue ``<= tol`` with a strictly
    positive eigenvector. A Cholesky factorization settles the common
    positive definite case first.
    """
    A = np.asarray(A, dtype=float)
    try:
        np.linalg.cholesky(A)
        return True
    except np.linalg.LinAlgError:
        pass
    d = A.shape[0]
    if np.any(np.diag(A) <= tol):
        return False
    for k in range(2, d + 1):
        for S in combinations(range(d), k):
            vals, vecs = np.linalg.eigh(A[np.ix_(S, S)])
            for lam, v in zip(vals, vecs.T):
                if lam > tol:
                    break
                if np.all(v > 0) or np.all(v < 0):
                    return False
    return True


def _points(X, d):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got {X.shape[1]}")
    return X, single


class UnnormalizedModel:
    """Parametric family known through ``log p~(x; theta)`` only.

    Subclasses implement the underscored batch methods; the public
    methods validate parameters and support and handle single points.

    Parameters
    ----------
    param_dim : int
    x_dim : int
    support : {"full_space", "nonneg_orthant"}
    """

    linear_in_theta = False

    def __init__(self, param_dim, x_dim, support=FULL_SPACE):
        if support not in (FULL_SPACE, NONNEG_ORTHANT):
            raise ValueError(f"unknown support {support!r}")
        self.param_dim = int(param_dim)
        self.x_dim = int(x_dim)
        self.support = support

    @property
    def param_names(self):
        return [f"theta[{k}]" for k in range(self.param_dim)]

    # -- validation ---------------------------------------------------
    def check_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_dim,):
            raise InadmissibleParams(
                f"expected {self.param_dim} parameters, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise InadmissibleParams("non-finite parameter value")
        self._check_admissible(theta)
        return theta

    def _check_admissible(self, theta):
        pass

    def in_support(self, X):
        X = np.asarray(X, dtype=float)
        ok = np.all(np.isfinite(X), axis=-1)
        if self.support == NONNEG_ORTHANT:
            ok &= np.all(X >= 0, axis=-1)
        return ok

    def check_support(self, X):
        if not np.all(self.in_support(X)):
            raise OutOfSupport(f"points outside the {self.support} support")

    def _prepare(self, theta, X):
        theta = self.check_params(theta)
        X, single = _points(X, self.x_dim)
        self.check_support(X)
        return theta, X, single

    # -- public point-wise operations --------------------------------
    def log_unnorm(self, theta, X):
        theta, X, single = self._prepare(theta, X)
        out = self._log_unnorm(theta, X)
        return out[0] if single else out

    def grad_theta_log_unnorm(self, theta, X):
        theta, X, single = self._prepare(theta, X)
        out = self._grad_theta(theta, X)
        return out[0] if single else out

    def hess_theta_log_unnorm(self, theta, X):
        theta, X, single = self._prepare(theta, X)
        out = self._hess_theta(theta, X)
        return out[0] if single else out

    def score_x(self, theta, X):
        theta, X, single = self._prepare(theta, X)
        out = self._score_x(theta, X)
        return out[0] if single else out

    def score_x_derivatives(self, theta, X):
        theta, X, single = self._prepare(theta, X)
        out = self._score_x_derivatives(theta, X)
        return out.squeeze() if single else out

    # -- batch implementations ----------------------------------------
    def _log_unnorm(self, theta, X):
        raise NotImplementedError

    def _grad_theta(self, theta, X):
        raise NotImplementedError

    def _hess_theta(self, theta, X):
        if self.linear_in_theta:
            return np.zeros((X.shape[0], self.param_dim, self.param_dim))
        raise NotImplementedError

    def _score_x(self, theta, X):
        raise NotImplementedError

    def _score_x_derivatives(self, theta, X):
        raise NotImplementedError

    # -- score matching building blocks -------------------------------
    def sm_terms(self, theta, X, variant="basic"):
        """Per-point score matching loss and its theta-gradient.

        Returns
        -------
        loss : ndarray, shape (n,)
        z : ndarray, shape (n, p)
        """
        c = self._score_x(theta, X)
        der = self._score_x_derivatives(theta, X)
        if variant == "basic":
            loss = np.sum(0.5 * c ** 2 + der.dc_dx, axis=1)
            a, b = c, np.ones_like(c)
        else:
            w = X ** 2
            loss = np.sum(2.0 * X * c + w * (0.5 * c ** 2 + der.dc_dx), axis=1)
            a, b = 2.0 * X + w * c, w
        z = (np.einsum("nd,ndp->np", a, der.dc_dtheta)
             + np.einsum("nd,ndp->np", b, der.d2c_dx_dtheta))
        return loss, z

    def sm_hessian(self, theta, X, weights, variant="basic"):
        """Weighted sum over points of the theta-Hessian of the score loss.

        Only available in closed form for models linear in theta, where the
        Hessian of each point reduces to ``sum_s omega_s grad c_s grad c_s^T``
        with ``omega_s = 1`` (basic) or ``x_s^2`` (nonneg).
        """
        if not self.linear_in_theta:
            raise NotImplementedError("closed-form Hessian needs a model linear in theta")
        der = self._score_x_derivatives(theta, X)
        omega = np.ones_like(X) if variant == "basic" else X ** 2
        scale = np.sqrt(np.asarray(weights, dtype=float)[:, None] * omega)
        G = (der.dc_dtheta * scale[:, :, None]).reshape(-1, self.param_dim)
        return G.T @ G


class TruncExpFamily(UnnormalizedModel):
    """``log p~(x; theta) = sum_k theta_k F_k(x)``.

    Parameters
    ----------
    stats : callable
        ``X (n, d) -> (n, p)`` sufficient statistics ``F_k``.
    stats_grad : callable
        ``X -> (n, p, d)`` with entries ``dF_a/dx_b``.
    stats_hess : callable
        ``X -> (n, p, d)`` with entries ``d^2 F_a / dx_b^2``.
    admissible : callable, optional
        ``theta -> bool``; parameters failing it raise ``InadmissibleParams``.
    """

    linear_in_theta = True

    def __init__(self, stats, stats_grad, stats_hess, param_dim, x_dim,
                 support=NONNEG_ORTHANT, admissible=None, names=None):
        super().__init__(param_dim, x_dim, support)
        self._stats = stats
        self._stats_grad = stats_grad
        self._stats_hess = stats_hess
        self._admissible = admissible
        self._names = names

    @property
    def param_names(self):
        return list(self._names) if self._names else super().param_names

    def _check_admissible(self, theta):
        if self._admissible is not None and not self._admissible(theta):
            raise InadmissibleParams(f"parameters {theta} not admissible")

    def stats(self, X):
        return self._stats(_points(X, self.x_dim)[0])

    def stats_grad(self, X):
        """``K1``: array (n, p, d) of ``dF_a/dx_b``."""
        return self._stats_grad(_points(X, self.x_dim)[0])

    def stats_hess(self, X):
        """Array (n, p, d) of ``d^2F_a/dx_b^2``; column b is ``K_{b,2}``."""
        return self._stats_hess(_points(X, self.x_dim)[0])

    def _log_unnorm(self, theta, X):
        return self._stats(X) @ theta

    def _grad_theta(self, theta, X):
        return self._stats(X)

    def _score_x(self, theta, X):
        return np.einsum("npd,p->nd", self._stats_grad(X), theta)

    def _score_x_derivatives(self, theta, X):
        K1 = self._stats_grad(X)
        K2 = self._stats_hess(X)
        return ScoreDerivatives(
            dc_dx=np.einsum("npd,p->nd", K2, theta),
            dc_dtheta=np.transpose(K1, (0, 2, 1)),
            d2c_dx_dtheta=np.transpose(K2, (0, 2, 1)),
        )


class TruncatedGGM(TruncExpFamily):
    """Gaussian graphical model restricted to the nonnegative orthant.

    ``log p~(x; Lambda) = -x^T Lambda x / 2``. The free parameters are the
    upper triangle of the precision ``Lambda`` (diagonal included) in
    row-major order, so an off-diagonal parameter ``Lambda_ij`` has
    ``log p~`` gradient ``-x_i x_j`` and a diagonal one ``-x_i^2 / 2``.

    Parameters
    ----------
    dim : int
    admissibility : {"pd", "copositive"}
        ``"pd"`` requires a positive definite precision (Cholesky).
        ``"copositive"`` accepts every strictly copositive precision, the
        exact set on which the orthant-truncated density is normalizable.
    """

    def __init__(self, dim, support=NONNEG_ORTHANT, admissibility="pd"):
        if admissibility not in ("pd", "copositive"):
            raise ValueError(f"unknown admissibility {admissibility!r}")
        if admissibility == "copositive" and support != NONNEG_ORTHANT:
            raise ValueError("copositivity only guarantees integrability on the orthant")
        self.admissibility = admissibility
        self.dim = int(dim)
        rows, cols = np.triu_indices(self.dim)
        self.rows, self.cols = rows, cols
        self._coef = np.where(rows == cols, -0.5, -1.0)
        self._pair = np.full((self.dim, self.dim), -1, dtype=int)
        self._pair[rows, cols] = np.arange(rows.size)
        self._pair[cols, rows] = np.arange(rows.size)
        self._diag = self._pair[np.arange(self.dim), np.arange(self.dim)]
        super().__init__(self._ggm_stats, self._ggm_stats_grad, self._ggm_stats_hess,
                         rows.size, self.dim, support=support)

    @property
    def param_names(self):
        return [f"L[{i},{j}]" for i, j in zip(self.rows, self.cols)]

    def pair_index(self, i, j):
        return int(self._pair[i, j])

    def precision(self, theta):
        theta = np.asarray(theta, dtype=float)
        L = np.zeros((self.dim, self.dim))
        L[self.rows, self.cols] = theta
        L[self.cols, self.rows] = theta
        return L

    def theta_from_precision(self, precision):
        precision = np.asarray(precision, dtype=float)
        if not np.allclose(precision, precision.T):
            raise ValueError("precision matrix must be symmetric")
        return precision[self.rows, self.cols].copy()

    def _check_admissible(self, theta):
        L = self.precision(theta)
        if self.admissibility == "copositive":
            if not strictly_copositive(L):
                raise InadmissibleParams("precision matrix is not strictly copositive")
            return
        try:
            np.linalg.cholesky(L)
        except np.linalg.LinAlgError:
            raise InadmissibleParams("precision matrix is not positive definite") from None

    def _ggm_stats(self, X):
        return self._coef * X[:, self.rows] * X[:, self.cols]

    def _ggm_stats_grad(self, X):
        n, d, p = X.shape[0], self.dim, self.param_dim
        K1 = np.zeros((n, p, d))
        idx = np.arange(p)
        K1[:, idx, self.rows] = -X[:, self.cols]
        off = self.rows != self.cols
        K1[:, idx[off], self.cols[off]] = -X[:, self.rows[off]]
        return K1

    def _ggm_stats_hess(self, X):
        K2 = np.zeros((X.shape[0], self.param_dim, self.dim))
        K2[:, self._diag, np.arange(self.dim)] = -1.0
        return K2

    def _log_unnorm(self, theta, X):
        L = self.precision(theta)
        return -0.5 * np.einsum("ni,ni->n", X @ L, X)

    def _score_x(self, theta, X):
        return -X @ self.precision(theta)

    def sm_terms(self, theta, X, variant="basic"):
        L = self.precision(theta)
        c = -X @ L
        dc = -np.diag(L)
        if variant == "basic":
            loss = np.sum(0.5 * c ** 2 + dc, axis=1)
            a, b = c, np.ones_like(X)
        else:
            w = X ** 2
            loss = np.sum(2.0 * X * c + w * (0.5 * c ** 2 + dc), axis=1)
            a, b = 2.0 * X + w * c, w
        # grad_theta c_s has entry -x_t at the pair (s, t)
        M = a[:, :, None] * X[:, None, :]
        z = -(M[:, self.rows, self.cols] + M[:, self.cols, self.rows])
        diag = self.rows == self.cols
        z[:, diag] = -M[:, self.rows[diag], self.rows[diag]] - b
        return loss, z

    def sm_hessian(self, theta, X, weights, variant="basic"):
        n, d = X.shape
        omega = np.ones_like(X) if variant == "basic" else X ** 2
        A = omega * np.asarray(weights, dtype=float)[:, None]
        # moments[s, t, u] = sum_n A[n, s] x_t x_u
        moments = (A.T @ (X[:, :, None] * X[:, None, :]).reshape(n, d * d)).reshape(d, d, d)
        H = np.zeros((self.param_dim, self.param_dim))
        others = np.arange(d)
        for s in range(d):
            idx = self._pair[s]
            H[np.ix_(idx, idx)] += moments[s][np.ix_(others, others)]
        return H

    def edges(self, theta, tol=0.0):
        L = self.precision(theta)
        return {(i, j) for i in range(self.dim) for j in range(i + 1, self.dim)
                if abs(L[i, j]) > tol}


def gaussian_shape_1d():
    """``p~(x) = exp(-lambda x^2 / 2)`` on the real line."""
    return TruncExpFamily(
        stats=lambda X: -0.5 * X ** 2,
        stats_grad=lambda X: -X[:, :, None],
        stats_hess=lambda X: -np.ones((X.shape[0], 1, 1)),
        param_dim=1, x_dim=1, support=FULL_SPACE,
        admissible=lambda t: t[0] > 0, names=["lambda"])


def exponential_1d():
    """``p~(x) = exp(-lambda x)`` on ``x >= 0``."""
    return TruncExpFamily(
        stats=lambda X: -X,
        stats_grad=lambda X: -np.ones((X.shape[0], 1, 1)),
        stats_hess=lambda X: np.zeros((X.shape[0], 1, 1)),
        param_dim=1, x_dim=1, support=NONNEG_ORTHANT,
        admissible=lambda t: t[0] > 0, names=["lambda"])


def check_variant(model, variant):
    if variant not in SCORE_VARIANTS:
        raise ValueError(f"unknown score variant {variant!r}")
    if variant == "nonneg" and model.support != NONNEG_ORTHANT:
        raise ValueError("the nonneg score variant needs a nonneg_orthant model")
    return variant


def default_variant(model):
    return "nonneg" if model.support == NONNEG_ORTHANT else "basic"
