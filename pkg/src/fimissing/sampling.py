"""Gibbs sampling of normals truncated to the nonnegative orthant."""
import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from .exceptions import InadmissibleParams

BURN_IN = 200
THIN = 5


def truncnorm_lower(mu, sigma, lower, u):
    """Inverse-CDF draw from ``N(mu, sigma^2)`` restricted to ``[lower, inf)``.

    Works through the survival function in log space, so lower bounds far
    in the upper tail stay accurate.
    """
    a = (lower - mu) / sigma
    z = -ndtri_exp(log_ndtr(-a) + np.log1p(-u))
    return mu + sigma * np.maximum(z, a)


def sample_truncated_mvn(precision, n, rng_seed, n_chains=100, burn_in=BURN_IN, thin=THIN):
    """Draws from the density proportional to ``exp(-x^T P x / 2)`` on ``x >= 0``.

    Systematic-scan Gibbs over the univariate truncated-normal conditionals.
    ``n_chains`` independent chains advance together (vectorized); each is
    burnt in for ``burn_in`` sweeps and then contributes every ``thin``-th
    sweep. Draws are returned chain-interleaved by sweep.

    Raises
    ------
    InadmissibleParams
        If ``precision`` is not symmetric positive definite.
    """
    P = np.atleast_2d(np.asarray(precision, dtype=float))
    if not np.allclose(P, P.T):
        raise InadmissibleParams("precision matrix must be symmetric")
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise InadmissibleParams("precision matrix is not positive definite") from None
    n = int(n)
    d = P.shape[0]
    rng = np.random.default_rng(rng_seed)
    chains = max(1, min(int(n_chains), n))
    per_chain = -(-n // chains)
    sd = 1.0 / np.sqrt(np.diag(P))
    x = np.abs(rng.standard_normal((chains, d))) * sd
    out = np.empty((per_chain, chains, d))
    total = burn_in + per_chain * thin
    kept = 0
    for sweep in range(1, total + 1):
        U = rng.random((chains, d))
        for j in range(d):
            mu = -(x @ P[j] - x[:, j] * P[j, j]) / P[j, j]
            x[:, j] = truncnorm_lower(mu, sd[j], 0.0, U[:, j])
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            out[kept] = x
            kept += 1
    return out.reshape(-1, d)[:n]
