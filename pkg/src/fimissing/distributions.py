"""Product densities used as NCE noise and as imputation proposals.

Independent coordinates make any coordinate subset a valid marginal, so
the same object serves as a noise density ``a(y)`` on full vectors and as
a proposal ``b(x_mis)`` on the missing coordinates of a record.
"""
import numpy as np
from scipy import stats
from scipy.optimize import brentq
from scipy.special import log_ndtr


class ProductDensity:
    """Independent coordinates, each a frozen ``scipy.stats`` distribution."""

    def __init__(self, marginals):
        self.marginals = list(marginals)

    @property
    def dim(self):
        return len(self.marginals)

    def _coords(self, coords):
        return range(self.dim) if coords is None else coords

    def logpdf(self, X, coords=None):
        """Log density of ``X`` (n, k) over coordinates ``coords`` (k of them)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros(X.shape[0])
        for col, c in enumerate(self._coords(coords)):
            out += self.marginals[c].logpdf(X[:, col])
        return out

    def sample(self, n, rng, coords=None):
        coords = list(self._coords(coords))
        out = np.empty((n, len(coords)))
        for col, c in enumerate(coords):
            out[:, col] = self.marginals[c].rvs(size=n, random_state=rng)
        return out

    def mean(self):
        return np.array([m.mean() for m in self.marginals])


def truncnorm_product(loc, scale, lower=0.0):
    """Normals with the given parent ``loc``/``scale`` truncated to ``[lower, inf)``."""
    loc, scale = np.broadcast_arrays(np.asarray(loc, float), np.asarray(scale, float))
    return ProductDensity(
        stats.truncnorm((lower - mu) / s, np.inf, loc=mu, scale=s)
        for mu, s in zip(loc.ravel(), scale.ravel()))


def normal_product(loc, scale):
    loc, scale = np.broadcast_arrays(np.asarray(loc, float), np.asarray(scale, float))
    return ProductDensity(stats.norm(mu, s) for mu, s in zip(loc.ravel(), scale.ravel()))


def exponential_product(means):
    return ProductDensity(stats.expon(scale=m) for m in np.atleast_1d(means))


def _halfline_truncnorm_cv(alpha):
    # coefficient of variation of N(mu, sigma) truncated to [0, inf), alpha = -mu/sigma
    lam = np.exp(stats.norm.logpdf(alpha) - log_ndtr(-alpha))
    return np.sqrt(max(1.0 + alpha * lam - lam ** 2, 0.0)) / (lam - alpha)


def match_truncnorm_moments(mean, sd):
    """Parent ``(loc, scale)`` of the ``[0, inf)`` truncated normal with the given moments.

    Solvable when ``0 < sd / mean < 1``; the CV of a half-line truncated
    normal tends to 1 as it approaches an exponential.
    """
    cv = sd / mean
    if not 0 < cv < 0.999:
        raise ValueError(f"coefficient of variation {cv:.3f} outside (0, 0.999)")
    alpha = brentq(lambda a: _halfline_truncnorm_cv(a) - cv, -60.0, 200.0)
    lam = np.exp(stats.norm.logpdf(alpha) - log_ndtr(-alpha))
    scale = mean / (lam - alpha)
    return -alpha * scale, scale


def moment_matched(X, support="nonneg_orthant", inflate=1.0):
    """Coordinatewise product density matching observed means and variances.

    Missing entries (NaN) are ignored column by column. On the nonnegative
    orthant each coordinate is a truncated normal, or an exponential when
    the observed CV is too large for one. ``inflate`` multiplies the
    matched parent scale (heavier proposals tolerate more mismatch).
    """
    X = np.asarray(X, dtype=float)
    marginals = []
    for col in X.T:
        col = col[np.isfinite(col)]
        mean, sd = col.mean(), col.std(ddof=1)
        if support != "nonneg_orthant":
            marginals.append(stats.norm(mean, inflate * sd))
            continue
        try:
            loc, scale = match_truncnorm_moments(mean, sd)
        except ValueError:
            marginals.append(stats.expon(scale=inflate * mean))
            continue
        scale *= inflate
        marginals.append(stats.truncnorm(-loc / scale, np.inf, loc=loc, scale=scale))
    return ProductDensity(marginals)
