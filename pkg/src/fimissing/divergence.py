"""Divergence functions ``f`` parameterizing generalized NCE and score matching."""
import numpy as np
from scipy.special import expit

from .exceptions import DomainError

# log-based kinds evaluate at max(u, TINY) so that underflowed ratios stay finite
TINY = 1e-300


class DivergenceFn:
    """A twice-differentiable strictly convex ``f`` with its derivatives.

    Parameters
    ----------
    kind : str
        Name; the built-ins are ``"log_linear"``, ``"nce"`` and ``"quadratic"``.
    f, f1, f2 : callable
        ``f``, ``f'`` and ``f''`` as vectorized functions.
    f3 : callable, optional
        ``f'''``. Needed only for analytic Newton Jacobians; without it the
        solvers fall back to finite differences.
    positive_domain : bool
        Whether ``f`` is defined on ``u > 0`` only.
    """

    def __init__(self, kind, f, f1, f2, f3=None, positive_domain=True):
        self.kind = kind
        self.f = f
        self.f1 = f1
        self.f2 = f2
        self.f3 = f3
        self.positive_domain = positive_domain

    def __repr__(self):
        return f"DivergenceFn({self.kind!r})"

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if self.positive_domain:
            if np.any(~(u > 0)):
                raise DomainError(f"{self.kind} divergence needs u > 0")
            u = np.maximum(u, TINY)
        return u

    def __call__(self, u):
        u = self._check(u)
        return self.f(u), self.f1(u), self.f2(u)

    def ratio_terms(self, log_r):
        """NCE building blocks as functions of ``l = log r``.

        Returns ``(m1, m2, g1, g2, dg1, dg2)`` where ``m1 = -f'(r)`` and
        ``m2 = f'(r) r - f(r)`` are the data and noise objective terms,
        ``g1 = f''(r) r`` and ``g2 = f''(r) r^2`` the estimating-function
        multipliers, and ``dg1``, ``dg2`` their derivatives in ``l``.
        ``dg1`` and ``dg2`` are None when ``f'''`` is unknown.
        """
        r = np.maximum(np.exp(log_r), TINY)
        f1 = self.f1(r)
        f2 = self.f2(r)
        m1 = -f1
        m2 = f1 * r - self.f(r)
        g1 = f2 * r
        g2 = f2 * r ** 2
        if self.f3 is None:
            return m1, m2, g1, g2, None, None
        f3 = self.f3(r)
        return m1, m2, g1, g2, r * (f3 * r + f2), r * (f3 * r ** 2 + 2 * f2 * r)


class _LogLinear(DivergenceFn):
    def __init__(self):
        super().__init__(
            "log_linear",
            f=lambda u: u * np.log(u),
            f1=lambda u: np.log(u) + 1.0,
            f2=lambda u: 1.0 / u,
            f3=lambda u: -1.0 / u ** 2,
        )

    def ratio_terms(self, log_r):
        r = np.exp(log_r)
        one = np.ones_like(r)
        return -(log_r + 1.0), r, one, r, np.zeros_like(r), r


class _NCE(DivergenceFn):
    def __init__(self):
        super().__init__(
            "nce",
            f=lambda u: u * np.log(u) - (1.0 + u) * np.log1p(u),
            f1=lambda u: np.log(u) - np.log1p(u),
            f2=lambda u: 1.0 / (u * (1.0 + u)),
            f3=lambda u: -(1.0 + 2.0 * u) / (u ** 2 * (1.0 + u) ** 2),
        )

    def ratio_terms(self, log_r):
        p = expit(log_r)
        q = expit(-log_r)
        return (np.logaddexp(0.0, -log_r), np.logaddexp(0.0, log_r),
                q, p, -p * q, p * q)


class _Quadratic(DivergenceFn):
    def __init__(self):
        super().__init__(
            "quadratic",
            f=lambda u: 0.5 * u ** 2,
            f1=lambda u: u,
            f2=lambda u: np.ones_like(u),
            f3=lambda u: np.zeros_like(u),
            positive_domain=False,
        )

    def ratio_terms(self, log_r):
        r = np.exp(log_r)
        return -r, 0.5 * r ** 2, r, r ** 2, r, 2.0 * r ** 2


LOG_LINEAR = _LogLinear()
NCE = _NCE()
QUADRATIC = _Quadratic()

_BUILTIN = {fn.kind: fn for fn in (LOG_LINEAR, NCE, QUADRATIC)}


def get_divergence(kind):
    """Return the divergence named ``kind`` (instances pass through)."""
    if isinstance(kind, DivergenceFn):
        return kind
    try:
        return _BUILTIN[kind]
    except KeyError:
        raise ValueError(f"unknown divergence {kind!r}; "
                         f"expected one of {sorted(_BUILTIN)}") from None


def f_eval(fn, u):
    """``(f(u), f'(u), f''(u))``."""
    f, f1, f2 = get_divergence(fn)(u)
    if np.ndim(f) == 0:
        return float(f), float(f1), float(f2)
    return f, f1, f2


def bregman(fn, o1, o2):
    """``Br_f(o1, o2) = f(o1) - f(o2) - f'(o2) (o1 - o2)``."""
    fn = get_divergence(fn)
    f_a = fn(o1)[0]
    f_b, f1_b, _ = fn(o2)
    out = f_a - f_b - f1_b * (np.asarray(o1, dtype=float) - np.asarray(o2, dtype=float))
    return float(out) if np.ndim(out) == 0 else out
