"""Result containers returned by the fitting routines."""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class ExtendedParams:
    """NCE parameters ``tau = (c, theta)`` with ``q(x; tau) = exp(-c) p~(x; theta)``.

    ``c=None`` asks the fitting routine to initialize the log-normalizer
    from an importance-sampling estimate over the noise sample.
    """

    theta: np.ndarray
    c: Optional[float] = None

    def as_vector(self):
        return np.concatenate([[0.0 if self.c is None else self.c],
                               np.asarray(self.theta, dtype=float)])

    @classmethod
    def from_vector(cls, tau):
        tau = np.asarray(tau, dtype=float)
        return cls(theta=tau[1:].copy(), c=float(tau[0]))


@dataclass
class EstimateReport:
    """Point estimate, sandwich covariance and solver diagnostics.

    ``params`` stacks every estimated quantity: ``(c, theta)`` for NCE-type
    methods, ``theta`` for score matching, followed by the propensity
    parameters ``phi`` in MNAR mode. ``theta_slice`` and ``phi_slice``
    locate the blocks.
    """

    params: np.ndarray
    param_names: list
    method: str
    covariance: Optional[np.ndarray] = None
    theta_slice: slice = slice(None)
    phi_slice: Optional[slice] = None
    converged: bool = True
    iterations: int = 0
    inner_iterations: int = 0
    residual: float = float("nan")
    seed: Optional[int] = None
    trajectory: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def theta(self):
        return self.params[self.theta_slice]

    @property
    def phi(self):
        return None if self.phi_slice is None else self.params[self.phi_slice]

    @property
    def std_errors(self):
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def to_dict(self):
        se = self.std_errors
        return {
            "method": self.method,
            "param_names": list(self.param_names),
            "params": self.params.tolist(),
            "std_errors": None if se is None else se.tolist(),
            "covariance": None if self.covariance is None else self.covariance.tolist(),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "inner_iterations": int(self.inner_iterations),
            "residual": float(self.residual),
            "seed": self.seed if self.seed is None or isinstance(self.seed, int) else str(self.seed),
        }


@dataclass
class ConfidenceInterval:
    names: list
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    se: np.ndarray
    level: float

    def rows(self):
        return [(n, p, lo, up) for n, p, lo, up
                in zip(self.names, self.point, self.lower, self.upper)]
