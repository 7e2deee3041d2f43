"""Fractional imputation: completions, self-normalized weights and propensities.

Completions of one record are stored contiguously, so per-record sums are
``np.add.reduceat`` over ``starts`` and the reduction order never depends on
how the work is scheduled.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .exceptions import AllWeightsZero, ProposalSupportError
from .report import ExtendedParams


@dataclass
class FractionalImputation:
    """Stacked completions of every record with their fractional weights.

    Attributes
    ----------
    X : ndarray, shape (N, d)
        Completions; observed coordinates are copied from the record.
    record : ndarray of int, shape (N,)
        Owning record of each completion.
    starts, counts : ndarray of int, shape (n,)
        Offset and number of each record's completions (1 for complete records).
    log_b : ndarray, shape (N,)
        Proposal log density of the imputed coordinates (0 for complete records).
    weights : ndarray, shape (N,)
        Normalized within each record.
    observed : ndarray of bool, shape (n, d)
    """

    X: np.ndarray
    record: np.ndarray
    starts: np.ndarray
    counts: np.ndarray
    log_b: np.ndarray
    weights: np.ndarray
    observed: np.ndarray

    @classmethod
    def complete(cls, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        idx = np.arange(n)
        return cls(X=X, record=idx, starts=idx, counts=np.ones(n, dtype=int),
                   log_b=np.zeros(n), weights=np.ones(n),
                   observed=np.ones(X.shape, dtype=bool))

    @property
    def n_records(self):
        return self.starts.size

    def __len__(self):
        return self.X.shape[0]

    def record_sum(self, values):
        """Sum ``values`` (N, ...) over each record's completions."""
        return np.add.reduceat(values, self.starts, axis=0)

    def weighted_record_sum(self, values):
        values = np.asarray(values)
        w = self.weights.reshape((-1,) + (1,) * (values.ndim - 1))
        return self.record_sum(w * values)

    def completions(self, i):
        s = self.starts[i]
        return self.X[s:s + self.counts[i]]

    def record_weights(self, i):
        s = self.starts[i]
        return self.weights[s:s + self.counts[i]]

    def delta(self, target):
        """Observation indicator of ``target`` for the record owning each completion."""
        return self.observed[self.record, target].astype(float)

    def with_weights(self, weights):
        return FractionalImputation(self.X, self.record, self.starts, self.counts,
                                    self.log_b, np.asarray(weights, dtype=float),
                                    self.observed)


def draw_imputations(dataset, proposal, m, rng_seed):
    """Draw ``m`` completions for every incomplete record, once.

    Records sharing a missingness pattern are imputed together in record
    order, patterns in lexicographic order, so the result depends only on
    the seed.

    Parameters
    ----------
    dataset : IncompleteDataset
    proposal : object
        ``sample(n, rng, coords)`` and ``logpdf(values, coords)`` over a
        subset of coordinates, e.g. a ``ProductDensity``.
    m : int
    rng_seed : int or numpy Generator
    """
    m = int(m)
    if m < 1:
        raise ValueError("m must be at least 1")
    rng = np.random.default_rng(rng_seed)
    observed = np.asarray(dataset.observed)
    n, d = observed.shape
    complete = observed.all(axis=1)
    counts = np.where(complete, 1, m)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    record = np.repeat(np.arange(n), counts)
    X = np.repeat(np.nan_to_num(np.asarray(dataset.values), nan=0.0), counts, axis=0)
    log_b = np.zeros(X.shape[0])
    patterns = np.unique(observed[~complete], axis=0)
    for pat in patterns:
        rows = np.flatnonzero((observed == pat).all(axis=1))
        mis = np.flatnonzero(~pat)
        draws = proposal.sample(rows.size * m, rng, mis)
        lb = proposal.logpdf(draws, mis)
        if not np.all(np.isfinite(lb)):
            raise ProposalSupportError("proposal density is zero at one of its draws")
        target = (starts[rows][:, None] + np.arange(m)).ravel()
        X[np.ix_(target, mis)] = draws
        log_b[target] = lb
    return FractionalImputation(X=X, record=record, starts=starts, counts=counts,
                                log_b=log_b, weights=np.ones(X.shape[0]) / counts[record],
                                observed=observed.copy())


def normalize_log_weights(logw, starts):
    """Per-record softmax of ``logw`` over contiguous blocks starting at ``starts``."""
    logw = np.asarray(logw, dtype=float)
    counts = np.diff(np.append(starts, logw.size))
    peak = np.maximum.reduceat(logw, starts)
    bad = np.flatnonzero(~np.isfinite(peak))
    if bad.size:
        raise AllWeightsZero(f"all fractional weights of record {bad[0]} vanish",
                             record=int(bad[0]))
    w = np.exp(logw - np.repeat(peak, counts))
    return w / np.repeat(np.add.reduceat(w, starts), counts)


def fractional_weights(imp, model, params, propensity=None, phi=None):
    """W-step: ``w_ik`` proportional to ``p~(x*) [pi(delta_i | x*)] / b(x*_mis)``.

    ``params`` may be ``theta``, or ``ExtendedParams``; the log-normalizer
    cancels in the normalization and is ignored.
    """
    theta = params.theta if isinstance(params, ExtendedParams) else params
    theta = model.check_params(theta)
    logw = model._log_unnorm(theta, imp.X) - imp.log_b
    if propensity is not None:
        logw = logw + propensity.log_prob(phi, imp.delta(propensity.target), imp.X)
    return normalize_log_weights(logw, imp.starts)


class LogisticPropensity:
    """``Pr(x_target observed | x) = expit(phi_0 + sum_j phi_j x_{coords_j})``.

    With ``coords = (target,)`` this is the logistic response model
    ``expit((x_target - offset) / scale)`` written as
    ``phi = (-offset / scale, 1 / scale)``.
    """

    def __init__(self, target, coords=None):
        self.target = int(target)
        self.coords = (self.target,) if coords is None else tuple(int(c) for c in coords)

    @property
    def n_params(self):
        return 1 + len(self.coords)

    @property
    def param_names(self):
        return ["phi0"] + [f"phi[x{c + 1}]" for c in self.coords]

    @staticmethod
    def from_offset_scale(offset, scale):
        return np.array([-offset / scale, 1.0 / scale])

    @staticmethod
    def offset_scale(phi):
        return -phi[0] / phi[1], 1.0 / phi[1]

    def design(self, X):
        X = np.atleast_2d(X)
        return np.column_stack([np.ones(X.shape[0]), X[:, list(self.coords)]])

    def linear(self, phi, X):
        return self.design(X) @ np.asarray(phi, dtype=float)

    def log_prob(self, phi, delta, X):
        """``log pi(delta | x; phi)``."""
        eta = self.linear(phi, X)
        return np.where(np.asarray(delta) > 0, log_expit(eta), log_expit(-eta))

    def score(self, phi, delta, X):
        """``grad_phi log pi(delta | x; phi)``, shape (N, q)."""
        return (np.asarray(delta, dtype=float) - expit(self.linear(phi, X)))[:, None] * self.design(X)

    def hessian_sum(self, phi, X, weights):
        """``sum_k w_k grad^2_phi log pi``; it does not depend on ``delta``."""
        F = self.design(X)
        p = expit(F @ np.asarray(phi, dtype=float))
        return -(F * (weights * p * (1 - p))[:, None]).T @ F

    def default_init(self, dataset):
        rate = np.clip(dataset.observed[:, self.target].mean(), 0.01, 0.99)
        phi = np.zeros(self.n_params)
        phi[0] = np.log(rate / (1 - rate))
        return phi
