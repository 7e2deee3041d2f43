"""Contrastive-divergence style gradients without MCMC (FICD).

The data side is the fractional-imputation average of ``grad log p~``; the
model expectation is replaced by a self-normalized importance average over
noise points drawn from ``a``. Profiling ``c`` out of the log-linear FINCE
equations gives exactly minus this gradient.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import AllWeightsZero, InadmissibleParams
from .imputation import draw_imputations, fractional_weights, normalize_log_weights

MAX_HALVINGS = 30


@dataclass
class CDGradient:
    gradient: np.ndarray
    data_term: np.ndarray
    noise_term: np.ndarray


@dataclass
class CDTrajectory:
    iterates: np.ndarray
    gradient_norms: np.ndarray
    step_sizes: np.ndarray

    @property
    def theta(self):
        return self.iterates[-1]


def noise_weights(noise, theta, model):
    """Self-normalized ``r_j`` proportional to ``p~(y_j) / a(y_j)``."""
    logr = model._log_unnorm(theta, noise.points) - noise.log_values
    try:
        return normalize_log_weights(logr, np.array([0]))
    except AllWeightsZero:
        raise AllWeightsZero("all noise weights vanish") from None


def ficd_gradient(dataset, imputation, noise, theta, model):
    """Log-likelihood gradient estimate ``data_term - noise_term``.

    Parameters
    ----------
    dataset : IncompleteDataset or None
        Only used to validate the record count of ``imputation``.
    imputation : FractionalImputation
        Weights must already be evaluated at ``theta``.
    noise : NoiseSample
    theta : array_like
    model : UnnormalizedModel
    """
    theta = model.check_params(theta)
    imp = imputation
    if dataset is not None and dataset.n != imp.n_records:
        raise ValueError("imputation does not belong to this dataset")
    if not np.all(np.isfinite(imp.weights)) or np.any(imp.record_sum(imp.weights) <= 0):
        raise AllWeightsZero("fractional weights vanish for some record")
    data = imp.weights @ model._grad_theta(theta, imp.X) / imp.n_records
    r = noise_weights(noise, theta, model)
    noise_term = r @ model._grad_theta(theta, noise.points)
    return CDGradient(data - noise_term, data, noise_term)


def ficd_ascent(dataset, proposal, noise, model, m, init, step_size, n_steps, rng_seed=0):
    """Fixed-step gradient ascent on the FICD gradient.

    Completions are drawn once; the weights are refreshed at every iterate.
    A step that leaves the admissible parameter set is halved, up to 30 times.

    Returns
    -------
    CDTrajectory
        ``iterates`` has ``n_steps + 1`` rows (initial value first) and
        ``gradient_norms`` the Euclidean gradient norm at each of them.
    """
    if not step_size >= 0:
        raise ValueError("step_size must be nonnegative")
    dataset.check_support(model)
    imp = draw_imputations(dataset, proposal, m, rng_seed)
    theta = model.check_params(init)
    iterates, norms, steps = [theta], [], []
    for _ in range(int(n_steps) + 1):
        imp.weights = fractional_weights(imp, model, theta, None, None)
        g = ficd_gradient(dataset, imp, noise, theta, model).gradient
        norms.append(float(np.linalg.norm(g)))
        if len(iterates) > n_steps:
            break
        h = float(step_size)
        for _ in range(MAX_HALVINGS + 1):
            try:
                new = model.check_params(theta + h * g)
                break
            except InadmissibleParams:
                h *= 0.5
        else:
            raise InadmissibleParams(
                f"no admissible step after {MAX_HALVINGS} halvings")
        theta = new
        iterates.append(theta)
        steps.append(h)
    return CDTrajectory(np.array(iterates), np.array(norms), np.array(steps))
