"""scikit-learn style wrappers around :func:`fince_fit` and :func:`fiscore_fit`.

Missing entries are NaN. Proposal and noise densities default to
coordinatewise products matched to the observed means and variances.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .distributions import moment_matched
from .em import fince_fit, fiscore_fit
from .exceptions import FIMissingError, ValidationError
from .imputation import LogisticPropensity
from .inference import confidence_intervals, select_graph
from .missing import IncompleteDataset
from .models import (FULL_SPACE, TruncatedGGM, default_variant, exponential_1d,
                     gaussian_shape_1d)
from .nce import NoiseSample
from .report import ExtendedParams
from .score import fit_score_complete
from .solver import SolverOpts

MODELS = ("ggm", "gaussian_1d", "exponential_1d")


def build_model(name, d):
    """Model by name; ``ggm`` takes its dimension from the data."""
    if name == "ggm":
        return TruncatedGGM(d, admissibility="copositive")
    if d != 1:
        raise ValidationError(f"model {name!r} is one-dimensional, data has {d} columns")
    if name == "gaussian_1d":
        return gaussian_shape_1d()
    if name == "exponential_1d":
        return exponential_1d()
    raise ValidationError(f"unknown model {name!r}; choose from {MODELS}")


def default_init(model, dataset):
    """Complete-case score matching when possible, a neutral value otherwise."""
    if isinstance(model, TruncatedGGM):
        fallback = model.theta_from_precision(np.eye(model.dim))
    else:
        fallback = np.ones(model.param_dim)
    Xc = dataset.complete_rows()
    if Xc.shape[0] > model.param_dim:
        try:
            return fit_score_complete(Xc, model, default_variant(model), init=fallback,
                                      covariance=False).params
        except (FIMissingError, np.linalg.LinAlgError):
            pass
    return fallback


def _support_name(model):
    return "full" if model.support == FULL_SPACE else "nonneg_orthant"


class _FIEstimator(BaseEstimator):

    def _dataset(self, X):
        X = check_array(X, dtype=float, ensure_all_finite="allow-nan", ensure_min_samples=2)
        self.n_features_in_ = X.shape[1]
        return IncompleteDataset(X)

    def _opts(self):
        return SolverOpts(em_tol=self.em_tol, max_em_iter=self.max_em_iter)

    def _propensity(self):
        return None if self.mnar_target is None else LogisticPropensity(int(self.mnar_target))

    def _store(self, report, model):
        report.seed = self.random_state
        self.report_ = report
        self.model_ = model
        self.params_ = report.params
        self.theta_ = report.theta
        self.covariance_ = report.covariance
        self.param_names_ = list(report.param_names)
        self.n_iter_ = report.iterations
        if isinstance(model, TruncatedGGM):
            self.precision_ = model.precision(report.theta)
        return self

    def confidence_intervals(self, level=None):
        check_is_fitted(self, "report_")
        return confidence_intervals(self.report_, self.level if level is None else level)

    def select_graph(self, level=None):
        """Edges whose precision interval excludes zero (GGM only)."""
        check_is_fitted(self, "report_")
        if not isinstance(self.model_, TruncatedGGM):
            raise ValidationError("graph selection needs the ggm model")
        return select_graph(self.report_, self.model_, self.level if level is None else level)


class FINCE(_FIEstimator):
    """Fractional-imputation noise-contrastive estimation.

    Parameters
    ----------
    model : {"ggm", "gaussian_1d", "exponential_1d"}
    divergence : {"nce", "log_linear", "quadratic"}
    m : int
        Completions per incomplete record.
    n_noise : int, optional
        Noise sample size; defaults to the number of records.
    mnar_target : int, optional
        Coordinate whose response model is estimated jointly (MNAR mode).
    level : float
        Default level for intervals and graph selection.
    em_tol, max_em_iter : solver controls.
    random_state : int
    """

    def __init__(self, model="ggm", divergence="nce", m=100, n_noise=None, mnar_target=None,
                 level=0.95, em_tol=1e-6, max_em_iter=500, random_state=0):
        self.model = model
        self.divergence = divergence
        self.m = m
        self.n_noise = n_noise
        self.mnar_target = mnar_target
        self.level = level
        self.em_tol = em_tol
        self.max_em_iter = max_em_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        ds = self._dataset(X)
        model = build_model(self.model, ds.d)
        dens = moment_matched(ds.values, support=_support_name(model))
        seeds = np.random.SeedSequence(self.random_state).spawn(2)
        noise = NoiseSample.draw(dens, self.n_noise or ds.n, seeds[0])
        theta0 = default_init(model, ds)
        report = fince_fit(ds, noise, dens, self.divergence, model, self.m,
                           ExtendedParams(theta0), self._opts(), seeds[1],
                           mnar=self._propensity())
        self.c_ = float(report.params[0])
        return self._store(report, model)


class FISCORE(_FIEstimator):
    """Fractional-imputation score matching.

    Parameters
    ----------
    model : {"ggm", "gaussian_1d", "exponential_1d"}
    variant : {"basic", "nonneg"}, optional
        Defaults to ``nonneg`` on the orthant and ``basic`` on the real line.
    m, mnar_target, level, em_tol, max_em_iter, random_state
        As for :class:`FINCE`.
    """

    def __init__(self, model="ggm", variant=None, m=100, mnar_target=None, level=0.95,
                 em_tol=1e-6, max_em_iter=500, random_state=0):
        self.model = model
        self.variant = variant
        self.m = m
        self.mnar_target = mnar_target
        self.level = level
        self.em_tol = em_tol
        self.max_em_iter = max_em_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        ds = self._dataset(X)
        model = build_model(self.model, ds.d)
        dens = moment_matched(ds.values, support=_support_name(model))
        variant = self.variant or default_variant(model)
        report = fiscore_fit(ds, dens, model, variant, self.m, default_init(model, ds),
                             self._opts(), np.random.SeedSequence(self.random_state),
                             mnar=self._propensity())
        return self._store(report, model)
