"""Fractional imputation for unnormalized models: FINCE and FISCORE."""
from .cd import CDGradient, ficd_ascent, ficd_gradient
from .diagnostics import information_identity_check
from .distributions import (ProductDensity, exponential_product, moment_matched,
                            normal_product, truncnorm_product)
from .divergence import LOG_LINEAR, NCE, QUADRATIC, DivergenceFn, get_divergence
from .em import em_trajectory, fince_fit, fiscore_fit
from .estimators import FINCE, FISCORE
from .exceptions import *  # noqa: F401,F403
from .imputation import (FractionalImputation, LogisticPropensity, draw_imputations,
                         fractional_weights)
from .inference import (confidence_intervals, fince_sandwich, fiscore_sandwich,
                        nce_sandwich, select_graph)
from .missing import (MCAR, GGMRandomLogistic, IncompleteDataset, LogisticMAR, LogisticMNAR,
                      apply_missingness, read_csv, write_csv)
from .models import (TruncatedGGM, TruncExpFamily, UnnormalizedModel, exponential_1d,
                     gaussian_shape_1d)
from .nce import NoiseSample, fit_nce_complete, nce_estimating_fn, nce_objective
from .report import ConfidenceInterval, EstimateReport, ExtendedParams
from .sampling import sample_truncated_mvn
from .score import fit_score_complete, fit_score_expfam, sm_estimating_fn, sm_loss
from .simulation import GGMConfig, Setting1Config, run_ggm, run_setting1, summarize
from .solver import SolverOpts, damped_newton

__version__ = "0.1.0"
