import numpy as np
import pytest

from fimissing.missing import apply_missingness
from fimissing.models import TruncatedGGM
from fimissing.sampling import sample_truncated_mvn
from fimissing.simulation import Setting1Config

SIGMA = np.array([[2.0, 1.3], [1.3, 2.0]])


@pytest.fixture(scope="session")
def ggm2():
    return TruncatedGGM(2)


@pytest.fixture(scope="session")
def theta_true(ggm2):
    return ggm2.theta_from_precision(np.linalg.inv(SIGMA))


@pytest.fixture(scope="session")
def mar_data():
    """One MAR dataset from the two-dimensional study, n = 500."""
    cfg = Setting1Config()
    X = sample_truncated_mvn(cfg.precision, 500, 11)
    return apply_missingness(X, cfg.mechanism_object(), 12)
