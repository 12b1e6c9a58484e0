import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from contmeas import GaussianState, ModelParams

settings.register_profile(
    "default", max_examples=60, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

R_GRID = [0.01, 0.63, 1.0, 5.6, 20.0, 1e3]
PHI_GRID = [0.0, math.pi / 8, math.pi / 4, 3 * math.pi / 8]
Q_GRID = [1.0, 2.0, 5.0]


@pytest.fixture
def fig1_params():
    return ModelParams(r=20.0)


@pytest.fixture
def fig1_initial():
    return GaussianState.thermal(20.0)


def ljung_box_pvalue(x, lags=20):
    """Ljung-Box portmanteau p-value for whiteness of ``x``."""
    from scipy import stats

    x = np.asarray(x, dtype=float) - np.mean(x)
    n = x.size
    denom = np.dot(x, x)
    acf = np.array([np.dot(x[:-k], x[k:]) / denom for k in range(1, lags + 1)])
    q = n * (n + 2) * np.sum(acf**2 / (n - np.arange(1, lags + 1)))
    return float(stats.chi2.sf(q, lags))
