import numpy as np
import pytest

from infofilter.core import GaussianBelief, ItemDistribution, ProblemInstance
from infofilter.dp import SolverSettings

# Coarse grids keep DP-backed tests fast; acceptance tests use the defaults.
FAST = SolverSettings(n_mu=61, n_beta=16, n_quad=9, tol=1e-5)


@pytest.fixture
def fast_settings():
    return FAST


@pytest.fixture
def correlated_instance():
    prior = GaussianBelief([0.4, 0.2, 0.3],
                           [[0.5, 0.2, 0.0], [0.2, 0.4, 0.1], [0.0, 0.1, 0.3]])
    items = ItemDistribution.catalog(
        np.array([[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.0, 1 / 3, 2 / 3]]), [0.4, 0.3, 0.3])
    return ProblemInstance(0.3, 0.8, 0.3, prior, items, horizon=40)
