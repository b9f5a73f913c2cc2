"""Bayesian linear information filtering.

Forward-or-discard decisions under a Gaussian prior on user preferences:
belief updates, single-feature dynamic programs, decompose-then-decide
policies, upper bounds on the optimal value and a simulation harness.
"""

from .bounds import BoundReport, combined_bound, decomposition_bound, hindsight_bound
from .core import (
    GaussianBelief,
    ItemDistribution,
    ProblemInstance,
    ProjectionDistribution,
    ScalarBelief,
    basis_instance,
    projection_distribution,
    update_multivariate,
    update_scalar,
)
from .dp import (
    DpCache,
    GridConfig,
    SolverSettings,
    SubproblemSpec,
    exploration_benefit,
    q_factors,
    solve_subproblem,
    state_value,
)
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    IngestionError,
    InfoFilterError,
    NumericalError,
)
from .kernels import BACKEND
from .policies import PolicyConfig, PolicyKind, bind_policy
from .prior_fit import build_prior, fit_user_preferences, load_ratings
from .simulator import estimate_policy_value, run_cost_sweep, run_episode, tune_alpha

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BoundReport",
    "ConfigurationError",
    "ConvergenceError",
    "DomainError",
    "DpCache",
    "GaussianBelief",
    "GridConfig",
    "IngestionError",
    "InfoFilterError",
    "ItemDistribution",
    "NumericalError",
    "PolicyConfig",
    "PolicyKind",
    "ProblemInstance",
    "ProjectionDistribution",
    "ScalarBelief",
    "SolverSettings",
    "SubproblemSpec",
    "basis_instance",
    "bind_policy",
    "build_prior",
    "combined_bound",
    "decomposition_bound",
    "estimate_policy_value",
    "exploration_benefit",
    "fit_user_preferences",
    "hindsight_bound",
    "load_ratings",
    "projection_distribution",
    "q_factors",
    "run_cost_sweep",
    "run_episode",
    "solve_subproblem",
    "state_value",
    "tune_alpha",
    "update_multivariate",
    "update_scalar",
]
