"""Instance-specific upper bounds on the optimal filtering value.

Two bounds are computed and the smaller one is reported:

* the decomposition bound, a sum over features of single-feature subproblem
  values in which the subproblem policy is told the other coordinates of θ;
* the hindsight bound, the value of a clairvoyant policy that knows θ.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._random import STREAM_BOUND, STREAM_HINDSIGHT, as_generator, seed_sequence
from .core import (
    DEFAULT_BINS,
    PSD_EPS,
    coordinate_distribution,
    conditioning_coefficients,
    gaussian_factor,
    psd_repair,
)
from .dp import DpCache, SolverSettings, SubproblemSpec, closed_form_value, state_value
from .errors import DomainError

MIN_RELIABLE_SAMPLES = 30


@dataclass(frozen=True)
class SubproblemEstimate:
    value: float
    stderr: float
    samples: int
    wide_ci: bool = False


@dataclass(frozen=True)
class BoundReport:
    per_feature_values: tuple
    per_feature_stderrs: tuple
    decomposition_bound: float
    decomposition_stderr: float
    hindsight_bound: float
    hindsight_stderr: float
    combined_bound: float
    combined_stderr: float
    sample_count: int

    @property
    def mc_standard_errors(self):
        return self.per_feature_stderrs


def _require_normalized(instance):
    if not instance.items.is_normalized():
        raise DomainError("upper bounds require L1-normalized feature vectors")


def _mean_stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def feature_subproblem(instance, j, bins=DEFAULT_BINS):
    """Subproblem data for feature j: per-unit cost c and the marginal law of x_j."""
    return SubproblemSpec(instance.cost, instance.discount, instance.noise_scale,
                          coordinate_distribution(instance.items, j, bins))


def subproblem_value_mc(instance, j, samples=1000, settings=None, rng=None, cache=None,
                        bins=DEFAULT_BINS):
    """Monte Carlo value of the j-th relaxed single-feature subproblem.

    Each sample draws θ from the prior, conditions θ_j on θ_{-j}, draws the
    first item's coordinate x_j, and reads the solved value at that state.
    One grid is solved per feature: the conditional variance does not depend
    on θ_{-j}, so only the conditional mean varies across samples. The
    discounted value is multiplied by γ to express it as an expected sum over
    a geometric number of arrivals.
    """
    _require_normalized(instance)
    if samples < 1:
        raise DomainError("samples must be at least 1")
    settings = settings or SolverSettings()
    cache = cache if cache is not None else DpCache()
    rng = as_generator(rng)
    prior = instance.prior
    k = instance.k

    cov = psd_repair(prior.covariance, PSD_EPS)
    if prior.covariance[j, j] == 0:
        # θ_j is known exactly; no repair needed and nothing to learn
        coef, cond_var = np.zeros(k - 1), 0.0
    elif k == 1:
        coef, cond_var = np.zeros(0), float(cov[0, 0])
    else:
        coef, cond_var = conditioning_coefficients(cov, j)
    theta = prior.mean + rng.standard_normal((samples, k)) @ gaussian_factor(prior.covariance).T
    rest = np.delete(np.arange(k), j)
    cond_mean = prior.mean[j] + (theta[:, rest] - prior.mean[rest]) @ coef
    x0 = instance.items.vectors[instance.items.sample_indices(rng, samples), j]

    spec = feature_subproblem(instance, j, bins)
    sd = math.sqrt(cond_var)
    if sd > 0:
        config = settings.grid_for(spec, prior.mean[j], prior.mean[j],
                                   math.sqrt(max(cov[j, j], cond_var)),
                                   beta_min=1.0 / cond_var)
        grid = cache.get(spec, config)
        v = state_value(grid, cond_mean, np.full(samples, sd), x0)
    else:
        v = closed_form_value(spec, cond_mean, x0)
    value, stderr = _mean_stderr(instance.discount * np.asarray(v))
    wide = samples < MIN_RELIABLE_SAMPLES
    if wide:
        warnings.warn(f"only {samples} Monte Carlo samples for feature {j}; CI is wide",
                      stacklevel=2)
    return SubproblemEstimate(value, stderr, samples, wide)


def decomposition_bound(instance, samples=1000, settings=None, rng=None, cache=None,
                        bins=DEFAULT_BINS):
    """Sum of per-feature subproblem values; errors combined in quadrature.

    Returns (total, stderr, per-feature estimates). Each feature draws from its
    own child stream of ``rng`` so results do not depend on evaluation order.
    """
    cache = cache if cache is not None else DpCache()
    estimates = []
    for j in range(instance.k):
        stream = seed_sequence(rng, STREAM_BOUND, j)
        estimates.append(subproblem_value_mc(instance, j, samples, settings, stream, cache,
                                             bins))
    total = float(sum(e.value for e in estimates))
    stderr = math.sqrt(sum(e.stderr**2 for e in estimates))
    return total, stderr, estimates


def hindsight_bound(instance, samples=100_000, rng=None):
    """(γ/(1−γ))·E[(θ·X − c)⁺] by Monte Carlo; returns (value, stderr)."""
    if samples < 1:
        raise DomainError("samples must be at least 1")
    rng = as_generator(rng)
    prior = instance.prior
    theta = prior.mean + rng.standard_normal((samples, instance.k)) @ \
        gaussian_factor(prior.covariance).T
    items = instance.items.vectors[instance.items.sample_indices(rng, samples)]
    gain = np.maximum(np.einsum("ij,ij->i", theta, items) - instance.cost, 0.0)
    scale = instance.discount / (1.0 - instance.discount)
    return _mean_stderr(scale * gain)


def combined_bound(instance, samples=1000, hindsight_samples=100_000, settings=None,
                   seed=0, cache=None, bins=DEFAULT_BINS):
    """Full report: decomposition bound, hindsight bound and their minimum."""
    total, total_se, estimates = decomposition_bound(instance, samples, settings, seed,
                                                     cache, bins)
    h_rng = as_generator(seed_sequence(seed, STREAM_HINDSIGHT))
    hind, hind_se = hindsight_bound(instance, hindsight_samples, h_rng)
    if total <= hind:
        combined, combined_se = total, total_se
    else:
        combined, combined_se = hind, hind_se
    return BoundReport(
        per_feature_values=tuple(e.value for e in estimates),
        per_feature_stderrs=tuple(e.stderr for e in estimates),
        decomposition_bound=total,
        decomposition_stderr=total_se,
        hindsight_bound=hind,
        hindsight_stderr=hind_se,
        combined_bound=combined,
        combined_stderr=combined_se,
        sample_count=samples,
    )
