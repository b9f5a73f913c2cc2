"""Statistical primitives: feature vectors, item populations, Gaussian beliefs.

Feature vectors are plain 1-D float arrays. Beliefs and distributions are
frozen dataclasses wrapping read-only arrays, so they can be shared freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._random import as_generator
from .errors import ConfigurationError, DomainError, NumericalError

PSD_EPS = 1e-8
NORM_TOL = 1e-12


def _frozen(a, ndim=None):
    arr = np.array(a, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise DomainError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


# ----------------------------------------------------------------------------
# feature vectors


def l1_normalize(v, label=None):
    """Scale a nonnegative vector so its components sum to one."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise DomainError(f"feature vector {_label(label)}has negative components")
    total = v.sum()
    if not total > 0:
        raise DomainError(f"feature vector {_label(label)}is all zero")
    return v / total


def _label(label):
    return "" if label is None else f"for item {label!r} "


def nonzero_count(v):
    """Number of strictly positive components, I(X)."""
    return int(np.count_nonzero(np.asarray(v) > 0))


# ----------------------------------------------------------------------------
# beliefs


def psd_repair(cov, eps=PSD_EPS):
    """Symmetrize and lift eigenvalues below ``eps`` up to ``eps``."""
    cov = np.asarray(cov, dtype=float)
    sym = 0.5 * (cov + cov.T)
    if sym.size == 0:
        return sym
    w, q = np.linalg.eigh(sym)
    if w[0] >= eps:
        return sym
    w = np.maximum(w, eps)
    out = (q * w) @ q.T
    return 0.5 * (out + out.T)


def gaussian_factor(cov):
    """A matrix L with L Lᵀ = cov, tolerant of singular (PSD) covariances."""
    cov = np.asarray(cov, dtype=float)
    sym = 0.5 * (cov + cov.T)
    w, q = np.linalg.eigh(sym)
    if w.size and w[0] < -1e-10 * max(1.0, abs(w[-1])):
        raise NumericalError(f"covariance is not PSD (min eigenvalue {w[0]:.3g})")
    return q * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class GaussianBelief:
    """Multivariate normal belief N(mean, covariance) over the preference vector."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean, 1)
        cov = _frozen(self.covariance, 2)
        if cov.shape != (mean.size, mean.size):
            raise DomainError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def isotropic(cls, k, mean=0.0, variance=1.0):
        return cls(np.full(k, float(mean)), float(variance) * np.eye(k))

    @property
    def k(self):
        return self.mean.size

    def project(self, x):
        """Mean and variance of θ·x under this belief."""
        x = np.asarray(x, dtype=float)
        return float(x @ self.mean), float(x @ self.covariance @ x)

    def is_diagonal(self):
        cov = self.covariance
        return bool(np.all(cov == np.diag(np.diag(cov))))

    def repaired(self, eps=PSD_EPS):
        return GaussianBelief(self.mean, psd_repair(self.covariance, eps))

    def sample(self, rng, size=None):
        rng = as_generator(rng)
        factor = gaussian_factor(self.covariance)
        n = 1 if size is None else size
        draws = self.mean + rng.standard_normal((n, self.k)) @ factor.T
        return draws[0] if size is None else draws


@dataclass(frozen=True)
class ScalarBelief:
    """One-dimensional belief with mean and precision (inverse variance)."""

    mean: float
    precision: float

    def __post_init__(self):
        if not self.precision > 0:
            raise DomainError(f"precision must be positive, got {self.precision}")

    @classmethod
    def from_variance(cls, mean, variance):
        return cls(float(mean), math.inf if variance == 0 else 1.0 / variance)

    @property
    def variance(self):
        return 1.0 / self.precision

    @property
    def sigma(self):
        return math.sqrt(1.0 / self.precision)


def update_multivariate(belief, item, reward, noise_scale):
    """Conjugate update after forwarding ``item`` and observing ``reward``.

    Observation noise variance is I(X)·λ². Written in covariance (Kalman) form,
    which equals the precision-form update and stays valid for singular priors.
    """
    x = np.asarray(item, dtype=float)
    if x.shape != belief.mean.shape:
        raise DomainError(f"item dimension {x.shape} does not match belief {belief.k}")
    count = nonzero_count(x)
    if count == 0:
        raise DomainError("cannot update on an all-zero item (noise variance undefined)")
    cov = belief.covariance
    sx = cov @ x
    s = float(x @ sx) + count * noise_scale**2
    mean = belief.mean + sx * ((reward - float(x @ belief.mean)) / s)
    new_cov = cov - np.outer(sx, sx) / s
    return GaussianBelief(mean, 0.5 * (new_cov + new_cov.T))


def update_scalar(belief, x, reward, noise_scale):
    """Single-feature update, transcribed from the closed-form formulas.

    x = 0 leaves the belief unchanged.
    """
    if x < 0:
        raise DomainError(f"projection magnitude must be nonnegative, got {x}")
    lam2 = noise_scale**2
    beta, mu = belief.precision, belief.mean
    if x == 0:
        return belief
    if math.isinf(beta):
        return belief
    x2 = x * x
    new_mu = (lam2 * beta * mu + reward * x2) / (lam2 * beta + x2)
    return ScalarBelief(new_mu, beta + x2 / lam2)


def conditional_scalar_belief(prior, j, theta_rest, repair_eps=PSD_EPS):
    """Belief about θ_j given the other coordinates θ_{-j} under the prior."""
    cov = psd_repair(prior.covariance, repair_eps)
    k = prior.k
    if not 0 <= j < k:
        raise DomainError(f"feature index {j} out of range for k={k}")
    if k == 1:
        return ScalarBelief.from_variance(prior.mean[0], cov[0, 0])
    theta_rest = np.asarray(theta_rest, dtype=float)
    coef, variance = conditioning_coefficients(cov, j)
    rest = np.delete(np.arange(k), j)
    mean = prior.mean[j] + (theta_rest - prior.mean[rest]) @ coef
    return ScalarBelief.from_variance(float(mean), variance)


def conditioning_coefficients(cov, j):
    """Regression coefficients Σ₋ⱼ₋ⱼ⁻¹Σ₋ⱼⱼ and the conditional variance of θ_j."""
    rest = np.delete(np.arange(cov.shape[0]), j)
    sub = cov[np.ix_(rest, rest)]
    cross = cov[rest, j]
    cond = np.linalg.cond(sub)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(
            f"conditioning submatrix for feature {j} is singular (condition number {cond:.3g})"
        )
    coef = np.linalg.solve(sub, cross)
    variance = max(float(cov[j, j] - cross @ coef), 0.0)
    return coef, variance


# ----------------------------------------------------------------------------
# item populations


@dataclass(frozen=True)
class ItemDistribution:
    """Population of feature vectors.

    A finite catalog carries explicit probabilities; an empirical population
    samples its rows uniformly. Duplicate rows are allowed.
    """

    vectors: np.ndarray
    probabilities: np.ndarray
    empirical: bool = False

    def __post_init__(self):
        vectors = _frozen(self.vectors, 2)
        probs = _frozen(self.probabilities, 1)
        if vectors.shape[0] == 0:
            raise ConfigurationError("item distribution is empty")
        if probs.shape[0] != vectors.shape[0]:
            raise ConfigurationError("one probability per item vector is required")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > NORM_TOL:
            raise ConfigurationError("item probabilities must be nonnegative and sum to 1")
        if np.any(vectors < 0):
            raise DomainError("feature vectors must be nonnegative")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def catalog(cls, vectors, probabilities):
        probs = np.asarray(probabilities, dtype=float)
        total = probs.sum()
        if total > 0 and abs(total - 1.0) <= 1e-9:
            probs = probs / total
        return cls(np.asarray(vectors, dtype=float), probs, empirical=False)

    @classmethod
    def from_weights(cls, vectors, weights):
        w = np.asarray(weights, dtype=float)
        return cls(np.asarray(vectors, dtype=float), w / w.sum(), empirical=False)

    @classmethod
    def empirical_from(cls, vectors):
        vectors = np.asarray(vectors, dtype=float)
        n = vectors.shape[0] if vectors.ndim == 2 else 0
        if n == 0:
            raise ConfigurationError("item distribution is empty")
        return cls(vectors, np.full(n, 1.0 / n), empirical=True)

    @property
    def k(self):
        return self.vectors.shape[1]

    @property
    def size(self):
        return self.vectors.shape[0]

    def is_normalized(self, tol=1e-9):
        return bool(np.all(np.abs(self.vectors.sum(axis=1) - 1.0) <= tol))

    def sample_indices(self, rng, size):
        rng = as_generator(rng)
        if self.empirical:
            return rng.integers(0, self.size, size=size)
        return rng.choice(self.size, size=size, p=self.probabilities)

    def normalized(self):
        rows = [l1_normalize(v, label=i) for i, v in enumerate(self.vectors)]
        return replace(self, vectors=np.array(rows))


def sample_item(dist, rng):
    """Draw one feature vector from the population."""
    if dist.size == 0:
        raise ConfigurationError("item distribution is empty")
    idx = int(dist.sample_indices(rng, 1)[0])
    return np.array(dist.vectors[idx])


# ----------------------------------------------------------------------------
# projection geometry

DEFAULT_BINS = 20


@dataclass(frozen=True)
class ProjectionDistribution:
    """Discrete law of a nonnegative projection magnitude."""

    support: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        support = _frozen(self.support, 1)
        probs = _frozen(self.probabilities, 1)
        if support.shape != probs.shape or support.size == 0:
            raise DomainError("projection support and probabilities must align")
        if np.any(support < 0) or np.any(probs < 0):
            raise DomainError("projection magnitudes and probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > NORM_TOL:
            raise DomainError(f"projection probabilities sum to {probs.sum()!r}")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probabilities", probs)

    @property
    def mean(self):
        return mean_projection(self)

    @property
    def max(self):
        return float(self.support.max())

    def fingerprint(self, decimals=9):
        return tuple(
            (round(float(x), decimals), round(float(p), decimals))
            for x, p in zip(self.support, self.probabilities)
        )


def _discrete_law(values, probs):
    support, inverse = np.unique(values, return_inverse=True)
    mass = np.zeros(support.size)
    np.add.at(mass, inverse, probs)
    mass = mass / mass.sum()
    return ProjectionDistribution(support, mass)


def _histogram_law(values, probs, bins):
    top = float(values.max())
    if top <= 0:
        return ProjectionDistribution(np.zeros(1), np.ones(1))
    counts, edges = np.histogram(values, bins=bins, range=(0.0, top), weights=probs)
    mids = 0.5 * (edges[:-1] + edges[1:])
    keep = counts > 0
    mass = counts[keep] / counts[keep].sum()
    return ProjectionDistribution(mids[keep], mass)


def projection_distribution(direction, items, bins=DEFAULT_BINS):
    """Law of x = (d·X)/(d·d) for X drawn from ``items``.

    Exact for finite catalogs; a ``bins``-bucket histogram with midpoint
    support for empirical populations.
    """
    d = np.asarray(direction, dtype=float)
    if bins < 1:
        raise ConfigurationError("bins must be at least 1")
    scale = float(np.max(np.abs(d))) if d.size else 0.0
    if not scale > 0:
        raise DomainError("cannot project onto a zero direction")
    d = d / scale  # avoids underflow in d·d; x scales by 1/scale
    norm2 = float(d @ d)
    values = items.vectors @ d / norm2 / scale
    if items.empirical:
        return _histogram_law(values, items.probabilities, bins)
    return _discrete_law(values, items.probabilities)


def coordinate_distribution(items, j, bins=DEFAULT_BINS):
    """Marginal law of coordinate j of a random item (projection onto e_j)."""
    e = np.zeros(items.k)
    e[j] = 1.0
    return projection_distribution(e, items, bins)


def mean_projection(g):
    """Mean of a projection distribution, M(X)."""
    return float(g.support @ g.probabilities)


# ----------------------------------------------------------------------------
# problem definition


@dataclass(frozen=True)
class ProblemInstance:
    """A complete filtering problem: cost, discount, noise, prior, and items."""

    cost: float
    discount: float
    noise_scale: float
    prior: GaussianBelief
    items: ItemDistribution
    horizon: int = 100
    name: str = field(default="instance", compare=False)

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ConfigurationError(f"discount must lie in (0, 1), got {self.discount}")
        if not self.noise_scale > 0:
            raise ConfigurationError(f"noise_scale must be positive, got {self.noise_scale}")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if self.items.k != self.prior.k:
            raise ConfigurationError(
                f"items have dimension {self.items.k} but prior has {self.prior.k}"
            )

    @classmethod
    def from_rates(cls, arrival_rate, lifetime_rate, **kwargs):
        """Build with discount Γ/(Γ + r) from arrival and departure rates."""
        if arrival_rate <= 0 or lifetime_rate <= 0:
            raise ConfigurationError("arrival and lifetime rates must be positive")
        return cls(discount=arrival_rate / (arrival_rate + lifetime_rate), **kwargs)

    @property
    def k(self):
        return self.prior.k

    def with_cost(self, cost):
        return replace(self, cost=float(cost))


def basis_instance(k=100, heavy_weight=100.0, cost=0.3, discount=0.9, noise_scale=0.1,
                   prior_mean=0.3, prior_variance=1.0, horizon=100):
    """Unit-vector catalog where e₁ is ``heavy_weight`` times likelier than each other e_i.

    The defaults give P(e₁) = 100/199 and P(e_i) = 1/199 for k = 100.
    """
    weights = np.ones(k)
    weights[0] = heavy_weight
    items = ItemDistribution.from_weights(np.eye(k), weights)
    prior = GaussianBelief.isotropic(k, prior_mean, prior_variance)
    return ProblemInstance(cost, discount, noise_scale, prior, items, horizon,
                           name="basis")
