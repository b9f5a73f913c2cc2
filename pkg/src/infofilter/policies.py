"""Forward/discard decision rules.

Each rule looks only at the projected belief about the arriving item,
m = X·μ and v = XΣXᵀ, plus rule-specific item data. The module-level
``decide_*`` functions take a belief and an item; :func:`bind_policy` returns
an object with a vectorized ``decide_batch`` used by the simulator.

Threshold conventions: pure exploitation and UCB forward on ``≥``;
LTS, DTDDP and DTD-UCB forward on strict ``>``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._random import as_generator
from .core import DEFAULT_BINS, mean_projection, nonzero_count, projection_distribution
from .dp import DpCache, SolverSettings, SubproblemSpec, exploration_benefit
from .errors import ConfigurationError, DomainError, NumericalError


class PolicyKind(str, enum.Enum):
    PURE_EXPLOIT = "PureExploit"
    UCB = "UCB"
    LTS = "LTS"
    DTDDP = "DTDDP"
    DTDUCB = "DTDUCB"

    @property
    def tunable(self):
        return self in (PolicyKind.UCB, PolicyKind.DTDDP, PolicyKind.DTDUCB)


@dataclass(frozen=True)
class PolicyConfig:
    """Rule, exploration weight α (None: tune before use) and DTDDP grid settings."""

    kind: PolicyKind
    alpha: float | None = 1.0
    settings: SolverSettings = field(default_factory=SolverSettings)
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.alpha is not None and not self.alpha >= 0:
            raise ConfigurationError(f"alpha must be nonnegative, got {self.alpha}")

    @property
    def label(self):
        return self.kind.value


def _clamped_variance(v):
    v = np.asarray(v, dtype=float)
    if np.any(v < -1e-10):
        raise NumericalError(f"negative predictive variance {float(np.min(v)):.3g}")
    return np.maximum(v, 0.0)


def _project(belief, item):
    item = np.asarray(item, dtype=float)
    if item.shape != belief.mean.shape:
        raise DomainError("item dimension does not match belief")
    return belief.project(item)


# ----------------------------------------------------------------------------
# single-decision rules


def decide_pure_exploit(belief, item, c):
    m, _ = _project(belief, item)
    return m >= c


def decide_ucb(belief, item, c, alpha):
    m, v = _project(belief, item)
    return m + alpha * math.sqrt(float(_clamped_variance(v))) >= c


def decide_lts(belief, item, c, rng):
    """Thompson draw: forward iff θ̃·X > c with θ̃ from the posterior.

    θ̃·X is sampled directly from its law N(X·μ, XΣXᵀ), which needs one
    normal draw instead of a k-dimensional one.
    """
    m, v = _project(belief, item)
    z = as_generator(rng).standard_normal()
    return m + math.sqrt(float(_clamped_variance(v))) * z > c


def decide_dtducb(belief, item, c, alpha, items, bins=DEFAULT_BINS):
    if nonzero_count(item) == 0:
        raise DomainError("cannot decide on an all-zero item")
    m, v = _project(belief, item)
    scale = mean_projection(projection_distribution(item, items, bins))
    return m + alpha * scale * math.sqrt(float(_clamped_variance(v))) > c


@dataclass(frozen=True)
class GridAnchor:
    """Range of belief states a DTDDP grid must cover."""

    mu_lo: float
    mu_hi: float
    sd: float

    @classmethod
    def for_prior(cls, prior):
        """Covers X·μ₀ ± w·sd for every L1-normalized nonnegative X.

        For such X, X·μ₀ lies in [min μ₀, max μ₀] and XΣ₀Xᵀ ≤ max_i Σ₀ᵢᵢ.
        """
        sd = math.sqrt(max(float(np.max(np.diag(prior.covariance))), 0.0))
        return cls(float(np.min(prior.mean)), float(np.max(prior.mean)), sd)


def dtddp_grid(item, c, discount, noise_scale, items, anchor, cache, settings,
               bins=DEFAULT_BINS):
    g = projection_distribution(item, items, bins)
    spec = SubproblemSpec(c, discount, noise_scale, g)
    config = settings.grid_for(spec, anchor.mu_lo, anchor.mu_hi, anchor.sd)
    return cache.get(spec, config)


def decide_dtddp(belief, item, c, alpha, items, discount, noise_scale, cache=None,
                 settings=None, anchor=None, bins=DEFAULT_BINS):
    """Forward iff X·μ + α·E(X·μ, √(XΣXᵀ)) > c, E from the direction-X subproblem."""
    if nonzero_count(item) == 0:
        raise DomainError("cannot decide on an all-zero item")
    m, v = _project(belief, item)
    sigma = math.sqrt(float(_clamped_variance(v)))
    if sigma == 0:
        return m > c
    anchor = anchor or GridAnchor.for_prior(belief)
    grid = dtddp_grid(item, c, discount, noise_scale, items, anchor,
                      cache if cache is not None else DpCache(),
                      settings or SolverSettings(), bins)
    return m + alpha * exploration_benefit(grid, m, sigma) > c


# ----------------------------------------------------------------------------
# bound policies for batched simulation


class Policy:
    """A decision rule bound to one problem instance."""

    needs_draws = False

    def __init__(self, config, instance):
        self.config = config
        self.alpha = config.alpha
        self.cost = instance.cost

    def decide_batch(self, m, v, item_index, draws):
        """Boolean forward mask for projected beliefs (m, v) of items ``item_index``."""
        raise NotImplementedError


class PureExploit(Policy):
    def decide_batch(self, m, v, item_index, draws):
        return m >= self.cost


class UCB(Policy):
    def decide_batch(self, m, v, item_index, draws):
        return m + self.alpha * np.sqrt(_clamped_variance(v)) >= self.cost


class LTS(Policy):
    needs_draws = True

    def decide_batch(self, m, v, item_index, draws):
        return m + np.sqrt(_clamped_variance(v)) * draws > self.cost


class DTDUCB(Policy):
    def __init__(self, config, instance):
        super().__init__(config, instance)
        items = instance.items
        self.scale = np.array([
            mean_projection(projection_distribution(x, items, config.bins))
            for x in items.vectors
        ])

    def decide_batch(self, m, v, item_index, draws):
        bonus = self.alpha * self.scale[item_index] * np.sqrt(_clamped_variance(v))
        return m + bonus > self.cost


class DTDDP(Policy):
    """Items sharing a projection law share one solved grid; grids are solved lazily."""

    def __init__(self, config, instance, cache=None):
        super().__init__(config, instance)
        self.instance = instance
        self.cache = cache if cache is not None else DpCache()
        self.anchor = GridAnchor.for_prior(instance.prior)
        items = instance.items
        laws = [projection_distribution(x, items, config.bins) for x in items.vectors]
        keys = {}
        self.group = np.empty(items.size, dtype=np.intp)
        self._laws = []
        for i, g in enumerate(laws):
            fp = g.fingerprint()
            if fp not in keys:
                keys[fp] = len(self._laws)
                self._laws.append(g)
            self.group[i] = keys[fp]
        self._grids = [None] * len(self._laws)

    def grid(self, group):
        if self._grids[group] is None:
            inst = self.instance
            spec = SubproblemSpec(inst.cost, inst.discount, inst.noise_scale,
                                  self._laws[group])
            config = self.config.settings.grid_for(spec, self.anchor.mu_lo,
                                                   self.anchor.mu_hi, self.anchor.sd)
            self._grids[group] = self.cache.get(spec, config)
        return self._grids[group]

    def benefit_batch(self, m, v, item_index):
        sigma = np.sqrt(_clamped_variance(v))
        out = np.zeros(m.shape)
        groups = self.group[item_index]
        active = sigma > 0
        for gid in np.unique(groups[active]):
            sel = active & (groups == gid)
            out[sel] = exploration_benefit(self.grid(gid), m[sel], sigma[sel])
        return out

    def decide_batch(self, m, v, item_index, draws):
        return m + self.alpha * self.benefit_batch(m, v, item_index) > self.cost


_CLASSES = {
    PolicyKind.PURE_EXPLOIT: PureExploit,
    PolicyKind.UCB: UCB,
    PolicyKind.LTS: LTS,
    PolicyKind.DTDUCB: DTDUCB,
}


def bind_policy(config, instance, cache=None):
    """Policy object for ``config`` on ``instance``; DTDDP grids go through ``cache``."""
    if config.kind is PolicyKind.DTDDP:
        return DTDDP(config, instance, cache)
    return _CLASSES[config.kind](config, instance)
