"""Policy evaluation by simulation.

Episodes are simulated in batches: all episodes of a batch advance one item at
a time, each with its own belief. Every episode draws its preference vector,
item sequence and noise from its own stream ``seed_sequence(seed, e)``, so
results do not depend on batching, and two policies run with the same seed see
identical items, preferences and noise (common random numbers).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ._random import (
    STREAM_BOUND,
    STREAM_EVAL,
    STREAM_HORIZON,
    STREAM_TUNE,
    as_generator,
    seed_sequence,
)
from .bounds import combined_bound
from .core import DEFAULT_BINS, gaussian_factor
from .dp import DpCache, SolverSettings
from .errors import ConfigurationError, DomainError
from .policies import Policy, PolicyConfig, PolicyKind, bind_policy

Z95 = 1.96
ALPHA_GRID = tuple(10.0 ** (-1.0 + 2.0 * i / 9.0) for i in range(10))
DENSE_BATCH_FLOATS = 20_000_000


@dataclass(frozen=True)
class EpisodeResult:
    discounted_reward: float
    forward_count: int
    trace: tuple | None = None


@dataclass(frozen=True)
class ValueEstimate:
    mean: float
    stderr: float
    ci95_low: float
    ci95_high: float
    episodes: int
    truncation_tail: float = 0.0

    @classmethod
    def from_samples(cls, samples, truncation_tail=0.0):
        samples = np.asarray(samples, dtype=float)
        n = samples.size
        mean = float(samples.mean())
        stderr = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, stderr, mean - Z95 * stderr, mean + Z95 * stderr, n,
                   truncation_tail)


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    cost: float
    policy: str
    alpha: float | None
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    kind: str

    FIELDS = ("experiment", "cost", "policy", "alpha", "mean", "stderr", "ci_low",
              "ci_high", "kind")


@dataclass(frozen=True)
class BoundConfig:
    samples: int = 1000
    hindsight_samples: int = 100_000
    settings: SolverSettings = SolverSettings()
    bins: int = DEFAULT_BINS


# ----------------------------------------------------------------------------
# batched beliefs


class _DiagonalBeliefs:
    """Independent coordinates observed one at a time: Σ stays diagonal."""

    def __init__(self, prior, items, n):
        self.mean = np.tile(prior.mean, (n, 1))
        self.var = np.tile(np.diag(prior.covariance), (n, 1))
        self.feature = np.argmax(items.vectors > 0, axis=1)
        self.weight = items.vectors[np.arange(items.size), self.feature]

    @staticmethod
    def applies(prior, items):
        return prior.is_diagonal() and bool(np.all((items.vectors > 0).sum(axis=1) == 1))

    def project(self, idx):
        rows = np.arange(idx.size)
        f, a = self.feature[idx], self.weight[idx]
        return a * self.mean[rows, f], a * a * self.var[rows, f]

    def update(self, mask, idx, m, v, y, noise_var):
        rows = np.flatnonzero(mask)
        f, a = self.feature[idx[rows]], self.weight[idx[rows]]
        var = self.var[rows, f]
        s = v[rows] + noise_var[rows]
        self.mean[rows, f] += var * a * (y[rows] - m[rows]) / s
        self.var[rows, f] = var - (var * a) ** 2 / s


class _DenseBeliefs:
    def __init__(self, prior, items, n):
        self.vectors = items.vectors
        self.mean = np.tile(prior.mean, (n, 1))
        self.cov = np.tile(prior.covariance, (n, 1, 1))
        self._sx = None

    def project(self, idx):
        x = self.vectors[idx]
        self._sx = np.einsum("eij,ej->ei", self.cov, x)
        return np.einsum("ek,ek->e", self.mean, x), np.einsum("ek,ek->e", self._sx, x)

    def update(self, mask, idx, m, v, y, noise_var):
        rows = np.flatnonzero(mask)
        sx = self._sx[rows]
        s = v[rows] + noise_var[rows]
        self.mean[rows] += sx * ((y[rows] - m[rows]) / s)[:, None]
        self.cov[rows] -= np.einsum("ei,ej->eij", sx, sx) / s[:, None, None]


# ----------------------------------------------------------------------------
# episode draws


@dataclass
class _Draws:
    theta: np.ndarray       # (E, k)
    items: np.ndarray       # (E, T) item indices
    noise: np.ndarray       # (E, T) standard normals
    thompson: np.ndarray    # (E, T) standard normals for LTS
    active: np.ndarray      # (E, T) step is inside the episode


def _episode_draws(instance, seed, episodes, horizons, thetas=None):
    """Draws for episodes ``episodes`` (indices); ``horizons`` gives each length."""
    k = instance.k
    factor = gaussian_factor(instance.prior.covariance)
    T = int(max(horizons)) if len(horizons) else 0
    n = len(episodes)
    theta = np.empty((n, k))
    items = np.zeros((n, T), dtype=np.intp)
    noise = np.zeros((n, T))
    thompson = np.zeros((n, T))
    active = np.zeros((n, T), dtype=bool)
    for row, (e, h) in enumerate(zip(episodes, horizons)):
        gen = np.random.default_rng(seed_sequence(seed, int(e)))
        if thetas is None:
            theta[row] = instance.prior.mean + factor @ gen.standard_normal(k)
        else:
            theta[row] = thetas[int(e) % len(thetas)]
        items[row, :h] = instance.items.sample_indices(gen, h)
        noise[row, :h] = gen.standard_normal(h)
        thompson[row, :h] = gen.standard_normal(h)
        active[row, :h] = True
    return _Draws(theta, items, noise, thompson, active)


def _geometric_horizons(instance, seed, episodes):
    """N with P(N ≥ n) = γⁿ (support starting at 0), one per episode."""
    out = []
    for e in episodes:
        gen = np.random.default_rng(seed_sequence(seed, int(e), STREAM_HORIZON))
        out.append(int(gen.geometric(1.0 - instance.discount)) - 1)
    return out


def _simulate(instance, policy, draws, discounted, record=False):
    """Run a batch; returns (rewards, forward counts, |Y − c| proxy, traces)."""
    n, T = draws.items.shape
    items = instance.items
    if _DiagonalBeliefs.applies(instance.prior, items):
        beliefs = _DiagonalBeliefs(instance.prior, items, n)
    else:
        beliefs = _DenseBeliefs(instance.prior, items, n)
    counts_nz = (items.vectors > 0).sum(axis=1)
    lam = instance.noise_scale
    c = instance.cost
    gamma = instance.discount
    reward = np.zeros(n)
    forwards = np.zeros(n, dtype=np.int64)
    abs_gap = 0.0
    traces = [[] for _ in range(n)] if record else None
    weight = 1.0
    for t in range(T):
        weight = weight * gamma if discounted else 1.0
        idx = draws.items[:, t]
        live = draws.active[:, t]
        m, v = beliefs.project(idx)
        forward = np.asarray(policy.decide_batch(m, v, idx, draws.thompson[:, t]), bool) & live
        signal = np.einsum("ek,ek->e", draws.theta, items.vectors[idx])
        noise_var = counts_nz[idx] * lam * lam
        y = signal + np.sqrt(noise_var) * draws.noise[:, t]
        gain = np.where(forward, y - c, 0.0)
        reward += weight * gain
        forwards += forward
        abs_gap += float(np.abs(signal - c)[live].sum()
                         + (np.sqrt(2.0 / np.pi * noise_var)[live]).sum())
        if record:
            for e in np.flatnonzero(live):
                traces[e].append((int(idx[e]), bool(forward[e]),
                                  float(y[e]) if forward[e] else None))
        if forward.any():
            beliefs.update(forward, idx, m, v, y, noise_var)
    steps = max(int(draws.active.sum()), 1)
    return reward, forwards, abs_gap / steps, traces


def _as_policy(policy, instance, cache=None):
    if isinstance(policy, Policy):
        if policy.cost != instance.cost:
            raise ConfigurationError("policy was bound to an instance with a different cost")
        return policy
    if policy.kind.tunable and policy.alpha is None:
        raise ConfigurationError(f"{policy.label}: alpha must be set (or tuned) before use")
    return bind_policy(policy, instance, cache)


def _single_draws(instance, theta, rng, horizon):
    gen = as_generator(rng)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (instance.k,):
        raise DomainError(f"theta must have length {instance.k}")
    return _Draws(
        theta[None, :],
        instance.items.sample_indices(gen, horizon)[None, :],
        gen.standard_normal(horizon)[None, :],
        gen.standard_normal(horizon)[None, :],
        np.ones((1, horizon), dtype=bool),
    )


def run_episode(instance, policy, theta, rng, trace=False, cache=None):
    """One truncated discounted episode: Σₙ γⁿ·Uₙ(Yₙ − c) for n ≤ horizon."""
    pol = _as_policy(policy, instance, cache)
    draws = _single_draws(instance, theta, rng, instance.horizon)
    reward, fwd, _, traces = _simulate(instance, pol, draws, True, trace)
    return EpisodeResult(float(reward[0]), int(fwd[0]), tuple(traces[0]) if trace else None)


def run_geometric_episode(instance, policy, theta, rng, trace=False, cache=None):
    """One episode of N undiscounted steps, P(N ≥ n) = γⁿ."""
    pol = _as_policy(policy, instance, cache)
    gen = as_generator(rng)
    n = int(gen.geometric(1.0 - instance.discount)) - 1
    draws = _single_draws(instance, theta, gen, n)
    reward, fwd, _, traces = _simulate(instance, pol, draws, False, trace)
    return EpisodeResult(float(reward[0]), int(fwd[0]), tuple(traces[0]) if trace else None)


def _batch_size(instance, episodes):
    if _DiagonalBeliefs.applies(instance.prior, instance.items):
        return episodes
    return max(1, min(episodes, DENSE_BATCH_FLOATS // (instance.k * instance.k)))


def episode_rewards(instance, policy, episodes, seed, thetas=None, cache=None,
                    geometric=False):
    """Per-episode rewards for episodes 0..episodes−1 of stream ``seed``."""
    pol = _as_policy(policy, instance, cache)
    out = np.empty(episodes)
    tails = []
    size = _batch_size(instance, episodes)
    for start in range(0, episodes, size):
        ids = np.arange(start, min(start + size, episodes))
        if geometric:
            horizons = _geometric_horizons(instance, seed, ids)
        else:
            horizons = [instance.horizon] * ids.size
        draws = _episode_draws(instance, seed, ids, horizons, thetas)
        reward, _, gap, _ = _simulate(instance, pol, draws, not geometric)
        out[ids] = reward
        tails.append(gap)
    return out, float(np.mean(tails)) if tails else 0.0


def estimate_policy_value(instance, policy, episodes, seed, thetas=None, cache=None,
                          geometric=False):
    """Mean episode value with standard error and a 95% normal interval.

    θ is drawn from the prior unless ``thetas`` (e.g. fitted user vectors) is
    given, in which case episode e uses ``thetas[e % len(thetas)]``.
    """
    if episodes < 2:
        raise DomainError("need at least 2 episodes for a standard error")
    rewards, abs_gap = episode_rewards(instance, policy, episodes, seed, thetas, cache,
                                       geometric)
    tail = 0.0
    if not geometric:
        tail = instance.discount ** instance.horizon / (1.0 - instance.discount) * abs_gap
    return ValueEstimate.from_samples(rewards, tail)


def tune_alpha(instance, policy_kind, episodes_per_alpha, seed, alpha_grid=ALPHA_GRID,
               cache=None, thetas=None, settings=None, bins=DEFAULT_BINS):
    """Best α on a log grid, every α evaluated on the same episodes.

    Ties (means within 1e-12) go to the smallest α.
    """
    kind = PolicyKind(policy_kind)
    if not kind.tunable:
        raise ConfigurationError(f"{kind.value} has no tuning parameter")
    cache = cache if cache is not None else DpCache()
    settings = settings or SolverSettings()
    table = []
    for alpha in alpha_grid:
        config = PolicyConfig(kind, alpha, settings, bins)
        table.append((float(alpha),
                      estimate_policy_value(instance, config, episodes_per_alpha, seed,
                                            thetas, cache)))
    best_mean = max(est.mean for _, est in table)
    best = min(a for a, est in table if est.mean >= best_mean - 1e-12)
    return best, table


def _sweep_one_cost(args):
    (instance, policies, cost, episodes, tune_episodes, bound_config, seed, experiment,
     alpha_grid, thetas) = args
    inst = instance.with_cost(cost)
    cache = DpCache()
    rows = []
    for config in policies:
        if config.kind.tunable and config.alpha is None:
            alpha, _ = tune_alpha(inst, config.kind, tune_episodes,
                                  seed_sequence(seed, STREAM_TUNE), alpha_grid, cache,
                                  thetas, config.settings, config.bins)
            config = replace(config, alpha=alpha)
        est = estimate_policy_value(inst, config, episodes, seed_sequence(seed, STREAM_EVAL),
                                    thetas, cache)
        alpha = config.alpha if config.kind.tunable else None
        rows.append(ResultRow(experiment, float(cost), config.label, alpha, est.mean,
                              est.stderr, est.ci95_low, est.ci95_high, "policy"))
    report = combined_bound(inst, bound_config.samples, bound_config.hindsight_samples,
                            bound_config.settings, seed_sequence(seed, STREAM_BOUND), cache,
                            bound_config.bins)
    return rows, report


def bound_rows(experiment, cost, report, kinds=("combined_bound",)):
    values = {
        "decomposition_bound": (report.decomposition_bound, report.decomposition_stderr),
        "hindsight_bound": (report.hindsight_bound, report.hindsight_stderr),
        "combined_bound": (report.combined_bound, report.combined_stderr),
    }
    rows = []
    for kind in kinds:
        mean, se = values[kind]
        rows.append(ResultRow(experiment, float(cost), "bound", None, mean, se,
                              mean - Z95 * se, mean + Z95 * se, kind))
    return rows


def run_cost_sweep(instance, policies, costs, episodes, bound_config=None, seed=0,
                   tune_episodes=None, experiment="sweep", alpha_grid=ALPHA_GRID,
                   thetas=None, workers=1):
    """Policy values and the combined bound at every cost.

    Policies whose ``alpha`` is None are tuned first on a separate stream.
    Returns (rows, {cost: BoundReport}); rows hold one entry per (policy, cost)
    followed by that cost's combined-bound row.
    """
    if not policies or not costs:
        raise ConfigurationError("sweep needs at least one policy and one cost")
    bound_config = bound_config or BoundConfig()
    tune_episodes = tune_episodes or episodes
    tasks = [(instance, list(policies), float(c), episodes, tune_episodes, bound_config,
              seed, experiment, tuple(alpha_grid), thetas) for c in costs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one_cost, tasks))
    else:
        results = [_sweep_one_cost(t) for t in tasks]
    rows, reports = [], {}
    for c, (policy_rows, report) in zip(costs, results):
        rows.extend(policy_rows)
        rows.extend(bound_rows(experiment, c, report))
        reports[float(c)] = report
    return rows, reports
