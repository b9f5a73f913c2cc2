"""Single-feature forwarding subproblem solved by value iteration.

State is (μ, β, x): belief mean and precision about the projected preference,
and the magnitude of the current item along the direction. The Bellman
operator is

    V(μ, β, x) = max(Q₀, Q₁)
    Q₀ = γ·W(μ, β),                 W(μ, β) = E_{x'~G} V(μ, β, x')
    Q₁ = x(μ − c) + γ·E_Y W(μ', β')  for x > 0, Q₁ = Q₀ at x = 0

with (μ', β') the scalar conjugate update. W is tabulated on a μ grid that is
densest around the cost (where W bends) and a log-spaced β grid. W is linear
in μ between grid points, so its expectation over the normal observation is
computed exactly from Φ and φ at the grid points; W has a kink near the cost
that Gauss-Hermite quadrature (still available) resolves only slowly.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import ProjectionDistribution
from .errors import ConfigurationError, ConvergenceError, DomainError


# how E_Y W(μ', β') is computed: exactly for the piecewise-linear interpolant,
# or by Gauss-Hermite quadrature with n_quad nodes
EXPECTATIONS = ("exact", "quadrature")


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_hermite(cls, n):
        """Probabilists' Gauss-Hermite rule normalized to integrate N(0, 1)."""
        nodes, weights = np.polynomial.hermite_e.hermegauss(n)
        weights = weights / weights.sum()
        nodes.setflags(write=False)
        weights.setflags(write=False)
        return cls(nodes, weights)


@dataclass(frozen=True)
class SubproblemSpec:
    cost: float
    discount: float
    noise_scale: float
    projection: ProjectionDistribution

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ConfigurationError(f"discount must lie in (0, 1), got {self.discount}")
        if not self.noise_scale > 0:
            raise ConfigurationError("noise_scale must be positive")

    @property
    def mean_projection(self):
        return self.projection.mean

    @property
    def slope(self):
        """dW/dμ in the no-learning regime above the cost."""
        return self.projection.mean / (1.0 - self.discount)

    def fingerprint(self):
        return (
            round(float(self.cost), 12),
            round(float(self.discount), 12),
            round(float(self.noise_scale), 12),
            self.projection.fingerprint(),
        )


@dataclass(frozen=True)
class GridConfig:
    mu_min: float
    mu_max: float
    beta_min: float
    beta_max: float
    n_mu: int = 201
    n_beta: int = 64
    n_quad: int = 21
    tol: float = 1e-6
    max_iter: int = 10_000
    mu_focus: float | None = None
    focus_width: float = 0.0
    expectation: str = "exact"

    def __post_init__(self):
        if self.expectation not in EXPECTATIONS:
            raise ConfigurationError(f"expectation must be one of {EXPECTATIONS}")
        if self.focus_width < 0:
            raise ConfigurationError("focus_width must be nonnegative")
        if self.n_mu < 3 or self.n_beta < 2:
            raise ConfigurationError("grid needs at least 3 μ points and 2 β points")
        if not self.mu_max > self.mu_min:
            raise ConfigurationError("mu_max must exceed mu_min")
        if not 0 < self.beta_min < self.beta_max or not math.isfinite(self.beta_max):
            raise ConfigurationError("need 0 < beta_min < beta_max < ∞")
        if not self.tol > 0 or self.n_quad < 1 or self.max_iter < 1:
            raise ConfigurationError("tol, n_quad and max_iter must be positive")

    def key(self):
        focus = None if self.mu_focus is None else round(float(self.mu_focus), 12)
        return tuple(round(float(v), 12) for v in
                     (self.mu_min, self.mu_max, self.beta_min, self.beta_max, self.tol,
                      self.focus_width)) + (
            self.n_mu, self.n_beta, self.n_quad, self.max_iter, focus, self.expectation)

    def quadrature(self):
        """(nodes, weights) for quadrature mode; (None, None) for the exact expectation."""
        if self.expectation == "exact":
            return None, None
        rule = QuadratureRule.gauss_hermite(self.n_quad)
        return rule.nodes, rule.weights

    def mu_points(self):
        """μ grid: uniform, or sinh-stretched around ``mu_focus``.

        The stretched grid μ = f + w·sinh(t), t uniform, has spacing roughly
        proportional to sqrt(w² + (μ − f)²), so it is finest near the focus.
        """
        lo, hi = self.mu_min, self.mu_max
        if self.mu_focus is None or self.focus_width == 0:
            return np.linspace(lo, hi, self.n_mu)
        f = min(max(self.mu_focus, lo), hi)
        w = self.focus_width
        t = np.linspace(math.asinh((lo - f) / w), math.asinh((hi - f) / w), self.n_mu)
        mu = f + w * np.sinh(t)
        mu[0], mu[-1] = lo, hi
        return mu


@dataclass(frozen=True)
class SolverSettings:
    """Grid sizes and tolerances; ranges are derived per subproblem."""

    n_mu: int = 201
    n_beta: int = 64
    n_quad: int = 21
    tol: float = 1e-6
    max_iter: int = 10_000
    width_sd: float = 6.0
    horizon_eps: float = 1e-3
    focus_sd: float = 0.1
    expectation: str = "exact"

    def __post_init__(self):
        if self.focus_sd < 0:
            raise ConfigurationError("focus_sd must be nonnegative")
        if self.expectation not in EXPECTATIONS:
            raise ConfigurationError(f"expectation must be one of {EXPECTATIONS}")

    def grid_for(self, spec, mu_lo, mu_hi, sd, beta_min=None):
        """Grid covering [mu_lo − w·sd, mu_hi + w·sd] and precisions reachable in
        the effective horizon ceil(log ε / log γ).

        μ points concentrate around the cost on a scale of ``focus_sd·sd``;
        ``focus_sd = 0`` gives a uniform grid.
        """
        if not sd > 0:
            raise DomainError("a grid needs a positive prior standard deviation")
        beta_min = 1.0 / sd**2 if beta_min is None else beta_min
        horizon = math.ceil(math.log(self.horizon_eps) / math.log(spec.discount))
        xmax = max(spec.projection.max, 1.0)
        beta_max = beta_min + horizon * xmax**2 / spec.noise_scale**2
        return GridConfig(
            mu_min=mu_lo - self.width_sd * sd,
            mu_max=mu_hi + self.width_sd * sd,
            beta_min=beta_min,
            beta_max=beta_max,
            n_mu=self.n_mu,
            n_beta=self.n_beta,
            n_quad=self.n_quad,
            tol=self.tol,
            max_iter=self.max_iter,
            mu_focus=float(spec.cost) if self.focus_sd > 0 else None,
            focus_width=self.focus_sd * sd,
            expectation=self.expectation,
        )


@dataclass(frozen=True)
class ValueGrid:
    """Solved value function V[μ-index, β-index, x-index]."""

    spec: SubproblemSpec
    config: GridConfig
    mu_grid: np.ndarray
    beta_grid: np.ndarray
    x_support: np.ndarray
    x_probs: np.ndarray
    values: np.ndarray
    convergence_gap: float
    iterations: int = 0
    residuals: tuple = field(default=(), repr=False)

    @property
    def log_beta_grid(self):
        return np.log(self.beta_grid)

    @property
    def continuation_table(self):
        """W(μ, β) = E_{x'~G} V(μ, β, x')."""
        return np.ascontiguousarray(self.values @ self.x_probs)

    @property
    def v_max(self):
        return float(self.values.max())


def _x_support(projection):
    support = np.asarray(projection.support, dtype=float)
    probs = np.asarray(projection.probabilities, dtype=float)
    if not np.any(np.isclose(support, 1.0, rtol=0.0, atol=1e-12)):
        support = np.append(support, 1.0)
        probs = np.append(probs, 0.0)
    order = np.argsort(support, kind="stable")
    return support[order], probs[order]


def _selfloop_value(q, probs, p_stay, gamma):
    """Root of W = p_stay·γW + Σᵢ pᵢ·max(γW, qᵢ), row by row.

    Discarding leaves the state unchanged, so W solves this scalar equation
    given the forward values q (rows: μ points, columns: x > 0). The optimal
    discard set is a prefix of the sorted q; each prefix gives a candidate
    that is a lower bound on the root and the right prefix attains it.
    """
    order = np.argsort(q, axis=1)
    q = np.take_along_axis(q, order, axis=1)
    p = probs[order]
    stay = p_stay + np.concatenate([np.zeros((q.shape[0], 1)), np.cumsum(p, axis=1)], axis=1)
    pq = p * q
    gain = np.concatenate([np.sum(pq, axis=1, keepdims=True),
                           np.sum(pq, axis=1, keepdims=True) - np.cumsum(pq, axis=1)], axis=1)
    return np.maximum(np.max(gain / (1.0 - gamma * stay), axis=1), 0.0)


def solve_subproblem(spec, config, backend=None):
    """Fixed point of the Bellman operator, solved one β column at a time.

    Forwarding only raises β and discarding leaves the state unchanged, so
    column j depends only on columns ≥ j. Columns are converged from the top
    down, each warm-started from the column above (the top one from the
    known-θ value), with the discard self-loop solved exactly. Full sweeps
    then run until the sup-norm change falls below ``tol·(1 − γ)/(2γ)``; the
    sweep is a γ-contraction, so W ends within ``tol/2`` of the discretized
    fixed point. ``iterations`` counts work in full-sweep equivalents.
    """
    if not isinstance(config, GridConfig):
        raise ConfigurationError("solve_subproblem needs a GridConfig")
    kern = kernels.get_backend(backend)
    gamma, cost = spec.discount, spec.cost
    n_mu, n_beta = config.n_mu, config.n_beta
    mu_grid = config.mu_points()
    beta_grid = np.geomspace(config.beta_min, config.beta_max, n_beta)
    log_beta = np.log(beta_grid)
    xs, gx = _x_support(spec.projection)
    nodes, weights = config.quadrature()
    slope = spec.slope
    moving = xs > 0
    p_stay = float(gx[~moving].sum())
    myopic = xs[moving][:, None] * (mu_grid[None, :] - cost)

    def forward_values(W, j):
        beta = np.full(n_mu, beta_grid[j])
        cont = [kern.continuation(W, mu_grid, log_beta, mu_grid, beta, float(x),
                                  spec.noise_scale, nodes, weights, cost, slope)
                for x in xs[moving]]
        return myopic + gamma * np.asarray(cont).reshape(myopic.shape)

    def update(W, j):
        new = _selfloop_value(forward_values(W, j).T, gx[moving], p_stay, gamma)
        change = float(np.max(np.abs(new - W[:, j])))
        W[:, j] = new
        return change

    def fail(residual):
        raise ConvergenceError(
            f"value iteration did not converge in {config.max_iter} iterations "
            f"(last residual {residual:.3g})",
            residual,
        )

    threshold = config.tol * (1.0 - gamma) / (2.0 * gamma)
    W = np.zeros((n_mu, n_beta))
    W[:, -1] = slope * np.maximum(mu_grid - cost, 0.0)
    updates = 0
    for j in range(n_beta - 1, -1, -1):
        if j < n_beta - 1:
            W[:, j] = W[:, j + 1]
        for _ in range(config.max_iter):
            change = update(W, j)
            updates += 1
            if change <= 0.5 * threshold:
                break
        else:
            fail(change)
    residuals = []
    for _ in range(config.max_iter):
        residual = max(update(W, j) for j in range(n_beta - 1, -1, -1))
        updates += n_beta
        residuals.append(residual)
        if residual <= threshold:
            break
    else:
        fail(residuals[-1])

    values = np.empty((n_mu, n_beta, xs.size))
    values[:, :, ~moving] = gamma * W[:, :, None]
    for j in range(n_beta):
        values[:, j, moving] = np.maximum(gamma * W[:, j][:, None], forward_values(W, j).T)
    values.setflags(write=False)
    gap = residuals[-1] * 2.0 * gamma / (1.0 - gamma)
    return ValueGrid(spec, config, mu_grid, beta_grid, xs, gx, values, gap,
                     math.ceil(updates / n_beta), tuple(residuals))


def closed_form_value(spec, mu, x):
    """V at zero uncertainty: forward forever iff μ > c."""
    gain = np.maximum(np.asarray(mu, dtype=float) - spec.cost, 0.0)
    return gain * (x + spec.discount * spec.mean_projection / (1.0 - spec.discount))


def _beta(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise DomainError("sigma must be nonnegative")
    with np.errstate(divide="ignore"):
        return np.where(sigma > 0, 1.0 / np.where(sigma > 0, sigma, 1.0) ** 2, np.inf)


def _terms(grid, mu, sigma, x):
    """(W at the current belief, expected W after forwarding at magnitude x)."""
    kern = kernels.get_backend()
    spec = grid.spec
    W = grid.continuation_table
    nodes, weights = grid.config.quadrature()
    beta = _beta(sigma)
    mu = np.asarray(mu, dtype=float)
    here = kern.interpolate(W, grid.mu_grid, grid.log_beta_grid, mu, beta, spec.cost,
                            spec.slope)
    after = kern.continuation(W, grid.mu_grid, grid.log_beta_grid, mu, beta, float(x),
                              spec.noise_scale, nodes, weights, spec.cost,
                              spec.slope)
    return here, after


def q_factors(grid, mu, sigma, x):
    """(Q_discard, Q_forward) by one Bellman backup from the interpolated grid.

    ``mu`` and ``sigma`` may be arrays; ``x`` is a scalar magnitude.
    """
    if x < 0:
        raise DomainError(f"projection magnitude must be nonnegative, got {x}")
    spec = grid.spec
    here, after = _terms(grid, mu, sigma, x)
    q_discard = spec.discount * here
    if x == 0:
        q_forward = q_discard
    else:
        q_forward = x * (np.asarray(mu, dtype=float) - spec.cost) + spec.discount * after
    if np.ndim(q_discard) == 0:
        return float(q_discard), float(q_forward)
    return q_discard, q_forward


def state_value(grid, mu, sigma, x):
    """V(μ, σ, x) = max of the two Q-factors; ``x`` may be an array."""
    mu, sigma, x = np.broadcast_arrays(np.asarray(mu, float), np.asarray(sigma, float),
                                       np.asarray(x, float))
    out = np.empty(mu.shape)
    for xv in np.unique(x):
        sel = x == xv
        q0, q1 = q_factors(grid, mu[sel], sigma[sel], float(xv))
        out[sel] = np.maximum(q0, q1)
    return out if out.ndim else float(out)


def exploration_benefit(grid, mu, sigma):
    """Q(μ,σ,1,forward) − Q(μ,σ,1,discard) − (μ − c).

    Algebraically this is γ·(E_Y W(μ', β') − W(μ, β)), which is how it is
    evaluated to avoid cancellation.
    """
    here, after = _terms(grid, mu, sigma, 1.0)
    out = grid.spec.discount * (after - here)
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------------
# caching

class DpCache:
    """Solved grids keyed by (rounded projection law, c, γ, λ, grid config).

    Reads are lock-free; inserts take a lock so one grid is solved per key.
    """

    def __init__(self):
        self._grids = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._grids)

    @staticmethod
    def key(spec, config):
        return spec.fingerprint() + config.key()

    def get(self, spec, config):
        k = self.key(spec, config)
        grid = self._grids.get(k)
        if grid is not None:
            self.hits += 1
            return grid
        with self._lock:
            grid = self._grids.get(k)
            if grid is None:
                self.misses += 1
                grid = solve_subproblem(spec, config)
                self._grids[k] = grid
            else:
                self.hits += 1
        return grid


# ----------------------------------------------------------------------------
# persistence

GRID_FORMAT = "infofilter-valuegrid"
GRID_VERSION = 1


def spec_hash(spec, config):
    payload = json.dumps([list(spec.fingerprint()[:3]), spec.fingerprint()[3],
                          list(config.key())])
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_grid(grid, path):
    """Write a one-line JSON header followed by row-major float64 arrays."""
    cfg = grid.config
    header = {
        "format": GRID_FORMAT,
        "version": GRID_VERSION,
        "spec_hash": spec_hash(grid.spec, cfg),
        "cost": grid.spec.cost,
        "discount": grid.spec.discount,
        "noise_scale": grid.spec.noise_scale,
        "projection_support": [float(v) for v in grid.spec.projection.support],
        "projection_probs": [float(v) for v in grid.spec.projection.probabilities],
        "config": {f: getattr(cfg, f) for f in cfg.__dataclass_fields__},
        "shape": list(grid.values.shape),
        "convergence_gap": grid.convergence_gap,
        "iterations": grid.iterations,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for arr in (grid.mu_grid, grid.beta_grid, grid.x_support, grid.x_probs, grid.values):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_grid(path, expect=None):
    """Read a grid written by :func:`save_grid`.

    ``expect`` is an optional (spec, config) pair whose hash must match.
    """
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        blob = fh.read()
    if header.get("format") != GRID_FORMAT or header.get("version") != GRID_VERSION:
        raise ConfigurationError(f"{path}: not a version-{GRID_VERSION} value grid")
    spec = SubproblemSpec(header["cost"], header["discount"], header["noise_scale"],
                          ProjectionDistribution(header["projection_support"],
                                                 header["projection_probs"]))
    config = GridConfig(**header["config"])
    if spec_hash(spec, config) != header["spec_hash"]:
        raise ConfigurationError(f"{path}: header hash mismatch")
    if expect is not None and spec_hash(*expect) != header["spec_hash"]:
        raise ConfigurationError(f"{path}: grid was solved for a different subproblem")
    n_mu, n_beta, n_x = header["shape"]
    stream = io.BytesIO(blob)

    def take(n):
        return np.frombuffer(stream.read(8 * n), dtype="<f8").astype(float)

    mu_grid, beta_grid = take(n_mu), take(n_beta)
    xs, gx = take(n_x), take(n_x)
    values = take(n_mu * n_beta * n_x).reshape(n_mu, n_beta, n_x)
    values.setflags(write=False)
    return ValueGrid(spec, config, mu_grid, beta_grid, xs, gx, values,
                     header["convergence_gap"], header["iterations"])
