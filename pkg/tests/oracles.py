"""Independent reference computations used by the tests."""

import math

import numpy as np


def scalar_update_reference(mu, beta, x, y, lam):
    """Posterior of θ given θ ~ N(mu, 1/beta) and y = θ + (λ/x)·ε, by completing the square."""
    if x == 0:
        return mu, beta
    obs_precision = x * x / (lam * lam)
    post_precision = beta + obs_precision
    post_mean = (beta * mu + obs_precision * y) / post_precision
    return post_mean, post_precision


def tree_value(mu, beta, x, cost, gamma, lam, support, probs, nodes, weights, depth):
    """Horizon-``depth`` optimal value by exhaustive action/observation enumeration.

    Observations use the discrete set y = μ + s·z over the given normalized
    quadrature nodes, where s² = 1/β + λ²/x² is the predictive variance. The
    state is carried exactly (no grid). Vectorized over the leading array axis.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    beta = np.broadcast_to(np.asarray(beta, dtype=float), mu.shape)
    if depth == 0:
        return np.zeros(mu.shape)

    def future(m, b):
        return sum(p * tree_value(m, b, xp, cost, gamma, lam, support, probs, nodes,
                                  weights, depth - 1)
                   for xp, p in zip(support, probs))

    discard = gamma * future(mu, beta)
    if x == 0:
        return discard
    s = np.sqrt(1.0 / beta + lam * lam / (x * x))
    y = mu[:, None] + s[:, None] * nodes[None, :]
    obs_precision = x * x / (lam * lam)
    beta_new = beta + obs_precision
    mu_new = (beta[:, None] * mu[:, None] + obs_precision * y) / beta_new[:, None]
    cont = future(mu_new.ravel(), np.repeat(beta_new, nodes.size)).reshape(y.shape)
    forward = x * (mu - cost) + gamma * (cont @ weights)
    return np.maximum(discard, forward)


def geometric_series(gain, gamma, horizon):
    return gamma * gain * (1 - gamma**horizon) / (1 - gamma)


def hindsight_point_mass(theta_dot_x, cost, gamma):
    return gamma / (1 - gamma) * max(theta_dot_x - cost, 0.0)


def normal_tail_ci(p, n):
    return 3 * math.sqrt(p * (1 - p) / n)


def normal_expectation(fn, mean, sd, points=200_001, width=14.0):
    """E[fn(mean + sd·Z)] by a fine Riemann sum over ±width standard deviations."""
    z = np.linspace(-width, width, points)
    w = np.exp(-0.5 * z * z)
    return fn(mean + sd * z) @ (w / w.sum())
