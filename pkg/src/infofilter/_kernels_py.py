"""Pure-numpy implementation of the value-grid interpolation kernels.

Mirrors ``_kernels.pyx``; selected when the compiled module is absent.

The continuation table W(μ, β) is stored on a sorted (not necessarily uniform)
μ grid and a log-uniform β grid. Outside the μ grid values continue with the
no-learning slope ``slope·(μ − c)⁺``; above the top β row they blend toward the
β = ∞ closed form ``slope·(μ − c)⁺`` linearly in posterior variance.

For fixed β the interpolant is piecewise linear in μ, so its expectation
under a normal law has a closed form in Φ and φ at the knots; ``continuation``
uses it when no quadrature nodes are given.
"""

import math

import numpy as np

_erfc = np.frompyfunc(math.erfc, 1, 1)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _cdf(z):
    return 0.5 * np.asarray(_erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0)), dtype=float)


def _pdf(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        return _INV_SQRT2PI * np.exp(-0.5 * z * z)


def _segment(m, s, a, b, va, d):
    """E[(va + d·(X − a))·1{a < X < b}] for X ~ N(m, s²); a = −∞ needs d = 0."""
    za, zb = (a - m) / s, (b - m) / s
    prob = _cdf(zb) - _cdf(za)
    moment = np.where(np.isfinite(za), (m - a) * prob, 0.0) + s * (_pdf(za) - _pdf(zb))
    return va * prob + np.where(d != 0, d * moment, 0.0)


def _below_tail(w0, lo, m, s, cost, slope):
    """E of the clipped lower extrapolation max(W₀ + slope·((μ−c)⁺ − (lo−c)⁺), 0) over μ < lo."""
    if lo <= cost or slope == 0:
        return np.maximum(w0, 0.0) * _cdf((lo - m) / s)
    vc = w0 - slope * (lo - cost)
    x0 = lo - w0 / slope
    part_zero = _segment(m, s, np.maximum(x0, cost), lo, np.maximum(vc, 0.0), slope)
    part_const = np.maximum(vc, 0.0) * _cdf((cost - m) / s)
    return np.where(w0 <= 0, 0.0, part_zero + part_const)


def _above_tail(wn, hi, m, s, cost, slope):
    """E of the upper extrapolation W_n + slope·((μ−c)⁺ − (hi−c)⁺) over μ > hi."""
    if hi >= cost:
        return _segment(m, s, hi, np.inf, wn, slope)
    return _segment(m, s, hi, cost, wn, 0.0) + _segment(m, s, cost, np.inf, wn, slope)


def _column_expectation(W, mu_grid, col, m, s, cost, slope):
    """E[W(X, β_col)] over X ~ N(m, s²) for per-state columns ``col``."""
    V = W[:, col].T                                       # states × knots
    z = (mu_grid[None, :] - m[:, None]) / s[:, None]
    cdf, pdf = _cdf(z), _pdf(z)
    prob = cdf[:, 1:] - cdf[:, :-1]
    d = np.diff(V, axis=1) / np.diff(mu_grid)[None, :]
    moment = (m[:, None] - mu_grid[None, :-1]) * prob + s[:, None] * (pdf[:, :-1] - pdf[:, 1:])
    inside = np.sum(V[:, :-1] * prob + d * moment, axis=1)
    lo, hi = mu_grid[0], mu_grid[-1]
    return (inside + _below_tail(V[:, 0], lo, m, s, cost, slope)
            + _above_tail(V[:, -1], hi, m, s, cost, slope))


def _exact_expectation(W, mu_grid, log_beta_grid, m, s, beta, cost, slope):
    """E[W(μ + sZ, β)] for the interpolant, exactly; β finite and s > 0."""
    nb = log_beta_grid.shape[0]
    lb0, lbt = log_beta_grid[0], log_beta_grid[nb - 1]
    hb = (lbt - lb0) / (nb - 1)
    lb = np.log(beta)
    j = np.clip(np.floor((lb - lb0) / hb), 0, nb - 2).astype(np.intp)
    u = np.clip((lb - log_beta_grid[j]) / (log_beta_grid[j + 1] - log_beta_grid[j]), 0.0, 1.0)
    top = lb >= lbt
    ratio = np.where(top, np.exp(lbt) / beta, 0.0)
    col_a = np.where(top, nb - 1, j)
    coef_a = np.where(top, ratio, 1.0 - u)
    coef_b = np.where(top, 0.0, u)
    out = coef_a * _column_expectation(W, mu_grid, col_a, m, s, cost, slope)
    out += coef_b * _column_expectation(W, mu_grid, j + 1, m, s, cost, slope)
    closed = _segment(m, s, cost, np.inf, 0.0, slope)
    return out + np.where(top, 1.0 - ratio, 0.0) * closed


def _interp_mu(W, mu_grid, cols, m, cost, slope):
    n = mu_grid.shape[0]
    lo, hi = mu_grid[0], mu_grid[n - 1]
    i = np.clip(np.searchsorted(mu_grid, m, side="right") - 1, 0, n - 2)
    t = (m - mu_grid[i]) / (mu_grid[i + 1] - mu_grid[i])
    inside = (1.0 - t) * W[i, cols] + t * W[i + 1, cols]
    below = W[0, cols] + slope * (np.maximum(m - cost, 0.0) - max(lo - cost, 0.0))
    above = W[n - 1, cols] + slope * (np.maximum(m - cost, 0.0) - max(hi - cost, 0.0))
    out = np.where(m <= lo, np.maximum(below, 0.0), inside)
    return np.where(m >= hi, above, out)


def interpolate(W, mu_grid, log_beta_grid, mu, beta, cost, slope):
    """W evaluated at arbitrary (μ, β) points (arrays of equal shape)."""
    mu = np.asarray(mu, dtype=float)
    beta = np.asarray(beta, dtype=float)
    shape = np.broadcast(mu, beta).shape
    mu = np.broadcast_to(mu, shape).ravel()
    beta = np.broadcast_to(beta, shape).ravel()
    nb = log_beta_grid.shape[0]
    lb0, lbt = log_beta_grid[0], log_beta_grid[nb - 1]
    hb = (lbt - lb0) / (nb - 1)

    finite = np.isfinite(beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        lb = np.where(finite, np.log(np.where(finite, beta, 1.0)), np.inf)
    j = np.clip(np.floor((lb - lb0) / hb), 0, nb - 2).astype(np.intp)
    u = (lb - log_beta_grid[j]) / (log_beta_grid[j + 1] - log_beta_grid[j])
    u = np.clip(u, 0.0, 1.0)

    v_lo = _interp_mu(W, mu_grid, j, mu, cost, slope)
    v_hi = _interp_mu(W, mu_grid, j + 1, mu, cost, slope)
    inside = (1.0 - u) * v_lo + u * v_hi

    closed = slope * np.maximum(mu - cost, 0.0)
    top = _interp_mu(W, mu_grid, np.full(mu.shape, nb - 1), mu, cost, slope)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.exp(lbt) / beta
    blended = ratio * top + (1.0 - ratio) * closed
    out = np.where(lb >= lbt, blended, inside)
    out = np.where(finite, out, closed)
    return out.reshape(shape)


def continuation(W, mu_grid, log_beta_grid, mu, beta, x, noise_scale, nodes, weights,
                 cost, slope):
    """E over the predictive observation of W at the updated belief.

    After forwarding an item of magnitude x > 0 the posterior precision is
    β + x²/λ² and the posterior mean is normal around μ with variance
    1/β − 1/(β + x²/λ²). For x = 0 nothing is learned. With ``nodes`` None
    the expectation of the interpolant is exact; otherwise the given
    normalized quadrature rule is used.
    """
    mu = np.asarray(mu, dtype=float)
    beta = np.asarray(beta, dtype=float)
    shape = np.broadcast(mu, beta).shape
    mu = np.broadcast_to(mu, shape).ravel()
    beta = np.broadcast_to(beta, shape).ravel()
    if x <= 0:
        return interpolate(W, mu_grid, log_beta_grid, mu, beta, cost, slope).reshape(shape)
    gain = x * x / (noise_scale * noise_scale)
    new_beta = beta + gain
    with np.errstate(divide="ignore", invalid="ignore"):
        spread = np.where(
            np.isfinite(beta), np.sqrt(np.maximum(1.0 / beta - 1.0 / new_beta, 0.0)), 0.0
        )
    if nodes is not None:
        pts = mu[:, None] + spread[:, None] * nodes[None, :]
        vals = interpolate(W, mu_grid, log_beta_grid, pts, new_beta[:, None], cost, slope)
        return (vals @ weights).reshape(shape)
    out = interpolate(W, mu_grid, log_beta_grid, mu, new_beta, cost, slope)
    live = spread > 0
    if live.any():
        out[live] = _exact_expectation(np.asarray(W, dtype=float), np.asarray(mu_grid, float),
                                       np.asarray(log_beta_grid, float), mu[live],
                                       spread[live], new_beta[live], cost, slope)
    return out.reshape(shape)
