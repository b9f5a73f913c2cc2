# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled value-grid interpolation kernels.

Same contract as ``_kernels_py``; see that module for the extrapolation rules.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, exp, log, sqrt, floor, isfinite, INFINITY

cnp.import_array()

# knots farther than this many spreads from the mean carry < 1e-18 of the mass
cdef double ZMAX = 9.0
cdef double INV_SQRT2PI = 0.3989422804014327
cdef double INV_SQRT2 = 0.7071067811865476


cdef inline double _pos(double v) noexcept nogil:
    return v if v > 0.0 else 0.0


cdef inline Py_ssize_t _locate(const double[::1] mu_grid, double m) noexcept nogil:
    """Index i with mu_grid[i] <= m < mu_grid[i + 1] for m strictly inside the grid."""
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t top = mu_grid.shape[0] - 1
    cdef Py_ssize_t mid
    while top - i > 1:
        mid = (i + top) >> 1
        if mu_grid[mid] <= m:
            i = mid
        else:
            top = mid
    return i


cdef inline double _edge(const double[:, ::1] W, const double[::1] mu_grid,
                         Py_ssize_t col, double m, double cost, double slope) noexcept nogil:
    """W outside the μ grid: boundary value plus the no-learning slope."""
    cdef Py_ssize_t n = mu_grid.shape[0]
    cdef double v
    if m >= mu_grid[n - 1]:
        return W[n - 1, col] + slope * (_pos(m - cost) - _pos(mu_grid[n - 1] - cost))
    v = W[0, col] + slope * (_pos(m - cost) - _pos(mu_grid[0] - cost))
    return v if v > 0.0 else 0.0


cdef inline double _interp(const double[:, ::1] W, const double[::1] mu_grid,
                           const double[::1] lbg, double m, double beta,
                           double cost, double slope) noexcept nogil:
    cdef Py_ssize_t n = mu_grid.shape[0]
    cdef Py_ssize_t nb = lbg.shape[0]
    cdef double lb0 = lbg[0]
    cdef double lbt = lbg[nb - 1]
    cdef double hb = (lbt - lb0) / (nb - 1)
    cdef bint outside = m <= mu_grid[0] or m >= mu_grid[n - 1]
    cdef double lb, u, t, ratio, v_lo, v_hi
    cdef Py_ssize_t i = 0, j
    if not isfinite(beta):
        return slope * _pos(m - cost)
    if not outside:
        i = _locate(mu_grid, m)
        t = (m - mu_grid[i]) / (mu_grid[i + 1] - mu_grid[i])
    lb = log(beta)
    if lb >= lbt:
        if outside:
            v_hi = _edge(W, mu_grid, nb - 1, m, cost, slope)
        else:
            v_hi = (1.0 - t) * W[i, nb - 1] + t * W[i + 1, nb - 1]
        ratio = exp(lbt) / beta
        return ratio * v_hi + (1.0 - ratio) * slope * _pos(m - cost)
    j = <Py_ssize_t>floor((lb - lb0) / hb)
    if j < 0:
        j = 0
    elif j > nb - 2:
        j = nb - 2
    u = (lb - lbg[j]) / (lbg[j + 1] - lbg[j])
    if u < 0.0:
        u = 0.0
    elif u > 1.0:
        u = 1.0
    if outside:
        v_lo = _edge(W, mu_grid, j, m, cost, slope)
        v_hi = _edge(W, mu_grid, j + 1, m, cost, slope)
    else:
        v_lo = (1.0 - t) * W[i, j] + t * W[i + 1, j]
        v_hi = (1.0 - t) * W[i, j + 1] + t * W[i + 1, j + 1]
    return (1.0 - u) * v_lo + u * v_hi


def interpolate(W, mu_grid, log_beta_grid, mu, beta, double cost, double slope):
    mu_b, beta_b = np.broadcast_arrays(np.asarray(mu, dtype=float),
                                       np.asarray(beta, dtype=float))
    shape = mu_b.shape
    cdef const double[:, ::1] Wv = np.ascontiguousarray(W, dtype=float)
    cdef const double[::1] mg = np.ascontiguousarray(mu_grid, dtype=float)
    cdef const double[::1] lbg = np.ascontiguousarray(log_beta_grid, dtype=float)
    cdef const double[::1] m = np.ascontiguousarray(mu_b, dtype=float).ravel()
    cdef const double[::1] b = np.ascontiguousarray(beta_b, dtype=float).ravel()
    out = np.empty(m.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t k
    with nogil:
        for k in range(m.shape[0]):
            o[k] = _interp(Wv, mg, lbg, m[k], b[k], cost, slope)
    return out.reshape(shape)


cdef inline double _cdf(double z) noexcept nogil:
    return 0.5 * erfc(-z * INV_SQRT2)


cdef inline double _pdf(double z) noexcept nogil:
    return INV_SQRT2PI * exp(-0.5 * z * z) if isfinite(z) else 0.0


cdef inline double _segment(double m, double s, double a, double b, double va,
                            double d) noexcept nogil:
    """E[(va + d·(X − a))·1{a < X < b}] for X ~ N(m, s²); a = −∞ needs d = 0."""
    cdef double za = (a - m) / s
    cdef double zb = (b - m) / s
    cdef double prob = _cdf(zb) - _cdf(za)
    if d == 0.0:
        return va * prob
    return va * prob + d * ((m - a) * prob + s * (_pdf(za) - _pdf(zb)))


cdef inline double _below_tail(double w0, double lo, double m, double s, double cost,
                               double slope) noexcept nogil:
    cdef double vc, x0
    if lo <= cost or slope == 0.0:
        return _pos(w0) * _cdf((lo - m) / s)
    if w0 <= 0.0:
        return 0.0
    vc = w0 - slope * (lo - cost)
    x0 = lo - w0 / slope
    if x0 >= cost:
        return _segment(m, s, x0, lo, 0.0, slope)
    return _segment(m, s, cost, lo, vc, slope) + vc * _cdf((cost - m) / s)


cdef inline double _above_tail(double wn, double hi, double m, double s, double cost,
                               double slope) noexcept nogil:
    if hi >= cost:
        return _segment(m, s, hi, INFINITY, wn, slope)
    return _segment(m, s, hi, cost, wn, 0.0) + _segment(m, s, cost, INFINITY, wn, slope)


cdef double _exact(const double[:, ::1] W, const double[::1] mu_grid,
                   const double[::1] lbg, double m, double s, double beta, double cost,
                   double slope, double[::1] cdf, double[::1] pdf) noexcept nogil:
    """E[W(m + sZ, β)] for the interpolant, exactly (knots beyond ±ZMAX·s pruned)."""
    cdef Py_ssize_t n = mu_grid.shape[0]
    cdef Py_ssize_t nb = lbg.shape[0]
    cdef double lb0 = lbg[0]
    cdef double lbt = lbg[nb - 1]
    cdef double hb = (lbt - lb0) / (nb - 1)
    cdef double lb = log(beta)
    cdef double ca, cb, cc, u, z, prob, va, vb, d, acc
    cdef Py_ssize_t ja, jb, j, i, i_lo, i_hi
    if lb >= lbt:
        ja = nb - 1
        jb = nb - 1
        ca = exp(lbt) / beta
        cb = 0.0
        cc = 1.0 - ca
    else:
        j = <Py_ssize_t>floor((lb - lb0) / hb)
        if j < 0:
            j = 0
        elif j > nb - 2:
            j = nb - 2
        u = (lb - lbg[j]) / (lbg[j + 1] - lbg[j])
        if u < 0.0:
            u = 0.0
        elif u > 1.0:
            u = 1.0
        ja = j
        jb = j + 1
        ca = 1.0 - u
        cb = u
        cc = 0.0
    # knots that matter: the last one below m − ZMAX·s to the first above m + ZMAX·s
    if m - ZMAX * s <= mu_grid[0]:
        i_lo = 0
    else:
        i_lo = _locate(mu_grid, m - ZMAX * s) if m - ZMAX * s < mu_grid[n - 1] else n - 1
    if m + ZMAX * s >= mu_grid[n - 1]:
        i_hi = n - 1
    else:
        i_hi = _locate(mu_grid, m + ZMAX * s) + 1 if m + ZMAX * s > mu_grid[0] else 0
    for i in range(i_lo, i_hi + 1):
        z = (mu_grid[i] - m) / s
        cdf[i] = _cdf(z)
        pdf[i] = _pdf(z)
    acc = 0.0
    for i in range(i_lo, i_hi):
        prob = cdf[i + 1] - cdf[i]
        va = ca * W[i, ja] + cb * W[i, jb]
        vb = ca * W[i + 1, ja] + cb * W[i + 1, jb]
        d = (vb - va) / (mu_grid[i + 1] - mu_grid[i])
        acc = acc + va * prob + d * ((m - mu_grid[i]) * prob + s * (pdf[i] - pdf[i + 1]))
    if i_lo == 0:
        acc = acc + ca * _below_tail(W[0, ja], mu_grid[0], m, s, cost, slope)
        acc = acc + cb * _below_tail(W[0, jb], mu_grid[0], m, s, cost, slope)
    if i_hi == n - 1:
        acc = acc + ca * _above_tail(W[n - 1, ja], mu_grid[n - 1], m, s, cost, slope)
        acc = acc + cb * _above_tail(W[n - 1, jb], mu_grid[n - 1], m, s, cost, slope)
    if cc != 0.0:
        acc = acc + cc * _segment(m, s, cost, INFINITY, 0.0, slope)
    return acc


def continuation(W, mu_grid, log_beta_grid, mu, beta, double x, double noise_scale,
                 nodes, weights, double cost, double slope):
    mu_b, beta_b = np.broadcast_arrays(np.asarray(mu, dtype=float),
                                       np.asarray(beta, dtype=float))
    shape = mu_b.shape
    if x <= 0.0:
        return interpolate(W, mu_grid, log_beta_grid, mu_b, beta_b, cost, slope)
    cdef bint exact = nodes is None
    cdef const double[:, ::1] Wv = np.ascontiguousarray(W, dtype=float)
    cdef const double[::1] mg = np.ascontiguousarray(mu_grid, dtype=float)
    cdef const double[::1] lbg = np.ascontiguousarray(log_beta_grid, dtype=float)
    cdef const double[::1] m = np.ascontiguousarray(mu_b, dtype=float).ravel()
    cdef const double[::1] b = np.ascontiguousarray(beta_b, dtype=float).ravel()
    cdef const double[::1] z = np.ascontiguousarray(
        np.zeros(0) if exact else nodes, dtype=float)
    cdef const double[::1] w = np.ascontiguousarray(
        np.zeros(0) if exact else weights, dtype=float)
    cdef double[::1] cdf = np.empty(mg.shape[0])
    cdef double[::1] pdf = np.empty(mg.shape[0])
    out = np.empty(m.shape[0])
    cdef double[::1] o = out
    cdef double gain = x * x / (noise_scale * noise_scale)
    cdef double nb, spread, acc
    cdef Py_ssize_t k, q
    with nogil:
        for k in range(m.shape[0]):
            if not isfinite(b[k]):
                o[k] = slope * _pos(m[k] - cost)
                continue
            nb = b[k] + gain
            spread = 1.0 / b[k] - 1.0 / nb
            spread = sqrt(spread) if spread > 0.0 else 0.0
            if spread == 0.0:
                o[k] = _interp(Wv, mg, lbg, m[k], nb, cost, slope)
            elif exact:
                o[k] = _exact(Wv, mg, lbg, m[k], spread, nb, cost, slope, cdf, pdf)
            else:
                acc = 0.0
                for q in range(z.shape[0]):
                    acc = acc + w[q] * _interp(Wv, mg, lbg, m[k] + spread * z[q], nb,
                                               cost, slope)
                o[k] = acc
    return out.reshape(shape)
