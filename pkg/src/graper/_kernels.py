"""Compiled inner loops of the coordinate sweeps.

The coefficient updates are inherently sequential (each feature's update
feeds the next through the shared predictor cache), so they cannot be
vectorised; numba removes the per-feature interpreter overhead instead.
fastmath stays off: bit-for-bit reproducibility and exact IEEE ordering
matter more than the last factor of two.
"""

import math

import numba
import numpy as np


@numba.njit(cache=True)
def _expit(t):
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@numba.njit(cache=True)
def linear_sweep(X, dot_mat, v, mu, sigma2, psi, spike_var,
                 col_prec, wxty, w_scale, e_gamma_of, log_gamma_of,
                 odds_of, dense):
    """Spike-and-slab coordinate pass for the Gaussian-response model.

    ``dot_mat`` carries the precision weighting of the cross-term dot
    products (X itself for a scalar noise precision, the row-weighted
    copy for per-sample precisions); ``w_scale`` is the matching scalar
    factor. Mutates the per-feature arrays and the predictor cache v.
    """
    n, p = X.shape
    for j in range(p):
        gam = e_gamma_of[j]
        s2 = 1.0 / (col_prec[j] + gam)
        eb_old = psi[j] * mu[j]
        dot = 0.0
        for i in range(n):
            dot += dot_mat[i, j] * v[i]
        m = s2 * (wxty[j] - w_scale * dot + col_prec[j] * eb_old)
        if dense:
            ps = 1.0
        else:
            logit = odds_of[j] + 0.5 * (log_gamma_of[j] + math.log(s2)) \
                + 0.5 * m * m / s2
            ps = _expit(logit)
        mu[j] = m
        sigma2[j] = s2
        psi[j] = ps
        spike_var[j] = 1.0 / gam
        delta = ps * m - eb_old
        if delta != 0.0:
            for i in range(n):
                v[i] += delta * X[i, j]


@numba.njit(cache=True)
def logistic_sweep(X, hX, v, mu, sigma2, psi, spike_var,
                   col_curv, xty_half, e_gamma_of, log_gamma_of,
                   odds_of, dense, intercept_index):
    """Coordinate pass under the quadratic likelihood bound.

    ``hX`` is X row-weighted by the bound curvatures eta(xi_i);
    ``col_curv`` holds 2 * sum_i eta_i X_ij^2. The flat-prior intercept
    column (``intercept_index`` >= 0) gets no penalty and psi pinned to 1.
    """
    n, p_all = X.shape
    for j in range(p_all):
        flat = j == intercept_index
        gam = 0.0 if flat else e_gamma_of[j]
        s2 = 1.0 / (col_curv[j] + gam)
        eb_old = psi[j] * mu[j]
        dot = 0.0
        for i in range(n):
            dot += hX[i, j] * v[i]
        m = s2 * (xty_half[j] - 2.0 * dot + col_curv[j] * eb_old)
        if flat or dense:
            ps = 1.0
        else:
            logit = odds_of[j] + 0.5 * (log_gamma_of[j] + math.log(s2)) \
                + 0.5 * m * m / s2
            ps = _expit(logit)
        mu[j] = m
        sigma2[j] = s2
        psi[j] = ps
        if not flat:
            spike_var[j] = 1.0 / gam
        delta = ps * m - eb_old
        if delta != 0.0:
            for i in range(n):
                v[i] += delta * X[i, j]
