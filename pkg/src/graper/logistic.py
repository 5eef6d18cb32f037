"""Binary-response fitting through a quadratic lower bound on the sigmoid.

The likelihood sigma((2y-1) x^T beta) is bounded below by a Gaussian-shaped
function with one curvature parameter xi_i per sample, which restores
conjugacy; the coefficient updates then mirror the linear model with the
scalar noise precision replaced by per-sample precisions 2*eta(xi_i).
The tracked objective is the corresponding lower bound on the evidence
lower bound, so absolute values are not comparable to linear-model ELBOs.
"""

import math

import numpy as np
from scipy.special import betaln, expit, gammaln

from ._kernels import logistic_sweep
from .core import GroupPartition, HyperPriors, initial_state
from .exceptions import InputError, NumericalError
from .linear import (
    FitConfig,
    LOG_2PI,
    _beta_entropy,
    _gamma_entropy,
    _prepare,
    bernoulli_entropy,
    check_converged,
    make_rng,
    summarize,
)
from .multivariate import MultivariateState, posterior_beta
from .special import digamma

# Below this point the closed form of eta loses digits to cancellation;
# the quartic Taylor polynomial is exact to ~1e-20 there.
_ETA_TAYLOR_CUTOFF = 1e-4


def sigmoid(z):
    return expit(z)


def eta(xi):
    """Curvature eta(xi) = (sigma(xi) - 1/2) / (2 xi) of the quadratic bound.

    Continuous at 0 with value 1/8; strictly decreasing on [0, inf).
    """
    arr = np.asarray(xi, dtype=float)
    if np.any(arr < 0):
        raise InputError("xi must be non-negative")
    small = arr < _ETA_TAYLOR_CUTOFF
    safe = np.where(small, 1.0, arr)
    closed = (expit(safe) - 0.5) / (2.0 * safe)
    sq = arr * arr
    taylor = 0.125 - sq / 96.0 + sq * sq / 960.0
    out = np.where(small, taylor, closed)
    if np.isscalar(xi) or np.ndim(xi) == 0:
        return float(out)
    return out


def pseudo_response(y, eta_values):
    """Pseudo-data under which the bounded likelihood is Gaussian:
    y~_i = (2 y_i - 1) / (4 eta(xi_i)), with precision 2 eta(xi_i)."""
    return (2.0 * np.asarray(y, dtype=float) - 1.0) / (4.0 * eta_values)


def sigmoid_lower_bound(z, xi):
    """Quadratic-in-z lower bound on sigma(z), tight at |z| = xi."""
    z = np.asarray(z, dtype=float)
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr < 0):
        raise InputError("xi must be non-negative")
    val = expit(xi_arr) * np.exp(0.5 * (z - xi_arr) - eta(xi_arr) * (z * z - xi_arr * xi_arr))
    if np.isscalar(z) and np.isscalar(xi):
        return float(val)
    return val


def sweep_coefficients_logistic(X, y, eta_values, state, groups, e_gamma,
                                e_log_odds, *, dense=False, intercept_index=None,
                                xty_half=None):
    """One in-place pass of the coefficient updates under the quadratic bound.

    Direct evaluation of the bound's own normal-equation form: curvature
    2 * sum_i eta_i X_ij^2 plus the slab precision, linear term
    X_j^T (y - 1/2) minus the eta-weighted cross-feature term taken from
    the cached predictor ``state.v``. The inclusion-odds update is the
    same expression as in the linear model.

    An ``intercept_index`` column receives no penalty (flat prior) and a
    fixed inclusion probability of one.
    """
    n, p_all = X.shape
    assignment = groups.assignment
    e_gamma_of = np.zeros(p_all)
    e_gamma_of[: assignment.size] = e_gamma[assignment]
    with np.errstate(divide="ignore"):
        log_gamma_of = np.log(e_gamma_of)
    odds_of = np.zeros(p_all)
    if not dense:
        odds_of[: assignment.size] = e_log_odds[assignment]
    if xty_half is None:
        xty_half = X.T @ (y - 0.5)

    hX = np.asfortranarray(X * eta_values[:, None])
    col_curv = 2.0 * np.einsum("ij,ij->j", X, hX)

    logistic_sweep(
        X, hX, state.v, state.mu, state.sigma2, state.psi, state.spike_var,
        col_curv, xty_half, e_gamma_of, log_gamma_of, odds_of, dense,
        -1 if intercept_index is None else intercept_index,
    )


def coefficient_variances(state):
    """Marginal variances of beta_j = s_j b_j under the factorized state."""
    return state.psi * state.sigma2 + state.psi * (1.0 - state.psi) * state.mu**2


def update_xi_factorized(state, X_sq):
    """xi_i = sqrt(E[(x_i^T beta)^2]) with the diagonal coefficient covariance."""
    second_moment = state.v**2 + X_sq @ coefficient_variances(state)
    if np.any(second_moment < 0):
        raise NumericalError("negative second moment in the xi update")
    state.xi = np.sqrt(second_moment)


def update_xi_multivariate(state, X):
    lin = X @ state.mu
    quad = np.einsum("ij,ij->i", X @ state.Sigma, X)
    second_moment = lin**2 + quad
    if np.any(second_moment < 0):
        raise NumericalError("negative second moment in the xi update")
    state.xi = np.sqrt(second_moment)


def expected_bound_loglik(y, xi, eta_values, lin_mean, lin_second_moment):
    """Expectation of the quadratic likelihood bound under the current state.

    ``lin_mean`` is E[x_i^T beta], ``lin_second_moment`` is E[(x_i^T beta)^2].
    """
    return float(
        np.sum(
            (y - 0.5) * lin_mean
            - eta_values * lin_second_moment
            + np.log(expit(xi))
            - 0.5 * xi
            + eta_values * xi * xi
        )
    )


def compute_logistic_bound(state, X, y, X_sq, groups, hyper, *, dense=False,
                           intercept_index=None):
    """Tracked objective of the factorized logistic fit (bound on the ELBO)."""
    assignment = groups.assignment
    p = assignment.size
    eta_values = eta(state.xi)
    second_moment = state.v**2 + X_sq @ coefficient_variances(state)
    loglik = expected_bound_loglik(y, state.xi, eta_values, state.v, second_moment)

    e_gamma = state.alpha_gamma / state.beta_gamma
    e_log_gamma = digamma(state.alpha_gamma) - np.log(state.beta_gamma)
    psi_feat = state.psi[:p]
    e_b2 = (1.0 - psi_feat) * state.spike_var[:p] \
        + psi_feat * (state.mu[:p] ** 2 + state.sigma2[:p])
    b_prior = float(
        np.sum(0.5 * e_log_gamma[assignment] - 0.5 * e_gamma[assignment] * e_b2)
    ) - 0.5 * p * LOG_2PI
    gamma_prior = float(
        np.sum(
            (hyper.r_gamma - 1.0) * e_log_gamma
            - hyper.d_gamma * e_gamma
            - gammaln(hyper.r_gamma)
            + hyper.r_gamma * math.log(hyper.d_gamma)
        )
    )

    slab_entropy = 0.5 * (LOG_2PI + 1.0) + 0.5 * np.log(state.sigma2[:p])
    if dense:
        s_prior = 0.0
        pi_prior = 0.0
        pi_entropy = 0.0
        coef_entropy = float(np.sum(slab_entropy))
    else:
        e_log_pi = digamma(state.alpha_pi) - digamma(state.alpha_pi + state.beta_pi)
        e_log_1mpi = digamma(state.beta_pi) - digamma(state.alpha_pi + state.beta_pi)
        s_prior = float(
            np.sum(
                psi_feat * e_log_pi[assignment]
                + (1.0 - psi_feat) * e_log_1mpi[assignment]
            )
        )
        pi_prior = float(
            np.sum(
                (hyper.d_pi - 1.0) * e_log_pi
                + (hyper.r_pi - 1.0) * e_log_1mpi
                - betaln(hyper.d_pi, hyper.r_pi)
            )
        )
        spike_entropy = 0.5 * (LOG_2PI + 1.0) + 0.5 * np.log(state.spike_var[:p])
        coef_entropy = float(
            np.sum(
                bernoulli_entropy(psi_feat)
                + psi_feat * slab_entropy
                + (1.0 - psi_feat) * spike_entropy
            )
        )
        pi_entropy = float(_beta_entropy(state.alpha_pi, state.beta_pi))
    if intercept_index is not None:
        coef_entropy += 0.5 * (LOG_2PI + 1.0) \
            + 0.5 * math.log(state.sigma2[intercept_index])

    bound = (
        loglik
        + b_prior
        + s_prior
        + gamma_prior
        + pi_prior
        + coef_entropy
        + float(_gamma_entropy(state.alpha_gamma, state.beta_gamma))
        + pi_entropy
    )
    if not np.isfinite(bound):
        raise NumericalError(f"non-finite bound objective {bound}")
    return float(bound)


def fit_logistic(data, groups=None, hyper=None, config=None, factorization="factorized"):
    """Fit the logistic model; the noise precision has no role here.

    Each sweep updates the inclusion fractions, coefficients and slab
    precisions as exact coordinate steps under the bounded joint, then
    re-tightens the per-sample bound parameters xi, so the tracked
    objective is non-decreasing.
    """
    data.require_binary_response()
    hyper = hyper or HyperPriors()
    config = config or FitConfig()
    if groups is None:
        groups = GroupPartition.single_group(data.n_features)
    if factorization == "multivariate":
        return _fit_logistic_multivariate(data, groups, hyper, config)
    if factorization != "factorized":
        raise InputError(f"unknown factorization {factorization!r}")

    X, y, transform = _prepare(data, groups, config, binary=True)
    n, p = X.shape
    dense = config.dense_only
    intercept_index = p if config.intercept else None
    X_all = np.asfortranarray(np.column_stack([X, np.ones(n)])) if config.intercept else X
    p_all = X_all.shape[1]
    X_sq = X_all * X_all
    xty_half = X_all.T @ (y - 0.5)

    rng = make_rng(config.seed)
    state = initial_state(p_all, groups.n_groups, hyper, rng, n_samples=n, logistic=True)
    state.v = X_all @ state.e_beta()

    converged = False
    for iteration in range(config.max_iter):
        if not dense:
            # Only real features enter the inclusion-fraction update.
            included = groups.group_sum(state.psi[:p])
            state.alpha_pi = hyper.d_pi + included
            state.beta_pi = hyper.r_pi + (groups.group_sizes - included)
        e_gamma = state.alpha_gamma / state.beta_gamma
        e_log_odds = digamma(state.alpha_pi) - digamma(state.beta_pi)
        eta_values = eta(state.xi)
        sweep_coefficients_logistic(
            X_all, y, eta_values, state, groups, e_gamma, e_log_odds,
            dense=dense, intercept_index=intercept_index, xty_half=xty_half,
        )
        state.v = X_all @ state.e_beta()
        psi_feat = state.psi[:p]
        e_b2 = (1.0 - psi_feat) * state.spike_var[:p] \
            + psi_feat * (state.mu[:p] ** 2 + state.sigma2[:p])
        state.alpha_gamma = hyper.r_gamma + 0.5 * groups.group_sizes
        state.beta_gamma = hyper.d_gamma + 0.5 * groups.group_sum(e_b2)
        update_xi_factorized(state, X_sq)
        try:
            objective = compute_logistic_bound(
                state, X_all, y, X_sq, groups, hyper,
                dense=dense, intercept_index=intercept_index,
            )
        except NumericalError as err:
            raise NumericalError(str(err), iteration) from None
        state.elbo_trace.append(objective)
        if check_converged(state.elbo_trace, config.elbo_rel_tol):
            converged = True
            break

    intercept_term = float(state.mu[intercept_index]) if config.intercept else 0.0
    summary = summarize(
        state, groups, transform, data.feature_names,
        model="logistic", factorization="factorized", dense=dense,
        converged=converged,
        beta_hat=(state.psi * state.mu)[:p],
        psi=state.psi[:p].copy(),
        intercept_term=intercept_term,
    )
    return summary, state


def _fit_logistic_multivariate(data, groups, hyper, config):
    if not config.dense_only:
        raise InputError(
            "the multivariate factorization supports only the dense model; "
            "enable dense_only (--dense on the command line)"
        )
    X, y, transform = _prepare(data, groups, config, binary=True)
    n, p = X.shape
    intercept_index = p if config.intercept else None
    X_all = np.column_stack([X, np.ones(n)]) if config.intercept else X
    p_all = X_all.shape[1]
    xty_half = X_all.T @ (y - 0.5)

    state = MultivariateState(
        mu=np.zeros(p_all),
        Sigma=np.eye(p_all),
        alpha_gamma=np.ones(groups.n_groups),
        beta_gamma=np.ones(groups.n_groups),
        xi=np.ones(n),
    )

    converged = False
    for iteration in range(config.max_iter):
        e_gamma = state.alpha_gamma / state.beta_gamma
        prior_prec = np.zeros(p_all)
        prior_prec[:p] = e_gamma[groups.assignment]
        eta_values = eta(state.xi)
        mu, Sigma, logdet = posterior_beta(
            X_all, 2.0 * eta_values, xty_half, prior_prec
        )
        state.mu, state.Sigma, state.logdet_sigma = mu, Sigma, logdet
        e_beta2 = state.mu[:p] ** 2 + np.diag(state.Sigma)[:p]
        state.alpha_gamma = hyper.r_gamma + 0.5 * groups.group_sizes
        state.beta_gamma = hyper.d_gamma + 0.5 * groups.group_sum(e_beta2)
        update_xi_multivariate(state, X_all)
        try:
            objective = _logistic_multivariate_bound(
                state, X_all, y, groups, hyper, p
            )
        except NumericalError as err:
            raise NumericalError(str(err), iteration) from None
        state.elbo_trace.append(objective)
        if check_converged(state.elbo_trace, config.elbo_rel_tol):
            converged = True
            break

    intercept_term = float(state.mu[intercept_index]) if config.intercept else 0.0
    summary = summarize(
        state, groups, transform, data.feature_names,
        model="logistic", factorization="multivariate", dense=True,
        converged=converged,
        beta_hat=state.mu[:p].copy(),
        psi=np.ones(p),
        intercept_term=intercept_term,
    )
    return summary, state


def _logistic_multivariate_bound(state, X, y, groups, hyper, p):
    assignment = groups.assignment
    p_all = state.mu.shape[0]
    eta_values = eta(state.xi)
    lin = X @ state.mu
    quad = np.einsum("ij,ij->i", X @ state.Sigma, X)
    loglik = expected_bound_loglik(y, state.xi, eta_values, lin, lin**2 + quad)

    e_gamma = state.alpha_gamma / state.beta_gamma
    e_log_gamma = digamma(state.alpha_gamma) - np.log(state.beta_gamma)
    e_beta2 = state.mu[:p] ** 2 + np.diag(state.Sigma)[:p]
    b_prior = float(
        np.sum(0.5 * e_log_gamma[assignment] - 0.5 * e_gamma[assignment] * e_beta2)
    ) - 0.5 * p * LOG_2PI
    gamma_prior = float(
        np.sum(
            (hyper.r_gamma - 1.0) * e_log_gamma
            - hyper.d_gamma * e_gamma
            - gammaln(hyper.r_gamma)
            + hyper.r_gamma * math.log(hyper.d_gamma)
        )
    )
    beta_entropy = 0.5 * p_all * (LOG_2PI + 1.0) + 0.5 * state.logdet_sigma
    bound = (
        loglik
        + b_prior
        + gamma_prior
        + beta_entropy
        + float(_gamma_entropy(state.alpha_gamma, state.beta_gamma))
    )
    if not np.isfinite(bound):
        raise NumericalError(f"non-finite bound objective {bound}")
    return float(bound)


def predict_logistic(summary, X_new, classify=False):
    """Event probabilities sigma(intercept + x^T beta); optionally 0/1 labels."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[1] != summary.beta_hat_original.shape[0]:
        raise InputError(
            f"expected {summary.beta_hat_original.shape[0]} feature columns, "
            f"got shape {X_new.shape}"
        )
    probs = expit(summary.intercept + X_new @ summary.beta_hat_original)
    if classify:
        return (probs > 0.5).astype(int)
    return probs


__all__ = [
    "eta",
    "sigmoid",
    "sigmoid_lower_bound",
    "pseudo_response",
    "sweep_coefficients_logistic",
    "update_xi_factorized",
    "update_xi_multivariate",
    "compute_logistic_bound",
    "fit_logistic",
    "predict_logistic",
]
