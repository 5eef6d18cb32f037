"""Dense model with a full multivariate coefficient factor.

Keeping one p-variate normal for the coefficients captures their
posterior dependencies; the price is forming and inverting a p x p
precision matrix per iteration, reduced to an n x n inversion through
the Woodbury identity whenever n < p.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import GroupPartition, HyperPriors
from .exceptions import InputError, NumericalError
from .linear import (
    FitConfig,
    LOG_2PI,
    _gamma_entropy,
    _prepare,
    check_converged,
    summarize,
)
from .special import digamma
from scipy.special import gammaln


@dataclass
class MultivariateState:
    """Variational parameters of the dense multivariate fit."""

    mu: np.ndarray
    Sigma: np.ndarray
    alpha_gamma: np.ndarray
    beta_gamma: np.ndarray
    alpha_tau: float = 1.0
    beta_tau: float = 1.0
    logdet_sigma: float = 0.0
    xi: np.ndarray | None = None
    elbo_trace: list = field(default_factory=list)

    @property
    def psi(self):
        return np.ones(self.mu.shape[0])

    @property
    def sigma2(self):
        return np.diag(self.Sigma).copy()


def posterior_beta(X, sample_precision, rhs, prior_precision, method="auto"):
    """Moments of the normal coefficient factor N(mu, Sigma).

    Solves Sigma = (X^T W X + D)^-1 and mu = Sigma @ rhs with
    W = diag(sample_precision), D = diag(prior_precision). ``method``
    picks the direct p x p factorization or the Woodbury form that only
    factorizes an n x n matrix; "auto" uses Woodbury when n < p. Flat
    priors (zero entries in D) force the direct route because the
    Woodbury form needs D^-1.

    Returns (mu, Sigma, logdet Sigma).
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    w = np.broadcast_to(np.asarray(sample_precision, dtype=float), (n,))
    d = np.asarray(prior_precision, dtype=float)
    if np.any(w <= 0):
        raise InputError("sample precisions must be positive")
    if np.any(d < 0):
        raise InputError("prior precisions must be non-negative")
    if method == "auto":
        method = "woodbury" if (n < p and np.all(d > 0)) else "direct"
    if method == "woodbury" and np.any(d == 0):
        raise InputError("the Woodbury route requires positive prior precisions")

    if method == "direct":
        A = (X * w[:, None]).T @ X
        A[np.diag_indices_from(A)] += d
        try:
            factor = cho_factor(A, lower=True)
        except np.linalg.LinAlgError as err:
            raise NumericalError(f"coefficient precision not positive definite: {err}")
        Sigma = cho_solve(factor, np.eye(p))
        logdet = -2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    elif method == "woodbury":
        d_inv = 1.0 / d
        XDinv = X * d_inv[None, :]
        M = XDinv @ X.T
        M[np.diag_indices_from(M)] += 1.0 / w
        try:
            factor = cho_factor(M, lower=True)
        except np.linalg.LinAlgError as err:
            raise NumericalError(f"Woodbury inner matrix not positive definite: {err}")
        inner = cho_solve(factor, XDinv)
        Sigma = -XDinv.T @ inner
        Sigma[np.diag_indices_from(Sigma)] += d_inv
        logdet = -(
            float(np.sum(np.log(d)))
            + float(np.sum(np.log(w)))
            + 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
        )
    else:
        raise InputError(f"unknown solve method {method!r}")

    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = Sigma @ rhs
    return mu, Sigma, logdet


def update_beta_multivariate(state, X, y, e_gamma_of, method="auto"):
    """Coefficient factor update of the dense linear model:
    Sigma = (E[tau] X^T X + D)^-1, mu = E[tau] Sigma X^T y."""
    e_tau = state.alpha_tau / state.beta_tau
    rhs = e_tau * (X.T @ y)
    mu, Sigma, logdet = posterior_beta(X, e_tau, rhs, e_gamma_of, method=method)
    state.mu = mu
    state.Sigma = Sigma
    state.logdet_sigma = logdet
    return mu, Sigma


def _elbo_multivariate(state, y, groups, hyper, eres):
    n = y.shape[0]
    p = state.mu.shape[0]
    assignment = groups.assignment
    e_tau = state.alpha_tau / state.beta_tau
    e_log_tau = digamma(state.alpha_tau) - math.log(state.beta_tau)
    e_gamma = state.alpha_gamma / state.beta_gamma
    e_log_gamma = digamma(state.alpha_gamma) - np.log(state.beta_gamma)
    e_beta2 = state.mu**2 + np.diag(state.Sigma)

    loglik = 0.5 * n * e_log_tau - 0.5 * e_tau * eres - 0.5 * n * LOG_2PI
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
    tau_prior = (hyper.r_tau - 1.0) * e_log_tau - hyper.d_tau * e_tau \
        - gammaln(hyper.r_tau) + hyper.r_tau * math.log(hyper.d_tau)
    beta_entropy = 0.5 * p * (LOG_2PI + 1.0) + 0.5 * state.logdet_sigma
    elbo = (
        loglik
        + b_prior
        + gamma_prior
        + tau_prior
        + beta_entropy
        + float(_gamma_entropy(state.alpha_gamma, state.beta_gamma))
        + float(_gamma_entropy(np.array([state.alpha_tau]), np.array([state.beta_tau])))
    )
    if not np.isfinite(elbo):
        raise NumericalError(f"non-finite evidence lower bound {elbo}")
    return float(elbo)


def fit_linear_multivariate(data, groups=None, hyper=None, config=None):
    """Dense linear fit with the non-factorized coefficient distribution.

    Spike-and-slab is only derived for the factorized family, so this
    requires ``dense_only``.
    """
    hyper = hyper or HyperPriors()
    config = config or FitConfig()
    if not config.dense_only:
        raise InputError(
            "the multivariate factorization supports only the dense model; "
            "enable dense_only (--dense on the command line)"
        )
    if groups is None:
        groups = GroupPartition.single_group(data.n_features)
    X, y, transform = _prepare(data, groups, config)
    n, p = X.shape
    XtX = X.T @ X
    yty = float(y @ y)

    state = MultivariateState(
        mu=np.zeros(p),
        Sigma=np.eye(p),
        alpha_gamma=np.ones(groups.n_groups),
        beta_gamma=np.ones(groups.n_groups),
        alpha_tau=1.0,
        beta_tau=1.0,
    )

    converged = False
    for iteration in range(config.max_iter):
        e_gamma = state.alpha_gamma / state.beta_gamma
        update_beta_multivariate(state, X, y, e_gamma[groups.assignment])
        resid = y - X @ state.mu
        eres = float(resid @ resid) + float(np.vdot(XtX, state.Sigma))
        state.alpha_tau = hyper.r_tau + 0.5 * n
        state.beta_tau = hyper.d_tau + 0.5 * eres
        if not (np.isfinite(state.beta_tau) and state.beta_tau > 0):
            raise NumericalError(
                f"noise precision update produced rate {state.beta_tau}", iteration
            )
        e_beta2 = state.mu**2 + np.diag(state.Sigma)
        state.alpha_gamma = hyper.r_gamma + 0.5 * groups.group_sizes
        state.beta_gamma = hyper.d_gamma + 0.5 * groups.group_sum(e_beta2)
        try:
            elbo = _elbo_multivariate(state, y, groups, hyper, eres)
        except NumericalError as err:
            raise NumericalError(str(err), iteration) from None
        state.elbo_trace.append(elbo)
        if check_converged(state.elbo_trace, config.elbo_rel_tol):
            converged = True
            break

    summary = summarize(
        state, groups, transform, data.feature_names,
        model="linear", factorization="multivariate", dense=True,
        converged=converged,
    )
    return summary, state


__all__ = [
    "MultivariateState",
    "posterior_beta",
    "update_beta_multivariate",
    "fit_linear_multivariate",
]
