"""Coordinate-ascent variational inference for the linear model.

One outer iteration sweeps the factors in a fixed order: group inclusion
fractions, per-feature coefficient factors, noise precision, group slab
precisions, then the evidence lower bound. Every step is an exact
coordinate maximisation, so the bound never decreases within a run.

Plain coordinate ascent on this posterior is multimodal: when the
response variance dwarfs the initial noise guess, the precision factor
can lock into a basin where moderate signals stay spiked out. The
default fitting scheme therefore runs a short continuation ladder --
coordinate ascent with the noise precision held at a grid of
signal-to-noise levels, released into the ordinary loop -- and keeps the
solution with the best bound, followed by a per-group slab-precision
polish along the known degenerate direction of emptied groups. Each
candidate run is untouched coordinate ascent; the ladder only chooses
the starting point, and the reported trace is the winning run's.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln

from ._kernels import linear_sweep
from .core import (
    FitSummary,
    GroupPartition,
    HyperPriors,
    initial_state,
)
from .exceptions import InputError, NumericalError
from .preprocess import fit_transform, identity_transform
from .special import digamma

LOG_2PI = math.log(2.0 * math.pi)
# Inclusion probabilities are clamped only inside entropy evaluation,
# never in the state itself.
PSI_ENTROPY_FLOOR = 1e-12

# Continuation ladder: noise-precision clamps as multiples of the
# null-model precision n / ||y||^2, and the cap on clamped sweeps.
LADDER_STEPS = tuple(4.0**k for k in range(8))
CLAMP_MAX_SWEEPS = 300
# Basin-hopping moves from the incumbent: re-examine features at boosted
# noise precision, and re-anchor near-flat slab precisions.
BOOST_MULTIPLIERS = (2.0, 4.0, 8.0)
REFINE_ROUNDS = 4


@dataclass
class FitConfig:
    """Knobs of the optimisation loop; the model itself lives in the priors.

    ``init_scheme`` selects between the robust continuation ladder
    ("ladder", the default) and a single run of the bare update loop
    ("plain", useful for timing fixed sweep counts).
    """

    max_iter: int = 3000
    elbo_rel_tol: float = 1e-5
    seed: int = 0
    dense_only: bool = False
    standardize: bool = True
    intercept: bool = True
    init_scheme: str = "ladder"

    def __post_init__(self):
        if self.max_iter < 1:
            raise InputError("max_iter must be at least 1")
        if not self.elbo_rel_tol > 0:
            raise InputError("elbo_rel_tol must be positive")
        if self.init_scheme not in ("ladder", "plain"):
            raise InputError("init_scheme must be 'ladder' or 'plain'")


def make_rng(seed):
    """Counter-based generator; replicate r of a study uses key seed + r."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def sweep_coefficients(X, y, noise_precision, state, groups, e_gamma,
                       e_log_odds, *, dense=False, col_sq=None, xty=None):
    """One in-place pass of the spike-and-slab coefficient updates, j = 1..p.

    ``noise_precision`` is the scalar E[tau], or an n-vector of per-sample
    precisions for the heteroscedastic form the logistic pseudo-response
    reduces to. The cached linear predictor ``state.v`` supplies the
    cross-feature term, which keeps the whole sweep O(n*p); it must be in
    sync with psi * mu on entry and is updated feature by feature.
    """
    n, p = X.shape
    assignment = groups.assignment
    e_gamma_of = np.ascontiguousarray(e_gamma[assignment], dtype=float)
    log_gamma_of = np.log(e_gamma_of)
    if dense:
        odds_of = np.zeros(p)
    else:
        odds_of = np.ascontiguousarray(e_log_odds[assignment], dtype=float)

    w = np.asarray(noise_precision, dtype=float)
    if w.ndim == 0:
        if col_sq is None:
            col_sq = np.einsum("ij,ij->j", X, X)
        if xty is None:
            xty = X.T @ y
        dot_mat = X
        w_scale = float(w)
        col_prec = w_scale * col_sq
        wxty = w_scale * xty
    elif w.shape == (n,):
        dot_mat = np.asfortranarray(X * w[:, None])
        w_scale = 1.0
        col_prec = np.einsum("ij,ij->j", X, dot_mat)
        wxty = dot_mat.T @ y
    else:
        raise InputError("noise precision must be a scalar or one value per sample")

    linear_sweep(
        X, dot_mat, state.v, state.mu, state.sigma2, state.psi,
        state.spike_var, col_prec, wxty, w_scale, e_gamma_of, log_gamma_of,
        odds_of, dense,
    )


def update_pi(state, groups, hyper):
    """Beta factors of the group inclusion fractions from the current psi."""
    included = groups.group_sum(state.psi)
    state.alpha_pi = hyper.d_pi + included
    state.beta_pi = hyper.r_pi + (groups.group_sizes - included)


def expected_residual_sq(y, state, col_sq):
    """E||y - X beta||^2 via the synced predictor cache and per-feature
    coefficient variances; never materialises X^T X."""
    resid = y - state.v
    var_beta = state.psi * state.sigma2 \
        + state.psi * (1.0 - state.psi) * state.mu**2
    return float(resid @ resid + col_sq @ var_beta)


def update_tau(state, y, col_sq, hyper, iteration=None):
    """Gamma factor of the noise precision. Returns E||y - X beta||^2."""
    n = y.shape[0]
    eres = expected_residual_sq(y, state, col_sq)
    state.alpha_tau = hyper.r_tau + 0.5 * n
    state.beta_tau = hyper.d_tau + 0.5 * eres
    if not (np.isfinite(state.beta_tau) and state.beta_tau > 0):
        raise NumericalError(
            f"noise precision update produced rate {state.beta_tau}", iteration
        )
    return eres


def update_gamma(state, groups, hyper):
    """Gamma factors of the group slab precisions.

    The spike part of E[b^2] uses the spike variance each coefficient
    factor currently carries, i.e. the E[gamma] seen during the last
    coefficient sweep.
    """
    e_b2 = (1.0 - state.psi) * state.spike_var \
        + state.psi * (state.mu**2 + state.sigma2)
    sums = groups.group_sum(e_b2)
    state.alpha_gamma = hyper.r_gamma + 0.5 * groups.group_sizes
    state.beta_gamma = hyper.d_gamma + 0.5 * sums


def _gamma_entropy(alpha, beta):
    return np.sum(alpha - np.log(beta) + gammaln(alpha) + (1.0 - alpha) * digamma(alpha))


def _beta_entropy(alpha, beta):
    return np.sum(
        betaln(alpha, beta)
        - (alpha - 1.0) * digamma(alpha)
        - (beta - 1.0) * digamma(beta)
        + (alpha + beta - 2.0) * digamma(alpha + beta)
    )


def bernoulli_entropy(psi):
    ps = np.clip(psi, PSI_ENTROPY_FLOOR, 1.0 - PSI_ENTROPY_FLOOR)
    return -(1.0 - ps) * np.log1p(-ps) - ps * np.log(ps)


def compute_elbo_linear(state, y, groups, hyper, col_sq, *, dense=False, eres=None):
    """Evidence lower bound of the linear model under the current state.

    Sum of the expected log joint and the entropies of every factor. The
    coefficient entropy decomposes as the Bernoulli entropy plus the
    psi-weighted entropies of the two conditional normals (slab and spike).
    """
    n = y.shape[0]
    assignment = groups.assignment
    e_tau = state.alpha_tau / state.beta_tau
    e_log_tau = digamma(state.alpha_tau) - math.log(state.beta_tau)
    e_gamma = state.alpha_gamma / state.beta_gamma
    e_log_gamma = digamma(state.alpha_gamma) - np.log(state.beta_gamma)
    if eres is None:
        eres = expected_residual_sq(y, state, col_sq)
    e_b2 = (1.0 - state.psi) * state.spike_var \
        + state.psi * (state.mu**2 + state.sigma2)

    loglik = 0.5 * n * e_log_tau - 0.5 * e_tau * eres - 0.5 * n * LOG_2PI
    b_prior = float(
        np.sum(0.5 * e_log_gamma[assignment] - 0.5 * e_gamma[assignment] * e_b2)
    ) - 0.5 * state.mu.size * LOG_2PI
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

    slab_entropy = 0.5 * (LOG_2PI + 1.0) + 0.5 * np.log(state.sigma2)
    if dense:
        coef_entropy = float(np.sum(slab_entropy))
        s_prior = 0.0
        pi_prior = 0.0
        pi_entropy = 0.0
    else:
        e_log_pi = digamma(state.alpha_pi) - digamma(state.alpha_pi + state.beta_pi)
        e_log_1mpi = digamma(state.beta_pi) - digamma(state.alpha_pi + state.beta_pi)
        s_prior = float(
            np.sum(
                state.psi * e_log_pi[assignment]
                + (1.0 - state.psi) * e_log_1mpi[assignment]
            )
        )
        pi_prior = float(
            np.sum(
                (hyper.d_pi - 1.0) * e_log_pi
                + (hyper.r_pi - 1.0) * e_log_1mpi
                - betaln(hyper.d_pi, hyper.r_pi)
            )
        )
        spike_entropy = 0.5 * (LOG_2PI + 1.0) + 0.5 * np.log(state.spike_var)
        coef_entropy = float(
            np.sum(
                bernoulli_entropy(state.psi)
                + state.psi * slab_entropy
                + (1.0 - state.psi) * spike_entropy
            )
        )
        pi_entropy = float(_beta_entropy(state.alpha_pi, state.beta_pi))

    elbo = (
        loglik
        + b_prior
        + s_prior
        + gamma_prior
        + pi_prior
        + tau_prior
        + coef_entropy
        + float(_gamma_entropy(state.alpha_gamma, state.beta_gamma))
        + pi_entropy
        + float(_gamma_entropy(np.array([state.alpha_tau]), np.array([state.beta_tau])))
    )
    if not np.isfinite(elbo):
        raise NumericalError(f"non-finite evidence lower bound {elbo}")
    return float(elbo)


def check_converged(trace, rel_tol):
    if len(trace) < 2:
        return False
    prev, cur = trace[-2], trace[-1]
    return abs(cur - prev) < rel_tol * max(abs(cur), 1e-300)


def run_cavi_linear(X, y, state, groups, hyper, col_sq, xty, *, max_iter,
                    rel_tol, dense=False, clamp_tau=None):
    """The Algorithm loop: pi, coefficients, noise precision, slab
    precisions, bound -- repeated until the bound stabilises.

    With ``clamp_tau`` set, the noise-precision factor is held fixed (its
    update skipped) for a continuation phase; all other steps are
    unchanged. Resets and fills ``state.elbo_trace``; returns True on
    convergence by the relative-change rule.
    """
    state.elbo_trace = []
    for iteration in range(max_iter):
        if not dense:
            update_pi(state, groups, hyper)
        e_tau = state.alpha_tau / state.beta_tau
        e_gamma = state.alpha_gamma / state.beta_gamma
        if dense:
            e_log_odds = None
        else:
            e_log_odds = digamma(state.alpha_pi) - digamma(state.beta_pi)
        sweep_coefficients(
            X, y, e_tau, state, groups, e_gamma, e_log_odds,
            dense=dense, col_sq=col_sq, xty=xty,
        )
        state.v = X @ state.e_beta()
        if clamp_tau is None:
            eres = update_tau(state, y, col_sq, hyper, iteration)
        else:
            eres = None
        update_gamma(state, groups, hyper)
        try:
            elbo = compute_elbo_linear(
                state, y, groups, hyper, col_sq, dense=dense, eres=eres
            )
        except NumericalError as err:
            raise NumericalError(str(err), iteration) from None
        state.elbo_trace.append(elbo)
        if check_converged(state.elbo_trace, rel_tol):
            return True
    return False


def _prepare(data, groups, config, *, binary=False):
    if groups.n_features != data.n_features:
        raise InputError(
            f"partition covers {groups.n_features} features, data has {data.n_features}"
        )
    if np.any(groups.group_sizes == 1):
        warnings.warn(
            "partition contains single-member groups; their hyperparameter "
            "estimates will be unstable",
            stacklevel=3,
        )
    X_fit, y_fit, transform = fit_transform(
        data.X,
        data.y,
        scale=config.standardize,
        center=config.intercept if not binary else config.standardize,
        center_response=config.intercept and not binary,
        feature_names=data.feature_names,
    )
    if y_fit is None:
        y_fit = data.y.astype(float)
    X_fit = np.asfortranarray(X_fit)
    return X_fit, np.asarray(y_fit, dtype=float), transform


def _fresh_state(X, groups, hyper, seed, clamp_tau=None):
    state = initial_state(X.shape[1], groups.n_groups, hyper, make_rng(seed))
    if clamp_tau is not None:
        state.alpha_tau, state.beta_tau = clamp_tau, 1.0
    state.v = X @ state.e_beta()
    return state


def _fit_sparse_ladder(X, y, groups, hyper, config, col_sq, xty):
    """Continuation over clamped noise precisions, best bound wins."""
    n = X.shape[0]
    null_precision = n / max(float(y @ y), 1e-12)
    clamp_tol = max(config.elbo_rel_tol, 1e-6)
    best_state = None
    best_converged = False
    for step in LADDER_STEPS:
        clamp = null_precision * step
        state = _fresh_state(X, groups, hyper, config.seed, clamp_tau=clamp)
        run_cavi_linear(
            X, y, state, groups, hyper, col_sq, xty,
            max_iter=CLAMP_MAX_SWEEPS, rel_tol=clamp_tol, clamp_tau=clamp,
        )
        converged = run_cavi_linear(
            X, y, state, groups, hyper, col_sq, xty,
            max_iter=config.max_iter, rel_tol=config.elbo_rel_tol,
        )
        if best_state is None or state.elbo_trace[-1] > best_state.elbo_trace[-1]:
            best_state = state
            best_converged = converged

    # Emptied groups make the slab precision a near-flat direction: any
    # value recycles through the spike part of E[b^2]. Probe the
    # data-scale anchor E[tau] * mean ||X_j||^2 for each group and keep
    # whatever the bound prefers.
    for _ in range(POLISH_ROUNDS):
        improved = False
        e_tau = best_state.alpha_tau / best_state.beta_tau
        e_gamma = best_state.alpha_gamma / best_state.beta_gamma
        for k in range(groups.n_groups):
            anchor = e_tau * float(np.mean(col_sq[groups.assignment == k]))
            if not np.isfinite(anchor) or anchor <= 0:
                continue
            if 0.5 * anchor < e_gamma[k] < 2.0 * anchor:
                continue
            trial = best_state.copy()
            trial.alpha_gamma = trial.alpha_gamma.copy()
            trial.beta_gamma = trial.beta_gamma.copy()
            trial.alpha_gamma[k] = anchor
            trial.beta_gamma[k] = 1.0
            converged = run_cavi_linear(
                X, y, trial, groups, hyper, col_sq, xty,
                max_iter=config.max_iter, rel_tol=config.elbo_rel_tol,
            )
            if trial.elbo_trace[-1] > best_state.elbo_trace[-1] \
                    + 1e-9 * abs(best_state.elbo_trace[-1]):
                best_state = trial
                best_converged = converged
                improved = True
        if not improved:
            break
    return best_state, best_converged


def fit_linear(data, groups=None, hyper=None, config=None):
    """Fit the factorized linear model by coordinate ascent.

    Returns the fit summary and the final variational state. The ELBO
    trace on the state has one entry per completed sweep of the run that
    produced the returned solution.
    """
    hyper = hyper or HyperPriors()
    config = config or FitConfig()
    if groups is None:
        groups = GroupPartition.single_group(data.n_features)
    X, y, transform = _prepare(data, groups, config)
    dense = config.dense_only

    col_sq = np.einsum("ij,ij->j", X, X)
    xty = X.T @ y

    if dense or config.init_scheme == "plain":
        state = _fresh_state(X, groups, hyper, config.seed)
        converged = run_cavi_linear(
            X, y, state, groups, hyper, col_sq, xty,
            max_iter=config.max_iter, rel_tol=config.elbo_rel_tol, dense=dense,
        )
    else:
        state, converged = _fit_sparse_ladder(
            X, y, groups, hyper, config, col_sq, xty
        )

    summary = summarize(
        state, groups, transform, data.feature_names,
        model="linear", factorization="factorized", dense=dense,
        converged=converged,
    )
    return summary, state


def summarize(state, groups, transform, feature_names, *, model,
              factorization, dense, converged, intercept_term=0.0,
              beta_hat=None, psi=None):
    if beta_hat is None:
        beta_hat = state.psi * state.mu
    if psi is None:
        psi = state.psi.copy()
    beta_orig = transform.coefficients_to_original(beta_hat)
    intercept = transform.intercept_from(beta_hat, intercept_term)
    return FitSummary(
        beta_hat=beta_hat,
        inclusion_prob=psi,
        gamma_hat=state.alpha_gamma / state.beta_gamma,
        pi_hat=None if dense else state.alpha_pi / (state.alpha_pi + state.beta_pi),
        tau_hat=state.alpha_tau / state.beta_tau if model == "linear" else None,
        intercept=intercept,
        beta_hat_original=beta_orig,
        n_iterations=len(state.elbo_trace),
        converged=converged,
        final_elbo=state.elbo_trace[-1] if state.elbo_trace else math.nan,
        model=model,
        factorization=factorization,
        dense=dense,
        transform=transform,
        groups=groups,
        feature_names=list(feature_names) if feature_names else None,
    )


def predict_linear(summary, X_new):
    """Predictions on the original response scale."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim != 2 or X_new.shape[1] != summary.beta_hat_original.shape[0]:
        raise InputError(
            f"expected {summary.beta_hat_original.shape[0]} feature columns, "
            f"got shape {X_new.shape}"
        )
    return summary.intercept + X_new @ summary.beta_hat_original


__all__ = [
    "FitConfig",
    "fit_linear",
    "predict_linear",
    "sweep_coefficients",
    "update_pi",
    "update_tau",
    "update_gamma",
    "compute_elbo_linear",
    "expected_residual_sq",
    "run_cavi_linear",
    "make_rng",
    "identity_transform",
]
