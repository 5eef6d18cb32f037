"""Domain types: data containers, priors, variational state and its expectations."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError
from .special import digamma


def _as_float_matrix(X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InputError(f"design matrix must be 2-dimensional, got shape {X.shape}")
    return X


def _as_float_vector(y):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise InputError(f"response must be 1-dimensional, got shape {y.shape}")
    return y


@dataclass
class Dataset:
    """An observed design matrix with its response.

    X has one row per sample and one column per feature; y holds a
    continuous response (linear model) or 0/1 labels (logistic model).
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: list | None = None
    sample_ids: list | None = None

    def __post_init__(self):
        self.X = _as_float_matrix(self.X)
        self.y = _as_float_vector(self.y)
        n, p = self.X.shape
        if n < 1 or p < 1:
            raise InputError("dataset needs at least one sample and one feature")
        if self.y.shape[0] != n:
            raise InputError(
                f"response length {self.y.shape[0]} does not match {n} samples"
            )
        if not np.all(np.isfinite(self.X)):
            raise InputError("design matrix contains non-finite values")
        if not np.all(np.isfinite(self.y)):
            raise InputError("response contains non-finite values")
        if self.feature_names is None:
            self.feature_names = [f"f{j + 1}" for j in range(p)]
        elif len(self.feature_names) != p:
            raise InputError(
                f"{len(self.feature_names)} feature names for {p} features"
            )

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def require_binary_response(self):
        if not np.all((self.y == 0.0) | (self.y == 1.0)):
            raise InputError("logistic model requires every response value in {0, 1}")


@dataclass
class GroupPartition:
    """Surjective assignment of the p features onto groups 0..G-1."""

    assignment: np.ndarray
    labels: list | None = None

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=int)
        if self.assignment.ndim != 1 or self.assignment.size < 1:
            raise InputError("group assignment must be a non-empty 1-d integer array")
        if self.assignment.min() < 0:
            raise InputError("group indices must be non-negative")
        n_groups = int(self.assignment.max()) + 1
        sizes = np.bincount(self.assignment, minlength=n_groups)
        if np.any(sizes == 0):
            missing = int(np.flatnonzero(sizes == 0)[0])
            raise InputError(f"group {missing} has no features assigned")
        self.group_sizes = sizes
        if self.labels is None:
            self.labels = [f"g{k + 1}" for k in range(n_groups)]
        elif len(self.labels) != n_groups:
            raise InputError(f"{len(self.labels)} labels for {n_groups} groups")

    @classmethod
    def from_labels(cls, labels):
        """Build a partition from arbitrary per-feature labels.

        Group indices follow the order in which labels first appear.
        """
        labels = list(labels)
        index = {}
        for lab in labels:
            if lab not in index:
                index[lab] = len(index)
        assignment = np.array([index[lab] for lab in labels], dtype=int)
        return cls(assignment=assignment, labels=list(index))

    @classmethod
    def single_group(cls, n_features):
        return cls(assignment=np.zeros(n_features, dtype=int))

    @property
    def n_groups(self):
        return len(self.group_sizes)

    @property
    def n_features(self):
        return self.assignment.size

    def group_sum(self, values):
        """Sum a per-feature vector within each group."""
        return np.bincount(self.assignment, weights=values, minlength=self.n_groups)


@dataclass(frozen=True)
class HyperPriors:
    """Fixed prior constants: Gamma(shape r, rate d) on the noise and slab
    precisions, Beta(d_pi, r_pi) on the inclusion fractions."""

    r_tau: float = 0.001
    d_tau: float = 0.001
    r_gamma: float = 0.001
    d_gamma: float = 0.001
    d_pi: float = 1.0
    r_pi: float = 1.0

    def __post_init__(self):
        for name in ("r_tau", "d_tau", "r_gamma", "d_gamma", "d_pi", "r_pi"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InputError(f"hyperprior {name} must be strictly positive")


@dataclass
class VariationalState:
    """Container for every variational parameter of the factorized fit.

    Per feature: slab mean ``mu``, slab variance ``sigma2``, inclusion
    probability ``psi`` and ``spike_var``, the variance the spike
    component was given when the feature was last updated. The spike
    component belongs to the coefficient factor, so later changes to the
    slab-precision factor must not retroactively alter it; entropies and
    second moments read ``spike_var``, never a refreshed 1/E[gamma].

    ``v`` caches X @ (psi * mu) and is what makes a full coefficient
    sweep O(n*p).
    """

    mu: np.ndarray
    sigma2: np.ndarray
    psi: np.ndarray
    spike_var: np.ndarray
    alpha_gamma: np.ndarray
    beta_gamma: np.ndarray
    alpha_pi: np.ndarray
    beta_pi: np.ndarray
    alpha_tau: float = 1.0
    beta_tau: float = 1.0
    xi: np.ndarray | None = None
    v: np.ndarray | None = None
    elbo_trace: list = field(default_factory=list)

    def validate(self):
        if np.any(self.sigma2 <= 0):
            raise InputError("slab variances must be positive")
        if np.any((self.psi < 0) | (self.psi > 1)):
            raise InputError("inclusion probabilities must lie in [0, 1]")
        if np.any(self.spike_var <= 0):
            raise InputError("spike variances must be positive")
        for name in ("alpha_gamma", "beta_gamma", "alpha_pi", "beta_pi"):
            if np.any(np.asarray(getattr(self, name)) <= 0):
                raise InputError(f"{name} must be strictly positive")
        if self.alpha_tau <= 0 or self.beta_tau <= 0:
            raise InputError("tau posterior parameters must be strictly positive")
        if self.xi is not None and np.any(self.xi < 0):
            raise InputError("xi must be non-negative")

    def e_beta(self):
        return self.psi * self.mu

    def copy(self):
        return VariationalState(
            mu=self.mu.copy(),
            sigma2=self.sigma2.copy(),
            psi=self.psi.copy(),
            spike_var=self.spike_var.copy(),
            alpha_gamma=self.alpha_gamma.copy(),
            beta_gamma=self.beta_gamma.copy(),
            alpha_pi=self.alpha_pi.copy(),
            beta_pi=self.beta_pi.copy(),
            alpha_tau=self.alpha_tau,
            beta_tau=self.beta_tau,
            xi=None if self.xi is None else self.xi.copy(),
            v=None if self.v is None else self.v.copy(),
            elbo_trace=list(self.elbo_trace),
        )


def initial_state(n_features, n_groups, hyper, rng, n_samples=None, logistic=False):
    """Starting point of the coordinate ascent.

    Every feature starts included (psi = 1) with a standard-normal slab
    mean, unit slab variance, and E[tau] = E[gamma_k] = 1 realised as
    alpha = beta = 1.
    """
    mu = rng.standard_normal(n_features)
    state = VariationalState(
        mu=mu,
        sigma2=np.ones(n_features),
        psi=np.ones(n_features),
        spike_var=np.ones(n_features),
        alpha_gamma=np.ones(n_groups),
        beta_gamma=np.ones(n_groups),
        alpha_pi=np.full(n_groups, hyper.d_pi),
        beta_pi=np.full(n_groups, hyper.r_pi),
        alpha_tau=1.0,
        beta_tau=1.0,
    )
    if logistic:
        if n_samples is None:
            raise InputError("logistic initialisation needs the sample count")
        state.xi = np.ones(n_samples)
    return state


@dataclass(frozen=True)
class ExpectationBundle:
    """Moments of the current variational distribution consumed by the updates."""

    e_tau: float
    e_gamma: np.ndarray
    e_log_odds_pi: np.ndarray
    e_s: np.ndarray
    e_b: np.ndarray
    e_b2: np.ndarray
    e_beta: np.ndarray
    e_beta2: np.ndarray


def expected_values(state, groups):
    """Expectations of the model quantities under the variational distribution.

    The second moment of the slab/spike mixture combines the slab moment
    (weight psi) with the stored spike variance (weight 1 - psi).
    """
    state.validate()
    e_tau = state.alpha_tau / state.beta_tau
    e_gamma = state.alpha_gamma / state.beta_gamma
    e_log_odds = digamma(state.alpha_pi) - digamma(state.beta_pi)
    slab_m2 = state.mu**2 + state.sigma2
    e_b2 = (1.0 - state.psi) * state.spike_var + state.psi * slab_m2
    e_beta = state.psi * state.mu
    e_beta2 = state.psi * slab_m2
    return ExpectationBundle(
        e_tau=float(e_tau),
        e_gamma=e_gamma,
        e_log_odds_pi=e_log_odds,
        e_s=state.psi,
        e_b=e_beta,
        e_b2=e_b2,
        e_beta=e_beta,
        e_beta2=e_beta2,
    )


@dataclass
class FitSummary:
    """Point estimates and metadata of a finished fit.

    ``beta_hat`` lives on the scale the model was fitted on (exactly
    psi * mu); ``beta_hat_original`` and ``intercept`` are mapped back
    to the raw feature and response scales and are what ``predict``
    consumes.
    """

    beta_hat: np.ndarray
    inclusion_prob: np.ndarray
    gamma_hat: np.ndarray
    pi_hat: np.ndarray | None
    tau_hat: float | None
    intercept: float
    beta_hat_original: np.ndarray
    n_iterations: int
    converged: bool
    final_elbo: float
    model: str
    factorization: str
    dense: bool
    transform: object = None
    groups: GroupPartition | None = None
    feature_names: list | None = None
