"""Synthetic-data generation, evaluation metrics, cross-validation and
runtime benchmarking.

Designs are multivariate normal with Toeplitz correlation rho^|i-j|;
coefficients follow the model's own generative story: group-wise slab
precisions (three magnitude tiers by default) and group-wise inclusion
fractions alternating between nu and min(1, 1.5 nu) within a tier.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import spearmanr

from .core import Dataset, GroupPartition, HyperPriors
from .exceptions import GraperError, InputError
from .linear import FitConfig, fit_linear, make_rng, predict_linear
from .logistic import fit_logistic, predict_logistic
from .multivariate import fit_linear_multivariate

GAMMA_TIERS = (0.01, 1.0, 100.0)

# Desk-scale default sweeps, one parameter varied at a time around the
# reference setting n=100, p=300, rho=0, tau=1, nu=0.2, G=6.
SWEEP_GRIDS = {
    "p": tuple(range(60, 1201, 60)),
    "n": tuple(range(20, 501, 20)),
    "rho": tuple(np.round(np.arange(0.0, 0.91, 0.1), 2)),
    "tau": (0.01, 0.1, 1.0, 10.0, 100.0),
    "nu": (0.001, 0.01, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0),
}

VARIANTS = (
    "sparse",
    "dense",
    "multivariate",
    "sparse_single",
    "dense_single",
    "multivariate_single",
)


@dataclass
class SimulationConfig:
    n: int = 100
    p: int = 300
    n_groups: int = 6
    rho: float = 0.0
    tau: float = 1.0
    nu: float = 0.2
    gamma_levels: tuple | None = None
    seed: int = 0
    n_test: int = 1000

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.n_groups < 1 or self.n_test < 1:
            raise InputError("simulation sizes must be positive")
        if self.p % self.n_groups != 0:
            raise InputError(
                f"feature count {self.p} must be divisible into {self.n_groups} "
                "equal groups"
            )
        if not (0.0 <= self.rho < 1.0):
            raise InputError("rho must lie in [0, 1)")
        if self.tau <= 0:
            raise InputError("tau must be positive")
        if not (0.0 < self.nu <= 1.0):
            raise InputError("nu must lie in (0, 1]")
        if self.gamma_levels is not None:
            levels = tuple(float(g) for g in self.gamma_levels)
            if len(levels) != self.n_groups or any(g <= 0 for g in levels):
                raise InputError(
                    f"gamma_levels needs {self.n_groups} positive values"
                )
            self.gamma_levels = levels


@dataclass
class GroundTruth:
    beta_true: np.ndarray
    s_true: np.ndarray
    gamma_true: np.ndarray
    pi_true: np.ndarray


def default_gamma_levels(n_groups):
    """Three precision tiers, each spanning a consecutive run of groups."""
    reps = math.ceil(n_groups / len(GAMMA_TIERS))
    return tuple(np.repeat(GAMMA_TIERS, reps)[:n_groups])


def pi_levels(gamma_levels, nu):
    """Within each run of equal slab precision, the inclusion fraction
    alternates nu, min(1, 1.5 nu), nu, ... starting at nu."""
    gamma_levels = np.asarray(gamma_levels, dtype=float)
    high = min(1.0, 1.5 * nu)
    out = np.empty(gamma_levels.size)
    position = 0
    for k in range(gamma_levels.size):
        if k > 0 and gamma_levels[k] == gamma_levels[k - 1]:
            position += 1
        else:
            position = 0
        out[k] = nu if position % 2 == 0 else high
    return out


def toeplitz_covariance(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def block_partition(p, n_groups):
    """Equal-size consecutive feature blocks, one per group."""
    if p % n_groups != 0:
        raise InputError(f"{p} features do not split into {n_groups} equal groups")
    return GroupPartition(assignment=np.repeat(np.arange(n_groups), p // n_groups))


def simulate_dataset(cfg):
    """Draw a (train, test, truth) triple from the generative model."""
    rng = make_rng(cfg.seed)
    p, n = cfg.p, cfg.n
    groups = block_partition(p, cfg.n_groups)
    gamma_true = np.asarray(
        cfg.gamma_levels if cfg.gamma_levels is not None
        else default_gamma_levels(cfg.n_groups),
        dtype=float,
    )
    pi_true = pi_levels(gamma_true, cfg.nu)

    if cfg.rho == 0.0:
        chol = None
    else:
        chol = np.linalg.cholesky(toeplitz_covariance(p, cfg.rho))

    def draw_design(rows):
        Z = rng.standard_normal((rows, p))
        return Z if chol is None else Z @ chol.T

    X = draw_design(n)
    X_test = draw_design(cfg.n_test)
    gamma_of = gamma_true[groups.assignment]
    pi_of = pi_true[groups.assignment]
    b = rng.standard_normal(p) / np.sqrt(gamma_of)
    s = (rng.random(p) < pi_of).astype(int)
    beta = np.where(s == 1, b, 0.0)
    noise_sd = 1.0 / math.sqrt(cfg.tau)
    y = X @ beta + noise_sd * rng.standard_normal(n)
    y_test = X_test @ beta + noise_sd * rng.standard_normal(cfg.n_test)

    names = [f"f{j + 1}" for j in range(p)]
    train = Dataset(X=X, y=y, feature_names=names)
    test = Dataset(X=X_test, y=y_test, feature_names=list(names))
    truth = GroundTruth(
        beta_true=beta, s_true=s, gamma_true=gamma_true, pi_true=pi_true
    )
    return train, test, truth


def _f1_score(predicted, actual):
    predicted = np.asarray(predicted, dtype=bool)
    actual = np.asarray(actual, dtype=bool)
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 1.0
    return 2.0 * tp / denom


def evaluate(summary, truth, test):
    """Held-out and recovery metrics of one fit against the ground truth."""
    if summary.model == "logistic":
        preds = predict_logistic(summary, test.X)
    else:
        preds = predict_linear(summary, test.X)
    rmse_y = float(np.sqrt(np.mean((preds - test.y) ** 2)))
    rmse_beta = float(
        np.sqrt(np.mean((summary.beta_hat_original - truth.beta_true) ** 2))
    )
    if summary.gamma_hat.size == truth.gamma_true.size:
        corr = spearmanr(np.log(summary.gamma_hat), np.log(truth.gamma_true))
        gamma_rank_corr = float(getattr(corr, "statistic", getattr(corr, "correlation", np.nan)))
    else:
        gamma_rank_corr = float("nan")
    if summary.pi_hat is not None and summary.pi_hat.size == truth.pi_true.size:
        pi_abs_err = float(np.mean(np.abs(summary.pi_hat - truth.pi_true)))
    else:
        pi_abs_err = float("nan")
    selection_f1 = _f1_score(summary.inclusion_prob >= 0.5, truth.s_true == 1)
    return {
        "rmse_y": rmse_y,
        "rmse_beta": rmse_beta,
        "gamma_rank_corr": gamma_rank_corr,
        "pi_abs_err": pi_abs_err,
        "selection_f1": selection_f1,
    }


def fit_variant(variant, data, groups, hyper=None, config=None):
    """Dispatch one of the internal model variants on a dataset."""
    if variant not in VARIANTS:
        raise InputError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    config = config or FitConfig()
    if variant.endswith("_single"):
        groups = GroupPartition.single_group(data.n_features)
        variant = variant[: -len("_single")]
    if variant == "sparse":
        summary, _ = fit_linear(data, groups, hyper, replace(config, dense_only=False))
    elif variant == "dense":
        summary, _ = fit_linear(data, groups, hyper, replace(config, dense_only=True))
    else:
        summary, _ = fit_linear_multivariate(
            data, groups, hyper, replace(config, dense_only=True)
        )
    return summary


def run_grid(base, sweep, values=None, replicates=10, variants=("sparse",),
             hyper=None, fit_config=None, threads=1):
    """Fit the requested variants over a one-parameter sweep.

    Returns one result row per setting x replicate x variant. Replicate r
    of every setting uses seed base.seed + r. Fit failures are recorded in
    the row instead of aborting the sweep.
    """
    if sweep not in SWEEP_GRIDS:
        raise InputError(f"unknown sweep {sweep!r}; choose from {sorted(SWEEP_GRIDS)}")
    if values is None:
        values = SWEEP_GRIDS[sweep]
    field_name = {"p": "p", "n": "n", "rho": "rho", "tau": "tau", "nu": "nu"}[sweep]

    tasks = []
    for value in values:
        for rep in range(replicates):
            cfg = replace(
                base,
                **{field_name: type(getattr(base, field_name))(value)},
                seed=base.seed + rep,
            )
            tasks.append((value, rep, cfg))

    def run_cell(task):
        value, rep, cfg = task
        train, test, truth = simulate_dataset(cfg)
        groups = block_partition(cfg.p, cfg.n_groups)
        rows = []
        for variant in variants:
            row = {
                "sweep": sweep,
                "value": value,
                "replicate": rep,
                "seed": cfg.seed,
                "variant": variant,
                "error": "",
            }
            try:
                start = time.perf_counter()
                summary = fit_variant(variant, train, groups, hyper, fit_config)
                seconds = time.perf_counter() - start
                row.update(evaluate(summary, truth, test))
                row["seconds"] = seconds
                row["n_iterations"] = summary.n_iterations
                row["converged"] = summary.converged
                row["gamma_hat"] = summary.gamma_hat.tolist()
                row["pi_hat"] = None if summary.pi_hat is None else summary.pi_hat.tolist()
            except GraperError as err:
                row["error"] = str(err)
            rows.append(row)
        return rows

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            nested = list(pool.map(run_cell, tasks))
    else:
        nested = [run_cell(task) for task in tasks]
    return [row for rows in nested for row in rows]


def cross_validate(data, groups, hyper=None, config=None, k_folds=10,
                   model="linear", factorization="factorized", threads=1):
    """K-fold cross-validation with in-fold preprocessing.

    Fold assignment is a seeded permutation split into k contiguous
    chunks, so the same seed always yields the same folds.
    """
    n = data.n_samples
    if not (2 <= k_folds <= n):
        raise InputError(f"k_folds must lie in [2, {n}], got {k_folds}")
    config = config or FitConfig()
    rng = make_rng(config.seed)
    order = rng.permutation(n)
    folds = np.array_split(order, k_folds)
    for fold in folds:
        if fold.size == 0:
            raise InputError("cross-validation fold with zero test rows")

    def run_fold(fold_index):
        test_idx = folds[fold_index]
        train_idx = np.setdiff1d(order, test_idx, assume_unique=True)
        train = Dataset(
            X=data.X[train_idx],
            y=data.y[train_idx],
            feature_names=list(data.feature_names),
        )
        test_X = data.X[test_idx]
        test_y = data.y[test_idx]
        if model == "logistic":
            summary, _ = fit_logistic(train, groups, hyper, config, factorization)
            probs = predict_logistic(summary, test_X)
            eps = 1e-15
            clipped = np.clip(probs, eps, 1.0 - eps)
            metrics = {
                "classification_error": float(np.mean((probs > 0.5) != (test_y == 1.0))),
                "log_loss": float(
                    -np.mean(test_y * np.log(clipped) + (1 - test_y) * np.log1p(-clipped))
                ),
            }
        elif model == "linear":
            if factorization == "multivariate":
                summary, _ = fit_linear_multivariate(train, groups, hyper, config)
            else:
                summary, _ = fit_linear(train, groups, hyper, config)
            preds = predict_linear(summary, test_X)
            metrics = {"rmse": float(np.sqrt(np.mean((preds - test_y) ** 2)))}
        else:
            raise InputError(f"unknown model {model!r}")
        metrics["fold"] = fold_index
        metrics["n_test"] = int(test_idx.size)
        metrics["gamma_hat"] = summary.gamma_hat.tolist()
        metrics["pi_hat"] = None if summary.pi_hat is None else summary.pi_hat.tolist()
        return metrics

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run_fold, range(k_folds)))
    return [run_fold(k) for k in range(k_folds)]


BENCH_GRIDS = {
    "p": (120, 240, 480, 960),
    "n": (20, 50, 100, 200, 500),
    "G": (2, 3, 6, 10, 20),
}


def benchmark_runtime(dimension, values=None, replicates=10, n_sweeps=25,
                      variants=("sparse", "dense", "multivariate"),
                      base=None, threads=1, hyper=None):
    """Wall-clock of the bare fit while scaling one problem dimension.

    Runs a fixed number of sweeps (the tolerance is set low enough that
    the ELBO rule never fires first) and pins the BLAS thread pool to
    ``threads`` so matrix-backed and loop-backed variants face the same
    resources.
    """
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        from contextlib import nullcontext

        def threadpool_limits(limits=None):
            return nullcontext()

    if dimension not in BENCH_GRIDS:
        raise InputError(f"unknown dimension {dimension!r}; choose from n, p, G")
    if values is None:
        values = BENCH_GRIDS[dimension]
    base = base or SimulationConfig()
    fit_config = FitConfig(max_iter=n_sweeps, elbo_rel_tol=1e-300)

    rows = []
    for value in values:
        for rep in range(replicates):
            overrides = {"seed": base.seed + rep}
            if dimension == "p":
                overrides["p"] = int(value)
            elif dimension == "n":
                overrides["n"] = int(value)
            else:
                overrides["n_groups"] = int(value)
            cfg = replace(base, **overrides)
            train, _, _ = simulate_dataset(cfg)
            groups = block_partition(cfg.p, cfg.n_groups)
            for variant in variants:
                with threadpool_limits(limits=threads):
                    start = time.perf_counter()
                    fit_variant(variant, train, groups, hyper, fit_config)
                    seconds = time.perf_counter() - start
                rows.append(
                    {
                        "dimension": dimension,
                        "value": value,
                        "replicate": rep,
                        "variant": variant,
                        "seconds": seconds,
                        "n_sweeps": n_sweeps,
                    }
                )
    return rows


__all__ = [
    "SimulationConfig",
    "GroundTruth",
    "simulate_dataset",
    "block_partition",
    "toeplitz_covariance",
    "default_gamma_levels",
    "pi_levels",
    "evaluate",
    "fit_variant",
    "run_grid",
    "cross_validate",
    "benchmark_runtime",
    "SWEEP_GRIDS",
    "BENCH_GRIDS",
    "VARIANTS",
]
