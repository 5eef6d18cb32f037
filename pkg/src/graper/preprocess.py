"""Centering, scaling and covariate-based group construction."""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import Dataset, GroupPartition
from .exceptions import InputError


@dataclass
class PreprocessTransform:
    """The affine map applied to features (and response) before a fit.

    Columns are transformed as (x - mean) / sd. Where no centering or
    scaling was applied the stored mean is 0 and the sd is 1, so the
    transform composes uniformly.
    """

    feature_means: np.ndarray
    feature_sds: np.ndarray
    response_mean: float
    standardized: bool

    def apply(self, X):
        return (X - self.feature_means) / self.feature_sds

    def coefficients_to_original(self, beta_fit):
        """Map coefficients fitted on the transformed scale to raw-feature scale."""
        return beta_fit / self.feature_sds

    def intercept_from(self, beta_fit, fit_intercept_term=0.0):
        """Original-scale intercept of a fit on transformed data.

        ``fit_intercept_term`` is an explicit intercept estimated on the
        transformed scale (the logistic model has one; the linear model
        handles the intercept by centering, so it passes 0).
        """
        beta_orig = self.coefficients_to_original(beta_fit)
        return float(
            self.response_mean + fit_intercept_term - beta_orig @ self.feature_means
        )


def fit_transform(X, y=None, *, scale=True, center=True, center_response=False,
                  feature_names=None):
    """Derive and apply the preprocessing map on training data.

    Scaling uses the sample standard deviation with the n-1 divisor and
    refuses zero-variance columns; pure centering tolerates them.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    means = X.mean(axis=0) if center else np.zeros(p)
    if scale:
        if n < 2:
            raise InputError("standardization needs at least two samples")
        sds = X.std(axis=0, ddof=1)
        dead = np.flatnonzero(sds == 0.0)
        if dead.size:
            name = feature_names[dead[0]] if feature_names else f"column {dead[0] + 1}"
            raise InputError(
                f"zero-variance column cannot be standardized: {name}"
            )
    else:
        sds = np.ones(p)
    response_mean = 0.0
    y_out = y
    if y is not None and center_response:
        y = np.asarray(y, dtype=float)
        response_mean = float(y.mean())
        y_out = y - response_mean
    transform = PreprocessTransform(
        feature_means=means,
        feature_sds=sds,
        response_mean=response_mean,
        standardized=bool(scale),
    )
    X_out = transform.apply(X)
    return X_out, y_out, transform


def standardize(data, enable=True, center_response=True):
    """Standardize a dataset: center and unit-scale every column.

    With ``enable`` off this is the identity transform. ``center_response``
    should be on for the linear model and off for binary responses.
    """
    X_out, y_out, transform = fit_transform(
        data.X,
        data.y,
        scale=enable,
        center=enable,
        center_response=enable and center_response,
        feature_names=data.feature_names,
    )
    out = Dataset(
        X=X_out,
        y=data.y if y_out is None else y_out,
        feature_names=list(data.feature_names),
        sample_ids=None if data.sample_ids is None else list(data.sample_ids),
    )
    return out, transform


def identity_transform(n_features):
    return PreprocessTransform(
        feature_means=np.zeros(n_features),
        feature_sds=np.ones(n_features),
        response_mean=0.0,
        standardized=False,
    )


def groups_from_covariate(covariate, n_bins=None):
    """Turn per-feature side information into a group partition.

    Non-numeric covariates (or ``n_bins=None``) are treated as categorical
    labels, grouped by first appearance. Numeric covariates are split into
    ``n_bins`` equal-frequency bins; bins emptied by ties are merged.
    """
    values = list(covariate)
    p = len(values)
    if p == 0:
        raise InputError("covariate is empty")
    numeric = all(isinstance(val, (int, float, np.integer, np.floating)) for val in values)
    if n_bins is None or not numeric:
        return GroupPartition.from_labels(values)
    if n_bins < 1:
        raise InputError("n_bins must be a positive integer")
    if n_bins > p:
        raise InputError(f"cannot split {p} features into {n_bins} bins")
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError("numeric covariate contains non-finite values")
    edges = np.quantile(arr, np.arange(1, n_bins) / n_bins)
    assignment = np.searchsorted(edges, arr, side="right")
    occupied = np.unique(assignment)
    if occupied.size < n_bins:
        warnings.warn(
            f"quantile ties left {n_bins - occupied.size} empty bin(s); merged",
            stacklevel=2,
        )
    remap = {old: new for new, old in enumerate(occupied)}
    assignment = np.array([remap[a] for a in assignment], dtype=int)
    labels = [f"bin{k + 1}" for k in range(occupied.size)]
    return GroupPartition(assignment=assignment, labels=labels)
