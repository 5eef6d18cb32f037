"""Scikit-learn style estimators wrapping the variational fits.

Both estimators follow the fit/predict contract with ``get_params`` /
``set_params`` inherited from ``BaseEstimator``, so they compose with
pipelines, ``clone`` and the model-selection utilities.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin

from .core import Dataset, GroupPartition, HyperPriors
from .exceptions import InputError
from .linear import FitConfig, fit_linear, predict_linear
from .logistic import fit_logistic, predict_logistic
from .multivariate import fit_linear_multivariate


def _validate_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise InputError("X must be a 2-d array")
    if y.shape[0] != X.shape[0]:
        raise InputError("X and y have inconsistent numbers of samples")
    return X, y


class _GraperBase(BaseEstimator):
    def __init__(self, groups=None, dense=False, factorization="factorized",
                 standardize=True, fit_intercept=True, max_iter=3000, tol=1e-5,
                 random_state=0, hyperpriors=None):
        self.groups = groups
        self.dense = dense
        self.factorization = factorization
        self.standardize = standardize
        self.fit_intercept = fit_intercept
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.hyperpriors = hyperpriors

    def _partition(self, n_features):
        if self.groups is None:
            return GroupPartition.single_group(n_features)
        if isinstance(self.groups, GroupPartition):
            if self.groups.n_features != n_features:
                raise InputError(
                    f"groups cover {self.groups.n_features} features, X has {n_features}"
                )
            return self.groups
        labels = list(self.groups)
        if len(labels) != n_features:
            raise InputError(f"{len(labels)} group labels for {n_features} features")
        return GroupPartition.from_labels(labels)

    def _config(self):
        return FitConfig(
            max_iter=self.max_iter,
            elbo_rel_tol=self.tol,
            seed=self.random_state,
            dense_only=self.dense,
            standardize=self.standardize,
            intercept=self.fit_intercept,
        )

    def _store(self, summary, state):
        self.summary_ = summary
        self.state_ = state
        self.coef_ = summary.beta_hat_original
        self.intercept_ = summary.intercept
        self.inclusion_prob_ = summary.inclusion_prob
        self.gamma_ = summary.gamma_hat
        self.pi_ = summary.pi_hat
        self.tau_ = summary.tau_hat
        self.n_iter_ = summary.n_iterations
        self.converged_ = summary.converged
        self.elbo_ = summary.final_elbo
        self.n_features_in_ = summary.beta_hat_original.shape[0]
        return self


class GraperRegressor(_GraperBase, RegressorMixin):
    """Group-adaptive spike-and-slab linear regression.

    Parameters
    ----------
    groups : array-like of length n_features, GroupPartition, or None
        Per-feature group labels; None puts every feature in one group.
    dense : bool
        Drop the spike component (group-wise normal shrinkage only).
    factorization : "factorized" or "multivariate"
        Family of the coefficient factor; "multivariate" requires dense.
    standardize, fit_intercept : bool
        Preprocessing policy applied inside fit.
    max_iter, tol : stopping rule on the relative change of the bound.
    random_state : seed of the initialisation.
    hyperpriors : HyperPriors, optional.
    """

    def fit(self, X, y):
        X, y = _validate_xy(X, y)
        data = Dataset(X=X, y=y)
        groups = self._partition(X.shape[1])
        hyper = self.hyperpriors or HyperPriors()
        if self.factorization == "multivariate":
            summary, state = fit_linear_multivariate(data, groups, hyper, self._config())
        else:
            summary, state = fit_linear(data, groups, hyper, self._config())
        return self._store(summary, state)

    def predict(self, X):
        return predict_linear(self.summary_, np.asarray(X, dtype=float))


class GraperClassifier(_GraperBase, ClassifierMixin):
    """Group-adaptive spike-and-slab logistic regression (binary)."""

    def fit(self, X, y):
        X, y_raw = _validate_xy(X, y)
        self.classes_ = np.unique(y_raw)
        if self.classes_.shape[0] != 2:
            raise InputError("binary classification requires exactly two classes")
        y01 = (y_raw == self.classes_[1]).astype(float)
        data = Dataset(X=X, y=y01)
        groups = self._partition(X.shape[1])
        hyper = self.hyperpriors or HyperPriors()
        factorization = (
            "multivariate" if self.factorization == "multivariate" else "factorized"
        )
        summary, state = fit_logistic(data, groups, hyper, self._config(), factorization)
        return self._store(summary, state)

    def predict_proba(self, X):
        p1 = predict_logistic(self.summary_, np.asarray(X, dtype=float))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        p1 = predict_logistic(self.summary_, np.asarray(X, dtype=float))
        return self.classes_[(p1 > 0.5).astype(int)]
