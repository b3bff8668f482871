"""scikit-learn compatible wrappers.

``SemiSupervisedImputer`` takes a float matrix with NaN for missing cells and a
response vector. Imputation is transductive: ``transform`` imputes new rows
jointly with the training rows, dropping the response kernel for rows whose
response is unknown.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import MissingDataset, validate
from .exceptions import UndeclaredClass
from .impute import impute_all, impute_sssi
from .kernel import ScaleParams
from .regression import add_intercept, fit_ols
from .tuning import TauGrid, tune_cv, tune_interchangeable

TUNING = ("interchangeable", "cv")


def _as_matrix(X):
    return check_array(X, dtype=float, ensure_all_finite="allow-nan")


class SemiSupervisedImputer(TransformerMixin, BaseEstimator):
    """Graph-based imputation of partially observed covariates.

    Parameters
    ----------
    discrete_features : sequence of int
        Column indices holding class labels; the classes are the distinct
        observed values.
    tau : float, optional
        Normalized scale. Converted to ``lambda = tau * n ** (1 / (2 d0 + 1))``.
    lambda1, lambda2 : float, optional
        Raw response and covariate scales. Take precedence over ``tau``.
    tuning : {"interchangeable", "cv"}
        Grid criterion used when no scale is given.
    grid : tuple (lo, hi, steps)
        Grid over ``tau``.
    sssi_sweeps : int
        When positive, run that many sequential re-imputation sweeps.
    """

    def __init__(self, discrete_features=(), tau=None, lambda1=None,
                 lambda2=None, tuning="interchangeable", grid=(0.0, 2.0, 21),
                 sssi_sweeps=0, swap_keep_column=False, intercept=False,
                 include_self=False, eps=1e-8, max_iter=1000, n_jobs=1):
        self.discrete_features = discrete_features
        self.tau = tau
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.tuning = tuning
        self.grid = grid
        self.sssi_sweeps = sssi_sweeps
        self.swap_keep_column = swap_keep_column
        self.intercept = intercept
        self.include_self = include_self
        self.eps = eps
        self.max_iter = max_iter
        self.n_jobs = n_jobs

    def _resolve_params(self, dataset, index):
        if self.lambda1 is not None or self.lambda2 is not None:
            l1 = self.lambda1 if self.lambda1 is not None else self.lambda2
            l2 = self.lambda2 if self.lambda2 is not None else self.lambda1
            return ScaleParams(float(l1), float(l2), d0=index.d0, n=dataset.n), None
        if self.tau is not None:
            return ScaleParams.from_tau(float(self.tau), dataset.n, index.d0), None
        if self.tuning not in TUNING:
            raise ValueError(f"tuning must be one of {TUNING}, got {self.tuning!r}")
        grid = TauGrid(*self.grid)
        opts = dict(include_self=self.include_self, eps=self.eps,
                    max_iter=self.max_iter, n_jobs=self.n_jobs)
        if self.tuning == "cv":
            report = tune_cv(dataset, grid, intercept=self.intercept, **opts)
        else:
            report = tune_interchangeable(
                dataset, grid, swap_keep_column=self.swap_keep_column, **opts)
        return report.params(), report

    def _impute(self, dataset):
        opts = dict(eps=self.eps, max_iter=self.max_iter,
                    include_self=self.include_self, n_jobs=self.n_jobs)
        if self.sssi_sweeps:
            return impute_sssi(dataset, self.params_, int(self.sssi_sweeps), **opts)
        return impute_all(dataset, self.params_, **opts)

    def fit(self, X, y):
        X = _as_matrix(X)
        y = np.asarray(y, dtype=float).ravel()
        dataset = MissingDataset.from_arrays(X, y, discrete=tuple(self.discrete_features))
        index = validate(dataset)
        self.params_, self.tune_report_ = self._resolve_params(dataset, index)
        self.train_ = dataset
        self.d0_ = index.d0
        self.n_features_in_ = X.shape[1]
        self.train_result_ = None
        return self

    def fit_transform(self, X, y=None, **fit_params):
        self.fit(X, y)
        self.train_result_ = self._impute(self.train_)
        return self.train_.to_numeric(self.train_result_.x_hat)

    def _encode(self, X):
        ds = self.train_
        mask = ~np.isnan(X)
        codes = np.where(mask, X, 0.0)
        for j in ds.discrete_columns:
            lookup = {float(v): k for k, v in enumerate(ds.schema[j].classes)}
            for i in np.flatnonzero(mask[:, j]):
                code = lookup.get(float(X[i, j]))
                if code is None:
                    raise UndeclaredClass(i, j, X[i, j])
                codes[i, j] = code
        return codes, mask

    def transform(self, X, y=None):
        """Impute rows of ``X`` alongside the training rows.

        ``y`` may be omitted or contain NaN; rows without a response are
        linked to others through their covariates only.
        """
        check_is_fitted(self, "params_")
        X = _as_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        ds = self.train_
        codes, mask = self._encode(X)
        m = X.shape[0]
        y_new = np.full(m, np.nan) if y is None else np.asarray(y, dtype=float).ravel()
        y_obs = np.concatenate([ds.y_observed, ~np.isnan(y_new)])
        stacked = MissingDataset(
            np.concatenate([ds.y, np.nan_to_num(y_new)]),
            np.vstack([ds.x, codes]), np.vstack([ds.mask, mask]), ds.schema,
            y_obs)
        result = self._impute(stacked)
        return stacked.to_numeric(result.x_hat)[ds.n:]


class SSIRegressor(RegressorMixin, BaseEstimator):
    """Imputation followed by ordinary least squares.

    ``tuning="interchangeable"`` and ``tuning="cv"`` give the two SSI
    variants; set ``tau`` or the lambdas to skip tuning.
    """

    def __init__(self, discrete_features=(), tau=None, lambda1=None,
                 lambda2=None, tuning="interchangeable", grid=(0.0, 2.0, 21),
                 sssi_sweeps=0, swap_keep_column=False, intercept=False,
                 include_self=False, eps=1e-8, max_iter=1000, n_jobs=1):
        self.discrete_features = discrete_features
        self.tau = tau
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.tuning = tuning
        self.grid = grid
        self.sssi_sweeps = sssi_sweeps
        self.swap_keep_column = swap_keep_column
        self.intercept = intercept
        self.include_self = include_self
        self.eps = eps
        self.max_iter = max_iter
        self.n_jobs = n_jobs

    def _design(self, x_hat):
        return add_intercept(x_hat) if self.intercept else x_hat

    def fit(self, X, y):
        self.imputer_ = SemiSupervisedImputer(**self.get_params())
        x_hat = self.imputer_.fit_transform(X, y)
        self.ols_ = fit_ols(self._design(x_hat), y)
        beta = self.ols_.beta_hat
        self.intercept_ = float(beta[0]) if self.intercept else 0.0
        self.coef_ = beta[1:] if self.intercept else beta
        self.n_features_in_ = self.imputer_.n_features_in_
        return self

    def predict(self, X):
        check_is_fitted(self, "ols_")
        x_hat = self.imputer_.transform(X)
        return x_hat @ self.coef_ + self.intercept_
