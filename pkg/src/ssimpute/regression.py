"""Ordinary least squares on an imputed design, with leave-one-out shortcuts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import DimensionMismatch, LeverageOne, SingularDesign

RANK_TOL = 1e-12
LEVERAGE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class OlsFit:
    beta_hat: np.ndarray
    sigma2_hat: float
    leverages: np.ndarray
    residuals: np.ndarray

    @property
    def p(self) -> int:
        return self.beta_hat.shape[0]


def add_intercept(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.ones(x.shape[0]), x])


def fit_ols(x: np.ndarray, y: np.ndarray) -> OlsFit:
    """Least squares through a thin QR factorization.

    Raises ``SingularDesign`` when ``n <= p`` or the smallest diagonal entry
    of R is below ``RANK_TOL`` relative to the largest.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"design {x.shape} does not match response {y.shape}")
    n, p = x.shape
    if n <= p:
        raise SingularDesign(f"need n > p, got n={n}, p={p}")
    q, r = np.linalg.qr(x, mode="reduced")
    diag = np.abs(np.diag(r))
    if diag.max() == 0 or diag.min() < RANK_TOL * diag.max():
        raise SingularDesign("design matrix is rank deficient")
    beta = scipy.linalg.solve_triangular(r, q.T @ y)
    residuals = y - x @ beta
    leverages = np.einsum("ij,ij->i", q, q)
    sigma2 = float(residuals @ residuals) / (n - p)
    return OlsFit(beta, sigma2, leverages, residuals)


def predict(fit: OlsFit, x0) -> np.ndarray | float:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != fit.p:
        raise DimensionMismatch(
            f"expected {fit.p} covariates, got {x0.shape[-1]}")
    out = x0 @ fit.beta_hat
    return float(out) if np.ndim(out) == 0 else out


def loo_predictions(fit: OlsFit, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Leave-one-out predictions ``y_i - e_i / (1 - h_ii)``."""
    y = np.asarray(y, dtype=float).ravel()
    if np.asarray(x).shape[0] != y.shape[0] or y.shape[0] != fit.residuals.shape[0]:
        raise DimensionMismatch("x, y and the fit disagree on n")
    h = fit.leverages
    bad = np.flatnonzero(h >= 1.0 - LEVERAGE_TOL)
    if bad.size:
        raise LeverageOne(bad)
    return y - fit.residuals / (1.0 - h)


def loo_score(x: np.ndarray, y: np.ndarray) -> float:
    fit = fit_ols(x, y)
    err = loo_predictions(fit, x, y) - np.asarray(y, dtype=float)
    return float(err @ err)
