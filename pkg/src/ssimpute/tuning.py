"""Grid selection of the normalized scale ``tau``.

Two criteria are available. The interchangeable criterion imputes each
column's missing subjects, then swaps roles and reconstructs the observed
subjects from those imputations; it needs no model for the response. The
cross-validation criterion scores leave-one-out OLS predictions on the imputed
design.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import MissingDataset, validate
from .exceptions import (AllGridPointsFailed, DataError, EmptyObservedSet,
                         NumericError, SingularDesign)
from .impute import impute_all, propagate_labels, solve_continuous
from .kernel import PairDistances, ScaleParams, scale_factor
from .regression import add_intercept, loo_score


@dataclass(frozen=True)
class TauGrid:
    lo: float = 0.0
    hi: float = 2.0
    steps: int = 21

    def __post_init__(self):
        if not (0 <= self.lo < self.hi):
            raise ValueError("grid needs 0 <= lo < hi")
        if self.steps < 2:
            raise ValueError("grid needs at least 2 steps")

    @classmethod
    def parse(cls, text: str) -> "TauGrid":
        """Parse ``lo:hi:steps``."""
        try:
            lo, hi, steps = text.split(":")
            return cls(float(lo), float(hi), int(steps))
        except ValueError as exc:
            raise ValueError(f"bad grid {text!r}, expected lo:hi:steps") from exc

    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass(frozen=True, eq=False)
class TuneReport:
    grid: np.ndarray
    scores: np.ndarray
    tau_hat: float
    lambda_hat: float
    n: int
    d0: int
    criterion: str = ""
    failures: dict = field(default_factory=dict)

    def params(self) -> ScaleParams:
        return ScaleParams(self.lambda_hat, self.lambda_hat, tau=self.tau_hat,
                           d0=self.d0, n=self.n)

    def to_tsv(self) -> str:
        lines = ["# ssimpute tune-report v1",
                 f"# criterion={self.criterion} n={self.n} d0={self.d0} "
                 f"tau_hat={self.tau_hat!r} lambda_hat={self.lambda_hat!r}",
                 "tau\tlambda\tscore"]
        factor = scale_factor(self.n, self.d0)
        for t, s in zip(self.grid, self.scores):
            lines.append(f"{float(t)!r}\t{float(t) * factor!r}\t{float(s)!r}")
        return "\n".join(lines) + "\n"


def _select(grid, scores, index, dataset, criterion, failures):
    scores = np.asarray(scores, dtype=float)
    finite = np.isfinite(scores)
    if not finite.any():
        raise AllGridPointsFailed(
            f"{criterion}: no grid point produced a finite score")
    # first minimum: the grid is increasing, so ties go to the smallest tau
    best = int(np.argmin(np.where(finite, scores, np.inf)))
    tau_hat = float(grid[best])
    return TuneReport(np.asarray(grid, dtype=float), scores, tau_hat,
                      tau_hat * scale_factor(dataset.n, index.d0), dataset.n,
                      index.d0, criterion, failures)


def q_criterion(dataset: MissingDataset, tau: float, *,
                swap_keep_column: bool = False,
                distances: Optional[PairDistances] = None,
                include_self: bool = False, eps: float = 1e-8,
                max_iter: int = 1000, index=None,
                label_method: str = "solve") -> float:
    """Interchangeable-imputation error at normalized scale ``tau``.

    Continuous columns add squared reconstruction error; discrete columns add
    the number of misclassified observed subjects. Columns without missing
    entries add nothing. The swap step drops column ``j`` from the kernel
    distances unless ``swap_keep_column`` is set.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    index = index or validate(dataset)
    if all(s.size == 0 for s in index.s0):
        raise EmptyObservedSet(
            None, "no column has missing entries; the interchangeable "
                  "criterion is undefined")
    params = ScaleParams.from_tau(tau, dataset.n, index.d0)
    distances = distances or PairDistances(dataset)
    graph = distances.graph(params, include_self=include_self)
    total = 0.0
    for j in range(dataset.p):
        s0, s1 = index.s0[j], index.s1[j]
        if s0.size == 0:
            continue
        swap = graph if swap_keep_column else distances.graph(
            params, exclude_column=j, include_self=include_self)
        truth = dataset.x[s1, j]
        if dataset.schema[j].is_discrete:
            c = dataset.schema[j].n_classes
            first = propagate_labels(graph.w, s0, s1, truth, c, eps=eps,
                                     max_iter=max_iter, method=label_method)
            back = propagate_labels(swap.w, s1, s0, first.labels, c, eps=eps,
                                    max_iter=max_iter, method=label_method)
            total += float(np.sum(back.labels != truth.astype(int)))
        else:
            first = solve_continuous(graph.w, s0, s1, truth)
            back = solve_continuous(swap.w, s1, s0, first.values)
            total += float(np.sum((back.values - truth) ** 2))
    return total


def tune_interchangeable(dataset: MissingDataset, grid: TauGrid = TauGrid(), *,
                         swap_keep_column: bool = False, include_self: bool = False,
                         eps: float = 1e-8, max_iter: int = 1000,
                         n_jobs: int = 1) -> TuneReport:
    index = validate(dataset)
    distances = PairDistances(dataset, n_jobs=n_jobs)
    taus = grid.values()
    scores, failures = [], {}
    for tau in taus:
        try:
            scores.append(q_criterion(
                dataset, float(tau), swap_keep_column=swap_keep_column,
                distances=distances, include_self=include_self, eps=eps,
                max_iter=max_iter, index=index))
        except EmptyObservedSet:
            raise
        except (NumericError, DataError) as exc:
            failures[float(tau)] = repr(exc)
            scores.append(np.inf)
    return _select(taus, scores, index, dataset, "interchangeable", failures)


def cv_criterion(dataset: MissingDataset, tau: float, *, intercept: bool = False,
                 distances: Optional[PairDistances] = None,
                 include_self: bool = False, eps: float = 1e-8,
                 max_iter: int = 1000, index=None,
                 label_method: str = "solve") -> float:
    """Sum of squared leave-one-out OLS prediction errors after imputation."""
    index = index or validate(dataset)
    params = ScaleParams.from_tau(tau, dataset.n, index.d0)
    graph = None
    if (~dataset.mask).any():
        distances = distances or PairDistances(dataset)
        graph = distances.graph(params, include_self=include_self)
    result = impute_all(dataset, params, eps=eps, max_iter=max_iter,
                        graph=graph, label_method=label_method)
    design = dataset.to_numeric(result.x_hat)
    if intercept:
        design = add_intercept(design)
    return loo_score(design, dataset.y)


def tune_cv(dataset: MissingDataset, grid: TauGrid = TauGrid(), *,
            intercept: bool = False, include_self: bool = False,
            eps: float = 1e-8, max_iter: int = 1000,
            n_jobs: int = 1) -> TuneReport:
    if dataset.y_mask is not None:
        raise ValueError("cross-validation tuning needs a fully observed response")
    p = dataset.p + int(intercept)
    if dataset.n <= p:
        raise SingularDesign(f"need n > p, got n={dataset.n}, p={p}")
    index = validate(dataset)
    distances = PairDistances(dataset, n_jobs=n_jobs)
    taus = grid.values()
    scores, failures = [], {}
    last = None
    for tau in taus:
        try:
            scores.append(cv_criterion(
                dataset, float(tau), intercept=intercept, distances=distances,
                include_self=include_self, eps=eps, max_iter=max_iter,
                index=index))
        except NumericError as exc:
            failures[float(tau)] = repr(exc)
            scores.append(np.inf)
            last = exc
    try:
        return _select(taus, scores, index, dataset, "cv", failures)
    except AllGridPointsFailed as exc:
        raise exc from last
