"""Semi-supervised imputation over a weight graph.

For a column ``j`` with missing subjects ``S0`` and observed subjects ``S1``
the continuous imputation solves ``(I - W[S0, S0]) x = W[S0, S1] @ X[S1, j]``.
Discrete columns propagate one-hot label rows through the same operator until
the class-probability rows stop changing.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .data import ColumnDiagnostics, ImputationResult, MissingDataset, validate
from .exceptions import EmptyObservedSet
from .kernel import ScaleParams, WeightGraph, build_graph

DIRECT = "direct"
ITERATIVE_FALLBACK = "iterative_fallback"
MEAN_FALLBACK = "mean_fallback"


@dataclass(frozen=True, eq=False)
class ContinuousSolve:
    values: np.ndarray
    status: str
    residual: float
    iterations: int = 0
    converged: bool = True
    n_fallback: int = 0


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    probs: np.ndarray
    iterations: int
    converged: bool
    labels: np.ndarray = field(default=None)
    n_fallback: int = 0


def _grounded(w00: np.ndarray, w01: np.ndarray) -> np.ndarray:
    """Unlabeled nodes with a weighted path into the labeled set."""
    grounded = w01.sum(axis=1) > 0
    frontier = grounded.copy()
    adj = w00 > 0
    while frontier.any():
        reached = adj[:, frontier].any(axis=1) & ~grounded
        grounded |= reached
        frontier = reached
    return grounded


def _solve_system(w00, rhs):
    m = np.eye(w00.shape[0]) - w00
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            lu = scipy.linalg.lu_factor(m, check_finite=False)
            x = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
        except (ValueError, np.linalg.LinAlgError):
            return None, np.inf
    if not np.isfinite(x).all():
        return None, np.inf
    return x, float(np.linalg.norm(m @ x - rhs))


def _eliminate(w00, leak, rhs):
    """Solve ``(I - W00) x = rhs`` by subtraction-free state reduction.

    Pivots are formed as the sum of a row's remaining off-diagonal weights
    plus its ``leak`` into the labeled set, never as ``1 - w_kk``, so nearly
    closed clusters keep full relative accuracy and the solution stays a
    convex combination of the labeled values. Requires every node grounded.
    """
    a = np.array(w00, dtype=float, copy=True)
    b = np.array(rhs, dtype=float, copy=True).reshape(len(a), -1)
    leak = np.array(leak, dtype=float, copy=True)
    n = len(a)
    piv = np.empty(n)
    for k in range(n):
        row = a[k, k + 1:]
        d = row.sum() + leak[k]
        if not d > 0:
            raise np.linalg.LinAlgError(f"node {k} has no path to labeled data")
        piv[k] = d
        col = a[k + 1:, k] / d
        a[k + 1:, k + 1:] += np.outer(col, row)
        b[k + 1:] += np.outer(col, b[k])
        leak[k + 1:] += col * leak[k]
    x = np.empty_like(b)
    for k in range(n - 1, -1, -1):
        x[k] = (a[k, k + 1:] @ x[k + 1:] + b[k]) / piv[k]
    return x.reshape(np.shape(rhs))


def _in_hull(x, lo, hi):
    slack = 1e-9 * max(hi - lo, 1.0)
    return bool(np.all(x >= lo - slack) and np.all(x <= hi + slack))


def _fixed_point(w00, rhs, x0, eps, max_iter):
    x = x0
    for it in range(1, max_iter + 1):
        new = w00 @ x + rhs
        change = np.max(np.abs(new - x)) if x.size else 0.0
        x = new
        if change < eps:
            return x, it, True
    return x, max_iter, False


def solve_continuous(w: np.ndarray, unlabeled: np.ndarray, labeled: np.ndarray,
                     values: np.ndarray, *, eps: float = 1e-12,
                     max_iter: int = 100_000) -> ContinuousSolve:
    """Harmonic solution on ``unlabeled`` given ``values`` on ``labeled``."""
    if labeled.size == 0:
        raise EmptyObservedSet(None)
    if unlabeled.size == 0:
        return ContinuousSolve(np.empty(0), DIRECT, 0.0)
    w00 = w[np.ix_(unlabeled, unlabeled)]
    w01 = w[np.ix_(unlabeled, labeled)]
    rhs = w01 @ values
    tol = 1e-6 * max(np.linalg.norm(rhs), np.finfo(float).tiny)
    lo, hi = float(np.min(values)), float(np.max(values))
    x, residual = _solve_system(w00, rhs)
    # a tiny residual can hide a huge error along a near-null direction
    if x is not None and residual <= tol and _in_hull(x, lo, hi):
        return ContinuousSolve(x, DIRECT, residual)

    # singular or badly conditioned: isolate components with no path to data
    grounded = _grounded(w00, w01)
    n_fallback = int((~grounded).sum())
    status = MEAN_FALLBACK if n_fallback else ITERATIVE_FALLBACK
    out = np.full(unlabeled.size, float(np.mean(values)))
    g = np.flatnonzero(grounded)
    iters, converged, residual = 0, True, 0.0
    if g.size:
        u = np.flatnonzero(~grounded)
        sub = w00[np.ix_(g, g)]
        rhs_g = rhs[g] + w00[np.ix_(g, u)] @ out[u]
        leak = w01[g].sum(axis=1) + w00[np.ix_(g, u)].sum(axis=1)
        # warm start makes the iteration converge in a step or two
        start = _eliminate(sub, leak, rhs_g)
        xg, iters, converged = _fixed_point(sub, rhs_g, start, eps, max_iter)
        residual = float(np.linalg.norm(xg - sub @ xg - rhs_g))
        out[g] = xg
    return ContinuousSolve(out, status, residual, iters, converged, n_fallback)


def _column_sets(dataset, j):
    obs = dataset.mask[:, j]
    return np.flatnonzero(~obs), np.flatnonzero(obs)


def impute_continuous_column(graph: WeightGraph, dataset: MissingDataset,
                             j: int) -> ContinuousSolve:
    s0, s1 = _column_sets(dataset, j)
    if s1.size == 0:
        raise EmptyObservedSet(j)
    return solve_continuous(graph.w, s0, s1, dataset.x[s1, j])


def impute_continuous_iterative(graph: WeightGraph, dataset: MissingDataset,
                                j: int, eps: float = 1e-12,
                                max_iter: int = 100_000) -> ContinuousSolve:
    """Fixed-point iteration ``x <- W00 x + W01 X1`` started from zero."""
    s0, s1 = _column_sets(dataset, j)
    if s1.size == 0:
        raise EmptyObservedSet(j)
    w00 = graph.w[np.ix_(s0, s0)]
    rhs = graph.w[np.ix_(s0, s1)] @ dataset.x[s1, j]
    x, iters, conv = _fixed_point(w00, rhs, np.zeros(s0.size), eps, max_iter)
    residual = float(np.linalg.norm(x - w00 @ x - rhs)) if s0.size else 0.0
    return ContinuousSolve(x, ITERATIVE_FALLBACK, residual, iters, conv)


def _normalize_rows(probs):
    return probs / probs.sum(axis=1, keepdims=True)


def propagate_labels(w: np.ndarray, unlabeled: np.ndarray, labeled: np.ndarray,
                     codes: np.ndarray, n_classes: int, *, eps: float = 1e-8,
                     max_iter: int = 1000,
                     callback: Optional[Callable[[int, np.ndarray], None]] = None,
                     method: str = "iterate") -> LabelMatrix:
    """Iterative label propagation with per-step row normalization.

    Starts from uniform class probabilities and stops once the Frobenius
    norm of the update falls below ``eps``. Unlabeled nodes with no weighted
    path to a labeled node take the observed class frequencies instead.

    ``method="solve"`` returns the fixed point of the same update directly
    from a dense factorization (``iterations`` is then 0); grid searches use
    it because the iteration can need hundreds of steps.
    """
    if labeled.size == 0:
        raise EmptyObservedSet(None)
    codes = np.asarray(codes, dtype=int)
    if unlabeled.size == 0:
        return LabelMatrix(np.empty((0, n_classes)), 0, True,
                           np.empty(0, dtype=int))
    onehot = np.zeros((labeled.size, n_classes))
    onehot[np.arange(labeled.size), codes] = 1.0
    w00 = w[np.ix_(unlabeled, unlabeled)]
    w01 = w[np.ix_(unlabeled, labeled)]
    cbar = w01 @ onehot
    grounded = _grounded(w00, w01)
    n_fallback = int((~grounded).sum())
    prior = onehot.mean(axis=0)

    if method == "solve":
        probs = np.tile(prior, (unlabeled.size, 1))
        g = np.flatnonzero(grounded)
        if g.size:
            u = np.flatnonzero(~grounded)
            sub = w00[np.ix_(g, g)]
            rhs = cbar[g] + w00[np.ix_(g, u)] @ probs[u]
            sol, _ = _solve_system(sub, rhs)
            if sol is None or not (_in_hull(sol, 0.0, 1.0) and np.allclose(
                    sol.sum(axis=1), 1.0, rtol=0, atol=1e-8)):
                leak = w01[g].sum(axis=1) + w00[np.ix_(g, u)].sum(axis=1)
                sol = _eliminate(sub, leak, rhs)
            probs[g] = np.clip(sol, 0.0, None)
        probs = _normalize_rows(probs)
        return LabelMatrix(probs, 0, True, np.argmax(probs, axis=1), n_fallback)
    if method != "iterate":
        raise ValueError(f"unknown method {method!r}")

    probs = np.full((unlabeled.size, n_classes), 1.0 / n_classes)
    if n_fallback:
        probs[~grounded] = prior
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = w00 @ probs + cbar
        if n_fallback:
            new[~grounded] = prior
        new = _normalize_rows(new)
        change = np.linalg.norm(new - probs)
        probs = new
        if callback is not None:
            callback(it, probs)
        if change < eps:
            converged = True
            break
    # classes no labeled subject holds have exact fixed-point mass zero; the
    # iteration only decays it geometrically
    probs[:, prior == 0] = 0.0
    probs = _normalize_rows(probs)
    labels = np.argmax(probs, axis=1)
    return LabelMatrix(probs, it, converged, labels, n_fallback)


def impute_discrete_column(graph: WeightGraph, dataset: MissingDataset, j: int,
                           eps: float = 1e-8, max_iter: int = 1000,
                           callback=None) -> LabelMatrix:
    s0, s1 = _column_sets(dataset, j)
    if s1.size == 0:
        raise EmptyObservedSet(j)
    return propagate_labels(graph.w, s0, s1, dataset.x[s1, j],
                            dataset.schema[j].n_classes, eps=eps,
                            max_iter=max_iter, callback=callback)


def _impute_column(graph, dataset, j, x_hat, diagnostics, probabilities,
                   eps, max_iter, label_method="iterate"):
    s0, s1 = _column_sets(dataset, j)
    if dataset.schema[j].is_discrete:
        if s1.size == 0:
            raise EmptyObservedSet(j)
        lm = propagate_labels(graph.w, s0, s1, dataset.x[s1, j],
                              dataset.schema[j].n_classes, eps=eps,
                              max_iter=max_iter, method=label_method)
        x_hat[s0, j] = lm.labels
        probabilities[j] = lm.probs
        diagnostics[j] = ColumnDiagnostics(
            "label_propagation", lm.iterations, lm.n_fallback > 0,
            lm.converged, 0.0, lm.n_fallback)
    else:
        sol = impute_continuous_column(graph, dataset, j)
        x_hat[s0, j] = sol.values
        diagnostics[j] = ColumnDiagnostics(
            sol.status, sol.iterations, sol.status != DIRECT, sol.converged,
            sol.residual, sol.n_fallback)


def impute_all(dataset: MissingDataset, params: ScaleParams, *,
               eps: float = 1e-8, max_iter: int = 1000,
               include_self: bool = False, n_jobs: int = 1,
               graph: Optional[WeightGraph] = None,
               label_method: str = "iterate") -> ImputationResult:
    """Impute every column over one shared weight graph."""
    validate(dataset)
    x_hat = np.array(dataset.x, copy=True)
    diagnostics, probabilities = {}, {}
    if (~dataset.mask).any():
        if graph is None:
            graph = build_graph(dataset, params, include_self=include_self,
                                n_jobs=n_jobs)
        for j in range(dataset.p):
            _impute_column(graph, dataset, j, x_hat, diagnostics,
                           probabilities, eps, max_iter, label_method)
    else:
        diagnostics = {j: ColumnDiagnostics(DIRECT) for j in range(dataset.p)}
    info = {"row_fallbacks": sorted(graph.row_fallbacks) if graph else []}
    return ImputationResult(x_hat, ~dataset.mask, diagnostics, params,
                            probabilities, info)


def impute_sssi(dataset: MissingDataset, params: ScaleParams, m: int = 10, *,
                refresh: str = "column", eps: float = 1e-8,
                max_iter: int = 1000, include_self: bool = False,
                n_jobs: int = 1) -> ImputationResult:
    """Sequential imputation: ``m`` column-by-column sweeps after one SSI pass.

    When re-imputing column ``j`` the graph uses current imputations of every
    other column, while column ``j`` keeps its original observation pattern
    and only its truly observed values act as labels. ``refresh="sweep"``
    builds one graph per sweep from the fully completed matrix instead.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if refresh not in ("column", "sweep"):
        raise ValueError(f"unknown refresh mode {refresh!r}")
    result = impute_all(dataset, params, eps=eps, max_iter=max_iter,
                        include_self=include_self, n_jobs=n_jobs)
    columns = [j for j in range(dataset.p) if (~dataset.mask[:, j]).any()]
    if not columns:
        return ImputationResult(result.x_hat, result.imputed_mask,
                                result.diagnostics, params, {}, {"sweeps": m})
    x_hat = np.array(result.x_hat, copy=True)
    diagnostics = dict(result.diagnostics)
    probabilities = dict(result.probabilities)
    full = np.ones_like(dataset.mask)
    for _ in range(m):
        if refresh == "sweep":
            graph = build_graph(dataset.replace(x=x_hat, mask=full), params,
                                include_self=include_self, n_jobs=n_jobs)
        for j in columns:
            if refresh == "column":
                mask_j = full.copy()
                mask_j[:, j] = dataset.mask[:, j]
                graph = build_graph(dataset.replace(x=x_hat, mask=mask_j),
                                    params, include_self=include_self,
                                    n_jobs=n_jobs)
            _impute_column(graph, dataset, j, x_hat, diagnostics,
                           probabilities, eps, max_iter)
    return ImputationResult(x_hat, result.imputed_mask, diagnostics, params,
                            probabilities, {"sweeps": m, "refresh": refresh})
