"""Gaussian similarity graph over subjects.

The weight between two subjects combines a response kernel with a kernel over
the covariates both of them observe::

    a(i1, i2) = exp(-lambda1 * (y1 - y2)**2 - lambda2 * sum_k d_k**2)

where ``d_k`` is the plain difference for continuous columns and a 0/1
mismatch indicator for discrete ones. The response term is dropped when
either response is missing.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import MissingDataset
from .exceptions import AllRowsDegenerate

#: Row sums of A below this are treated as underflowed.
UNDERFLOW = 1e-300


def scale_factor(n: int, d0: int) -> float:
    """Rate ``n ** (1 / (2 d0 + 1))`` linking normalized and raw scales."""
    return float(n) ** (1.0 / (2 * d0 + 1))


@dataclass(frozen=True)
class ScaleParams:
    lambda1: float
    lambda2: float
    tau: Optional[float] = None
    d0: Optional[int] = None
    n: Optional[int] = None

    def __post_init__(self):
        if not (self.lambda1 >= 0 and self.lambda2 >= 0):
            raise ValueError("scale parameters must be nonnegative")

    @classmethod
    def from_tau(cls, tau: float, n: int, d0: int) -> "ScaleParams":
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        lam = tau * scale_factor(n, d0)
        return cls(lam, lam, tau=tau, d0=d0, n=n)

    def as_dict(self) -> dict:
        return {"lambda1": self.lambda1, "lambda2": self.lambda2,
                "tau": self.tau, "d0": self.d0, "n": self.n}


@dataclass(frozen=True, eq=False)
class WeightGraph:
    a: np.ndarray
    w: np.ndarray
    row_fallbacks: frozenset = frozenset()

    @property
    def n(self) -> int:
        return self.a.shape[0]


def _sq_distance(dataset: MissingDataset, i1: int, i2: int) -> float:
    shared = dataset.mask[i1] & dataset.mask[i2]
    total = 0.0
    for k in np.flatnonzero(shared):
        if dataset.schema[k].is_discrete:
            total += 0.0 if dataset.x[i1, k] == dataset.x[i2, k] else 1.0
        else:
            total += (dataset.x[i1, k] - dataset.x[i2, k]) ** 2
    return total


def pair_weight(dataset: MissingDataset, i1: int, i2: int,
                params: ScaleParams) -> float:
    """Kernel weight between two subjects whose responses are both observed."""
    obs = dataset.y_observed
    if not (obs[i1] and obs[i2]):
        raise ValueError("both responses must be observed; "
                         "use pair_weight_partial_y")
    dy2 = (dataset.y[i1] - dataset.y[i2]) ** 2
    return float(np.exp(-params.lambda1 * dy2
                        - params.lambda2 * _sq_distance(dataset, i1, i2)))


def pair_weight_partial_y(dataset: MissingDataset, i1: int, i2: int,
                          params: ScaleParams) -> float:
    obs = dataset.y_observed
    expo = -params.lambda2 * _sq_distance(dataset, i1, i2)
    if obs[i1] and obs[i2]:
        expo -= params.lambda1 * (dataset.y[i1] - dataset.y[i2]) ** 2
    return float(np.exp(expo))


def _block_distances(dataset, rows, columns, y_obs):
    x, mask = dataset.x, dataset.mask
    yr = dataset.y[rows]
    dy2 = (yr[:, None] - dataset.y[None, :]) ** 2
    dy2 *= y_obs[rows][:, None] & y_obs[None, :]
    dx2 = np.zeros_like(dy2)
    for k in columns:
        both = mask[rows, k][:, None] & mask[None, :, k]
        if dataset.schema[k].is_discrete:
            dx2 += both & (x[rows, k][:, None] != x[None, :, k])
        else:
            dx2 += np.where(both, (x[rows, k][:, None] - x[None, :, k]) ** 2, 0.0)
    return dy2, dx2


def _row_blocks(n, n_jobs, block=None):
    if block is None:
        block = max(1, -(-n // max(1, n_jobs)))
        block = min(block, 512)
    return [np.arange(s, min(n, s + block)) for s in range(0, n, block)]


class PairDistances:
    """Squared response and covariate distances for every pair of subjects.

    Distances do not depend on the scale parameters, so one instance serves a
    whole grid search. Column-excluded covariate sums are cached on demand.
    """

    def __init__(self, dataset: MissingDataset, n_jobs: int = 1):
        self.dataset = dataset
        self.n_jobs = n_jobs
        self._dy2 = None
        self._dx2 = {}

    @property
    def dy2(self) -> np.ndarray:
        if self._dy2 is None:
            self.covariate(None)
        return self._dy2

    def _compute(self, exclude):
        ds = self.dataset
        columns = [k for k in range(ds.p) if k != exclude]
        y_obs = ds.y_observed
        n = ds.n
        dy2 = np.empty((n, n))
        dx2 = np.empty((n, n))

        def work(rows):
            by, bx = _block_distances(ds, rows, columns, y_obs)
            dy2[rows] = by
            dx2[rows] = bx

        blocks = _row_blocks(n, self.n_jobs)
        if self.n_jobs > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                list(pool.map(work, blocks))
        else:
            for rows in blocks:
                work(rows)
        return dy2, dx2

    def covariate(self, exclude: Optional[int] = None) -> np.ndarray:
        if exclude not in self._dx2:
            dy2, self._dx2[exclude] = self._compute(exclude)
            if self._dy2 is None:
                self._dy2 = dy2
        return self._dx2[exclude]

    def graph(self, params: ScaleParams, exclude_column: Optional[int] = None,
              include_self: bool = False) -> WeightGraph:
        dx2 = self.covariate(exclude_column)
        expo = -params.lambda1 * self.dy2 - params.lambda2 * dx2
        return _normalize(expo, include_self)


def _normalize(expo: np.ndarray, include_self: bool) -> WeightGraph:
    n = expo.shape[0]
    a = np.exp(expo)
    diag = np.arange(n)
    a[diag, diag] = 0.0
    sums = a.sum(axis=1)
    if include_self:
        sums = sums + 1.0
    bad = sums < UNDERFLOW
    if bad.all():
        raise AllRowsDegenerate(
            "every row of the weight matrix underflowed; the scale parameters "
            "are far too large for the data")
    w = a / np.where(bad, 1.0, sums)[:, None]
    if include_self:
        w[diag, diag] = 1.0 / np.where(bad, 1.0, sums)
    fallbacks = np.flatnonzero(bad)
    if fallbacks.size:
        # limit of the normalized weights as the scale grows: all mass on the
        # nearest neighbour (first index on ties)
        e = expo[fallbacks].copy()
        e[np.arange(fallbacks.size), fallbacks] = -np.inf
        nearest = np.argmax(e, axis=1)
        w[fallbacks] = 0.0
        w[fallbacks, nearest] = 1.0
    return WeightGraph(a, w, frozenset(fallbacks.tolist()))


def build_graph(dataset: MissingDataset, params: ScaleParams,
                exclude_column: Optional[int] = None, *,
                include_self: bool = False, n_jobs: int = 1,
                distances: Optional[PairDistances] = None) -> WeightGraph:
    """Assemble the similarity matrix and its row-normalized form.

    ``exclude_column`` drops that column from every subject's observed set.
    ``include_self`` adds a unit self-weight to each row before normalizing
    (the diagonal of ``a`` stays zero either way).
    """
    if distances is None:
        distances = PairDistances(dataset, n_jobs=n_jobs)
    return distances.graph(params, exclude_column, include_self)
