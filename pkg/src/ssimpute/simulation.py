"""Generative designs for Monte Carlo studies of block-wise missing covariates.

Each draw produces two Bernoulli(0.5) covariates followed by ``p - 2``
correlated continuous covariates, a linear response with unit coefficients and
noise calibrated to a target R^2, and a missingness mask whose mechanism
intercept is tuned by bisection so the realized missing rate hits the target.

Randomness comes from a Philox counter-based generator keyed by
``(seed, replication)``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .data import DISCRETE, ColumnSchema, MissingDataset
from .exceptions import CalibrationFailed, NonPositiveDefiniteCovariance

MECHANISMS = ("MCAR", "MAR", "MNAR", "MNAR2", "MNAR3")
N_DISCRETE = 2


def make_rng(seed: int, replication: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replication])))


@dataclass(frozen=True)
class SimScenario:
    n: int = 500
    p: int = 10
    rho: float = 0.5
    cov_structure: str = "exchangeable"
    covariate_law: str = "normal"
    r2: float = 0.6
    mechanism: str = "MCAR"
    pattern_family: str = "blockwise7"
    target_missing_rate: float = 0.5
    train_fraction: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if self.p < N_DISCRETE + 2:
            raise ValueError("p must be at least 4")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0 < self.r2 < 1:
            raise ValueError("r2 must lie in (0, 1)")
        if self.cov_structure == "exchangeable":
            if not 0 <= self.rho < 1:
                raise ValueError("exchangeable structure needs 0 <= rho < 1")
        elif self.cov_structure == "ar1":
            if not abs(self.rho) < 1:
                raise ValueError("ar1 structure needs |rho| < 1")
        else:
            raise ValueError(f"unknown cov_structure {self.cov_structure!r}")
        if self.covariate_law not in ("normal", "exponential"):
            raise ValueError(f"unknown covariate_law {self.covariate_law!r}")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.pattern_family not in ("blockwise7", "none"):
            raise ValueError(f"unknown pattern_family {self.pattern_family!r}")
        if not 0 <= self.target_missing_rate < 1:
            raise ValueError("target_missing_rate must lie in [0, 1)")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")

    @property
    def n_continuous(self) -> int:
        return self.p - N_DISCRETE

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **changes) -> "SimScenario":
        return replace(self, **changes)


def covariance(scenario: SimScenario) -> np.ndarray:
    q = scenario.n_continuous
    if scenario.cov_structure == "ar1":
        idx = np.arange(q)
        return scenario.rho ** np.abs(idx[:, None] - idx[None, :])
    sigma = np.full((q, q), scenario.rho)
    np.fill_diagonal(sigma, 1.0)
    return sigma


def sqrt_covariance(sigma: np.ndarray) -> np.ndarray:
    """Symmetric square root via the eigendecomposition."""
    vals, vecs = np.linalg.eigh(sigma)
    if vals.min() <= 0:
        raise NonPositiveDefiniteCovariance(
            f"covariance has smallest eigenvalue {vals.min():.3g}")
    return (vecs * np.sqrt(vals)) @ vecs.T


def gen_covariates(scenario: SimScenario, rng: np.random.Generator) -> np.ndarray:
    n = scenario.n
    discrete = rng.binomial(1, 0.5, size=(n, N_DISCRETE)).astype(float)
    root = sqrt_covariance(covariance(scenario))
    if scenario.covariate_law == "normal":
        z = rng.standard_normal((n, scenario.n_continuous))
    else:
        z = rng.standard_exponential((n, scenario.n_continuous)) - 1.0
    return np.hstack([discrete, z @ root])


def calibrate_sigma2(scenario: SimScenario) -> float:
    """Noise variance giving the target R^2 with unit coefficients."""
    signal = N_DISCRETE * 0.25 + float(covariance(scenario).sum())
    return signal * (1.0 - scenario.r2) / scenario.r2


def blockwise_patterns(p: int) -> list:
    """Observed-column sets of the seven block patterns (0-based).

    The first ``p - 1`` columns split into three contiguous blocks; a pattern
    observes a nonempty union of blocks plus the last column, which is always
    observed. For ``p = 10`` this gives {1,2,3,10}, {4,5,6,10}, {7,8,9,10},
    {1..6,10}, {1,2,3,7,8,9,10}, {4..10} and {1..10}.
    """
    blocks = [b.tolist() for b in np.array_split(np.arange(p - 1), 3)]
    combos = [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]
    return [frozenset(sum((blocks[b] for b in c), []) + [p - 1]) for c in combos]


def _scores(scenario, x, epsilons):
    """Linear predictors (before the intercept) of the missingness model.

    Returns a per-subject vector for the block family and an ``n x p`` matrix
    for the cell-wise family.
    """
    n, p = x.shape
    mech = scenario.mechanism
    if mech == "MCAR":
        base = np.zeros(n)
    elif mech == "MAR":
        base = 0.5 * x[:, -1]
    elif mech == "MNAR":
        base = epsilons
    elif mech == "MNAR2":
        base = epsilons ** 2
    else:
        prev = np.hstack([np.zeros((n, 1)), x[:, :-1]])
        cell = 0.5 * x + 0.5 * x ** 2 + 0.5 * x * prev
        if scenario.pattern_family == "none":
            return cell
        return cell.mean(axis=1)
    if scenario.pattern_family == "none":
        return np.repeat(base[:, None], p, axis=1)
    return base


def _bisect_intercept(scores, uniforms, target, tol):
    """Find alpha with mean(uniforms < sigmoid(scores + alpha)) close to target."""
    span = float(np.max(np.abs(scores))) + 60.0
    lo, hi = -span, span

    def rate(alpha):
        prob = expit(scores + alpha)
        return float(np.mean(uniforms < prob))

    r_lo, r_hi = rate(lo), rate(hi)
    if not (r_lo <= target <= r_hi):
        raise CalibrationFailed(
            f"target rate {target} outside reachable [{r_lo}, {r_hi}]")
    best, best_err = lo, abs(r_lo - target)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = rate(mid)
        if abs(r - target) < best_err:
            best, best_err = mid, abs(r - target)
        if r < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    if best_err > tol:
        raise CalibrationFailed(
            f"closest achievable rate misses target {target} by {best_err:.4f}")
    return best


@dataclass(frozen=True, eq=False)
class MaskDraw:
    mask: np.ndarray
    alpha: Optional[float]
    rate: float


def assign_missing(scenario: SimScenario, x: np.ndarray, epsilons: np.ndarray,
                   rng: np.random.Generator, tol: float = 0.005) -> MaskDraw:
    """Draw the observation mask and its calibrated intercept.

    For the block family a subject is "missing" with the mechanism
    probability and then receives one of the seven patterns uniformly; the
    calibrated rate is the share of missing subjects. For the cell-wise family
    every cell of the first ``p - 1`` columns (all ``p`` under MNAR3) is
    masked independently and the rate is the share of masked cells.
    """
    n, p = x.shape
    target = scenario.target_missing_rate
    mask = np.ones((n, p), dtype=bool)
    scores = _scores(scenario, x, epsilons)
    if scenario.pattern_family == "blockwise7":
        uniforms = rng.random(n)
        choice = rng.integers(0, 7, size=n)
        if target == 0:
            return MaskDraw(mask, None, 0.0)
        alpha = _bisect_intercept(scores, uniforms, target, tol)
        missing = uniforms < expit(scores + alpha)
        patterns = blockwise_patterns(p)
        pattern_masks = np.zeros((7, p), dtype=bool)
        for k, cols in enumerate(patterns):
            pattern_masks[k, sorted(cols)] = True
        mask[missing] = pattern_masks[choice[missing]]
        return MaskDraw(mask, alpha, float(missing.mean()))
    uniforms = rng.random((n, p))
    if target == 0:
        return MaskDraw(mask, None, 0.0)
    maskable = np.ones(p, dtype=bool)
    if scenario.mechanism != "MNAR3":
        maskable[-1] = False
    # rate is over all n * p cells, so the maskable cells carry all of it
    cell_target = target * p / maskable.sum()
    alpha = _bisect_intercept(scores[:, maskable], uniforms[:, maskable],
                              cell_target, tol * p / maskable.sum())
    prob = expit(scores[:, maskable] + alpha)
    mask[:, maskable] = ~(uniforms[:, maskable] < prob)
    return MaskDraw(mask, alpha, float((~mask).mean()))


def schema_for(p: int) -> tuple:
    return tuple(
        ColumnSchema(f"x{j + 1}", DISCRETE, (0.0, 1.0)) if j < N_DISCRETE
        else ColumnSchema(f"x{j + 1}") for j in range(p))


@dataclass(frozen=True, eq=False)
class SimDraw:
    dataset: MissingDataset
    x_true: np.ndarray
    y: np.ndarray
    beta_true: np.ndarray
    sigma2: float
    epsilons: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    scenario: SimScenario
    replication: int = 0
    alpha: Optional[float] = None
    missing_rate: float = 0.0

    @property
    def train(self) -> MissingDataset:
        return self.dataset.subset(self.train_idx)

    @property
    def test(self) -> MissingDataset:
        return self.dataset.subset(self.test_idx)


def draw(scenario: SimScenario, replication: int = 0) -> SimDraw:
    rng = make_rng(scenario.seed, replication)
    x = gen_covariates(scenario, rng)
    sigma2 = calibrate_sigma2(scenario)
    epsilons = rng.normal(0.0, np.sqrt(sigma2), size=scenario.n)
    beta = np.ones(scenario.p)
    y = x @ beta + epsilons
    masking = assign_missing(scenario, x, epsilons, rng)
    perm = rng.permutation(scenario.n)
    n_train = int(round(scenario.train_fraction * scenario.n))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    dataset = MissingDataset(y, x, masking.mask, schema_for(scenario.p))
    return SimDraw(dataset, x, y, beta, sigma2, epsilons, train_idx, test_idx,
                   scenario, replication, masking.alpha, masking.rate)
