"""Replication metrics, reference imputers and the benchmark runner."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .data import ColumnDiagnostics, ImputationResult, MissingDataset
from .exceptions import EmptyObservedSet, SSIError
from .impute import impute_all, impute_sssi
from .kernel import ScaleParams
from .regression import fit_ols
from .simulation import SimDraw, SimScenario, draw
from .tuning import TauGrid, tune_cv, tune_interchangeable

log = logging.getLogger(__name__)

METRICS = ("ia_raw", "ia_rmse", "ea", "pa_raw", "pa_rmse")
METHODS = ("SSI1", "SSI2", "SSSI1", "SSSI2", "mean", "knn")
FORMAT_VERSION = "ssimpute bench-table v1"


@dataclass(frozen=True)
class RepMetrics:
    ia_raw: float
    ia_rmse: float
    ea: float
    pa_raw: float
    pa_rmse: float

    def as_dict(self) -> dict:
        return asdict(self)


def _mode(codes, n_classes):
    return int(np.argmax(np.bincount(codes.astype(int), minlength=n_classes)))


def baseline_mean(dataset: MissingDataset) -> ImputationResult:
    """Column mean for continuous columns, mode (lowest class on ties) for
    discrete ones."""
    x_hat = np.array(dataset.x, copy=True)
    diagnostics = {}
    for j in range(dataset.p):
        obs = dataset.mask[:, j]
        if not obs.any():
            raise EmptyObservedSet(j)
        if dataset.schema[j].is_discrete:
            fill = _mode(dataset.x[obs, j], dataset.schema[j].n_classes)
        else:
            fill = float(np.mean(dataset.x[obs, j]))
        x_hat[~obs, j] = fill
        diagnostics[j] = ColumnDiagnostics("mean")
    return ImputationResult(x_hat, ~dataset.mask, diagnostics)


def _knn_distances(dataset):
    """Squared distances over commonly observed columns, rescaled by
    ``p / #common`` as in the NaN-Euclidean metric; inf with nothing shared."""
    n, p = dataset.n, dataset.p
    num = np.zeros((n, n))
    cnt = np.zeros((n, n))
    for k in range(p):
        m = dataset.mask[:, k]
        both = m[:, None] & m[None, :]
        col = dataset.x[:, k]
        if dataset.schema[k].is_discrete:
            diff2 = (col[:, None] != col[None, :]).astype(float)
        else:
            diff2 = (col[:, None] - col[None, :]) ** 2
        num += np.where(both, diff2, 0.0)
        cnt += both
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(cnt > 0, num * p / cnt, np.inf)


def baseline_knn(dataset: MissingDataset, k: int = 5) -> ImputationResult:
    """k-nearest-neighbour imputation among subjects observing the column.

    Continuous entries take the neighbour mean, discrete entries the majority
    class (lowest class on ties). Distance ties resolve by subject order.
    Entries with no reachable neighbour fall back to the column mean/mode.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    dist = _knn_distances(dataset)
    fallback = baseline_mean(dataset).x_hat
    x_hat = np.array(dataset.x, copy=True)
    diagnostics = {}
    for j in range(dataset.p):
        s0 = np.flatnonzero(~dataset.mask[:, j])
        s1 = np.flatnonzero(dataset.mask[:, j])
        discrete = dataset.schema[j].is_discrete
        n_fallback = 0
        for i in s0:
            d = dist[i, s1]
            ok = np.isfinite(d)
            if not ok.any():
                x_hat[i, j] = fallback[i, j]
                n_fallback += 1
                continue
            cand = s1[ok]
            nearest = cand[np.argsort(d[ok], kind="stable")[:k]]
            vals = dataset.x[nearest, j]
            if discrete:
                x_hat[i, j] = _mode(vals, dataset.schema[j].n_classes)
            else:
                x_hat[i, j] = float(np.mean(vals))
        diagnostics[j] = ColumnDiagnostics("knn", fallback_applied=n_fallback > 0,
                                           n_fallback=n_fallback)
    return ImputationResult(x_hat, ~dataset.mask, diagnostics, info={"k": k})


def imputation_metrics(x_hat: np.ndarray, x_true: np.ndarray,
                       missing: np.ndarray) -> tuple:
    err = np.where(missing, x_hat - x_true, 0.0)
    raw = float(np.linalg.norm(err))
    count = int(missing.sum())
    return raw, (raw / np.sqrt(count) if count else 0.0)


class _TuneCache:
    """Per-replication cache so SSI and SSSI variants share one tuning."""

    def __init__(self, train, grid, n_jobs=1):
        self.train = train
        self.grid = grid
        self.n_jobs = n_jobs
        self.reports = {}

    def params(self, criterion) -> ScaleParams:
        if criterion not in self.reports:
            tune = tune_interchangeable if criterion == "interchangeable" else tune_cv
            self.reports[criterion] = tune(self.train, self.grid, n_jobs=self.n_jobs)
        return self.reports[criterion].params()


def _parse_method(method):
    name, _, arg = method.partition(":")
    return name, arg


def score_replication(draw_: SimDraw, method: str,
                      tuned_params: Optional[ScaleParams] = None, *,
                      grid: TauGrid = TauGrid(), sweeps: int = 10, k: int = 5,
                      cache: Optional[_TuneCache] = None,
                      hide_test_response: bool = False) -> RepMetrics:
    """Impute, fit OLS on the training rows and score one replication.

    Training rows are imputed from the training data alone. Test rows are
    imputed jointly with the whole sample, reusing the scale chosen on the
    training data. Their responses enter the kernel like any other subject's
    unless ``hide_test_response`` is set, which links test rows through their
    covariates only and gives a strictly out-of-sample prediction score.
    """
    name, arg = _parse_method(method)
    train = draw_.train
    stacked = draw_.dataset
    if hide_test_response:
        in_train = np.zeros(draw_.dataset.n, dtype=bool)
        in_train[draw_.train_idx] = True
        stacked = stacked.replace(y_mask=in_train)
    cache = cache or _TuneCache(train, grid)

    if name in ("SSI1", "SSI2", "SSSI1", "SSSI2"):
        criterion = "interchangeable" if name.endswith("1") else "cv"
        params = tuned_params or cache.params(criterion)
        if name.startswith("SSSI"):
            m = int(arg) if arg else sweeps
            run = lambda ds: impute_sssi(ds, params, m)  # noqa: E731
        else:
            run = lambda ds: impute_all(ds, params)  # noqa: E731
    elif name == "mean":
        run = baseline_mean
    elif name == "knn":
        kk = int(arg) if arg else k
        run = lambda ds: baseline_knn(ds, kk)  # noqa: E731
    else:
        raise ValueError(f"unknown method {method!r}")

    x_train = run(train).x_hat
    x_full = np.array(run(stacked).x_hat, copy=True)
    x_full[draw_.train_idx] = x_train
    x_full = draw_.dataset.to_numeric(x_full)

    ia_raw, ia_rmse = imputation_metrics(x_full, draw_.x_true, ~draw_.dataset.mask)
    fit = fit_ols(x_full[draw_.train_idx], draw_.y[draw_.train_idx])
    ea = float(np.linalg.norm(fit.beta_hat - draw_.beta_true))
    y_test = draw_.y[draw_.test_idx]
    pred = x_full[draw_.test_idx] @ fit.beta_hat
    pa_raw = float(np.linalg.norm(pred - y_test))
    pa_rmse = pa_raw / np.sqrt(y_test.size) if y_test.size else 0.0
    return RepMetrics(ia_raw, ia_rmse, ea, pa_raw, pa_rmse)


def run_replication(scenario: SimScenario, replication: int,
                    methods: Sequence[str], *, grid: TauGrid = TauGrid(),
                    sweeps: int = 10, k: int = 5,
                    hide_test_response: bool = False) -> dict:
    """Score every method on one seeded draw; failed methods map to their
    error text."""
    d = draw(scenario, replication)
    cache = _TuneCache(d.train, grid)
    out = {}
    for method in methods:
        try:
            out[method] = score_replication(
                d, method, grid=grid, sweeps=sweeps, k=k, cache=cache,
                hide_test_response=hide_test_response)
        except (SSIError, np.linalg.LinAlgError) as exc:
            log.warning("replication %d of %s failed: %r", replication, method, exc)
            out[method] = repr(exc)
    return out


def scenario_label(scenario: SimScenario) -> str:
    return (f"n={scenario.n};rho={scenario.rho};r2={scenario.r2};"
            f"{scenario.mechanism};{scenario.covariate_law};"
            f"{scenario.cov_structure};{scenario.pattern_family}")


@dataclass
class BenchCell:
    scenario: str
    method: str
    settings: dict
    reps: int
    dropped: int
    mean: dict
    sd: dict
    sd_defined: bool


@dataclass
class BenchTable:
    cells: list = field(default_factory=list)
    records: list = field(default_factory=list)

    def cell(self, scenario: str, method: str) -> BenchCell:
        for c in self.cells:
            if c.scenario == scenario and c.method == method:
                return c
        raise KeyError((scenario, method))

    COLUMNS = ("scenario", "method", "n", "p", "rho", "r2", "mechanism",
               "covariate_law", "cov_structure", "pattern_family", "reps",
               "dropped", "sd_defined") + tuple(
                   f"{m}_{s}" for m in METRICS for s in ("mean", "sd"))

    def rows(self):
        for c in self.cells:
            row = {"scenario": c.scenario, "method": c.method,
                   "reps": c.reps, "dropped": c.dropped,
                   "sd_defined": int(c.sd_defined)}
            row.update({key: c.settings[key] for key in
                        ("n", "p", "rho", "r2", "mechanism", "covariate_law",
                         "cov_structure", "pattern_family")})
            for m in METRICS:
                row[f"{m}_mean"] = c.mean[m]
                row[f"{m}_sd"] = c.sd[m]
            yield row

    def to_tsv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# {FORMAT_VERSION}\n")
        writer = csv.DictWriter(buf, fieldnames=self.COLUMNS, delimiter="\t",
                                lineterminator="\n")
        writer.writeheader()
        for row in self.rows():
            writer.writerow({k: _fmt(v) for k, v in row.items()})
        return buf.getvalue()

    def to_jsonl(self) -> str:
        lines = [json.dumps({"format": FORMAT_VERSION})]
        lines += [json.dumps(row) for row in self.rows()]
        return "\n".join(lines) + "\n"

    def plot_data_csv(self) -> str:
        """Long-format per-replication metrics."""
        buf = io.StringIO()
        buf.write(f"# {FORMAT_VERSION} plot-data\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scenario", "method", "replication", "metric", "value"])
        for rec in self.records:
            if rec["metrics"] is None:
                continue
            for m in METRICS:
                writer.writerow([rec["scenario"], rec["method"],
                                 rec["replication"], m, _fmt(rec["metrics"][m])])
        return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def aggregate(records: list, settings: dict) -> BenchTable:
    table = BenchTable(records=records)
    keys = []
    for rec in records:
        key = (rec["scenario"], rec["method"])
        if key not in keys:
            keys.append(key)
    for scen, method in keys:
        group = [r for r in records if r["scenario"] == scen and r["method"] == method]
        ok = [r["metrics"] for r in group if r["metrics"] is not None]
        mean, sd = {}, {}
        for m in METRICS:
            vals = np.array([r[m] for r in ok], dtype=float)
            mean[m] = float(vals.mean()) if vals.size else float("nan")
            sd[m] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        table.cells.append(BenchCell(scen, method, settings[scen], len(ok),
                                     len(group) - len(ok), mean, sd, len(ok) > 1))
    return table


def run_bench(scenarios: Sequence[SimScenario], methods: Sequence[str],
              reps: int, *, grid: TauGrid = TauGrid(), sweeps: int = 10,
              k: int = 5, n_jobs: int = 1,
              hide_test_response: bool = False) -> BenchTable:
    """Run ``reps`` seeded replications of every scenario and aggregate.

    Replication ``r`` of a scenario uses the generator keyed by
    ``(scenario.seed, r)``; results do not depend on ``n_jobs``.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    tasks = [(s, r) for s in scenarios for r in range(reps)]
    outputs = Parallel(n_jobs=n_jobs)(
        delayed(run_replication)(s, r, methods, grid=grid, sweeps=sweeps, k=k,
                                 hide_test_response=hide_test_response)
        for s, r in tasks)
    records, settings = [], {}
    for (s, r), out in zip(tasks, outputs):
        label = scenario_label(s)
        settings[label] = s.to_dict()
        for method in methods:
            res = out[method]
            records.append({
                "scenario": label, "method": method, "replication": r,
                "metrics": res.as_dict() if isinstance(res, RepMetrics) else None,
                "error": None if isinstance(res, RepMetrics) else res})
    return aggregate(records, settings)
