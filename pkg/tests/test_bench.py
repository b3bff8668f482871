import math

import numpy as np
import pytest

from ssimpute.bench import (METRICS, aggregate, baseline_knn, baseline_mean,
                            imputation_metrics, run_bench, run_replication,
                            scenario_label, score_replication)
from ssimpute.data import ColumnSchema, MissingDataset
from ssimpute.simulation import SimScenario, draw
from ssimpute.tuning import TauGrid

from conftest import continuous_schema, random_dataset

SMALL = SimScenario(n=60, seed=5)
GRID = TauGrid(0, 2, 5)


def test_frobenius_example():
    raw, rmse = imputation_metrics(np.array([[0.0, 1], [1, 0]]), np.zeros((2, 2)),
                                   np.ones((2, 2), bool))
    assert raw == pytest.approx(math.sqrt(2))
    assert rmse == pytest.approx(math.sqrt(2) / 2)
    assert imputation_metrics(np.ones((2, 2)), np.ones((2, 2)),
                              np.zeros((2, 2), bool)) == (0.0, 0.0)


def test_mean_baseline():
    x = np.array([[1.0, 0], [3, 0], [0, 1], [5, 0]])
    mask = np.array([[1, 1], [1, 1], [0, 1], [0, 0]], bool)
    schema = (ColumnSchema("a"), ColumnSchema("b", "discrete", (0.0, 1.0)))
    ds = MissingDataset(np.zeros(4), x, mask, schema)
    out = baseline_mean(ds).x_hat
    assert out[2, 0] == out[3, 0] == 2.0
    assert out[3, 1] == 0.0


def test_mean_baseline_constant_column(rng):
    ds = random_dataset(rng, 10, 2)
    x = ds.x.copy()
    x[:, 0] = 4.0
    out = baseline_mean(ds.replace(x=x)).x_hat
    assert (out[:, 0] == 4.0).all()


def test_knn_copies_exact_duplicate():
    x = np.array([[1.0, 2.0], [1.0, 9.0], [5.0, 0.0], [-3.0, 4.0]])
    mask = np.array([[1, 0], [1, 1], [1, 1], [1, 1]], bool)
    ds = MissingDataset(np.zeros(4), x, mask, continuous_schema(2))
    assert baseline_knn(ds, 1).x_hat[0, 1] == 9.0


def test_knn_constant_column(rng):
    ds = random_dataset(rng, 12, 3)
    x = ds.x.copy()
    x[:, 1] = -1.5
    out = baseline_knn(ds.replace(x=x), k=ds.n - 1).x_hat
    assert (out[:, 1] == -1.5).all()


def test_knn_matches_brute_force(rng):
    ds = random_dataset(rng, 15, 4, discrete=(0,), missing=0.3)
    k = 3
    out = baseline_knn(ds, k).x_hat
    for j in range(ds.p):
        for i in np.flatnonzero(~ds.mask[:, j]):
            cands = []
            for r in np.flatnonzero(ds.mask[:, j]):
                common = [c for c in range(ds.p) if ds.mask[i, c] and ds.mask[r, c]]
                if not common:
                    continue
                d = 0.0
                for c in common:
                    if ds.schema[c].is_discrete:
                        d += float(ds.x[i, c] != ds.x[r, c])
                    else:
                        d += (ds.x[i, c] - ds.x[r, c]) ** 2
                cands.append((d * ds.p / len(common), r))
            cands.sort()
            vals = [ds.x[r, j] for _, r in cands[:k]]
            if not vals:
                continue
            if ds.schema[j].is_discrete:
                want = np.argmax(np.bincount(np.array(vals, int), minlength=2))
            else:
                want = np.mean(vals)
            assert out[i, j] == pytest.approx(want, abs=1e-12)


def test_knn_rejects_bad_k(rng):
    with pytest.raises(ValueError):
        baseline_knn(random_dataset(rng, 5, 2), 0)


def test_perfect_imputation_scores_zero():
    d = draw(SimScenario(n=60, target_missing_rate=0.0))
    m = score_replication(d, "mean")
    assert m.ia_raw == 0.0 and m.ia_rmse == 0.0
    assert all(v >= 0 for v in m.as_dict().values())


def test_replication_covers_all_methods():
    out = run_replication(SMALL, 0, ["SSI1", "SSI2", "SSSI1:2", "mean", "knn"], grid=GRID)
    assert set(out) == {"SSI1", "SSI2", "SSSI1:2", "mean", "knn"}
    for res in out.values():
        assert set(res.as_dict()) == set(METRICS)


def test_single_rep_flags_sd():
    table = run_bench([SMALL], ["mean"], 1)
    cell = table.cell(scenario_label(SMALL), "mean")
    assert cell.reps == 1 and not cell.sd_defined
    assert all(v == 0.0 for v in cell.sd.values())


def test_identical_methods_identical_cells():
    table = run_bench([SMALL], ["knn", "knn:5"], 2)
    label = scenario_label(SMALL)
    a, b = table.cell(label, "knn"), table.cell(label, "knn:5")
    assert a.mean == b.mean and a.sd == b.sd


def test_rerun_is_bit_identical():
    a = run_bench([SMALL], ["SSI1", "mean"], 2, grid=GRID).to_tsv()
    b = run_bench([SMALL], ["SSI1", "mean"], 2, grid=GRID, n_jobs=2).to_tsv()
    assert a == b
    assert a.startswith("# ssimpute bench-table v1\n")


def test_aggregation_matches_records():
    table = run_bench([SMALL, SMALL.with_(r2=0.3)], ["mean", "knn"], 3)
    for cell in table.cells:
        vals = np.array([r["metrics"]["ea"] for r in table.records
                         if r["scenario"] == cell.scenario and r["method"] == cell.method])
        assert len(vals) == cell.reps == 3
        assert cell.mean["ea"] == pytest.approx(vals.mean())
        assert cell.sd["ea"] == pytest.approx(vals.std(ddof=1))
    assert len(table.plot_data_csv().splitlines()) == 2 + 2 * 2 * 3 * len(METRICS)


def test_dropped_replications_are_counted():
    rec = [{"scenario": "s", "method": "m", "replication": r,
            "metrics": None if r == 1 else dict.fromkeys(METRICS, float(r)), "error": None}
           for r in range(3)]
    cell = aggregate(rec, {"s": {}}).cells[0]
    assert cell.reps == 2 and cell.dropped == 1
    assert cell.mean["ea"] == 1.0


def test_unknown_method():
    with pytest.raises(ValueError):
        score_replication(draw(SMALL), "rf")


def test_hidden_test_response_only_moves_test_rows():
    d = draw(SMALL)
    for method in ("mean", "SSI1"):
        seen = score_replication(d, method, grid=GRID)
        hidden = score_replication(d, method, grid=GRID, hide_test_response=True)
        # training rows never see test responses, so the fit is unchanged
        assert seen.ea == hidden.ea
        assert (seen.pa_raw != hidden.pa_raw) == (method == "SSI1")
