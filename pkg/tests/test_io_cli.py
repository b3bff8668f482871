import json
from pathlib import Path

import numpy as np
import pytest

from ssimpute.cli import main
from ssimpute.exceptions import IoError, ParseError, SchemaMismatch, UndeclaredClass
from ssimpute.impute import impute_all
from ssimpute.io import CsvSpec, load_csv, parse_schema, save_result
from ssimpute.kernel import ScaleParams

DATA = Path(__file__).resolve().parent.parent / "data"
SAMPLE, SCHEMA = str(DATA / "sample.csv"), str(DATA / "sample.schema")


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.fixture
def small(tmp_path):
    schema = write(tmp_path, "s.schema", "y,continuous\na,continuous\nb,discrete,0,1\n")
    csv = write(tmp_path, "d.csv", "y,a,b\n1.0,2.5,0\n2.0,NA,1\n3.0,,1\n4.0,1.5,\n0.5,0.1,0\n")
    return csv, schema


def test_missing_markers(small):
    csv, schema = small
    ds = load_csv(CsvSpec(csv, schema_path=schema))
    assert ds.mask[:, 0].tolist() == [True, False, False, True, True]
    assert ds.mask[:, 1].tolist() == [True, True, True, False, True]
    # without "" as a marker an empty cell is a parse error
    with pytest.raises(ParseError):
        load_csv(CsvSpec(csv, schema_path=schema, missing_markers=frozenset({"NA"})))


def test_parse_errors(tmp_path, small):
    _, schema = small
    bad = write(tmp_path, "bad.csv", "y,a,b\n1.0,abc,0\n")
    with pytest.raises(ParseError) as info:
        load_csv(CsvSpec(bad, schema_path=schema))
    assert info.value.token == "abc"
    bad = write(tmp_path, "cls.csv", "y,a,b\n1.0,2.0,7\n2.0,1.0,0\n")
    with pytest.raises(UndeclaredClass):
        load_csv(CsvSpec(bad, schema_path=schema))
    bad = write(tmp_path, "hdr.csv", "y,a,c\n1.0,2.0,1\n")
    with pytest.raises(SchemaMismatch):
        load_csv(CsvSpec(bad, schema_path=schema))
    with pytest.raises(IoError):
        load_csv(CsvSpec(str(tmp_path / "nope.csv"), schema_path=schema))
    with pytest.raises(SchemaMismatch):
        parse_schema("a,ordinal\n")


def test_round_trip_and_reimpute_noop(tmp_path):
    ds = load_csv(CsvSpec(SAMPLE, schema_path=SCHEMA))
    result = impute_all(ds, ScaleParams.from_tau(0.5, ds.n, 3))
    out = str(tmp_path / "done.csv")
    sidecar = save_result(result, out, ds)
    back = load_csv(CsvSpec(out, schema_path=SCHEMA))
    assert back.mask.all()
    np.testing.assert_array_equal(back.x, result.x_hat)
    np.testing.assert_array_equal(back.y, ds.y)
    again = impute_all(back, ScaleParams(0.7, 0.7))
    np.testing.assert_array_equal(again.x_hat, back.x)
    meta = json.loads(Path(sidecar).read_text())
    assert meta["format"] == "ssimpute diagnostics v1"
    assert isinstance(meta["fallback_columns"], list)
    first = Path(out).read_bytes()
    save_result(result, out, ds)
    assert Path(out).read_bytes() == first


def test_sidecar_lists_fallback_columns(tmp_path):
    schema = write(tmp_path, "s.schema", "y,continuous\na,continuous\nb,continuous\n")
    # subjects 2 and 3 only see each other, and neither observes column a
    csv = write(tmp_path, "d.csv",
                "y,a,b\n0,1,0\n0.1,2,0\n500,NA,1\n500.5,NA,2\n")
    ds = load_csv(CsvSpec(csv, schema_path=schema))
    result = impute_all(ds, ScaleParams(1.0, 1.0))
    meta = json.loads(Path(save_result(result, str(tmp_path / "o.csv"), ds)).read_text())
    assert "a" in meta["fallback_columns"]


def run(argv):
    return main([str(a) for a in argv])


def test_impute_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run(["impute", SAMPLE, "--schema", SCHEMA, "--tau", "0.5",
                    "--threads", "1", "-o", out]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.csv.json").exists()
    assert "NA" not in a.read_text()


def test_sort_by_pattern_keeps_row_order(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(["impute", SAMPLE, "--schema", SCHEMA, "--lambda1", "0.8", "-o", a])
    run(["impute", SAMPLE, "--schema", SCHEMA, "--lambda1", "0.8",
         "--sort-by-pattern", "-o", b])
    ra = load_csv(CsvSpec(str(a), schema_path=SCHEMA))
    rb = load_csv(CsvSpec(str(b), schema_path=SCHEMA))
    np.testing.assert_array_equal(ra.y, rb.y)
    np.testing.assert_allclose(ra.x, rb.x, atol=1e-8)


def test_tune_grid(tmp_path, capsys):
    assert run(["tune", SAMPLE, "--schema", SCHEMA, "--grid", "0:2:21"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# ssimpute tune-report v1"
    taus = [float(r.split("\t")[0]) for r in lines[3:]]
    np.testing.assert_allclose(taus, np.linspace(0, 2, 21))


def test_impute_with_tuning_writes_report(tmp_path):
    out = tmp_path / "t.csv"
    assert run(["impute", SAMPLE, "--schema", SCHEMA, "--grid", "0:2:5", "-o", out]) == 0
    assert (tmp_path / "t.csv.tune.tsv").read_text().startswith("# ssimpute tune-report")


def test_fit_coefficients(tmp_path):
    out = tmp_path / "coef.tsv"
    assert run(["fit", SAMPLE, "--schema", SCHEMA, "--tau", "0.5", "--intercept",
                "-o", out]) == 0
    lines = out.read_text().splitlines()
    assert lines[2] == "term\tcoef"
    assert len(lines) == 3 + 11


def test_simulate_then_impute(tmp_path):
    out = tmp_path / "sim.csv"
    assert run(["simulate", "--n", 50, "--seed", 3, "-o", out]) == 0
    truth = json.loads((tmp_path / "sim.csv.truth.json").read_text())
    assert truth["scenario"]["n"] == 50
    assert run(["impute", out, "--schema", f"{out}.schema", "--tau", "0.5",
                "-o", tmp_path / "imp.csv"]) == 0


def test_bench_two_reps(tmp_path):
    scen = write(tmp_path, "s.json", json.dumps([{"n": 60, "seed": 1}]))
    out = tmp_path / "b.tsv"
    assert run(["bench", scen, "--methods", "SSI1,mean", "--reps", 2, "--grid", "0:2:3",
                "--threads", 1, "-o", out, "--jsonl", tmp_path / "b.jsonl",
                "--plot-data", tmp_path / "p.csv"]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "# ssimpute bench-table v1"
    header = rows[1].split("\t")
    body = [dict(zip(header, r.split("\t"))) for r in rows[2:]]
    assert [r["method"] for r in body] == ["SSI1", "mean"]
    assert all(r["reps"] == "2" for r in body)


def test_bench_grid_expansion(tmp_path):
    from ssimpute.cli import expand_scenarios
    got = expand_scenarios({"base": {"n": 100}, "grid": {"r2": [0.3, 0.6],
                                                         "mechanism": ["MCAR", "MAR"]}}, 4)
    assert len(got) == 4 and all(s.seed == 4 and s.n == 100 for s in got)


def test_exit_codes(tmp_path, capsys):
    assert run(["impute", SAMPLE]) == 1
    assert run(["impute", SAMPLE, "--schema", SCHEMA, "--tau", "1", "--lambda1", "1",
                "-o", tmp_path / "x.csv"]) == 1
    assert run(["bench", SAMPLE, "--methods", "nope", "-o", tmp_path / "b.tsv"]) == 2
    assert run(["impute", tmp_path / "missing.csv", "--schema", SCHEMA, "--tau", "1",
                "-o", tmp_path / "x.csv"]) == 2
    bad = write(tmp_path, "bad.csv", "y,a\n1,zz\n")
    schema = write(tmp_path, "bad.schema", "y,continuous\na,continuous\n")
    assert run(["impute", bad, "--schema", schema, "--tau", "1", "-o", tmp_path / "x.csv"]) == 2
    capsys.readouterr()
    assert run(["impute", SAMPLE, "--schema", SCHEMA, "--lambda1", "1e6",
                "-o", tmp_path / "x.csv"]) == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 3 and err["error"] == "AllRowsDegenerate"


def test_unwritable_output(tmp_path):
    assert run(["impute", SAMPLE, "--schema", SCHEMA, "--tau", "1",
                "-o", tmp_path / "no" / "dir" / "x.csv"]) == 2
