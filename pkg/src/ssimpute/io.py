"""CSV ingestion with a companion schema file, and result output.

A schema file has one line per CSV column::

    y,continuous
    x1,discrete,0,1
    x2,continuous

Blank lines and lines starting with ``#`` are ignored. The response column is
found by name and must be continuous.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import CONTINUOUS, DISCRETE, ColumnSchema, ImputationResult, MissingDataset
from .exceptions import IoError, ParseError, SchemaMismatch, UndeclaredClass

FORMAT_VERSION = "ssimpute completed v1"
SIDECAR_VERSION = "ssimpute diagnostics v1"


@dataclass(frozen=True)
class CsvSpec:
    path: str
    delimiter: str = ","
    missing_markers: frozenset = field(default_factory=lambda: frozenset({"NA", ""}))
    header: bool = True
    schema_path: Optional[str] = None
    response: str = "y"

    def __post_init__(self):
        object.__setattr__(self, "missing_markers", frozenset(self.missing_markers))


def _class_label(token):
    try:
        return float(token)
    except ValueError:
        return token


def parse_schema(text: str) -> list:
    """Parse schema text into ``ColumnSchema`` entries, in file order."""
    columns = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [t.strip() for t in line.split(",")]
        name, kind, classes = parts[0], parts[1] if len(parts) > 1 else "", parts[2:]
        if kind not in (CONTINUOUS, DISCRETE):
            raise SchemaMismatch(
                f"schema line {lineno}: kind must be continuous or discrete, got {kind!r}")
        try:
            columns.append(ColumnSchema(
                name, kind, tuple(_class_label(c) for c in classes)))
        except ValueError as exc:
            raise SchemaMismatch(f"schema line {lineno}: {exc}") from exc
    if not columns:
        raise SchemaMismatch("schema file lists no columns")
    return columns


def format_schema(schema, response: str = "y") -> str:
    lines = [f"{response},{CONTINUOUS}"]
    for col in schema:
        tokens = [col.name, col.kind] + [_fmt_label(c) for c in col.classes]
        lines.append(",".join(tokens))
    return "\n".join(lines) + "\n"


def _fmt_label(value):
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def _fmt_float(value: float) -> str:
    return repr(float(value))


def _read(path):
    try:
        with open(path, newline="") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}") from exc


def load_csv(spec: CsvSpec) -> MissingDataset:
    if spec.schema_path is None:
        raise SchemaMismatch("a schema file is required")
    schema = parse_schema(_read(spec.schema_path))
    by_name = {c.name: c for c in schema}
    if len(by_name) != len(schema):
        raise SchemaMismatch("schema repeats a column name")

    lines = [(i, line) for i, line in enumerate(_read(spec.path).splitlines(), 1)
             if not line.startswith("#")]
    rows = list(csv.reader([line for _, line in lines], delimiter=spec.delimiter))
    linenos = [i for i, _ in lines]
    if spec.header:
        if not rows:
            raise ParseError(1, None, "")
        names = [t.strip() for t in rows[0]]
        rows, linenos = rows[1:], linenos[1:]
    else:
        names = [c.name for c in schema]
    if set(names) != set(by_name) or len(names) != len(by_name):
        raise SchemaMismatch(
            f"CSV columns {names} do not match schema columns {list(by_name)}")
    if spec.response not in by_name:
        raise SchemaMismatch(f"response column {spec.response!r} not in schema")
    if by_name[spec.response].is_discrete:
        raise SchemaMismatch("the response column must be continuous")

    covariates = [nm for nm in names if nm != spec.response]
    col_of = {nm: k for k, nm in enumerate(names)}
    n, p = len(rows), len(covariates)
    x = np.zeros((n, p))
    mask = np.zeros((n, p), dtype=bool)
    y = np.zeros(n)
    y_mask = np.zeros(n, dtype=bool)
    lookups = {}
    for nm in covariates:
        col = by_name[nm]
        if col.is_discrete:
            table = {}
            for code, label in enumerate(col.classes):
                table[_fmt_label(label)] = code
                table[str(label)] = code
            lookups[nm] = table

    for i, (lineno, row) in enumerate(zip(linenos, rows)):
        if len(row) != len(names):
            raise ParseError(lineno, None,
                             f"expected {len(names)} fields, found {len(row)}")
        tokens = [t.strip() for t in row]
        tok = tokens[col_of[spec.response]]
        if tok not in spec.missing_markers:
            y[i] = _parse_float(tok, lineno, spec.response)
            y_mask[i] = True
        for j, nm in enumerate(covariates):
            tok = tokens[col_of[nm]]
            if tok in spec.missing_markers:
                continue
            mask[i, j] = True
            if nm in lookups:
                code = lookups[nm].get(tok)
                if code is None:
                    code = _match_numeric(tok, by_name[nm].classes)
                if code is None:
                    raise UndeclaredClass(i, j, tok)
                x[i, j] = code
            else:
                x[i, j] = _parse_float(tok, lineno, nm)
    return MissingDataset(y, x, mask, tuple(by_name[nm] for nm in covariates),
                          y_mask)


def _parse_float(token, lineno, column):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(lineno, column, token) from None
    if not np.isfinite(value):
        raise ParseError(lineno, column, token)
    return value


def _match_numeric(token, classes):
    try:
        value = float(token)
    except ValueError:
        return None
    for code, label in enumerate(classes):
        if isinstance(label, float) and label == value:
            return code
    return None


def completed_rows(dataset: MissingDataset, x_hat: np.ndarray,
                   observed: Optional[np.ndarray] = None):
    """Text rows (response first); cells outside ``observed`` print as NA."""
    for i in range(dataset.n):
        row = [_fmt_float(dataset.y[i]) if dataset.y_observed[i] else "NA"]
        for j, col in enumerate(dataset.schema):
            if observed is not None and not observed[i, j]:
                row.append("NA")
            elif col.is_discrete:
                row.append(_fmt_label(col.classes[int(x_hat[i, j])]))
            else:
                row.append(_fmt_float(x_hat[i, j]))
        yield row


def write_csv(path, dataset: MissingDataset, x_hat: np.ndarray,
              response: str = "y", comment: str = FORMAT_VERSION,
              observed: Optional[np.ndarray] = None) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(f"# {comment}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([response] + [c.name for c in dataset.schema])
            writer.writerows(completed_rows(dataset, x_hat, observed))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from exc


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, "as_dict"):
        return to_jsonable(value.as_dict())
    return value


def diagnostics_dict(result: ImputationResult, dataset: MissingDataset) -> dict:
    columns = []
    for j, col in enumerate(dataset.schema):
        diag = result.diagnostics.get(j)
        entry = {"name": col.name, "kind": col.kind,
                 "n_imputed": int(result.imputed_mask[:, j].sum())}
        if diag is not None:
            entry.update({
                "status": diag.solver_status,
                "iterations": diag.iterations_used,
                "fallback_applied": diag.fallback_applied,
                "converged": diag.converged,
                "residual": diag.residual,
                "n_fallback": diag.n_fallback,
            })
        columns.append(entry)
    params = result.params_used
    return to_jsonable({
        "format": SIDECAR_VERSION,
        "params_used": params.as_dict() if params is not None else None,
        "n": dataset.n,
        "p": dataset.p,
        "imputed_total": int(result.imputed_mask.sum()),
        "fallback_columns": [dataset.schema[j].name for j in result.fallback_columns],
        "columns": columns,
        "info": result.info,
    })


def save_result(result: ImputationResult, path, dataset: MissingDataset,
                response: str = "y") -> str:
    """Write the completed matrix to ``path`` and diagnostics to
    ``path + ".json"``. Returns the sidecar path."""
    write_csv(path, dataset, result.x_hat, response)
    sidecar = os.fspath(path) + ".json"
    try:
        with open(sidecar, "w") as fh:
            json.dump(diagnostics_dict(result, dataset), fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {sidecar}: {exc.strerror}") from exc
    return sidecar
