"""Tabular containers, missing-pattern bookkeeping and validation.

Missing entries are stored as a boolean mask (``True`` = observed) next to a
payload matrix. Masked payload slots are zeroed on construction and carry no
meaning. Discrete columns hold integer class codes ``0..C-1`` indexing into
``ColumnSchema.classes``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .exceptions import DimensionMismatch, FullyMissingColumn, UndeclaredClass

CONTINUOUS = "continuous"
DISCRETE = "discrete"


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str = CONTINUOUS
    classes: tuple = ()

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise ValueError(f"unknown column kind {self.kind!r}")
        object.__setattr__(self, "classes", tuple(self.classes))
        if self.kind == CONTINUOUS and self.classes:
            raise ValueError(f"continuous column {self.name!r} declares classes")
        if self.kind == DISCRETE:
            if len(self.classes) < 2:
                raise ValueError(
                    f"discrete column {self.name!r} needs at least 2 classes")
            if len(set(self.classes)) != len(self.classes):
                raise ValueError(f"duplicate classes in column {self.name!r}")

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_values(self) -> np.ndarray:
        """Numeric value of each class, used when the column enters a design
        matrix. Falls back to the class code for non-numeric labels."""
        try:
            return np.array([float(c) for c in self.classes])
        except (TypeError, ValueError):
            return np.arange(len(self.classes), dtype=float)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MissingDataset:
    """Response vector plus a partially observed covariate matrix.

    ``y_mask`` is ``None`` when the response is fully observed.
    """

    y: np.ndarray
    x: np.ndarray
    mask: np.ndarray
    schema: tuple
    y_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        if x.ndim != 2:
            raise DimensionMismatch(f"x must be 2-D, got shape {x.shape}")
        mask = np.array(self.mask, dtype=bool, copy=True)
        if mask.shape != x.shape:
            raise DimensionMismatch(
                f"mask shape {mask.shape} does not match x shape {x.shape}")
        y = np.array(self.y, dtype=float, copy=True).ravel()
        if y.shape[0] != x.shape[0]:
            raise DimensionMismatch(
                f"y has {y.shape[0]} entries but x has {x.shape[0]} rows")
        schema = tuple(self.schema)
        if len(schema) != x.shape[1]:
            raise DimensionMismatch(
                f"schema lists {len(schema)} columns but x has {x.shape[1]}")
        names = [c.name for c in schema]
        if len(set(names)) != len(names):
            raise ValueError("column names must be unique")
        if x.shape[0] < 2:
            raise DimensionMismatch("need at least 2 subjects")
        y_mask = self.y_mask
        if y_mask is not None:
            y_mask = np.array(y_mask, dtype=bool, copy=True).ravel()
            if y_mask.shape != y.shape:
                raise DimensionMismatch("y_mask does not match y")
            y[~y_mask] = 0.0
            if y_mask.all():
                y_mask = None
        x[~mask] = 0.0
        if not np.isfinite(x).all() or not np.isfinite(y).all():
            raise ValueError("observed entries must be finite")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "mask", _readonly(mask))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "schema", schema)
        object.__setattr__(
            self, "y_mask", None if y_mask is None else _readonly(y_mask))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def y_observed(self) -> np.ndarray:
        if self.y_mask is None:
            return np.ones(self.n, dtype=bool)
        return self.y_mask

    @property
    def discrete_columns(self) -> list:
        return [j for j, c in enumerate(self.schema) if c.is_discrete]

    @classmethod
    def from_arrays(cls, x, y, discrete: Sequence[int] = (), names=None,
                    classes: Optional[dict] = None):
        """Build a dataset from a float matrix with NaN marking missing cells.

        Discrete columns are given by index; their classes default to the
        sorted distinct observed values. NaN in ``y`` marks a missing response.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise DimensionMismatch(f"x must be 2-D, got shape {x.shape}")
        y = np.asarray(y, dtype=float).ravel()
        n, p = x.shape
        names = list(names) if names is not None else [f"x{j + 1}" for j in range(p)]
        if len(names) != p:
            raise DimensionMismatch("names do not match the number of columns")
        classes = dict(classes or {})
        mask = ~np.isnan(x)
        codes = np.where(mask, x, 0.0)
        schema = []
        for j in range(p):
            if j in discrete:
                labels = classes.get(j)
                if labels is None:
                    labels = tuple(np.unique(x[mask[:, j], j]).tolist())
                    if len(labels) == 1:
                        # a second placeholder class keeps the schema legal
                        labels = labels + (labels[0] + 1.0,)
                lookup = {float(v): k for k, v in enumerate(labels)}
                for i in np.flatnonzero(mask[:, j]):
                    code = lookup.get(float(x[i, j]))
                    if code is None:
                        raise UndeclaredClass(i, j, x[i, j])
                    codes[i, j] = code
                schema.append(ColumnSchema(names[j], DISCRETE, tuple(labels)))
            else:
                schema.append(ColumnSchema(names[j]))
        y_mask = ~np.isnan(y)
        return cls(np.nan_to_num(y), codes, mask, tuple(schema),
                   None if y_mask.all() else y_mask)

    def replace(self, **changes) -> "MissingDataset":
        fields = dict(y=self.y, x=self.x, mask=self.mask, schema=self.schema,
                      y_mask=self.y_mask)
        fields.update(changes)
        return MissingDataset(**fields)

    def subset(self, rows) -> "MissingDataset":
        rows = np.asarray(rows)
        return MissingDataset(
            self.y[rows], self.x[rows], self.mask[rows], self.schema,
            None if self.y_mask is None else self.y_mask[rows])

    def to_numeric(self, x: Optional[np.ndarray] = None) -> np.ndarray:
        """Map a (completed) code matrix to numeric design values."""
        out = np.array(self.x if x is None else x, dtype=float, copy=True)
        for j in self.discrete_columns:
            values = self.schema[j].class_values()
            out[:, j] = values[out[:, j].astype(int)]
        return out

    def to_nan_array(self) -> np.ndarray:
        out = self.to_numeric()
        out[~self.mask] = np.nan
        return out


@dataclass(frozen=True)
class PatternIndex:
    d_sets: tuple
    s0: tuple
    s1: tuple
    d0: int
    sparse_columns: tuple = ()


def _d0(mask: np.ndarray) -> int:
    overlaps = (mask[:-1] & mask[1:]).sum(axis=1)
    return 1 + int(overlaps.max())


def validate(dataset: MissingDataset, sort_by_pattern: bool = False) -> PatternIndex:
    """Check dataset invariants and materialize the pattern index sets.

    ``d0`` is computed over subjects in file order unless ``sort_by_pattern``
    is set, in which case subjects are ordered lexicographically by their
    observation pattern first.
    """
    x, mask = dataset.x, dataset.mask
    if mask.shape != x.shape or dataset.y.shape[0] != x.shape[0]:
        raise DimensionMismatch("inconsistent dataset dimensions")
    counts = mask.sum(axis=0)
    for j in np.flatnonzero(counts == 0):
        raise FullyMissingColumn(int(j), dataset.schema[j].name)
    for j in dataset.discrete_columns:
        c = dataset.schema[j].n_classes
        vals = x[mask[:, j], j]
        bad = (vals != np.round(vals)) | (vals < 0) | (vals >= c)
        if bad.any():
            i = int(np.flatnonzero(mask[:, j])[np.argmax(bad)])
            raise UndeclaredClass(i, j, x[i, j])
    sparse = tuple(int(j) for j in np.flatnonzero(counts < 2))
    for j in sparse:
        warnings.warn(
            f"column {j} ({dataset.schema[j].name!r}) is observed for a single "
            "subject; its imputation propagates that value", RuntimeWarning,
            stacklevel=2)
    order_mask = mask
    if sort_by_pattern:
        keys = [mask[:, j] for j in reversed(range(mask.shape[1]))]
        order_mask = mask[np.lexsort(keys)]
    d_sets = tuple(frozenset(np.flatnonzero(row).tolist()) for row in mask)
    s0 = tuple(_readonly(np.flatnonzero(~mask[:, j])) for j in range(dataset.p))
    s1 = tuple(_readonly(np.flatnonzero(mask[:, j])) for j in range(dataset.p))
    return PatternIndex(d_sets, s0, s1, _d0(order_mask), sparse)


def missing_rate(dataset: MissingDataset) -> float:
    return float((~dataset.mask).sum()) / dataset.mask.size


@dataclass(frozen=True)
class ColumnDiagnostics:
    solver_status: str
    iterations_used: int = 0
    fallback_applied: bool = False
    converged: bool = True
    residual: float = 0.0
    n_fallback: int = 0


@dataclass(frozen=True, eq=False)
class ImputationResult:
    x_hat: np.ndarray
    imputed_mask: np.ndarray
    diagnostics: dict
    params_used: Any = None
    probabilities: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    def completed(self, dataset: MissingDataset) -> MissingDataset:
        """Dataset with every entry marked observed at its imputed value."""
        return dataset.replace(x=self.x_hat, mask=np.ones_like(dataset.mask))

    @property
    def fallback_columns(self) -> list:
        return [j for j, d in self.diagnostics.items() if d.fallback_applied]
