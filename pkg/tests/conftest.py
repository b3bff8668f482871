import numpy as np
import pytest

from ssimpute.data import ColumnSchema, MissingDataset


def continuous_schema(p):
    return tuple(ColumnSchema(f"x{j + 1}") for j in range(p))


def random_dataset(rng, n, p, missing=0.4, discrete=(), n_classes=2):
    """Random mixed dataset; every column keeps at least one observed and one
    missing subject."""
    x = rng.normal(size=(n, p))
    schema = []
    for j in range(p):
        if j in discrete:
            x[:, j] = rng.integers(0, n_classes, size=n)
            schema.append(ColumnSchema(f"x{j + 1}", "discrete",
                                       tuple(float(c) for c in range(n_classes))))
        else:
            schema.append(ColumnSchema(f"x{j + 1}"))
    mask = rng.random((n, p)) >= missing
    for j in range(p):
        mask[rng.integers(n), j] = True
        if mask[:, j].all():
            mask[rng.integers(n), j] = False
            if not mask[:, j].any():
                mask[0, j] = True
    y = x.sum(axis=1) + rng.normal(size=n)
    return MissingDataset(y, x, mask, tuple(schema))


def dataset_from_graph(w, s0, s1, values):
    """Dataset whose column 0 has S1 = ``s1`` carrying ``values``; used with a
    hand-made weight matrix."""
    n = w.shape[0]
    x = np.zeros((n, 1))
    x[s1, 0] = values
    mask = np.zeros((n, 1), dtype=bool)
    mask[s1, 0] = True
    return MissingDataset(np.zeros(n), x, mask, continuous_schema(1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
