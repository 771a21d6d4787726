from pathlib import Path

import numpy as np
import pytest

from neuralkdb.tabular import Dataset, load_csv, prepare

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def make_dataset(X, y, sizes=None, num_labels=None):
    """Dataset with synthetic token names straight from integer arrays."""
    X = np.asarray(X, dtype=np.int64)
    X = X.reshape(len(y), X.shape[1] if X.ndim == 2 else -1)
    y = np.asarray(y, dtype=np.int64)
    m = X.shape[1]
    if sizes is None:
        sizes = [int(X[:, i].max()) + 1 if len(X) else 1 for i in range(m)]
    if num_labels is None:
        num_labels = max(2, int(y.max()) + 1 if len(y) else 2)
    alphabets = [[f"v{r}" for r in range(s)] for s in sizes]
    return Dataset([f"f{i}" for i in range(m)], alphabets, "cls",
                   [f"c{c}" for c in range(num_labels)], X, y)


def random_dataset(rng, n, sizes, num_labels):
    X = np.column_stack([rng.integers(0, s, n) for s in sizes]) if sizes else np.zeros((n, 0))
    y = rng.integers(0, num_labels, n)
    return make_dataset(X, y, sizes, num_labels)


@pytest.fixture(scope="session")
def iris_dataset():
    ds, _ = prepare(load_csv(DATA_DIR / "iris.csv", "class"))
    return ds


@pytest.fixture(scope="session")
def car_dataset():
    ds, _ = prepare(load_csv(DATA_DIR / "car.csv", "class"))
    return ds


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
