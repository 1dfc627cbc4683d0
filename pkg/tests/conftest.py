import numpy as np
import pytest

from ordimpute.data import OrdinalDataset, VariableSpec


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


def make_dataset(cells, cardinalities=None, names=None):
    cells = np.asarray(cells)
    p = cells.shape[1]
    if cardinalities is None:
        cardinalities = cells.max(axis=0)
    if names is None:
        names = [f"V{j + 1}" for j in range(p)]
    specs = tuple(VariableSpec(n, int(c)) for n, c in zip(names, cardinalities))
    return OrdinalDataset(specs, cells)


@pytest.fixture
def tiny():
    return make_dataset(
        [[1, 2], [2, 1], [1, 1], [2, 2], [1, 2], [2, 1]],
        cardinalities=[2, 3],
        names=["A", "B"],
    )
