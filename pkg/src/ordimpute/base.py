"""Shared imputer base class and validation helpers."""

from __future__ import annotations

import abc

import numpy as np
from sklearn.base import BaseEstimator

from .data import ImputationResult, IncompleteDataset, check_result_against
from .rng import rng_from_seed


def check_levels(y: np.ndarray, cardinality: int, what: str = "labels") -> np.ndarray:
    """Validate a 1-d integer level vector in 1..cardinality."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{what} must be 1-dimensional")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(y == np.floor(y)):
            raise ValueError(f"{what} must be integers")
        y = y.astype(np.int64)
    if y.size and ((y < 1) | (y > cardinality)).any():
        raise ValueError(f"{what} must lie in 1..{cardinality}")
    return np.ascontiguousarray(y, dtype=np.int64)


def check_level_matrix(x: np.ndarray, cardinalities: np.ndarray) -> np.ndarray:
    """Validate an n x p integer level matrix against per-column cardinalities."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != len(cardinalities):
        raise ValueError(
            f"expected an n x {len(cardinalities)} level matrix, got shape {x.shape}"
        )
    if not np.issubdtype(x.dtype, np.integer):
        if not np.all(x == np.floor(x)):
            raise ValueError("level matrix must contain integers")
        x = x.astype(np.int64)
    x = np.ascontiguousarray(x, dtype=np.int64)
    for j, card in enumerate(np.asarray(cardinalities, dtype=np.int64)):
        col = x[:, j]
        if col.size and ((col < 1) | (col > card)).any():
            raise ValueError(f"column {j}: level outside 1..{card}")
    return x


def sample_rows_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one level per row from an n x D row-stochastic matrix.

    Returns integer levels in 1..D via inverse-CDF with one uniform per
    row.  Rows are renormalized defensively so tiny float drift in the
    input cannot push draws out of range.
    """
    probs = np.asarray(probs, dtype=float)
    cum = np.cumsum(probs, axis=1)
    total = cum[:, -1]
    u = rng.random(probs.shape[0]) * total
    levels = 1 + (cum < u[:, None]).sum(axis=1)
    return np.minimum(levels, probs.shape[1]).astype(np.int64)


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draw one level in 1..D from a single probability vector."""
    return int(sample_rows_categorical(np.asarray(probs, dtype=float)[None, :], rng)[0])


class BaseImputer(BaseEstimator, abc.ABC):
    """Common surface of every imputation method.

    Subclasses store their hyperparameters verbatim in ``__init__``
    (sklearn convention, so get_params/set_params/clone work) and
    implement ``_impute``.  The public ``impute`` wrapper validates the
    input, runs the method, and enforces the result invariants that
    every method must satisfy: observed cells unchanged, no sentinel
    left, all levels in range.
    """

    #: registry name, set by subclasses
    method_name: str = ""

    def impute(self, incomplete: IncompleteDataset, seed: int = 0) -> ImputationResult:
        """Produce multiply imputed completions of ``incomplete``."""
        if not isinstance(incomplete, IncompleteDataset):
            raise TypeError("impute expects an IncompleteDataset")
        rng = rng_from_seed(int(seed))
        result = self._impute(incomplete, rng, int(seed))
        check_result_against(result, incomplete)
        return result

    @abc.abstractmethod
    def _impute(
        self,
        incomplete: IncompleteDataset,
        rng: np.random.Generator,
        seed: int,
    ) -> ImputationResult:
        ...
