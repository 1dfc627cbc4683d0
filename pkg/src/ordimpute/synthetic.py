"""Synthetic ordinal population from a known latent-class mixture.

Rows follow a three-class mixture of product multinomials: each row
draws a latent class, then each of five variables independently from
that class's pmf, so all cross-variable dependence runs through the
class label.  The pmfs below are fixed constants chosen so that every
marginal cell keeps enough mass for normal-theory intervals at moderate
sample sizes, while within-class conditionals stay genuinely spread
out: imputing a single most-likely level then visibly distorts cell
probabilities, whereas drawing from a conditional distribution does
not.  Any joint cell probability has a closed form, so estimates can
be checked against exact mixture arithmetic as well as against the
generated rows.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .data import OrdinalDataset, VariableSpec
from .rng import rng_from_seed

DEFAULT_POPULATION_SEED = 271828

MIXTURE_WEIGHTS = np.array([0.45, 0.35, 0.20])

# One (class x level) table per variable; rows are classes.
MIXTURE_PMFS: tuple[np.ndarray, ...] = (
    np.array([
        [0.80, 0.20],
        [0.35, 0.65],
        [0.15, 0.85],
    ]),
    np.array([
        [0.60, 0.30, 0.10],
        [0.15, 0.60, 0.25],
        [0.10, 0.25, 0.65],
    ]),
    np.array([
        [0.55, 0.25, 0.12, 0.08],
        [0.10, 0.50, 0.30, 0.10],
        [0.08, 0.12, 0.30, 0.50],
    ]),
    np.array([
        [0.40, 0.30, 0.15, 0.10, 0.05],
        [0.10, 0.20, 0.40, 0.20, 0.10],
        [0.05, 0.10, 0.15, 0.30, 0.40],
    ]),
    np.array([
        [0.50, 0.20, 0.15, 0.10, 0.05],
        [0.10, 0.25, 0.35, 0.20, 0.10],
        [0.03, 0.07, 0.20, 0.30, 0.40],
    ]),
)

SYNTHETIC_VARIABLES: tuple[VariableSpec, ...] = tuple(
    VariableSpec(f"V{j + 1}", pmf.shape[1]) for j, pmf in enumerate(MIXTURE_PMFS)
)


def mixture_cell_probability(cells: Sequence[tuple[int, int]]) -> float:
    """Exact P(Y_{j1}=d1, ..., Y_{jk}=dk) under the mixture.

    ``cells`` pairs variable indices with levels.  Variables are
    conditionally independent given the class, so the joint is the
    weight-averaged product of per-class level probabilities.
    """
    vars_ = [j for j, _ in cells]
    if len(set(vars_)) != len(vars_):
        raise ValueError("cells must name distinct variables")
    per_class = MIXTURE_WEIGHTS.copy()
    for j, d in cells:
        pmf = MIXTURE_PMFS[j]
        if not 1 <= d <= pmf.shape[1]:
            raise ValueError(f"level {d} out of range for variable {j}")
        per_class = per_class * pmf[:, d - 1]
    return float(per_class.sum())


def mixture_population(
    n_rows: int = 100_000, seed: int | np.random.Generator = DEFAULT_POPULATION_SEED
) -> OrdinalDataset:
    """Draw a population of ``n_rows`` from the mixture.

    Draw order is fixed (class labels first, then one uniform per cell,
    variable by variable), so a seed pins the exact table.
    """
    if n_rows < 1:
        raise ValueError("n_rows must be positive")
    rng = rng_from_seed(seed)
    z = rng.choice(MIXTURE_WEIGHTS.size, size=n_rows, p=MIXTURE_WEIGHTS)
    columns = []
    for pmf in MIXTURE_PMFS:
        u = rng.random(n_rows)
        cum = pmf.cumsum(axis=1)
        columns.append(1 + (u[:, None] > cum[z]).sum(axis=1))
    return OrdinalDataset(SYNTHETIC_VARIABLES, np.column_stack(columns))
