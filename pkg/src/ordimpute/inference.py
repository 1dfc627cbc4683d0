"""Estimands, interval estimates, and multiple-imputation pooling.

The estimands are joint cell probabilities: the population fraction of
rows matching a conjunction of (variable, level) pairs, of arity 1
(marginal), 2 (bivariate), or 3 (trivariate).  Point estimates combine
across completed datasets by the standard normal-approximation
combining rules: with per-dataset estimates q_l and variances u_l,

    qbar = mean(q_l)
    b    = sample variance of q_l            (between-imputation)
    ubar = mean(u_l)                          (within-imputation)
    T    = (1 + 1/L) b + ubar
    df   = (L - 1) (1 + ubar / ((1 + 1/L) b))^2

and the 95% interval is qbar +/- t_{df, 0.975} sqrt(T).  When b = 0
the df is infinite and the normal quantile is used.  No small-sample
df adjustment is applied, and intervals are deliberately not clipped
to [0, 1]: clipping would silently change coverage behavior.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from typing import Sequence

import numpy as np
from scipy import stats

from .data import OrdinalDataset


@dataclass(frozen=True)
class Estimand:
    """A joint cell probability: P(Y_{j1} = d1, ..., Y_{jk} = dk).

    ``cells`` is a tuple of (variable index, level) pairs with distinct
    variables; ``truth`` is the probability under the designated
    population.
    """

    cells: tuple[tuple[int, int], ...]
    truth: float

    def __post_init__(self) -> None:
        cells = tuple((int(j), int(d)) for j, d in self.cells)
        object.__setattr__(self, "cells", cells)
        if not cells:
            raise ValueError("estimand needs at least one cell")
        vars_ = [j for j, _ in cells]
        if len(set(vars_)) != len(vars_):
            raise ValueError("estimand variables must be distinct")
        if not 0.0 <= self.truth <= 1.0:
            raise ValueError("truth must be a probability")

    @property
    def arity(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class PooledEstimate:
    """Combined point estimate and interval across L completed datasets."""

    qbar: float
    between: float
    within: float
    total_variance: float
    df: float
    ci_lower: float
    ci_upper: float
    n_imputations: int


def t_quantile(level: float, df: float) -> float:
    """Student-t quantile; df = inf gives the normal quantile."""
    if df <= 0:
        raise ValueError("df must be positive")
    if np.isinf(df):
        return float(stats.norm.ppf(level))
    return float(stats.t.ppf(level, df))


def match_indicator(data: OrdinalDataset, cells: Sequence[tuple[int, int]]) -> np.ndarray:
    """Boolean row indicator for a conjunction of (variable, level) pairs."""
    ind = np.ones(data.n_rows, dtype=bool)
    for j, d in cells:
        ind &= data.cells[:, j] == d
    return ind


def cell_probability(
    data: OrdinalDataset, cells: Sequence[tuple[int, int]]
) -> tuple[float, float]:
    """Estimate (q, u) for one joint cell on one completed dataset.

    q is the matching fraction and u = q(1 - q)/n its binomial
    variance estimate.
    """
    n = data.n_rows
    q = float(match_indicator(data, cells).mean())
    return q, q * (1.0 - q) / n


def wald_interval(q: float, n: int, level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation interval for a proportion, not clipped to [0, 1]."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be a probability")
    z = float(stats.norm.ppf(0.5 + level / 2.0))
    half = z * np.sqrt(q * (1.0 - q) / n)
    return q - half, q + half


def pool(
    estimates: Sequence[float],
    variances: Sequence[float],
    level: float = 0.95,
) -> PooledEstimate:
    """Combine per-imputation (q_l, u_l) pairs into one estimate."""
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(variances, dtype=float)
    if q.shape != u.shape or q.ndim != 1:
        raise ValueError("estimates and variances must be 1-d and congruent")
    L = q.size
    if L < 2:
        raise ValueError("pooling needs at least 2 imputations")
    if (u < 0).any():
        raise ValueError("variances must be non-negative")
    qbar = float(q.mean())
    b = float(q.var(ddof=1))
    ubar = float(u.mean())
    total = (1.0 + 1.0 / L) * b + ubar
    if b > 0.0:
        df = (L - 1.0) * (1.0 + ubar / ((1.0 + 1.0 / L) * b)) ** 2
    else:
        df = float("inf")
    half = t_quantile(0.5 + level / 2.0, df) * float(np.sqrt(total))
    return PooledEstimate(
        qbar=qbar,
        between=b,
        within=ubar,
        total_variance=total,
        df=df,
        ci_lower=qbar - half,
        ci_upper=qbar + half,
        n_imputations=L,
    )


def enumerate_estimands(
    population: OrdinalDataset,
    arities: Sequence[int],
    n_sample: int,
) -> list[Estimand]:
    """All joint cells of the given arities that pass the size filter.

    A cell with population probability Q is kept when n*Q > 10 and
    n*(1 - Q) > 10 at the planned sample size n, the usual guard for
    the normal approximation behind the intervals.  Output order is
    deterministic: arity, then variable tuple, then level tuple.
    """
    if any(a not in (1, 2, 3) for a in arities):
        raise ValueError("arities must be drawn from {1, 2, 3}")
    n = int(n_sample)
    if n <= 0:
        raise ValueError("n_sample must be positive")
    cards = population.cardinalities
    out: list[Estimand] = []
    for arity in sorted(set(int(a) for a in arities)):
        for vars_ in combinations(range(population.n_vars), arity):
            joint = _joint_pmf(population, vars_)
            for levels in product(*(range(1, cards[j] + 1) for j in vars_)):
                Q = float(joint[tuple(d - 1 for d in levels)])
                if n * Q > 10.0 and n * (1.0 - Q) > 10.0:
                    out.append(Estimand(cells=tuple(zip(vars_, levels)), truth=Q))
    return out


def _joint_pmf(data: OrdinalDataset, vars_: Sequence[int]) -> np.ndarray:
    """Joint empirical pmf over a variable tuple, shape (D_j1, ..., D_jk)."""
    cards = [int(data.variables[j].cardinality) for j in vars_]
    code = np.zeros(data.n_rows, dtype=np.int64)
    for j, card in zip(vars_, cards):
        code = code * card + (data.cells[:, j].astype(np.int64) - 1)
    counts = np.bincount(code, minlength=int(np.prod(cards)))
    return counts.reshape(cards) / data.n_rows


def estimate_cells(
    data: OrdinalDataset, estimands: Sequence[Estimand]
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (q, u) for many estimands on one completed dataset.

    Groups estimands by their variable tuple and computes each group's
    joint pmf once, so cost scales with distinct variable tuples rather
    than with estimand count.
    """
    n = data.n_rows
    q = np.empty(len(estimands))
    groups: dict[tuple[int, ...], list[int]] = {}
    for idx, est in enumerate(estimands):
        groups.setdefault(tuple(j for j, _ in est.cells), []).append(idx)
    for vars_, idxs in groups.items():
        joint = _joint_pmf(data, vars_)
        for idx in idxs:
            levels = tuple(d - 1 for _, d in estimands[idx].cells)
            q[idx] = joint[levels]
    u = q * (1.0 - q) / n
    return q, u
