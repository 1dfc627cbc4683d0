"""Core data model for multivariate ordinal datasets.

Levels are consecutive integers 1..D_j per variable; there is no level
0 and no gaps.  Missingness is carried next to the data as a boolean
mask (True = missing), never as an in-band code in the level matrix.
Masked cells hold the sentinel 0 internally so that any accidental use
of a masked cell as a level fails fast (0 is outside every valid
range).  CSV files represent missing cells as an empty field or the
token ``NA``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rng import rng_from_seed

#: In-band placeholder stored at masked positions of a level matrix.
MISSING_SENTINEL = 0

#: Tokens read as missing in CSV input (empty field always counts).
NA_TOKENS = ("", "NA")


@dataclass(frozen=True)
class VariableSpec:
    """Name and number of ordered levels of one ordinal variable."""

    name: str
    cardinality: int

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("variable name must be non-empty")
        if self.cardinality < 2:
            raise ValueError(
                f"variable {self.name!r}: cardinality must be >= 2, got {self.cardinality}"
            )


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OrdinalDataset:
    """A fully observed n x p matrix of ordinal levels.

    ``cells[i, j]`` is the level of variable j for row i, an integer in
    1..variables[j].cardinality.  The array is frozen after validation.
    """

    variables: tuple[VariableSpec, ...]
    cells: np.ndarray

    def __post_init__(self) -> None:
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        cells = np.asarray(self.cells)
        if cells.ndim != 2:
            raise ValueError(f"cells must be 2-dimensional, got shape {cells.shape}")
        if cells.shape[1] != len(variables):
            raise ValueError(
                f"cells has {cells.shape[1]} columns but {len(variables)} variables declared"
            )
        if not np.issubdtype(cells.dtype, np.integer):
            if not np.all(cells == np.floor(cells)):
                raise ValueError("cells must contain integers")
            cells = cells.astype(np.int32)
        cells = np.ascontiguousarray(cells, dtype=np.int32)
        for j, spec in enumerate(variables):
            col = cells[:, j]
            bad = (col < 1) | (col > spec.cardinality)
            if bad.any():
                i = int(np.argmax(bad))
                raise ValueError(
                    f"row {i}, variable {spec.name!r}: level {col[i]} outside 1..{spec.cardinality}"
                )
        object.__setattr__(self, "cells", _freeze(cells))

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def n_vars(self) -> int:
        return self.cells.shape[1]

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([v.cardinality for v in self.variables], dtype=np.int64)

    def column_index(self, name: str) -> int:
        for j, v in enumerate(self.variables):
            if v.name == name:
                return j
        raise KeyError(f"no variable named {name!r}")


@dataclass(frozen=True)
class IncompleteDataset:
    """An ordinal level matrix paired with a missingness mask.

    ``mask[i, j]`` is True where the cell is missing.  Masked positions
    of ``cells`` hold the sentinel 0; observed positions hold valid
    levels.  Dimensions of mask and cells always agree.
    """

    variables: tuple[VariableSpec, ...]
    cells: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        variables = tuple(self.variables)
        object.__setattr__(self, "variables", variables)
        cells = np.asarray(self.cells)
        mask = np.asarray(self.mask)
        if mask.dtype != np.bool_:
            raise ValueError("mask must be boolean")
        if cells.shape != mask.shape:
            raise ValueError(
                f"cells shape {cells.shape} does not match mask shape {mask.shape}"
            )
        if cells.ndim != 2 or cells.shape[1] != len(variables):
            raise ValueError(
                f"expected n x {len(variables)} cells, got shape {cells.shape}"
            )
        cells = np.ascontiguousarray(cells, dtype=np.int32)
        if (cells[mask] != MISSING_SENTINEL).any():
            raise ValueError("masked cells must hold the sentinel 0")
        for j, spec in enumerate(variables):
            col = cells[:, j]
            obs = ~mask[:, j]
            bad = obs & ((col < 1) | (col > spec.cardinality))
            if bad.any():
                i = int(np.argmax(bad))
                raise ValueError(
                    f"row {i}, variable {spec.name!r}: level {col[i]} outside 1..{spec.cardinality}"
                )
        object.__setattr__(self, "cells", _freeze(cells))
        object.__setattr__(self, "mask", _freeze(np.ascontiguousarray(mask)))

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def n_vars(self) -> int:
        return self.cells.shape[1]

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([v.cardinality for v in self.variables], dtype=np.int64)

    def column_index(self, name: str) -> int:
        for j, v in enumerate(self.variables):
            if v.name == name:
                return j
        raise KeyError(f"no variable named {name!r}")

    def missing_fraction(self) -> np.ndarray:
        """Per-variable fraction of missing cells."""
        return self.mask.mean(axis=0)

    def complete_case_fraction(self) -> float:
        """Fraction of rows with no missing cell."""
        return float((~self.mask.any(axis=1)).mean())


def as_incomplete(data: OrdinalDataset) -> IncompleteDataset:
    """View a complete dataset as an IncompleteDataset with empty mask."""
    mask = np.zeros(data.cells.shape, dtype=bool)
    return IncompleteDataset(data.variables, data.cells, mask)


def masked_copy(data: OrdinalDataset, mask: np.ndarray) -> IncompleteDataset:
    """Apply ``mask`` to a complete dataset, blanking masked cells."""
    mask = np.asarray(mask, dtype=bool)
    cells = data.cells.copy()
    cells[mask] = MISSING_SENTINEL
    return IncompleteDataset(data.variables, cells, mask)


def from_array(
    x: np.ndarray,
    cardinalities: Sequence[int],
    names: Sequence[str] | None = None,
) -> IncompleteDataset:
    """Build an IncompleteDataset from a float array with NaN for missing.

    Interop helper for array-based pipelines: ``x`` is n x p, NaN marks
    missing cells, everything else must be integer levels.
    """
    x = np.asarray(x, dtype=float)
    if names is None:
        names = [f"V{j + 1}" for j in range(x.shape[1])]
    variables = tuple(
        VariableSpec(str(nm), int(c)) for nm, c in zip(names, cardinalities)
    )
    mask = np.isnan(x)
    cells = np.where(mask, float(MISSING_SENTINEL), x)
    if not np.all(cells == np.floor(cells)):
        raise ValueError("non-integer level in input array")
    return IncompleteDataset(variables, cells.astype(np.int32), mask)


# ---------------------------------------------------------------------------
# File formats


def load_dictionary(path: str | Path) -> tuple[VariableSpec, ...]:
    """Read a data dictionary: one ``name,cardinality`` line per variable."""
    path = Path(path)
    specs: list[VariableSpec] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'name,cardinality', got {raw!r}")
            name, card = parts[0].strip(), parts[1].strip()
            try:
                specs.append(VariableSpec(name, int(card)))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not specs:
        raise ValueError(f"{path}: empty dictionary")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError(f"{path}: duplicate variable names")
    return tuple(specs)


def save_dictionary(specs: Iterable[VariableSpec], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for s in specs:
            fh.write(f"{s.name},{s.cardinality}\n")


def load_csv(path: str | Path, variables: Sequence[VariableSpec]) -> IncompleteDataset:
    """Read a level matrix from CSV (UTF-8, comma separated, header row).

    Header names must match the dictionary order exactly.  Missing
    cells are empty fields or ``NA``.  Malformed input raises
    ValueError with the offending row and column named.
    """
    path = Path(path)
    variables = tuple(variables)
    names = [v.name for v in variables]
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if [h.strip() for h in header] != names:
            raise ValueError(
                f"{path}: header {header!r} does not match dictionary {names!r}"
            )
        rows: list[list[int]] = []
        maskrows: list[list[bool]] = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(names):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(names)} fields, got {len(rec)}"
                )
            levels = []
            miss = []
            for j, tok in enumerate(rec):
                tok = tok.strip()
                if tok in NA_TOKENS:
                    levels.append(MISSING_SENTINEL)
                    miss.append(True)
                    continue
                try:
                    val = int(tok)
                except ValueError:
                    raise ValueError(
                        f"{path}:{lineno}: variable {names[j]!r}: non-integer value {tok!r}"
                    ) from None
                if not 1 <= val <= variables[j].cardinality:
                    raise ValueError(
                        f"{path}:{lineno}: variable {names[j]!r}: level {val} "
                        f"outside 1..{variables[j].cardinality}"
                    )
                levels.append(val)
                miss.append(False)
            rows.append(levels)
            maskrows.append(miss)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    cells = np.asarray(rows, dtype=np.int32)
    mask = np.asarray(maskrows, dtype=bool)
    return IncompleteDataset(variables, cells, mask)


def save_csv(data: OrdinalDataset | IncompleteDataset, path: str | Path) -> None:
    """Write a dataset to CSV; masked cells become empty fields."""
    path = Path(path)
    if isinstance(data, OrdinalDataset):
        mask = np.zeros(data.cells.shape, dtype=bool)
    else:
        mask = data.mask
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([v.name for v in data.variables])
        for i in range(data.cells.shape[0]):
            writer.writerow(
                [
                    "" if mask[i, j] else str(int(data.cells[i, j]))
                    for j in range(data.cells.shape[1])
                ]
            )


# ---------------------------------------------------------------------------
# Sampling and summaries


def draw_sample(
    population: OrdinalDataset,
    n_sample: int,
    seed: int | np.random.Generator,
) -> OrdinalDataset:
    """Draw ``n_sample`` rows without replacement from a population.

    Reproducible: a fixed seed gives the same rows on every run of the
    pinned PCG64 generator.
    """
    if not 1 <= n_sample <= population.n_rows:
        raise ValueError(
            f"n_sample must be in 1..{population.n_rows}, got {n_sample}"
        )
    rng = rng_from_seed(seed)
    idx = rng.choice(population.n_rows, size=n_sample, replace=False)
    return OrdinalDataset(population.variables, population.cells[idx])


def marginal_pmf(data: OrdinalDataset, var: int | str) -> np.ndarray:
    """Empirical marginal pmf of one variable, length D_j, sums to 1."""
    j = data.column_index(var) if isinstance(var, str) else int(var)
    card = data.variables[j].cardinality
    counts = np.bincount(data.cells[:, j], minlength=card + 1)[1:]
    return counts / counts.sum()


def observed_pmf(data: IncompleteDataset, j: int) -> np.ndarray:
    """Marginal pmf of variable j over its observed cells only."""
    card = data.variables[j].cardinality
    col = data.cells[~data.mask[:, j], j]
    if col.size == 0:
        # Nothing observed: fall back to uniform over the levels.
        return np.full(card, 1.0 / card)
    counts = np.bincount(col, minlength=card + 1)[1:]
    return counts / counts.sum()


@dataclass(frozen=True)
class ImputationResult:
    """Output of one imputation run: L completed datasets plus metadata.

    Invariants enforced at construction: every completed dataset agrees
    with the input on observed cells, contains no sentinel, and has all
    levels in range (the OrdinalDataset constructor checks ranges).
    """

    completed: tuple[OrdinalDataset, ...]
    method: str
    seed: int
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "completed", tuple(self.completed))
        if not self.completed:
            raise ValueError("ImputationResult needs at least one completed dataset")

    @property
    def n_imputations(self) -> int:
        return len(self.completed)


def check_result_against(result: ImputationResult, source: IncompleteDataset) -> None:
    """Raise if ``result`` disagrees with ``source`` on observed cells."""
    obs = ~source.mask
    for k, ds in enumerate(result.completed):
        if ds.cells.shape != source.cells.shape:
            raise ValueError(f"completed dataset {k}: shape mismatch")
        if (ds.cells[obs] != source.cells[obs]).any():
            raise ValueError(f"completed dataset {k}: observed cell was altered")
        if (ds.cells == MISSING_SENTINEL).any():
            raise ValueError(f"completed dataset {k}: sentinel remains after imputation")
