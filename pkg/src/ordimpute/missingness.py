"""Missingness mechanisms: MCAR and MAR mask injection.

MCAR masks each target cell independently with a fixed rate.  MAR masks
a target variable with probability ``logistic(intercept + sum coef_k *
scaled_k)`` where every predictor is a fully observed variable and
``scaled_k = (level_k - 1) / (D_k - 1)`` maps levels onto [0, 1].

Scaling note (this matters when reusing published rule coefficients):
logistic rules here act on [0, 1]-scaled predictors, and the shipped
ACS-shaped scenario files carry the published coefficient patterns
divided by 10.  Applied to raw levels, those published magnitudes
saturate the logistic at 1 for nearly all rows, so the shape of the
rule (signs and relative sizes) is kept while the intercept is
recalibrated against the actual data to hit the configured rate.  See
``calibrate_intercept``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

from .data import IncompleteDataset, OrdinalDataset, VariableSpec, masked_copy
from .rng import rng_from_seed

#: Complete-case fraction band considered healthy for a MAR scenario.
COMPLETE_CASE_BAND = (0.01, 0.12)


def logistic(x: np.ndarray | float) -> np.ndarray | float:
    """Standard logistic function exp(x) / (1 + exp(x)), overflow-safe."""
    return expit(x)


@dataclass(frozen=True)
class MarRule:
    """Logistic missingness rule for one target variable.

    ``coefficients`` maps predictor variable names to slopes applied to
    the [0, 1]-scaled predictor levels.  ``target_rate`` (optional)
    requests intercept recalibration on the data at injection time; the
    stored intercept is the starting shape otherwise.
    """

    target: str
    intercept: float
    coefficients: Mapping[str, float]
    target_rate: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "coefficients", dict(self.coefficients))
        if not self.coefficients:
            raise ValueError(f"MAR rule for {self.target!r} has no predictors")
        if self.target in self.coefficients:
            raise ValueError(f"MAR rule for {self.target!r} uses the target as predictor")
        if self.target_rate is not None and not 0.0 < self.target_rate < 1.0:
            raise ValueError("target_rate must lie strictly between 0 and 1")


@dataclass(frozen=True)
class MissingnessScenario:
    """Complete description of one missingness configuration.

    ``mechanism`` labels the headline design ("MCAR" or "MAR").  Both
    kinds of target can coexist: MAR scenarios typically add MCAR
    variables alongside the rule-driven ones.
    """

    mechanism: str
    fully_observed: tuple[str, ...] = ()
    mcar: Mapping[str, float] = field(default_factory=dict)
    mar_rules: tuple[MarRule, ...] = ()

    def __post_init__(self) -> None:
        if self.mechanism not in ("MCAR", "MAR"):
            raise ValueError(f"mechanism must be 'MCAR' or 'MAR', got {self.mechanism!r}")
        object.__setattr__(self, "fully_observed", tuple(self.fully_observed))
        object.__setattr__(self, "mcar", dict(self.mcar))
        object.__setattr__(self, "mar_rules", tuple(self.mar_rules))
        for name, rate in self.mcar.items():
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"MCAR rate for {name!r} must be in [0, 1), got {rate}")
        targets = list(self.mcar) + [r.target for r in self.mar_rules]
        if len(set(targets)) != len(targets):
            raise ValueError("a variable is targeted by more than one mechanism")
        overlap = set(targets) & set(self.fully_observed)
        if overlap:
            raise ValueError(f"variables {sorted(overlap)} are both targeted and fully observed")
        if self.mechanism == "MCAR" and self.mar_rules:
            raise ValueError("MCAR scenario must not carry MAR rules")
        for rule in self.mar_rules:
            missing_preds = set(rule.coefficients) - set(self.fully_observed)
            if missing_preds:
                raise ValueError(
                    f"MAR rule for {rule.target!r} uses predictors {sorted(missing_preds)} "
                    "that are not declared fully observed"
                )


def scaled_predictor(levels: np.ndarray, cardinality: int) -> np.ndarray:
    """Map levels 1..D onto [0, 1] as (level - 1) / (D - 1)."""
    return (np.asarray(levels, dtype=float) - 1.0) / (cardinality - 1.0)


def _linear_predictor(data: OrdinalDataset, rule: MarRule) -> np.ndarray:
    """Slope part of the rule's linear predictor (no intercept), one value per row."""
    lp = np.zeros(data.n_rows)
    for name, coef in rule.coefficients.items():
        j = data.column_index(name)
        lp += coef * scaled_predictor(data.cells[:, j], data.variables[j].cardinality)
    return lp


def calibrate_intercept(
    data: OrdinalDataset, rule: MarRule, target_rate: float
) -> float:
    """Find the intercept making the mean masking probability hit ``target_rate``.

    mean(logistic(c + lp_i)) is continuous and strictly increasing in
    c, so the root is unique; it is bracketed by shifting the extreme
    linear predictor values and found to machine precision.
    """
    if not 0.0 < target_rate < 1.0:
        raise ValueError("target_rate must lie strictly between 0 and 1")
    lp = _linear_predictor(data, rule)

    def gap(c: float) -> float:
        return float(np.mean(expit(c + lp))) - target_rate

    lo = logit(target_rate) - float(lp.max())
    hi = logit(target_rate) - float(lp.min())
    if lo == hi:
        return lo
    return float(brentq(gap, lo, hi, xtol=1e-12, rtol=8.9e-16))


def masking_probabilities(
    data: OrdinalDataset,
    scenario: MissingnessScenario,
    calibrate: bool = True,
) -> dict[str, np.ndarray]:
    """Per-row masking probability for every targeted variable.

    Exposes the exact probabilities ``inject`` draws from, so the
    mechanism can be audited without Monte-Carlo noise.  Rows with
    identical predictor levels always receive identical probabilities.
    """
    out: dict[str, np.ndarray] = {}
    for name, rate in scenario.mcar.items():
        data.column_index(name)
        out[name] = np.full(data.n_rows, float(rate))
    for rule in scenario.mar_rules:
        intercept = rule.intercept
        if calibrate and rule.target_rate is not None:
            intercept = calibrate_intercept(data, rule, rule.target_rate)
        out[rule.target] = expit(intercept + _linear_predictor(data, rule))
    return out


def inject_mcar(
    data: OrdinalDataset,
    rates: Mapping[str, float],
    seed: int | np.random.Generator,
) -> IncompleteDataset:
    """Mask cells completely at random at the given per-variable rates."""
    scenario = MissingnessScenario(mechanism="MCAR", mcar=rates)
    return inject(data, scenario, seed)


def inject_mar(
    data: OrdinalDataset,
    rules: Sequence[MarRule],
    fully_observed: Sequence[str],
    seed: int | np.random.Generator,
    calibrate: bool = True,
) -> IncompleteDataset:
    """Mask cells by logistic rules on fully observed predictors."""
    scenario = MissingnessScenario(
        mechanism="MAR", fully_observed=fully_observed, mar_rules=tuple(rules)
    )
    return inject(data, scenario, seed, calibrate=calibrate)


def inject(
    data: OrdinalDataset,
    scenario: MissingnessScenario,
    seed: int | np.random.Generator,
    calibrate: bool = True,
) -> IncompleteDataset:
    """Apply a missingness scenario to a complete dataset.

    Draw order is fixed (MCAR targets in declaration order, then MAR
    rules in declaration order) so a given seed yields one mask.
    Under a MAR scenario a complete-case fraction outside
    COMPLETE_CASE_BAND triggers a warning: rates that extreme usually
    mean a mis-scaled rule.
    """
    rng = rng_from_seed(seed)
    probs = masking_probabilities(data, scenario, calibrate=calibrate)
    mask = np.zeros(data.cells.shape, dtype=bool)
    for name in list(scenario.mcar) + [r.target for r in scenario.mar_rules]:
        j = data.column_index(name)
        mask[:, j] = rng.random(data.n_rows) < probs[name]
    out = masked_copy(data, mask)
    if scenario.mar_rules:
        cc = out.complete_case_fraction()
        lo, hi = COMPLETE_CASE_BAND
        if not lo <= cc <= hi:
            warnings.warn(
                f"complete-case fraction {cc:.3f} outside [{lo}, {hi}] under MAR; "
                "check rule scaling and rates",
                stacklevel=2,
            )
    return out


# ---------------------------------------------------------------------------
# Scenario files (JSON)


def scenario_to_dict(scenario: MissingnessScenario) -> dict:
    return {
        "mechanism": scenario.mechanism,
        "fully_observed": list(scenario.fully_observed),
        "mcar": dict(scenario.mcar),
        "mar_rules": [
            {
                "target": r.target,
                "intercept": r.intercept,
                "coefficients": dict(r.coefficients),
                "target_rate": r.target_rate,
            }
            for r in scenario.mar_rules
        ],
    }


def scenario_from_dict(doc: dict) -> MissingnessScenario:
    try:
        rules = tuple(
            MarRule(
                target=r["target"],
                intercept=float(r["intercept"]),
                coefficients={k: float(v) for k, v in r["coefficients"].items()},
                target_rate=None if r.get("target_rate") is None else float(r["target_rate"]),
            )
            for r in doc.get("mar_rules", [])
        )
        return MissingnessScenario(
            mechanism=doc["mechanism"],
            fully_observed=tuple(doc.get("fully_observed", ())),
            mcar={k: float(v) for k, v in doc.get("mcar", {}).items()},
            mar_rules=rules,
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed scenario: {exc}") from exc


def scenario_to_json(scenario: MissingnessScenario, path: str | Path) -> None:
    doc = scenario_to_dict(scenario)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def scenario_from_json(path: str | Path) -> MissingnessScenario:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    try:
        return scenario_from_dict(doc)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def with_target_rate(scenario: MissingnessScenario, rate: float) -> MissingnessScenario:
    """Copy of a scenario with every target's rate set to ``rate``."""
    return MissingnessScenario(
        mechanism=scenario.mechanism,
        fully_observed=scenario.fully_observed,
        mcar={k: rate for k in scenario.mcar},
        mar_rules=tuple(replace(r, target_rate=rate) for r in scenario.mar_rules),
    )


# ---------------------------------------------------------------------------
# ACS-shaped default scenarios
#
# Variable roles follow the household/person extract used throughout
# the docs: MV, RMSP, ENG, MARHT, RACNUM stay fully observed; VEH and
# WKL go missing completely at random; NP, SCHL, AGEP, PINCP go missing
# at random through logistic rules on the fully observed block.
# Coefficients below are the published rule patterns divided by 10 (see
# module docstring); intercepts are recalibrated at injection time.

ACS_VARIABLES: tuple[VariableSpec, ...] = (
    VariableSpec("VEH", 7),
    VariableSpec("MV", 7),
    VariableSpec("NP", 7),
    VariableSpec("RMSP", 19),
    VariableSpec("ENG", 5),
    VariableSpec("MARHT", 4),
    VariableSpec("SCHL", 7),
    VariableSpec("RACNUM", 2),
    VariableSpec("AGEP", 17),
    VariableSpec("WKL", 3),
    VariableSpec("PINCP", 13),
)

_ACS_FULLY_OBSERVED = ("MV", "RMSP", "ENG", "MARHT", "RACNUM")

_ACS_RULES = {
    0.30: {
        "NP": {"RMSP": 1.5, "ENG": -1.2, "MARHT": 1.4},
        "SCHL": {"MV": 0.2, "RMSP": -1.2, "ENG": 0.25},
        "AGEP": {"MV": 0.4, "RMSP": 0.5, "MARHT": -1.2},
        "PINCP": {"MV": -1.2, "ENG": 0.4, "MARHT": 0.4},
    },
    0.45: {
        "NP": {"RMSP": 1.5, "ENG": -1.0, "MARHT": 1.4},
        "SCHL": {"MV": 0.25, "RMSP": -1.0, "ENG": 0.25},
        "AGEP": {"MV": 0.45, "RMSP": 0.6, "MARHT": -1.0},
        "PINCP": {"MV": -1.0, "ENG": 0.45, "MARHT": 0.45},
    },
}


def acs_scenario(mechanism: str, rate: float) -> MissingnessScenario:
    """Default ACS-shaped scenario at a 0.30 or 0.45 overall rate."""
    if rate not in _ACS_RULES:
        raise ValueError(f"rate must be one of {sorted(_ACS_RULES)}, got {rate}")
    mar_targets = ("NP", "SCHL", "AGEP", "PINCP")
    if mechanism == "MCAR":
        return MissingnessScenario(
            mechanism="MCAR",
            fully_observed=_ACS_FULLY_OBSERVED,
            mcar={name: rate for name in ("VEH", "WKL") + mar_targets},
        )
    if mechanism == "MAR":
        rules = tuple(
            MarRule(target=t, intercept=-1.0, coefficients=c, target_rate=rate)
            for t, c in _ACS_RULES[rate].items()
        )
        return MissingnessScenario(
            mechanism="MAR",
            fully_observed=_ACS_FULLY_OBSERVED,
            mcar={"VEH": rate, "WKL": rate},
            mar_rules=rules,
        )
    raise ValueError(f"mechanism must be 'MCAR' or 'MAR', got {mechanism!r}")
