"""Multiple imputation by chained equations for ordinal variables.

Each of the L completed datasets comes from an independent chain: fill
the missing cells from the observed marginals (or from available-case
conditionals), then for T sweeps revisit every variable that has
missing values, refit its conditional model on the rows where it is
observed against the current completed values of all other variables,
and redraw its missing cells from the refit model.

Conditional families: multinomial logit and proportional-odds logit
(both with parameter draws from the asymptotic normal approximation,
so imputation is proper), a classification tree with leaf-multiset
sampling, and random forests in either leaf-sampling or
majority-prediction mode.  A conditional that cannot be fit in some
sweep (for example a response level with no observed cases) falls back
to a marginal draw for that variable in that sweep and increments the
``fit_fallbacks`` diagnostic instead of failing the run.

Chains consume independent named substreams of the master seed, so
results do not depend on execution order or threading.
"""

from __future__ import annotations

import numpy as np

from .base import BaseImputer, sample_rows_categorical
from .data import (
    ImputationResult,
    IncompleteDataset,
    OrdinalDataset,
    observed_pmf,
)
from .glm import MultinomialLogit, ProportionalOdds, encode_predictors
from .rng import NS_CHAIN, rng_from_seed, substream
from .trees import CartSampler, ForestSampler

DATA_ORDER = "data_order"
BY_MISSING_COUNT = "by_missing_count"
MARGINAL = "marginal"
CONDITIONAL_AVAILABLE_CASE = "conditional_available_case"

#: errors treated as a recoverable fit failure during a sweep
_FIT_ERRORS = (ValueError, ArithmeticError, np.linalg.LinAlgError)


class _GlmConditional:
    allowed = ("ridge", "tol", "max_iter")

    def __init__(self, cls, hyper):
        self.cls = cls
        self.hyper = hyper

    def impute_column(self, x_obs, y_obs, x_mis, pred_cards, card, rng):
        model = self.cls(**self.hyper).fit(
            encode_predictors(x_obs, pred_cards), y_obs, cardinality=card
        )
        drawn = model.draw_params(rng)
        return drawn.sample(encode_predictors(x_mis, pred_cards), rng)


class _CartConditional:
    allowed = ("min_leaf", "complexity", "max_depth")

    def __init__(self, hyper):
        self.hyper = hyper

    def impute_column(self, x_obs, y_obs, x_mis, pred_cards, card, rng):
        model = CartSampler(**self.hyper).fit(
            x_obs, y_obs, cardinality=card, predictor_cardinalities=pred_cards
        )
        return model.sample(x_mis, rng)


class _ForestConditional:
    allowed = ("n_trees", "mtry", "min_leaf", "complexity", "max_depth")

    def __init__(self, mode, hyper):
        self.mode = mode
        self.hyper = dict(hyper)
        self.hyper.setdefault("n_trees", 10 if mode == "sample" else 100)

    def impute_column(self, x_obs, y_obs, x_mis, pred_cards, card, rng):
        model = ForestSampler(mode=self.mode, **self.hyper).fit(
            x_obs, y_obs, rng, cardinality=card, predictor_cardinalities=pred_cards
        )
        return model.impute(x_mis, rng if self.mode == "sample" else None)


CONDITIONAL_KINDS = ("multireg", "polr", "cart", "forest_sample", "forest_majority")


def _make_conditional(kind: str, hyperparameters: dict | None):
    hyper = dict(hyperparameters or {})
    if kind == "multireg":
        cond = _GlmConditional(MultinomialLogit, hyper)
    elif kind == "polr":
        cond = _GlmConditional(ProportionalOdds, hyper)
    elif kind == "cart":
        cond = _CartConditional(hyper)
    elif kind == "forest_sample":
        cond = _ForestConditional("sample", hyper)
    elif kind == "forest_majority":
        cond = _ForestConditional("majority", hyper)
    else:
        raise ValueError(f"unknown conditional kind {kind!r}; choose from {CONDITIONAL_KINDS}")
    bad = set(hyper) - set(cond.allowed)
    if bad:
        raise ValueError(
            f"conditional {kind!r} does not accept hyperparameters {sorted(bad)}; "
            f"allowed: {list(cond.allowed)}"
        )
    return cond


def sweep_order(mask: np.ndarray, imputation_order: str) -> list[int]:
    """Column visit order over the variables that have missing cells."""
    counts = mask.sum(axis=0)
    cols = [j for j in range(mask.shape[1]) if counts[j] > 0]
    if imputation_order == DATA_ORDER:
        return cols
    if imputation_order == BY_MISSING_COUNT:
        return sorted(cols, key=lambda j: (counts[j], j))
    raise ValueError(
        f"unknown imputation order {imputation_order!r}; "
        f"choose {DATA_ORDER!r} or {BY_MISSING_COUNT!r}"
    )


def initialize_missing(
    incomplete: IncompleteDataset,
    initializer: str = MARGINAL,
    seed: int | np.random.Generator = 0,
    conditional: str = "multireg",
    hyperparameters: dict | None = None,
) -> OrdinalDataset:
    """Fill every masked cell to start a chain.

    MARGINAL draws each variable's missing cells from its observed
    marginal pmf.  CONDITIONAL_AVAILABLE_CASE starts from the marginal
    fill, then revisits each variable once in column order, fitting its
    conditional on the originally fully observed rows only and
    redrawing the missing cells; variables whose available-case fit
    fails keep their marginal draws.
    """
    rng = rng_from_seed(seed)
    _reject_unimputable(incomplete)
    cond = _make_conditional(conditional, hyperparameters)
    levels, _ = _initialize(incomplete, initializer, cond, rng, diagnostics={})
    return OrdinalDataset(incomplete.variables, levels)


def _reject_unimputable(incomplete: IncompleteDataset) -> None:
    all_missing = incomplete.mask.all(axis=0)
    if all_missing.any():
        j = int(np.argmax(all_missing))
        raise ValueError(
            f"variable {incomplete.variables[j].name!r} has no observed values"
        )


def _marginal_fill(incomplete, cols, levels, rng):
    for j in cols:
        mis = incomplete.mask[:, j]
        pmf = observed_pmf(incomplete, j)
        levels[mis, j] = sample_rows_categorical(
            np.tile(pmf, (int(mis.sum()), 1)), rng
        )


def _initialize(incomplete, initializer, cond, rng, diagnostics):
    levels = incomplete.cells.astype(np.int64).copy()
    cols = [j for j in range(incomplete.n_vars) if incomplete.mask[:, j].any()]
    _marginal_fill(incomplete, cols, levels, rng)
    if initializer == MARGINAL:
        return levels, cols
    if initializer != CONDITIONAL_AVAILABLE_CASE:
        raise ValueError(
            f"unknown initializer {initializer!r}; "
            f"choose {MARGINAL!r} or {CONDITIONAL_AVAILABLE_CASE!r}"
        )
    cards = incomplete.cardinalities
    complete_rows = ~incomplete.mask.any(axis=1)
    for j in cols:
        mis = incomplete.mask[:, j]
        others = [k for k in range(incomplete.n_vars) if k != j]
        try:
            if not complete_rows.any():
                raise ValueError("no fully observed rows for available-case fit")
            vals = cond.impute_column(
                levels[complete_rows][:, others],
                levels[complete_rows, j],
                levels[mis][:, others],
                cards[others],
                int(cards[j]),
                rng,
            )
        except _FIT_ERRORS:
            diagnostics["init_fallbacks"] = diagnostics.get("init_fallbacks", 0) + 1
            continue
        levels[mis, j] = vals
    return levels, cols


class MiceImputer(BaseImputer):
    """Chained-equations imputer over a chosen conditional family.

    Parameters mirror the chained-equations loop: ``iterations`` sweeps
    per chain, ``n_imputations`` independent chains, a variable visit
    order, an initializer, and the conditional model kind with its
    hyperparameter overrides.
    """

    method_name = "mice"

    def __init__(
        self,
        conditional: str = "cart",
        hyperparameters: dict | None = None,
        iterations: int = 10,
        imputation_order: str = DATA_ORDER,
        initializer: str = MARGINAL,
        n_imputations: int = 10,
    ):
        self.conditional = conditional
        self.hyperparameters = hyperparameters
        self.iterations = iterations
        self.imputation_order = imputation_order
        self.initializer = initializer
        self.n_imputations = n_imputations

    def _impute(self, incomplete, rng, seed):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.n_imputations < 1:
            raise ValueError("n_imputations must be at least 1")
        _reject_unimputable(incomplete)
        _make_conditional(self.conditional, self.hyperparameters)  # validate early
        diagnostics = {"fit_fallbacks": 0.0, "init_fallbacks": 0.0}
        completed = [
            self.run_chain(incomplete, substream(seed, NS_CHAIN, l), diagnostics)
            for l in range(self.n_imputations)
        ]
        return ImputationResult(
            completed=tuple(completed),
            method=f"mice_{self.conditional}",
            seed=seed,
            diagnostics=diagnostics,
        )

    def run_chain(
        self,
        incomplete: IncompleteDataset,
        rng: np.random.Generator,
        diagnostics: dict | None = None,
        sweep_hook=None,
    ) -> OrdinalDataset:
        """Run one full chain on its own stream and return the completed data.

        ``sweep_hook(sweep, var)`` is called after each variable update,
        which lets tests assert the visit order.
        """
        diagnostics = diagnostics if diagnostics is not None else {}
        cond = _make_conditional(self.conditional, self.hyperparameters)
        levels, _ = _initialize(incomplete, self.initializer, cond, rng, diagnostics)
        order = sweep_order(incomplete.mask, self.imputation_order)
        cards = incomplete.cardinalities
        for t in range(self.iterations):
            for j in order:
                obs = ~incomplete.mask[:, j]
                mis = incomplete.mask[:, j]
                others = [k for k in range(incomplete.n_vars) if k != j]
                try:
                    vals = cond.impute_column(
                        levels[obs][:, others],
                        levels[obs, j],
                        levels[mis][:, others],
                        cards[others],
                        int(cards[j]),
                        rng,
                    )
                except _FIT_ERRORS:
                    diagnostics["fit_fallbacks"] = diagnostics.get("fit_fallbacks", 0) + 1
                    pmf = observed_pmf(incomplete, j)
                    vals = sample_rows_categorical(
                        np.tile(pmf, (int(mis.sum()), 1)), rng
                    )
                levels[mis, j] = vals
                if sweep_hook is not None:
                    sweep_hook(t, j)
        return OrdinalDataset(incomplete.variables, levels)
