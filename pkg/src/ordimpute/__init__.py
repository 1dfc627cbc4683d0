"""Multiple imputation and missingness benchmarking for multivariate ordinal data."""

from .base import BaseImputer
from .bench import (
    ExperimentConfig,
    MethodSpec,
    MetricsReport,
    apply_profile,
    config_from_json,
    emit_report,
    load_population,
    pool_many,
    report_from_json,
    run_experiment,
)
from .data import (
    ImputationResult,
    IncompleteDataset,
    OrdinalDataset,
    VariableSpec,
    as_incomplete,
    draw_sample,
    from_array,
    load_csv,
    load_dictionary,
    marginal_pmf,
    masked_copy,
    save_csv,
    save_dictionary,
)
from .dpmmvn import DpmmvnImputer
from .dpmpm import DpmpmImputer
from .gain import GainConfig, GainImputer
from .glm import MultinomialLogit, ProportionalOdds
from .inference import (
    Estimand,
    PooledEstimate,
    cell_probability,
    enumerate_estimands,
    pool,
    wald_interval,
)
from .mice import MiceImputer
from .missingness import (
    MarRule,
    MissingnessScenario,
    acs_scenario,
    calibrate_intercept,
    inject,
    inject_mar,
    inject_mcar,
    masking_probabilities,
    scenario_from_dict,
    scenario_from_json,
    scenario_to_dict,
    scenario_to_json,
)
from .synthetic import mixture_cell_probability, mixture_population
from .trees import CartSampler, ForestSampler

__version__ = "0.1.0"

__all__ = [
    "BaseImputer",
    "CartSampler",
    "DpmmvnImputer",
    "DpmpmImputer",
    "Estimand",
    "ExperimentConfig",
    "ForestSampler",
    "GainConfig",
    "GainImputer",
    "MethodSpec",
    "MetricsReport",
    "MiceImputer",
    "MultinomialLogit",
    "ProportionalOdds",
    "ImputationResult",
    "IncompleteDataset",
    "MarRule",
    "MissingnessScenario",
    "OrdinalDataset",
    "PooledEstimate",
    "VariableSpec",
    "acs_scenario",
    "apply_profile",
    "as_incomplete",
    "calibrate_intercept",
    "cell_probability",
    "config_from_json",
    "draw_sample",
    "emit_report",
    "enumerate_estimands",
    "from_array",
    "inject",
    "inject_mar",
    "inject_mcar",
    "load_csv",
    "load_dictionary",
    "load_population",
    "marginal_pmf",
    "masked_copy",
    "masking_probabilities",
    "mixture_cell_probability",
    "mixture_population",
    "pool",
    "pool_many",
    "report_from_json",
    "run_experiment",
    "save_csv",
    "save_dictionary",
    "scenario_from_dict",
    "scenario_from_json",
    "scenario_to_dict",
    "scenario_to_json",
    "wald_interval",
]
