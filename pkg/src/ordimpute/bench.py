"""Repeated-sampling benchmark harness.

Runs the full simulation loop: draw a sample from a fixed population,
inject missingness, impute with each configured method, pool, and score
the pooled intervals against population truth.  Every random draw is
keyed by (master seed, purpose, replication, method), so results are
bit-identical across runs and across worker counts.

Frequentist scoring follows the repeated-sampling recipe: an estimand's
coverage is the fraction of replications whose pooled 95% interval
contains the population value, and its relative MSE divides the
method's MSE by the MSE of the pre-missingness estimate on the same
replications.
"""

from __future__ import annotations

import copy
import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .data import OrdinalDataset, draw_sample, load_csv, load_dictionary
from .dpmmvn import DpmmvnImputer
from .dpmpm import DpmpmImputer
from .gain import GainImputer
from .inference import enumerate_estimands, estimate_cells, pool
from .mice import MiceImputer
from .missingness import (
    MissingnessScenario,
    inject,
    scenario_from_dict,
    scenario_to_dict,
)
from .rng import NS_INJECT, NS_METHOD, NS_SAMPLE, method_key, substream, substream_seed
from .synthetic import mixture_population

__all__ = [
    "MethodSpec",
    "ExperimentConfig",
    "MetricsReport",
    "PROFILES",
    "apply_profile",
    "build_imputer",
    "config_from_json",
    "coverage_rate",
    "relative_mse",
    "bias",
    "five_number_summary",
    "load_population",
    "pool_many",
    "run_experiment",
    "emit_report",
    "report_to_json",
    "report_from_json",
    "estimand_label",
]


# ---------------------------------------------------------------------------
# method registry


def _mice_factory(conditional: str):
    def make(params: dict, n_imputations: int) -> MiceImputer:
        return MiceImputer(
            conditional=conditional, n_imputations=n_imputations, **params
        )

    return make


METHOD_REGISTRY = {
    "multireg": _mice_factory("multireg"),
    "polr": _mice_factory("polr"),
    "cart": _mice_factory("cart"),
    "forest_sample": _mice_factory("forest_sample"),
    "forest_majority": _mice_factory("forest_majority"),
    "dpmpm": lambda params, L: DpmpmImputer(n_imputations=L, **params),
    "dpmmvn": lambda params, L: DpmmvnImputer(n_imputations=L, **params),
    "gain": lambda params, L: GainImputer(n_imputations=L, **params),
}

PREMISSING = "premissing"


@dataclass(frozen=True)
class MethodSpec:
    """One benchmark entrant: a registry name plus constructor overrides.

    ``label`` names the result columns and seeds the method's random
    substream; it defaults to ``name`` and only needs setting when the
    same method runs twice with different parameters.
    """

    name: str
    params: dict = field(default_factory=dict)
    label: str | None = None

    def __post_init__(self) -> None:
        if self.name not in METHOD_REGISTRY:
            raise ValueError(
                f"unknown method {self.name!r}; choose from "
                f"{sorted(METHOD_REGISTRY)}"
            )
        if "n_imputations" in self.params:
            raise ValueError(
                "n_imputations is fixed by the experiment config, "
                "not per-method params"
            )
        if self.label == PREMISSING or self.name == PREMISSING:
            raise ValueError(f"{PREMISSING!r} is reserved for the baseline")

    @property
    def key(self) -> str:
        return self.label if self.label is not None else self.name


def build_imputer(spec: MethodSpec, n_imputations: int):
    return METHOD_REGISTRY[spec.name](dict(spec.params), n_imputations)


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass(frozen=True)
class ExperimentConfig:
    population: dict
    n_sample: int
    replications: int
    n_imputations: int
    methods: tuple[MethodSpec, ...]
    scenario: MissingnessScenario
    estimand_arities: tuple[int, ...]
    master_seed: int
    parallelism: int = 1
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if self.n_sample < 1:
            raise ValueError("n_sample must be positive")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.n_imputations < 2:
            raise ValueError("n_imputations must be at least 2 for pooling")
        if not self.methods:
            raise ValueError("at least one method is required")
        keys = [m.key for m in self.methods]
        if len(set(keys)) != len(keys):
            raise ValueError(f"method labels must be unique, got {keys}")
        if not self.estimand_arities:
            raise ValueError("estimand_arities must be non-empty")
        if any(a not in (1, 2, 3) for a in self.estimand_arities):
            raise ValueError("estimand arities must be drawn from {1, 2, 3}")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")

    def identity_dict(self) -> dict:
        """The experiment-defining fields, echoed into every report.

        Execution details (parallelism, output_dir) are excluded: two
        runs of the same experiment must produce identical reports no
        matter how they were scheduled.
        """
        return {
            "population": copy.deepcopy(self.population),
            "n_sample": self.n_sample,
            "replications": self.replications,
            "n_imputations": self.n_imputations,
            "methods": [
                {"name": m.name, "params": copy.deepcopy(m.params), "label": m.label}
                for m in self.methods
            ],
            "scenario": scenario_to_dict(self.scenario),
            "estimand_arities": list(self.estimand_arities),
            "master_seed": self.master_seed,
        }


def _method_spec_from_dict(doc: dict) -> MethodSpec:
    if not isinstance(doc, dict) or "name" not in doc:
        raise ValueError(f"method entries need a 'name' field, got {doc!r}")
    extra = set(doc) - {"name", "params", "label"}
    if extra:
        raise ValueError(f"unknown method fields {sorted(extra)}")
    return MethodSpec(
        name=doc["name"],
        params=dict(doc.get("params", {})),
        label=doc.get("label"),
    )


def config_from_dict(doc: dict) -> ExperimentConfig:
    required = {
        "population",
        "n_sample",
        "replications",
        "n_imputations",
        "methods",
        "scenario",
        "estimand_arities",
        "master_seed",
    }
    missing = required - set(doc)
    if missing:
        raise ValueError(f"config is missing fields {sorted(missing)}")
    extra = set(doc) - required - {"parallelism", "output_dir", "profile"}
    if extra:
        raise ValueError(f"unknown config fields {sorted(extra)}")
    return ExperimentConfig(
        population=dict(doc["population"]),
        n_sample=int(doc["n_sample"]),
        replications=int(doc["replications"]),
        n_imputations=int(doc["n_imputations"]),
        methods=tuple(_method_spec_from_dict(m) for m in doc["methods"]),
        scenario=scenario_from_dict(doc["scenario"]),
        estimand_arities=tuple(int(a) for a in doc["estimand_arities"]),
        master_seed=int(doc["master_seed"]),
        parallelism=int(doc.get("parallelism", 1)),
        output_dir=doc.get("output_dir"),
    )


def config_from_json(path: str | Path, profile: str | None = None) -> ExperimentConfig:
    """Load a config file, applying its profile (or the override) first."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    chosen = profile if profile is not None else doc.get("profile")
    if chosen is not None:
        doc = apply_profile(doc, chosen)
    return config_from_dict(doc)


# Profiles fill in scale parameters a config leaves unspecified.  The
# desk profile finishes its reference run in minutes on one core; the
# paper profile is the full-scale study (hours).  Explicit config
# values always win over profile defaults.
PROFILES: dict[str, dict] = {
    "desk": {
        "n_sample": 2000,
        "replications": 50,
        "n_imputations": 10,
        "method_params": {
            "dpmpm": {"n_iter": 3000, "burn_in": 1000},
            "dpmmvn": {"n_iter": 3000, "burn_in": 1000},
            "forest_majority": {"hyperparameters": {"n_trees": 25}},
        },
    },
    "paper": {
        "n_sample": 10000,
        "replications": 500,
        "n_imputations": 50,
        "method_params": {
            "dpmpm": {"n_iter": 15000, "burn_in": 5000},
            "dpmmvn": {"n_iter": 15000, "burn_in": 5000},
        },
    },
}


def apply_profile(doc: dict, profile: str) -> dict:
    """Fill profile defaults into a config dict; explicit values win."""
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    prof = PROFILES[profile]
    out = copy.deepcopy(doc)
    out.pop("profile", None)
    for key in ("n_sample", "replications", "n_imputations"):
        out.setdefault(key, prof[key])
    for entry in out.get("methods", ()):
        defaults = prof["method_params"].get(entry.get("name"))
        if not defaults:
            continue
        params = entry.setdefault("params", {})
        for pkey, pval in defaults.items():
            if isinstance(pval, dict):
                nested = params.setdefault(pkey, {})
                for nkey, nval in pval.items():
                    nested.setdefault(nkey, nval)
            else:
                params.setdefault(pkey, pval)
    return out


def load_population(spec: dict, base_dir: str | Path | None = None) -> OrdinalDataset:
    """Materialize the population a config points at.

    ``{"kind": "synthetic", "n_rows": ..., "seed": ...}`` draws the
    built-in mixture population; ``{"kind": "csv", "data": ...,
    "dictionary": ...}`` reads a complete dataset from disk (relative
    paths resolve against ``base_dir``).
    """
    kind = spec.get("kind")
    if kind == "synthetic":
        return mixture_population(
            n_rows=int(spec.get("n_rows", 100_000)),
            seed=int(spec.get("seed", 271828)),
        )
    if kind == "csv":
        if "data" not in spec or "dictionary" not in spec:
            raise ValueError("csv population needs 'data' and 'dictionary' paths")
        base = Path(base_dir) if base_dir is not None else Path(".")
        variables = load_dictionary(base / spec["dictionary"])
        inc = load_csv(base / spec["data"], variables)
        if inc.mask.any():
            raise ValueError("population data must be fully observed")
        return OrdinalDataset(inc.variables, inc.cells)
    raise ValueError(f"unknown population kind {kind!r}")


# ---------------------------------------------------------------------------
# pooling and metrics


def pool_many(
    estimates: np.ndarray, variances: np.ndarray, level: float = 0.95
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Combine (L, E) per-imputation estimates into E pooled intervals.

    Delegates to the scalar pooling rule column by column, so results
    are bit-identical to calling it directly.  (A vectorized variant
    drifts by an ulp because axis reductions accumulate in a different
    order; exact agreement with the scalar path matters more here than
    the microseconds saved.)
    """
    q = np.asarray(estimates, dtype=float)
    u = np.asarray(variances, dtype=float)
    if q.shape != u.shape or q.ndim != 2:
        raise ValueError("estimates and variances must be 2-d and congruent")
    E = q.shape[1]
    qbar = np.empty(E)
    lo = np.empty(E)
    hi = np.empty(E)
    for e in range(E):
        p = pool(q[:, e], u[:, e], level=level)
        qbar[e], lo[e], hi[e] = p.qbar, p.ci_lower, p.ci_upper
    return qbar, lo, hi


def coverage_rate(lo: np.ndarray, hi: np.ndarray, truth: float) -> float:
    """Fraction of replications whose interval contains the truth."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
        raise ValueError("lo and hi must be non-empty 1-d arrays of equal length")
    return float(((lo <= truth) & (truth <= hi)).mean())


def relative_mse(
    estimates: np.ndarray, baseline: np.ndarray, truth: float
) -> float | None:
    """MSE of the method's estimates over MSE of the baseline's.

    Both arrays must cover the same replications.  A zero baseline MSE
    (the baseline hit the truth exactly every time) leaves the ratio
    undefined; the estimand is then excluded from summaries and the
    exclusion counted.
    """
    est = np.asarray(estimates, dtype=float)
    base = np.asarray(baseline, dtype=float)
    if est.shape != base.shape or est.ndim != 1 or est.size == 0:
        raise ValueError("estimates and baseline must match one replication each")
    denom = float(np.mean((base - truth) ** 2))
    if denom == 0.0:
        return None
    return float(np.mean((est - truth) ** 2) / denom)


def bias(estimates: np.ndarray, truth: float) -> float:
    """Mean estimate minus truth across replications."""
    est = np.asarray(estimates, dtype=float)
    if est.ndim != 1 or est.size == 0:
        raise ValueError("estimates must be a non-empty 1-d array")
    return float(est.mean() - truth)


FIVE_NUMBER_NAMES = ("Min.", "1st Qu.", "Median", "3rd Qu.", "Max.")


def five_number_summary(values) -> dict[str, float]:
    """Min, quartiles, and max with type-7 (linear) interpolation."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise ValueError("need at least one value")
    qs = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
    return {name: float(x) for name, x in zip(FIVE_NUMBER_NAMES, qs)}


# ---------------------------------------------------------------------------
# report structures


def estimand_label(est_doc: dict) -> str:
    """Human-readable cell name, e.g. ``V1=2 & V3=1``."""
    return " & ".join(f"{name}={level}" for name, level in est_doc["cells"])


@dataclass
class MetricsReport:
    """Everything a benchmark run produced, in JSON-safe form.

    All numeric payloads are plain Python floats/ints inside lists and
    dicts, so ``report_from_json(report_to_json(r)) == r`` holds
    exactly and two runs of the same config compare equal with ``==``.
    ``results`` keeps the per-(replication, method) pooled intervals so
    every summary number can be recomputed from the report alone.
    """

    config: dict
    variables: list
    estimands: list
    methods: list
    premissing: dict
    results: dict
    metrics: dict
    summaries: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "variables": self.variables,
            "estimands": self.estimands,
            "methods": self.methods,
            "premissing": self.premissing,
            "results": self.results,
            "metrics": self.metrics,
            "summaries": self.summaries,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        required = {
            "config",
            "variables",
            "estimands",
            "methods",
            "premissing",
            "results",
            "metrics",
            "summaries",
        }
        missing = required - set(doc)
        if missing:
            raise ValueError(f"report is missing fields {sorted(missing)}")
        return cls(**{k: doc[k] for k in required})


def report_to_json(report: MetricsReport, path: str | Path) -> None:
    # Compact separators: the per-replication intermediates make this
    # file large, and its readers are programs, not people.
    text = json.dumps(report.to_dict(), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def report_from_json(path: str | Path) -> MetricsReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON: {exc}") from exc
    return MetricsReport.from_dict(doc)


# ---------------------------------------------------------------------------
# the simulation loop

# Worker context, set once per process by the pool initializer.  Jobs
# carry only (replication, method index); everything heavy rides here.
_CTX: dict = {}


def _init_worker(population, scenario, estimands, methods, n_sample, L, master_seed):
    _CTX["population"] = population
    _CTX["scenario"] = scenario
    _CTX["estimands"] = estimands
    _CTX["methods"] = methods
    _CTX["n_sample"] = n_sample
    _CTX["L"] = L
    _CTX["master_seed"] = master_seed


def _replication_sample(h: int) -> OrdinalDataset:
    return draw_sample(
        _CTX["population"],
        _CTX["n_sample"],
        substream(_CTX["master_seed"], NS_SAMPLE, h),
    )


def _run_job(job: tuple[int, int]):
    """One (replication, method) cell of the grid.

    Method index -1 is the pre-missingness baseline: plain proportions
    and Wald intervals on the untouched sample.  The sample and the
    injected mask are re-derived from their own substreams, so any job
    can run on any worker in any order.
    """
    h, mi = job
    sample = _replication_sample(h)
    estimands = _CTX["estimands"]
    if mi < 0:
        q, u = estimate_cells(sample, estimands)
        z = float(stats.norm.ppf(0.975))
        half = z * np.sqrt(u)
        return h, mi, ("ok", q, q - half, q + half)
    spec = _CTX["methods"][mi]
    try:
        incomplete = inject(
            sample, _CTX["scenario"], substream(_CTX["master_seed"], NS_INJECT, h)
        )
        imputer = build_imputer(spec, _CTX["L"])
        seed = substream_seed(_CTX["master_seed"], NS_METHOD, h, method_key(spec.key))
        result = imputer.impute(incomplete, seed=seed)
        Q = np.empty((_CTX["L"], len(estimands)))
        U = np.empty_like(Q)
        for l, completed in enumerate(result.completed):
            Q[l], U[l] = estimate_cells(completed, estimands)
        qbar, lo, hi = pool_many(Q, U)
        return h, mi, ("ok", qbar, lo, hi)
    except Exception as exc:  # noqa: BLE001 - failed replications are scored as such
        return h, mi, ("error", f"{type(exc).__name__}: {exc}")


def _compute_metrics(
    estimands: list[dict],
    qbar_by_h: list[np.ndarray | None],
    lo_by_h: list[np.ndarray | None],
    hi_by_h: list[np.ndarray | None],
    baseline_q: np.ndarray,
) -> dict:
    """Score one method across its successful replications.

    The relative-MSE baseline is restricted to the same replications
    the method completed, so a failed run never skews the comparison.
    """
    used = [h for h, q in enumerate(qbar_by_h) if q is not None]
    n_used = len(used)
    out = {
        "n_used": n_used,
        "n_failed": len(qbar_by_h) - n_used,
        "coverage": [],
        "rel_mse": [],
        "bias": [],
    }
    if n_used == 0:
        out["coverage"] = [None] * len(estimands)
        out["rel_mse"] = [None] * len(estimands)
        out["bias"] = [None] * len(estimands)
        return out
    Q = np.stack([qbar_by_h[h] for h in used])
    Lo = np.stack([lo_by_h[h] for h in used])
    Hi = np.stack([hi_by_h[h] for h in used])
    base = baseline_q[used]
    for e, est in enumerate(estimands):
        truth = est["truth"]
        out["coverage"].append(coverage_rate(Lo[:, e], Hi[:, e], truth))
        out["rel_mse"].append(relative_mse(Q[:, e], base[:, e], truth))
        out["bias"].append(bias(Q[:, e], truth))
    return out


def _summarize(estimands: list[dict], metrics: dict, arities: tuple[int, ...]) -> dict:
    """Five-number summaries per arity, excluding undefined entries."""
    out: dict[str, dict] = {}
    for arity in sorted(set(arities)):
        idx = [e for e, est in enumerate(estimands) if len(est["cells"]) == arity]
        if not idx:
            continue
        block: dict[str, dict | None] = {}
        for name in ("coverage", "rel_mse", "bias"):
            vals = [metrics[name][e] for e in idx]
            defined = [v for v in vals if v is not None]
            summary = five_number_summary(defined) if defined else None
            if summary is not None:
                summary["n_undefined"] = len(vals) - len(defined)
            block[name] = summary
        out[str(arity)] = block
    return out


def run_experiment(config: ExperimentConfig, population: OrdinalDataset | None = None) -> MetricsReport:
    """Run the full benchmark grid and score it.

    ``population`` can be passed directly to skip ``load_population``
    (useful when the caller already holds it).  With ``parallelism``
    above 1 the (replication, method) jobs fan out over processes; the
    report is bit-identical either way because every job draws from
    substreams keyed only by its grid position.
    """
    if population is None:
        population = load_population(config.population)
    if config.n_sample > population.n_rows:
        raise ValueError(
            f"n_sample {config.n_sample} exceeds population size {population.n_rows}"
        )
    estimand_objs = enumerate_estimands(
        population, config.estimand_arities, config.n_sample
    )
    if not estimand_objs:
        raise ValueError("no estimands pass the size filter at this sample size")
    estimands = [
        {
            "cells": [
                [population.variables[j].name, int(d)] for j, d in est.cells
            ],
            "truth": float(est.truth),
        }
        for est in estimand_objs
    ]
    H = config.replications
    M = len(config.methods)
    E = len(estimand_objs)

    jobs = [(h, mi) for h in range(H) for mi in range(-1, M)]
    init_args = (
        population,
        config.scenario,
        estimand_objs,
        config.methods,
        config.n_sample,
        config.n_imputations,
        config.master_seed,
    )
    if config.parallelism == 1:
        _init_worker(*init_args)
        raw = map(_run_job, jobs)
        results = list(raw)
        _CTX.clear()
    else:
        with ProcessPoolExecutor(
            max_workers=config.parallelism,
            initializer=_init_worker,
            initargs=init_args,
        ) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=1))

    base_q = np.empty((H, E))
    base_lo = np.empty((H, E))
    base_hi = np.empty((H, E))
    qbar = [[None] * H for _ in range(M)]
    lo = [[None] * H for _ in range(M)]
    hi = [[None] * H for _ in range(M)]
    errors: list[list[str | None]] = [[None] * H for _ in range(M)]
    for h, mi, payload in results:
        if mi < 0:
            _, q, l_, h_ = payload
            base_q[h], base_lo[h], base_hi[h] = q, l_, h_
        elif payload[0] == "ok":
            _, q, l_, h_ = payload
            qbar[mi][h], lo[mi][h], hi[mi][h] = q, l_, h_
        else:
            errors[mi][h] = payload[1]

    method_keys = [m.key for m in config.methods]
    results_doc: dict[str, list] = {}
    for mi, key in enumerate(method_keys):
        rows = []
        for h in range(H):
            if qbar[mi][h] is None:
                rows.append({"error": errors[mi][h]})
            else:
                rows.append(
                    {
                        "qbar": qbar[mi][h].tolist(),
                        "lo": lo[mi][h].tolist(),
                        "hi": hi[mi][h].tolist(),
                    }
                )
        results_doc[key] = rows

    metrics_doc: dict[str, dict] = {}
    summaries_doc: dict[str, dict] = {}
    for mi, key in enumerate(method_keys):
        m = _compute_metrics(estimands, qbar[mi], lo[mi], hi[mi], base_q)
        metrics_doc[key] = m
        summaries_doc[key] = _summarize(estimands, m, config.estimand_arities)
    base_metrics = _compute_metrics(
        estimands,
        list(base_q),
        list(base_lo),
        list(base_hi),
        base_q,
    )
    metrics_doc[PREMISSING] = base_metrics
    summaries_doc[PREMISSING] = _summarize(
        estimands, base_metrics, config.estimand_arities
    )

    return MetricsReport(
        config=config.identity_dict(),
        variables=[
            {"name": v.name, "cardinality": int(v.cardinality)}
            for v in population.variables
        ],
        estimands=estimands,
        methods=method_keys,
        premissing={
            "q": base_q.tolist(),
            "lo": base_lo.tolist(),
            "hi": base_hi.tolist(),
        },
        results=results_doc,
        metrics=metrics_doc,
        summaries=summaries_doc,
    )


# ---------------------------------------------------------------------------
# report output


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def emit_report(report: MetricsReport, output_dir: str | Path) -> dict[str, Path]:
    """Write report.json plus CSV views into ``output_dir``.

    metrics.csv has one row per (method, estimand); summary.csv the
    five-number rows per (method, arity); marginal_pmf.csv the
    population marginals recovered from the arity-1 estimand truths
    (skipped when arity 1 was not requested).  Returns the paths.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    paths["report"] = out / "report.json"
    report_to_json(report, paths["report"])

    all_keys = report.methods + [PREMISSING]
    paths["metrics"] = out / "metrics.csv"
    with paths["metrics"].open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "method",
                "estimand",
                "arity",
                "truth",
                "coverage",
                "rel_mse",
                "bias",
                "n_used",
            ]
        )
        for key in all_keys:
            m = report.metrics[key]
            for e, est in enumerate(report.estimands):
                writer.writerow(
                    [
                        key,
                        estimand_label(est),
                        len(est["cells"]),
                        repr(float(est["truth"])),
                        _fmt(m["coverage"][e]),
                        _fmt(m["rel_mse"][e]),
                        _fmt(m["bias"][e]),
                        m["n_used"],
                    ]
                )

    paths["summary"] = out / "summary.csv"
    with paths["summary"].open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "arity", "statistic", "coverage", "rel_mse", "bias"])
        for key in all_keys:
            for arity, block in report.summaries[key].items():
                for stat in FIVE_NUMBER_NAMES:
                    writer.writerow(
                        [
                            key,
                            arity,
                            stat,
                            _fmt(None if block["coverage"] is None else block["coverage"][stat]),
                            _fmt(None if block["rel_mse"] is None else block["rel_mse"][stat]),
                            _fmt(None if block["bias"] is None else block["bias"][stat]),
                        ]
                    )

    marginals = [est for est in report.estimands if len(est["cells"]) == 1]
    if marginals:
        paths["marginal_pmf"] = out / "marginal_pmf.csv"
        with paths["marginal_pmf"].open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variable", "level", "probability"])
            for est in marginals:
                name, level = est["cells"][0]
                writer.writerow([name, level, repr(float(est["truth"]))])

    return paths
