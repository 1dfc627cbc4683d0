"""Command-line interface.

Subcommands mirror the pipeline stages: ``inject`` masks a complete
dataset, ``impute`` runs one method on an incomplete one, ``pool``
combines per-imputation estimates, ``bench`` runs a configured
repeated-sampling experiment, and ``report`` re-renders the CSV views
from a stored report.json.

Exit codes: 0 on success, 1 for configuration problems (bad flags,
malformed config/scenario), 2 for data problems (missing or ill-formed
input files), 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import (
    METHOD_REGISTRY,
    MethodSpec,
    build_imputer,
    config_from_json,
    emit_report,
    load_population,
    report_from_json,
    run_experiment,
)
from .data import OrdinalDataset, load_csv, load_dictionary, save_csv
from .inference import pool
from .missingness import inject, scenario_from_json

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _load_incomplete(data_path: str, dictionary_path: str):
    try:
        variables = load_dictionary(dictionary_path)
        return load_csv(data_path, variables)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc


def _cmd_inject(args) -> int:
    try:
        scenario = scenario_from_json(args.scenario)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    incomplete = _load_incomplete(args.data, args.dictionary)
    if incomplete.mask.any():
        raise DataError(f"{args.data}: already has missing cells")
    complete = OrdinalDataset(incomplete.variables, incomplete.cells)
    masked = inject(complete, scenario, args.seed)
    save_csv(masked, args.out)
    rates = {
        v.name: float(f)
        for v, f in zip(masked.variables, masked.missing_fraction())
        if f > 0
    }
    print(f"wrote {args.out} (missing fractions: {rates})")
    return EXIT_OK


def _cmd_impute(args) -> int:
    try:
        params = json.loads(args.params) if args.params else {}
        if not isinstance(params, dict):
            raise ValueError("--params must be a JSON object")
        spec = MethodSpec(name=args.method, params=params)
        if args.n_imputations < 2:
            raise ValueError("--n-imputations must be at least 2")
        imputer = build_imputer(spec, args.n_imputations)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    incomplete = _load_incomplete(args.data, args.dictionary)
    result = imputer.impute(incomplete, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for l, completed in enumerate(result.completed, start=1):
        save_csv(completed, out_dir / f"completed_{l:02d}.csv")
    diag_path = out_dir / "diagnostics.json"
    diag_path.write_text(
        json.dumps(_json_safe(dict(result.diagnostics)), indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {result.n_imputations} completed datasets to {out_dir}")
    return EXIT_OK


def _cmd_pool(args) -> int:
    groups: dict[str, tuple[list[float], list[float]]] = {}
    try:
        with open(args.estimates, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"estimand", "q", "u"} <= set(
                reader.fieldnames
            ):
                raise DataError(
                    f"{args.estimates}: need columns estimand,q,u, "
                    f"got {reader.fieldnames}"
                )
            for row in reader:
                qs, us = groups.setdefault(row["estimand"], ([], []))
                qs.append(float(row["q"]))
                us.append(float(row["u"]))
    except OSError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise DataError(f"{args.estimates}: {exc}") from exc
    if not groups:
        raise DataError(f"{args.estimates}: no estimate rows")
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "estimand",
                "qbar",
                "between",
                "within",
                "total_variance",
                "df",
                "ci_lower",
                "ci_upper",
                "n_imputations",
            ]
        )
        for name, (qs, us) in groups.items():
            try:
                p = pool(qs, us, level=args.level)
            except ValueError as exc:
                raise DataError(f"estimand {name!r}: {exc}") from exc
            writer.writerow(
                [
                    name,
                    repr(p.qbar),
                    repr(p.between),
                    repr(p.within),
                    repr(p.total_variance),
                    repr(p.df),
                    repr(p.ci_lower),
                    repr(p.ci_upper),
                    p.n_imputations,
                ]
            )
    print(f"wrote {args.out} ({len(groups)} estimands)")
    return EXIT_OK


def _cmd_bench(args) -> int:
    try:
        profile = "paper" if args.paper_scale else None
        config = config_from_json(args.config, profile=profile)
        parallelism = config.parallelism
        env = os.environ.get("ORDIMPUTE_THREADS")
        if env is not None:
            parallelism = int(env)
        if args.parallelism is not None:
            parallelism = args.parallelism
        output_dir = args.output_dir or config.output_dir
        if output_dir is None:
            raise ValueError("no output directory: set --output-dir or config output_dir")
        if parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        config = replace(config, parallelism=parallelism)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    try:
        population = load_population(
            config.population, base_dir=Path(args.config).parent
        )
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    report = run_experiment(config, population)
    paths = emit_report(report, output_dir)
    print(f"wrote {paths['report']}")
    print(f"wrote {paths['summary']}")
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        report = report_from_json(args.json)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    paths = emit_report(report, args.output_dir)
    print(f"wrote {paths['summary']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ordimpute",
        description="Multiple imputation and benchmarking for ordinal data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject", help="mask a complete dataset with a scenario")
    p.add_argument("--data", required=True, help="complete dataset CSV")
    p.add_argument("--dictionary", required=True, help="name,cardinality CSV")
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("impute", help="run one imputation method")
    p.add_argument("--data", required=True, help="incomplete dataset CSV")
    p.add_argument("--dictionary", required=True)
    p.add_argument(
        "--method", required=True, choices=sorted(METHOD_REGISTRY)
    )
    p.add_argument("--params", help="JSON object of constructor overrides")
    p.add_argument("--n-imputations", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("pool", help="pool per-imputation estimates")
    p.add_argument(
        "--estimates", required=True, help="CSV with columns estimand,q,u"
    )
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pool)

    p = sub.add_parser("bench", help="run a repeated-sampling experiment")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument(
        "--paper-scale",
        action="store_true",
        help="apply the full-scale profile instead of the config's own",
    )
    p.add_argument(
        "--parallelism",
        type=int,
        help="worker processes (overrides ORDIMPUTE_THREADS and config)",
    )
    p.add_argument("--output-dir", help="overrides config output_dir")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("report", help="re-render CSVs from a report.json")
    p.add_argument("--json", required=True, help="stored report.json")
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; fold the
        # latter into the config-error code.
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort runtime mapping
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
