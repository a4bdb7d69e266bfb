"""Command-line entry point.

Subcommands: `run` executes one experiment config and writes its CSV plus
a resolved-config echo; `sweep` crosses algorithms and sample sizes over a
shared base config; `estimate-eta` prints the empirical linear-regularity
constant of a scenario; `check-qp` runs the randomized QP equivalence
suite; `paper-suite` replays the acceptance experiment battery.

Exit codes: 0 success, 1 usage or config error, 2 runtime or numerical
failure, 3 acceptance-suite failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import acceptance
from .harness import (
    ConfigError,
    ExperimentError,
    echo_path_for,
    parse_config,
    run_experiment,
    write_config_echo,
    write_csv,
)
from .metrics import ProjectionBudgetExceeded, estimate_eta
from .polyproj import QpNonconvergence
from .problems import build_scenario, rng_stream

_ETA_STREAM = 2**62  # probe stream, disjoint from trial and scenario streams


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc


def _cmd_run(args) -> int:
    doc = _load_json(args.config)
    if args.workers is not None:
        doc["workers"] = args.workers
    if args.output is not None:
        doc["output_path"] = args.output
    config = parse_config(doc)
    if config.output_path is None:
        raise ConfigError("field 'output_path' is required for the run command")
    result = run_experiment(config)
    write_csv(result, config.output_path)
    write_config_echo(config, config.output_path)
    print(
        f"wrote {config.output_path} ({len(result.k)} rows, {result.trial_count} trials, "
        f"{len(result.failed_trials)} failed); config echo at {echo_path_for(config.output_path)}"
    )
    return 0


def _cmd_sweep(args) -> int:
    doc = _load_json(args.config)
    if args.workers is not None:
        doc["workers"] = args.workers
    algorithms = doc.pop("algorithms", None)
    m_values = doc.pop("M_values", None)
    if not isinstance(algorithms, list) or not algorithms:
        raise ConfigError("sweep config needs a nonempty 'algorithms' list")
    if not isinstance(m_values, list) or not m_values:
        raise ConfigError("sweep config needs a nonempty 'M_values' list")
    out_dir = Path(doc.pop("output_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    doc.pop("output_path", None)
    doc.pop("algorithm", None)
    doc.pop("M", None)
    wrote = 0
    for alg in algorithms:
        for m_samples in m_values:
            combo = dict(doc)
            combo["algorithm"] = alg
            combo["M"] = 1 if alg == "baseline" else m_samples
            config = parse_config(combo)
            path = out_dir / f"{config.scenario_kind}_{alg}_M{config.M}.csv"
            config = parse_config({**combo, "output_path": str(path)})
            result = run_experiment(config)
            write_csv(result, path)
            write_config_echo(config, path)
            print(f"wrote {path} ({result.trial_count} trials)")
            wrote += 1
    print(f"sweep complete: {wrote} result files in {out_dir}")
    return 0


def _cmd_estimate_eta(args) -> int:
    doc = _load_json(args.config)
    config = parse_config(doc)
    problem = build_scenario(config.scenario_kind, config.scenario_params, config.base_seed)
    rng = rng_stream(config.base_seed, _ETA_STREAM)
    eta = estimate_eta(problem.family, args.probes, rng, scale=problem.scale)
    print(f"eta_hat = {eta:.6g}  (scenario {config.scenario_kind}, m={problem.family.m}, "
          f"{args.probes} probes)")
    return 0


def _cmd_check_qp(args) -> int:
    result = acceptance.criterion_1()
    print(result.detail)
    if not result.passed:
        print("check-qp: FAIL")
        return 2
    print("check-qp: PASS")
    return 0


def _cmd_paper_suite(args) -> int:
    only = set(args.only) if args.only else None
    results = acceptance.run_all(only=only, output_dir=args.output_dir)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"criterion {r.criterion:>2}: {status} — {r.detail}")
    if failed:
        print(f"paper-suite: {len(failed)} of {len(results)} criteria failed")
        return 3
    print(f"paper-suite: all {len(results)} criteria passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="randproj",
        description="Stochastic gradient methods with random multi-constraint projections",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config and write CSV")
    p_run.add_argument("config")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--output", default=None, help="override output_path")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="cross product over algorithms x M values")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--workers", type=int, default=None)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_eta = sub.add_parser("estimate-eta", help="print the empirical linear-regularity constant")
    p_eta.add_argument("config")
    p_eta.add_argument("--probes", type=int, default=1000)
    p_eta.set_defaults(func=_cmd_estimate_eta)

    p_qp = sub.add_parser("check-qp", help="randomized Hildreth-vs-oracle equivalence suite")
    p_qp.set_defaults(func=_cmd_check_qp)

    p_suite = sub.add_parser("paper-suite", help="run the acceptance experiment battery")
    p_suite.add_argument("--only", type=int, nargs="*", default=None, help="criterion ids")
    p_suite.add_argument("--output-dir", default=None, help="directory for experiment CSVs")
    p_suite.set_defaults(func=_cmd_paper_suite)

    return parser


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ExperimentError, QpNonconvergence, ProjectionBudgetExceeded, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli())
