"""Experiment configuration, multi-trial execution, and CSV output.

Trials are independent work items: trial t draws from the stream
(base_seed, t) while scenario data comes from a reserved stream index, so
aggregate results are bit-identical for any worker count. Reduction
always happens in trial-index order.
"""

from __future__ import annotations

import json
import multiprocessing
import os
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import numpy as np

from .metrics import (
    MetricRecord,
    ProjectionBudgetExceeded,
    optimality_error,
    reference_projection,
    violation_fraction,
)
from .polyproj import QpNonconvergence
from .problems import SCENARIO_STREAM, Problem, build_scenario, rng_stream
from .solver import (
    AVERAGING,
    BASELINE,
    MAX_SET,
    POLYHEDRAL,
    VARIANTS,
    AlgorithmKind,
    Constant,
    OffsetInverse,
    Polynomial,
    StepSchedule,
    StronglyConvex,
    run,
)

CSV_HEADER = "k,samples_used,mean_opt_err,mean_feas_err,violation_pct"

# Dykstra tolerances: metric-grade for per-record errors, slightly looser
# for the per-iteration ergodic projections.
METRIC_PROJECTION_TOL = 1e-10
ERGODIC_PROJECTION_TOL = 1e-9


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    scenario_kind: str
    scenario_params: dict
    algorithm: str
    M: int
    schedule: StepSchedule
    iterations: int
    trials: int
    base_seed: int
    metric_stride: int
    x0_policy: str | tuple[float, ...]
    output_path: str | None = None
    resample_instance_per_trial: bool = False
    track_ergodic: bool = False
    workers: int | None = None


_SCENARIO_KEYS = {
    "sphere": {"m": int, "radius": (int, float)},
    "two_sphere": {"m": int},
    "svm": {"d": int, "m": int, "margin": (int, float), "separation": (int, float)},
}

_SCHEDULE_BUILDERS = {
    "polynomial": (Polynomial, {"alpha0": (int, float), "a": (int, float)}),
    "offset_inverse": (OffsetInverse, {"k0": (int, float)}),
    "strongly_convex": (StronglyConvex, {"sigma": (int, float)}),
    "constant": (Constant, {"alpha": (int, float)}),
}


def _require(doc: dict, key: str, types, context: str):
    if key not in doc:
        raise ConfigError(f"missing required field {context}{key!r}")
    val = doc[key]
    if types is not None and not isinstance(val, types):
        raise ConfigError(f"field {context}{key!r} has wrong type {type(val).__name__}")
    if isinstance(val, bool) and types in (int, (int, float)):
        raise ConfigError(f"field {context}{key!r} must be numeric, got bool")
    return val


def _reject_unknown(doc: dict, allowed: set[str], context: str):
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown field {context}{sorted(unknown)[0]!r}")


def parse_scenario(doc) -> tuple[str, dict]:
    if not isinstance(doc, dict):
        raise ConfigError("field 'scenario' must be an object")
    kind = _require(doc, "kind", str, "scenario.")
    if kind not in _SCENARIO_KEYS:
        raise ConfigError(f"scenario.kind must be one of {sorted(_SCENARIO_KEYS)}, got {kind!r}")
    spec = _SCENARIO_KEYS[kind]
    _reject_unknown(doc, set(spec) | {"kind"}, "scenario.")
    params = {}
    for key, types in spec.items():
        if key in doc:
            val = doc[key]
            if not isinstance(val, types) or isinstance(val, bool):
                raise ConfigError(f"field scenario.{key!r} has wrong type")
            params[key] = val
    return kind, params


def parse_schedule(doc) -> StepSchedule:
    if not isinstance(doc, dict):
        raise ConfigError("field 'schedule' must be an object")
    kind = _require(doc, "kind", str, "schedule.")
    if kind not in _SCHEDULE_BUILDERS:
        raise ConfigError(
            f"schedule.kind must be one of {sorted(_SCHEDULE_BUILDERS)}, got {kind!r}"
        )
    cls, fields = _SCHEDULE_BUILDERS[kind]
    _reject_unknown(doc, set(fields) | {"kind"}, "schedule.")
    kwargs = {}
    for key, types in fields.items():
        val = _require(doc, key, types, "schedule.")
        kwargs[key] = float(val)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid schedule: {exc}") from exc


_RUN_REQUIRED = {"scenario", "algorithm", "M", "schedule", "iterations", "trials", "base_seed", "metric_stride"}
_RUN_OPTIONAL = {"x0", "output_path", "resample_instance_per_trial", "track_ergodic", "workers"}


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(doc, _RUN_REQUIRED | _RUN_OPTIONAL, "")
    kind, params = parse_scenario(_require(doc, "scenario", dict, ""))
    algorithm = _require(doc, "algorithm", str, "")
    if algorithm not in VARIANTS:
        raise ConfigError(f"algorithm must be one of {VARIANTS}, got {algorithm!r}")
    m_samples = _require(doc, "M", int, "")
    schedule = parse_schedule(doc["schedule"])
    iterations = _require(doc, "iterations", int, "")
    trials = _require(doc, "trials", int, "")
    base_seed = _require(doc, "base_seed", int, "")
    stride = _require(doc, "metric_stride", int, "")
    if iterations < 1:
        raise ConfigError("field 'iterations' must be >= 1")
    if trials < 1:
        raise ConfigError("field 'trials' must be >= 1")
    if stride < 1:
        raise ConfigError("field 'metric_stride' must be >= 1")
    if base_seed < 0:
        raise ConfigError("field 'base_seed' must be nonnegative")
    if m_samples < 1:
        raise ConfigError("field 'M' must be >= 1")
    if algorithm == BASELINE and m_samples != 1:
        raise ConfigError("baseline algorithm requires M == 1")

    x0 = doc.get("x0", "planted" if kind in ("sphere", "two_sphere") else "zero")
    if isinstance(x0, list):
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x0):
            raise ConfigError("field 'x0' vector entries must be numeric")
        x0 = tuple(float(v) for v in x0)
    elif x0 not in ("zero", "planted"):
        raise ConfigError("field 'x0' must be 'zero', 'planted', or a vector")

    output_path = doc.get("output_path")
    if output_path is not None and not isinstance(output_path, str):
        raise ConfigError("field 'output_path' must be a string")
    workers = doc.get("workers")
    if workers is not None and (not isinstance(workers, int) or isinstance(workers, bool) or workers < 1):
        raise ConfigError("field 'workers' must be a positive integer")
    for flag in ("resample_instance_per_trial", "track_ergodic"):
        if flag in doc and not isinstance(doc[flag], bool):
            raise ConfigError(f"field {flag!r} must be a boolean")

    return ExperimentConfig(
        scenario_kind=kind,
        scenario_params=params,
        algorithm=algorithm,
        M=m_samples,
        schedule=schedule,
        iterations=iterations,
        trials=trials,
        base_seed=base_seed,
        metric_stride=stride,
        x0_policy=x0,
        output_path=output_path,
        resample_instance_per_trial=bool(doc.get("resample_instance_per_trial", False)),
        track_ergodic=bool(doc.get("track_ergodic", False)),
        workers=workers,
    )


def config_to_dict(config: ExperimentConfig) -> dict:
    """Fully resolved config document; parsing it back reproduces the run."""
    sched = config.schedule
    if isinstance(sched, Polynomial):
        sched_doc = {"kind": "polynomial", "alpha0": sched.alpha0, "a": sched.a}
    elif isinstance(sched, OffsetInverse):
        sched_doc = {"kind": "offset_inverse", "k0": sched.k0}
    elif isinstance(sched, StronglyConvex):
        sched_doc = {"kind": "strongly_convex", "sigma": sched.sigma}
    else:
        sched_doc = {"kind": "constant", "alpha": sched.alpha}
    x0 = list(config.x0_policy) if isinstance(config.x0_policy, tuple) else config.x0_policy
    return {
        "scenario": {"kind": config.scenario_kind, **config.scenario_params},
        "algorithm": config.algorithm,
        "M": config.M,
        "schedule": sched_doc,
        "iterations": config.iterations,
        "trials": config.trials,
        "base_seed": config.base_seed,
        "metric_stride": config.metric_stride,
        "x0": x0,
        "output_path": config.output_path,
        "resample_instance_per_trial": config.resample_instance_per_trial,
        "track_ergodic": config.track_ergodic,
        "workers": config.workers,
    }


@dataclass(frozen=True)
class _TrialContext:
    config: ExperimentConfig
    problem: Problem
    x0: np.ndarray
    x_star: np.ndarray


@dataclass
class AggregateResult:
    k: np.ndarray
    samples_used: np.ndarray
    mean_optimality_error: np.ndarray
    mean_feasibility_error: np.ndarray
    mean_violation_fraction: np.ndarray
    mean_ergodic_gap: np.ndarray | None
    trial_count: int
    failed_trials: list[tuple[int, str]]
    trial_optimality_error: np.ndarray
    trial_feasibility_error: np.ndarray

    def mean_records(self) -> list[MetricRecord]:
        out = []
        for i in range(len(self.k)):
            out.append(
                MetricRecord(
                    k=int(self.k[i]),
                    samples_used=int(self.samples_used[i]),
                    optimality_error=float(self.mean_optimality_error[i]),
                    feasibility_error=float(self.mean_feasibility_error[i]),
                    violation_fraction=float(self.mean_violation_fraction[i]),
                    ergodic_objective_gap=(
                        float(self.mean_ergodic_gap[i]) if self.mean_ergodic_gap is not None else None
                    ),
                )
            )
        return out


def _resolve_x0(policy, problem: Problem) -> np.ndarray:
    if policy == "zero":
        return np.zeros(problem.dimension)
    if policy == "planted":
        return np.array(problem.planted_point, dtype=float)
    return np.array(policy, dtype=float)


def _build_problem(config: ExperimentConfig, stream_index: int = SCENARIO_STREAM) -> Problem:
    return build_scenario(
        config.scenario_kind, config.scenario_params, config.base_seed, stream_index=stream_index
    )


def _run_single_trial(ctx: _TrialContext, trial: int):
    config = ctx.config
    problem, x0, x_star = ctx.problem, ctx.x0, ctx.x_star
    if config.resample_instance_per_trial:
        problem = _build_problem(config, stream_index=SCENARIO_STREAM + 1 + trial)
        x0 = _resolve_x0(config.x0_policy, problem)
        x_star = problem.reference_optimum
    rng = rng_stream(config.base_seed, trial)
    projector = None
    if config.track_ergodic:
        projector = partial(reference_projection, problem.family, tol=ERGODIC_PROJECTION_TOL)
    try:
        trace = run(
            problem,
            AlgorithmKind(config.algorithm, config.M),
            config.schedule,
            config.iterations,
            rng,
            stride=config.metric_stride,
            x0=x0,
            ergodic_projector=projector,
        )
        ks, samples, opt, feas, viol, erg = [], [], [], [], [], []
        for rec in trace.records:
            ks.append(rec.k)
            samples.append(rec.samples_used)
            opt.append(optimality_error(rec.x, x_star))
            proj = reference_projection(problem.family, rec.x, tol=METRIC_PROJECTION_TOL)
            d = rec.x - proj
            feas.append(float(d @ d))
            viol.append(violation_fraction(problem.family, rec.x))
            if rec.ergodic_mean is not None:
                erg.append(problem.objective_gap(rec.ergodic_mean))
        return {
            "k": np.array(ks, dtype=np.int64),
            "samples_used": np.array(samples, dtype=np.int64),
            "opt": np.array(opt),
            "feas": np.array(feas),
            "viol": np.array(viol),
            "erg": np.array(erg) if erg else None,
        }
    except (QpNonconvergence, ProjectionBudgetExceeded) as exc:
        return ("failed", f"{type(exc).__name__}: {exc}")


_POOL_CTX: _TrialContext | None = None


def _init_pool(ctx: _TrialContext):
    global _POOL_CTX
    _POOL_CTX = ctx


def _pool_task(trial: int):
    return trial, _run_single_trial(_POOL_CTX, trial)


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def run_experiment(config: ExperimentConfig) -> AggregateResult:
    """Execute all trials and reduce them in trial-index order.

    The aggregate is bit-identical for any worker count: per-trial results
    depend only on (base_seed, trial index) and summation order is fixed.
    More than 1% failed trials aborts the experiment.
    """
    problem = _build_problem(config)
    if config.M > problem.family.m:
        raise ConfigError(f"M={config.M} exceeds the scenario's m={problem.family.m}")
    ctx = _TrialContext(
        config=config,
        problem=problem,
        x0=_resolve_x0(config.x0_policy, problem),
        x_star=problem.reference_optimum,
    )
    workers = config.workers or default_workers()
    results: dict[int, object] = {}
    if workers == 1 or config.trials == 1:
        for t in range(config.trials):
            results[t] = _run_single_trial(ctx, t)
    else:
        mp = multiprocessing.get_context("fork")
        chunk = max(1, config.trials // (workers * 4))
        with mp.Pool(workers, initializer=_init_pool, initargs=(ctx,)) as pool:
            for t, payload in pool.imap_unordered(_pool_task, range(config.trials), chunk):
                results[t] = payload

    failed: list[tuple[int, str]] = []
    ok: list[tuple[int, dict]] = []
    for t in range(config.trials):
        payload = results[t]
        if isinstance(payload, tuple) and payload and payload[0] == "failed":
            failed.append((t, payload[1]))
        else:
            ok.append((t, payload))
    if len(failed) > 0.01 * config.trials:
        raise ExperimentError(
            f"{len(failed)} of {config.trials} trials failed; first: {failed[0]}"
        )
    if not ok:
        raise ExperimentError("no successful trials")

    first = ok[0][1]
    n_records = len(first["k"])
    sum_opt = np.zeros(n_records)
    sum_feas = np.zeros(n_records)
    sum_viol = np.zeros(n_records)
    sum_erg = np.zeros(n_records) if first["erg"] is not None else None
    trial_opt = np.empty((len(ok), n_records))
    trial_feas = np.empty((len(ok), n_records))
    for row, (t, payload) in enumerate(ok):
        if not np.array_equal(payload["k"], first["k"]):
            raise ExperimentError("trials disagree on the record grid")
        sum_opt += payload["opt"]
        sum_feas += payload["feas"]
        sum_viol += payload["viol"]
        if sum_erg is not None:
            sum_erg += payload["erg"]
        trial_opt[row] = payload["opt"]
        trial_feas[row] = payload["feas"]
    count = len(ok)
    return AggregateResult(
        k=first["k"].copy(),
        samples_used=first["samples_used"].copy(),
        mean_optimality_error=sum_opt / count,
        mean_feasibility_error=sum_feas / count,
        mean_violation_fraction=sum_viol / count,
        mean_ergodic_gap=(sum_erg / count) if sum_erg is not None else None,
        trial_count=count,
        failed_trials=failed,
        trial_optimality_error=trial_opt,
        trial_feasibility_error=trial_feas,
    )


def write_csv(result: AggregateResult, path: str | Path) -> None:
    """One row per stride point, floats at 17 significant digits."""
    path = Path(path)
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for i in range(len(result.k)):
                fh.write(
                    f"{int(result.k[i])},{int(result.samples_used[i])},"
                    f"{result.mean_optimality_error[i]:.17g},"
                    f"{result.mean_feasibility_error[i]:.17g},"
                    f"{100.0 * result.mean_violation_fraction[i]:.17g}\n"
                )
    except OSError as exc:
        raise ExperimentError(f"cannot write CSV to {path}: {exc}") from exc


def echo_path_for(output_path: str | Path) -> Path:
    p = Path(output_path)
    return p.with_suffix(".config.json") if p.suffix else p.with_name(p.name + ".config.json")


def write_config_echo(config: ExperimentConfig, output_path: str | Path) -> Path:
    target = echo_path_for(output_path)
    try:
        with open(target, "w", encoding="ascii", newline="\n") as fh:
            json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ExperimentError(f"cannot write config echo to {target}: {exc}") from exc
    return target
