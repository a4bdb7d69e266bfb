"""Iterate-update schemes and the per-trial driver loop.

Each iteration performs one stochastic subgradient step followed by one
random feasibility update; the four schemes differ only in how the
sampled projections are combined. The per-iteration feasibility quantity
e (average, max, or polyhedral squared projection distance) is recorded
as a diagnostic alongside the iterates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import as_vector
from .geometry import project as geo_project
from .polyproj import HILDRETH_MAX_ITER, HILDRETH_TOL, hildreth_arrays
from .problems import Problem, SampleBatch, _fisher_yates_from_draws

# Exogenous randomness (gradient draws, constraint swaps) is pre-drawn in
# chunks of this many iterations.
_CHUNK = 1024

BASELINE = "baseline"
AVERAGING = "averaging"
MAX_SET = "max_set"
POLYHEDRAL = "polyhedral_set"
VARIANTS = (BASELINE, AVERAGING, MAX_SET, POLYHEDRAL)


@dataclass(frozen=True)
class Polynomial:
    """alpha0 * max(k,1)^-a (the k=0 step reuses the k=1 value)."""

    alpha0: float
    a: float

    def __post_init__(self):
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")
        if not 0.0 < self.a <= 1.0:
            raise ValueError("exponent must lie in (0, 1]")


@dataclass(frozen=True)
class OffsetInverse:
    """1 / (k + k0)."""

    k0: float

    def __post_init__(self):
        if self.k0 <= 0:
            raise ValueError("k0 must be positive")


@dataclass(frozen=True)
class StronglyConvex:
    """1 / (2 sigma (k+1))."""

    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class Constant:
    alpha: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


StepSchedule = Polynomial | OffsetInverse | StronglyConvex | Constant


def step_size(schedule: StepSchedule, k: int) -> float:
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    if isinstance(schedule, Polynomial):
        return schedule.alpha0 * max(k, 1) ** (-schedule.a)
    if isinstance(schedule, OffsetInverse):
        return 1.0 / (k + schedule.k0)
    if isinstance(schedule, StronglyConvex):
        return 1.0 / (2.0 * schedule.sigma * (k + 1))
    if isinstance(schedule, Constant):
        return schedule.alpha
    raise TypeError(f"not a step schedule: {type(schedule).__name__}")


@dataclass(frozen=True)
class AlgorithmKind:
    """Feasibility-update scheme plus its per-iteration sample size M.

    The baseline scheme projects onto a single sampled set, so M is
    forced to 1 there.
    """

    variant: str
    M: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown algorithm variant: {self.variant!r}")
        if self.variant == BASELINE:
            object.__setattr__(self, "M", 1)
        if self.M < 1:
            raise ValueError("M must be at least 1")


@dataclass
class SolverState:
    k: int
    x: np.ndarray
    constraint_samples_used: int = 0
    ergodic_projection_sum: np.ndarray | None = None
    ergodic_count: int = 0
    feasibility_gap_e: float = 0.0


@dataclass(frozen=True)
class TraceRecord:
    k: int
    samples_used: int
    x: np.ndarray
    feasibility_gap_e: float
    ergodic_mean: np.ndarray | None = None


@dataclass(frozen=True)
class TrialTrace:
    records: tuple[TraceRecord, ...]

    def __post_init__(self):
        ks = [r.k for r in self.records]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("trace records must have strictly increasing k")


def optimality_update(x: np.ndarray, alpha: float, g: np.ndarray) -> np.ndarray:
    """One subgradient step y = x - alpha*g."""
    if alpha <= 0:
        raise ValueError("stepsize must be positive")
    y = x - alpha * g
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite optimality update")
    return y


def feasibility_update(
    kind: AlgorithmKind, y: np.ndarray, batch: SampleBatch, dsq: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Combine the sampled projections into the next iterate.

    Returns (x_next, e) where e is the scheme's feasibility-improvement
    quantity: the mean, max, or polyhedral squared projection distance.
    x_next equals y whenever y lies in every sampled set. `dsq` may carry
    precomputed squared projection distances.
    """
    proj = batch.projections
    if dsq is None:
        diffs = proj - y
        dsq = np.einsum("ij,ij->i", diffs, diffs)
    if kind.variant == BASELINE:
        return proj[0], float(dsq[0])
    if kind.variant == AVERAGING:
        return proj.mean(axis=0), float(dsq.mean())
    if kind.variant == MAX_SET:
        i = int(np.argmax(dsq))  # ties: lowest sample position
        return proj[i], float(dsq[i])
    if kind.variant == POLYHEDRAL:
        norm_y = float(np.linalg.norm(y))
        zero_tol_sq = (1e-12 * (1.0 + norm_y)) ** 2
        keep = dsq > zero_tol_sq
        count = int(np.count_nonzero(keep))
        if count == 0:
            return np.array(y, dtype=float), 0.0
        if count == 1:
            # A one-row cutting polyhedron's projection is the sampled
            # projection point itself.
            i = int(np.argmax(dsq))
            return proj[i], float(dsq[i])
        kept = proj[keep]
        a = y - kept
        b = np.einsum("ij,ij->i", a, kept)
        sol = hildreth_arrays(y, a, b, dsq[keep], HILDRETH_TOL, HILDRETH_MAX_ITER)
        d = sol.point - y
        return sol.point, float(d @ d)
    raise ValueError(f"unknown algorithm variant: {kind.variant!r}")


def run(
    problem: Problem,
    kind: AlgorithmKind,
    schedule: StepSchedule,
    iterations: int,
    rng: np.random.Generator,
    stride: int = 1,
    x0: np.ndarray | None = None,
    ergodic_projector=None,
) -> TrialTrace:
    """Drive one trial for the given scheme and stepsize schedule.

    Per iteration: one subgradient draw, one optimality update, one
    constraint batch of size M, one feasibility update; the sample counter
    grows by M+1. Iterate snapshots are stored every `stride` iterations
    and at the final iteration. When `ergodic_projector` is given (a
    callable mapping a point to its projection onto the full feasible
    set), a running sum of projected iterates is maintained so records
    carry the ergodic projected average.
    """
    if iterations < 0:
        raise ValueError("iteration count must be nonnegative")
    if stride < 1:
        raise ValueError("stride must be positive")
    family = problem.family
    if kind.M > family.m:
        raise ValueError(f"M={kind.M} exceeds family size m={family.m}")
    x = as_vector(problem.planted_point if x0 is None else x0, problem.dimension).copy()
    state = SolverState(k=0, x=x)
    if ergodic_projector is not None:
        state.ergodic_projection_sum = np.array(ergodic_projector(x), dtype=float)
        state.ergodic_count = 1

    records = [_record(state)]
    sampler = problem.subgradient_sampler
    batched = hasattr(sampler, "prepare") and hasattr(sampler, "evaluate")
    stacked = family.stacked_halfspaces() if family.halfspace_only else None
    M, m = kind.M, family.m
    lows = np.arange(M)
    k = 0
    while k < iterations:
        count = min(_CHUNK, iterations - k)
        if batched:
            grad_state = sampler.prepare(count, rng)
        # Exogenous constraint-swap draws for the whole chunk at once.
        swap_draws = rng.integers(lows, m, size=(count, M))
        for i in range(count):
            g = sampler.evaluate(grad_state, i, state.x) if batched else sampler(state.x, rng)
            y = optimality_update(state.x, step_size(schedule, k), g)
            idx = _fisher_yates_from_draws(swap_draws[i])
            if stacked is not None:
                a_f, b_f, nsq_f = stacked
                rows = a_f[idx]
                t = rows @ y - b_f[idx]
                np.maximum(t, 0.0, out=t)
                scaled = t / nsq_f[idx]
                proj = y - scaled[:, None] * rows
                dsq = t * scaled
            else:
                proj = np.array([geo_project(family.sets[j], y) for j in idx])
                dsq = None
            batch = SampleBatch(idx, proj)
            state.x, state.feasibility_gap_e = feasibility_update(kind, y, batch, dsq)
            k += 1
            state.k = k
            state.constraint_samples_used += M + 1
            if ergodic_projector is not None:
                state.ergodic_projection_sum += ergodic_projector(state.x)
                state.ergodic_count += 1
            if k % stride == 0 or k == iterations:
                if not np.all(np.isfinite(state.x)):
                    raise ValueError(f"non-finite iterate at k={k}")
                records.append(_record(state))
    return TrialTrace(tuple(records))


def _record(state: SolverState) -> TraceRecord:
    erg = None
    if state.ergodic_projection_sum is not None:
        erg = state.ergodic_projection_sum / state.ergodic_count
    return TraceRecord(
        k=state.k,
        samples_used=state.constraint_samples_used,
        x=state.x.copy(),
        feasibility_gap_e=state.feasibility_gap_e,
        ergodic_mean=erg,
    )
