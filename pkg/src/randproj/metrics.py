"""Ground-truth geometry and the error metrics of the experiment study.

The reference projection onto the full intersection uses Dykstra's
alternating scheme with correction terms, which converges to the exact
Euclidean projection (plain alternating projections would only reach
feasibility). Everything else here is measurement: squared errors,
violation counts, the ergodic objective gap, the empirical linear
regularity constant, and slope fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Ball, ConstraintFamily, Halfspace, as_vector, distance, project
from .polyproj import _enumerate_active_sets

DYKSTRA_VISIT_BUDGET = 1_000_000
VIOLATION_TOL = 1e-9


class ProjectionBudgetExceeded(RuntimeError):
    pass


def _max_violation(family: ConstraintFamily, x: np.ndarray) -> float:
    worst = 0.0
    if family.halfspace_only:
        a, b, nsq = family.stacked_halfspaces()
        t = a @ x - b
        worst = float(np.max(t / np.sqrt(nsq)))
        return max(0.0, worst)
    for s in family.sets:
        if isinstance(s, Halfspace):
            worst = max(worst, (float(s.normal @ x) - s.offset) / np.sqrt(s.norm_sq))
        else:
            worst = max(worst, float(np.linalg.norm(x - s.center)) - s.radius)
    return max(0.0, worst)


def _single_set_shortcut(family: ConstraintFamily, xv: np.ndarray, tol: float) -> np.ndarray | None:
    """Projection onto the worst-violated set, if that already lands in X.

    When the single-set projection is feasible for the whole family it is
    the exact intersection projection (it attains the one-set distance
    lower bound), which covers the common case of one active constraint.
    """
    if family.halfspace_only:
        a, b, nsq = family.stacked_halfspaces()
        slack = (a @ xv - b) / np.sqrt(nsq)
        worst_i = int(np.argmax(slack))
        if slack[worst_i] <= tol:
            return xv
    else:
        dists = [distance(s, xv) for s in family.sets]
        worst_i = int(np.argmax(dists))
        if dists[worst_i] <= tol:
            return xv
    p = project(family.sets[worst_i], xv)
    if _max_violation(family, p) <= tol:
        return p
    return None


def _polish_candidate(
    xv: np.ndarray, a: np.ndarray, b: np.ndarray, nsq: np.ndarray, mu: np.ndarray, tol: float
) -> np.ndarray | None:
    """Exact finish of a halfspace projection from Dykstra's multipliers.

    The rows with positive correction weight are the putative active set;
    a small KKT enumeration over them yields the exact projection, which
    is accepted only if feasible for every row. Needed because plain
    cyclic projections converge arbitrarily slowly where nearly parallel
    rows meet (fine polygon corners, lens tips).
    """
    cand = np.flatnonzero(mu > 1e-14)
    if cand.size == 0:
        return None
    if cand.size > 12:
        cand = cand[np.argsort(mu[cand])[-12:]]
    found = _enumerate_active_sets(xv, a[cand], b[cand])
    if found is None:
        return None
    p = found[0]
    viol = np.max((a @ p - b) / np.sqrt(nsq))
    if viol > tol:
        return None
    return p


def reference_projection(
    family: ConstraintFamily,
    x,
    tol: float = 1e-10,
    visit_budget: int = DYKSTRA_VISIT_BUDGET,
) -> np.ndarray:
    """Euclidean projection onto the intersection of the family's sets.

    Dykstra's algorithm, cycling over all sets with per-set corrections,
    until the per-cycle displacement and the worst violation both fall
    below tol. For all-halfspace families each cycle additionally attempts
    an exact active-set polish, which terminates the otherwise slowly
    converging near-parallel-row cases. Raises ProjectionBudgetExceeded if
    the visit budget runs out first.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    xv = as_vector(x, family.dimension).copy()
    m = family.m
    quick = _single_set_shortcut(family, xv, tol)
    if quick is not None:
        return quick
    if family.halfspace_only:
        a, b, nsq = family.stacked_halfspaces()
        mu = np.zeros(m)  # corrections are mu_i * a_i for halfspaces
        visits = 0
        while visits < visit_budget:
            prev = xv.copy()
            for i in range(m):
                t = float(a[i] @ xv) + mu[i] * nsq[i] - b[i]
                new = t / nsq[i] if t > 0.0 else 0.0
                if new != mu[i]:
                    xv += (mu[i] - new) * a[i]
                    mu[i] = new
            visits += m
            polished = _polish_candidate(as_vector(x, family.dimension), a, b, nsq, mu, tol)
            if polished is not None:
                return polished
            if float(np.linalg.norm(xv - prev)) <= tol and _max_violation(family, xv) <= tol:
                return xv
        raise ProjectionBudgetExceeded(
            f"Dykstra exceeded {visit_budget} set visits (tol {tol:g})"
        )
    corrections = [np.zeros(family.dimension) for _ in range(m)]
    visits = 0
    while visits < visit_budget:
        prev = xv.copy()
        for i, s in enumerate(family.sets):
            u = xv + corrections[i]
            p = project(s, u)
            corrections[i] = u - p
            xv = p
        visits += m
        if float(np.linalg.norm(xv - prev)) <= tol and _max_violation(family, xv) <= tol:
            return xv
    raise ProjectionBudgetExceeded(f"Dykstra exceeded {visit_budget} set visits (tol {tol:g})")


def feasibility_error(family: ConstraintFamily, x, tol: float = 1e-10) -> float:
    """Squared distance from x to the full intersection."""
    p = reference_projection(family, x, tol=tol)
    d = as_vector(x, family.dimension) - p
    return float(d @ d)


def optimality_error(x, x_star) -> float:
    """Squared distance to the reference optimum."""
    d = np.asarray(x, dtype=float) - np.asarray(x_star, dtype=float)
    return float(d @ d)


def violation_fraction(family: ConstraintFamily, x, tol: float = VIOLATION_TOL) -> float:
    """Fraction of the family's sets violated by more than tol."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    xv = as_vector(x, family.dimension)
    if family.halfspace_only:
        a, b, nsq = family.stacked_halfspaces()
        d = (a @ xv - b) / np.sqrt(nsq)
        return float(np.count_nonzero(d > tol)) / family.m
    count = 0
    for s in family.sets:
        if isinstance(s, Ball):
            d = float(np.linalg.norm(xv - s.center)) - s.radius
        else:
            d = (float(s.normal @ xv) - s.offset) / np.sqrt(s.norm_sq)
        if d > tol:
            count += 1
    return count / family.m


@dataclass(frozen=True)
class MetricRecord:
    k: int
    samples_used: int
    optimality_error: float
    feasibility_error: float
    violation_fraction: float
    ergodic_objective_gap: float | None = None

    def __post_init__(self):
        vals = [self.optimality_error, self.feasibility_error, self.violation_fraction]
        if self.ergodic_objective_gap is not None:
            vals.append(self.ergodic_objective_gap)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("non-finite metric value")
        if self.optimality_error < 0 or self.feasibility_error < 0:
            raise ValueError("squared errors must be nonnegative")
        if not 0.0 <= self.violation_fraction <= 1.0:
            raise ValueError("violation fraction out of range")


def ergodic_gap(problem, state) -> float:
    """Objective gap F(ergodic projected average) - F(optimum).

    `state` must expose ergodic_projection_sum and ergodic_count (as the
    solver state does); the scenario's closed-form objective is used.
    """
    if state.ergodic_count < 1 or state.ergodic_projection_sum is None:
        raise ValueError("no ergodic projections accumulated")
    mean = state.ergodic_projection_sum / state.ergodic_count
    return float(problem.objective_gap(mean))


def estimate_eta(
    family: ConstraintFamily,
    probe_count: int,
    rng: np.random.Generator,
    scale: float | None = None,
    tol: float = 1e-10,
) -> float:
    """Empirical linear-regularity constant in (0, 1].

    Probes are drawn uniformly from a box of half-width 3*scale around
    the origin; feasible draws are rejected. Each infeasible probe z
    contributes max_i d^2(z, X_i) / d^2(z, X) and the minimum over probes
    is returned (an upper estimate of the worst-case constant).
    """
    if probe_count < 100:
        raise ValueError("need at least 100 probes")
    if scale is None:
        scales = []
        for s in family.sets:
            if isinstance(s, Halfspace):
                scales.append(abs(s.offset) / np.sqrt(s.norm_sq))
            else:
                scales.append(float(np.linalg.norm(s.center)) + s.radius)
        scale = max(1.0, float(np.median(scales)))
    half = 3.0 * scale
    n = family.dimension
    stacked = family.stacked_halfspaces() if family.halfspace_only else None
    best = np.inf
    used = 0
    for _ in range(probe_count):
        z = rng.uniform(-half, half, n)
        if stacked is not None:
            a, b, nsq = stacked
            dists = np.maximum(a @ z - b, 0.0) / np.sqrt(nsq)
            max_d = float(np.max(dists))
        else:
            max_d = 0.0
            for s in family.sets:
                if isinstance(s, Halfspace):
                    max_d = max(max_d, max(0.0, float(s.normal @ z) - s.offset) / np.sqrt(s.norm_sq))
                else:
                    max_d = max(max_d, max(0.0, float(np.linalg.norm(z - s.center)) - s.radius))
        if max_d <= 1e-9 * scale:
            continue  # feasible (or numerically so): rejected
        p = reference_projection(family, z, tol=tol)
        dsq = float((z - p) @ (z - p))
        if dsq <= (1e-9 * scale) ** 2:
            continue
        used += 1
        best = min(best, max_d * max_d / dsq)
    if used == 0:
        raise ValueError("no infeasible probe found; enlarge the probe box")
    return float(min(1.0, max(best, np.finfo(float).tiny)))


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    k_range: tuple[float, float]


def _extract(records, field) -> np.ndarray:
    if callable(field):
        return np.array([field(r) for r in records], dtype=float)
    return np.array([getattr(r, field) for r in records], dtype=float)


def _ols(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def fit_loglog_slope(records, field, k_range: tuple[float, float]) -> RateFit:
    """OLS slope of log(value) against log(k) over the given k range.

    Nonpositive values are dropped; at least 10 points must remain.
    """
    k_min, k_max = k_range
    ks = np.array([r.k for r in records], dtype=float)
    vals = _extract(records, field)
    keep = (ks >= k_min) & (ks <= k_max) & (vals > 0.0) & (ks > 0.0)
    if int(np.count_nonzero(keep)) < 10:
        raise ValueError("need at least 10 positive stride points in range")
    slope, intercept, r2 = _ols(np.log(ks[keep]), np.log(vals[keep]))
    return RateFit(slope, intercept, r2, (float(k_min), float(k_max)))


def fit_inverse_linearity(records, field, against: str = "iteration") -> RateFit:
    """OLS of 1/value against iteration count or total constraint samples.

    The slope is the efficiency metric: a larger slope means the inverse
    error grows faster per unit of work.
    """
    if against not in ("iteration", "samples_used"):
        raise ValueError("against must be 'iteration' or 'samples_used'")
    xs = np.array(
        [r.k if against == "iteration" else r.samples_used for r in records], dtype=float
    )
    vals = _extract(records, field)
    keep = (vals > 0.0) & np.isfinite(vals)
    if int(np.count_nonzero(keep)) < 10:
        raise ValueError("need at least 10 records with positive values")
    slope, intercept, r2 = _ols(xs[keep], 1.0 / vals[keep])
    k_kept = xs[keep]
    return RateFit(slope, intercept, r2, (float(k_kept.min()), float(k_kept.max())))
