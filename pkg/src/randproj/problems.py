"""Sampling oracle and desk-scale problem scenarios.

A Problem bundles a stochastic subgradient sampler with a constraint
family and ground-truth metadata (planted optimum, strong convexity,
documented gradient bound). Scenario builders construct the three study
designs: cutting planes of one sphere, cutting planes of two overlapping
spheres, and a hard-margin SVM on separable Gaussian-mixture data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ConstraintFamily, ConvexSet, Halfspace, as_vector, distance, project
from .polyproj import Polyhedron, project_activeset_oracle, project_hildreth

# Stream index reserved for scenario-data generation; trial streams use
# small nonnegative indices and can never collide with it.
SCENARIO_STREAM = 2**63

_TWO_SPHERE_RADIUS = 61.0
_TWO_SPHERE_CENTERS = ((-60.0, 0.0), (60.0, 0.0))
_NOISE_VARIANCE = 10.0


def rng_stream(base_seed: int, stream_index: int) -> np.random.Generator:
    """Deterministic, platform-independent stream for (seed, index).

    Distinct stream indices yield statistically independent generators via
    the seed-sequence mixing of the underlying PCG64 bit generator.
    """
    if base_seed < 0 or stream_index < 0:
        raise ValueError("seed and stream index must be nonnegative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((base_seed, stream_index))))


def _fisher_yates_from_draws(js) -> np.ndarray:
    """Partial Fisher-Yates given the swap draws j_t ~ U[t, m).

    Only displaced entries of the virtual index array are kept, in a
    sparse map, so the cost is O(M) regardless of m.
    """
    M = len(js)
    displaced: dict[int, int] = {}
    out = np.empty(M, dtype=np.int64)
    for t in range(M):
        j = int(js[t])
        out[t] = displaced.get(j, j)
        displaced[j] = displaced.get(t, t)
    return out


def sample_indices(m: int, M: int, rng: np.random.Generator) -> np.ndarray:
    """M distinct indices from {0..m-1}, every M-subset equiprobable."""
    if M < 1 or M > m:
        raise ValueError(f"need 1 <= M <= m, got M={M}, m={m}")
    return _fisher_yates_from_draws(rng.integers(np.arange(M), m))


@dataclass(slots=True)
class SampleBatch:
    """Output of one sampling-oracle constraint query at a point y."""

    indices: np.ndarray
    projections: np.ndarray  # (M, n)


def sample_batch(problem: "Problem", y: np.ndarray, M: int, rng: np.random.Generator) -> SampleBatch:
    """Sample M constraint sets uniformly without replacement and return
    their projections of y."""
    family = problem.family
    idx = sample_indices(family.m, M, rng)
    if family.halfspace_only:
        a, b, nsq = family.stacked_halfspaces()
        rows = a[idx]
        t = rows @ y - b[idx]
        np.maximum(t, 0.0, out=t)
        proj = y - (t / nsq[idx])[:, None] * rows
    else:
        proj = np.array([project(family.sets[i], y) for i in idx])
    return SampleBatch(idx, proj)


@dataclass(frozen=True)
class LeastSquaresSampler:
    """Streaming-regression subgradient: g(b; X, Y) = -2 (Y - X'b) X with
    X ~ N(0, I) and Y = X'beta_star + noise."""

    beta_star: np.ndarray
    noise_std: float

    def __call__(self, beta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        x = rng.standard_normal(beta.shape[0])
        y = float(x @ self.beta_star) + self.noise_std * float(rng.standard_normal())
        return (-2.0 * (y - float(x @ beta))) * x

    def gradient(self, beta: np.ndarray) -> np.ndarray:
        return 2.0 * (beta - self.beta_star)

    def empirical_moments(
        self, beta: np.ndarray, count: int, rng: np.random.Generator, chunk: int = 200_000
    ) -> tuple[np.ndarray, float]:
        """Sample mean of g and of ||g||^2, chunked to bound memory."""
        n = beta.shape[0]
        total = np.zeros(n)
        total_sq = 0.0
        done = 0
        while done < count:
            c = min(chunk, count - done)
            xs = rng.standard_normal((c, n))
            ys = xs @ self.beta_star + self.noise_std * rng.standard_normal(c)
            g = (-2.0 * (ys - xs @ beta))[:, None] * xs
            total += g.sum(axis=0)
            total_sq += float(np.einsum("ij,ij->", g, g))
            done += c
        return total / count, total_sq / count

    def prepare(self, count: int, rng: np.random.Generator):
        """Pre-draw the exogenous randomness for `count` iterations."""
        xs = rng.standard_normal((count, self.beta_star.shape[0]))
        ys = xs @ self.beta_star + self.noise_std * rng.standard_normal(count)
        return xs, ys

    def evaluate(self, state, i: int, beta: np.ndarray) -> np.ndarray:
        xs, ys = state
        row = xs[i]
        return (-2.0 * (ys[i] - float(row @ beta))) * row


@dataclass(frozen=True)
class NormGradient:
    """Exact gradient of 0.5*||beta||^2 (deterministic sampler)."""

    def __call__(self, beta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return np.array(beta, dtype=float)

    def gradient(self, beta: np.ndarray) -> np.ndarray:
        return np.array(beta, dtype=float)

    def prepare(self, count: int, rng: np.random.Generator):
        return None

    def evaluate(self, state, i: int, beta: np.ndarray) -> np.ndarray:
        return beta


@dataclass(frozen=True)
class Problem:
    kind: str  # "least_squares" | "svm"
    dimension: int
    family: ConstraintFamily
    subgradient_sampler: LeastSquaresSampler | NormGradient
    strong_convexity: float | None
    reference_optimum: np.ndarray
    gradient_bound_B: float
    planted_point: np.ndarray
    feasible_witness: np.ndarray
    scale: float

    def objective_value(self, x: np.ndarray) -> float:
        """Closed-form objective up to an additive constant.

        Least squares: E[(Y - X'b)^2] = ||b - b*||^2 + Var(noise) for
        X ~ N(0, I); the constant is dropped. SVM: 0.5*||b||^2.
        """
        if self.kind == "least_squares":
            d = np.asarray(x, dtype=float) - self.planted_point
            return float(d @ d)
        return 0.5 * float(np.asarray(x, dtype=float) @ np.asarray(x, dtype=float))

    def objective_gap(self, x: np.ndarray) -> float:
        return self.objective_value(x) - self.objective_value(self.reference_optimum)


def _witness_slack(family: ConstraintFamily, point: np.ndarray) -> float:
    slack = np.inf
    for s in family.sets:
        if isinstance(s, Halfspace):
            slack = min(slack, (s.offset - float(s.normal @ point)) / np.sqrt(s.norm_sq))
        else:
            slack = min(slack, s.radius - float(np.linalg.norm(point - s.center)))
    return slack


def reference_optimum(problem_or_parts, tol: float = 1e-12) -> np.ndarray:
    """High-accuracy ground-truth optimum for a generated scenario.

    Least squares reduces to the projection of the planted coefficient
    onto the feasible set; the SVM optimum is the projection of the origin
    onto the constraint polyhedron (cross-checked against the active-set
    oracle on small instances).
    """
    p = problem_or_parts
    if p.kind == "least_squares":
        from .metrics import reference_projection

        return reference_projection(p.family, p.planted_point, tol=max(tol, 1e-12))
    a, b, _ = p.family.stacked_halfspaces()
    poly = Polyhedron(a, b, p.dimension)
    origin = np.zeros(p.dimension)
    sol = project_hildreth(origin, poly, tol=tol, max_iter=500_000)
    if p.family.m <= 12:
        oracle = project_activeset_oracle(origin, poly)
        if np.linalg.norm(sol.point - oracle.point) > 1e-8:
            raise RuntimeError("SVM reference optimum failed oracle cross-check")
    return sol.point


@dataclass(frozen=True)
class _ScenarioParts:
    kind: str
    dimension: int
    family: ConstraintFamily
    planted_point: np.ndarray


def _jittered_angles(count: int, rng: np.random.Generator) -> np.ndarray:
    # Uniformly spaced with +/- quarter-spacing jitter.
    return 2.0 * np.pi * (np.arange(count) + 0.25 * rng.uniform(-1.0, 1.0, count)) / count


def make_sphere_scenario(
    m: int = 300,
    radius: float = 61.0,
    data_seed: int = 0,
    n: int = 2,
    stream_index: int = SCENARIO_STREAM,
) -> Problem:
    """Cutting planes of a single origin-centered sphere (planar).

    The planted coefficient sits at twice the radius in a random
    direction, so the constraint binds and the optimum lies on the
    boundary of the polygonal feasible set.
    """
    if n != 2:
        raise ValueError("sphere scenario is two-dimensional")
    if m < 3:
        raise ValueError("need at least 3 cutting planes")
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = rng_stream(data_seed, stream_index)
    angles = _jittered_angles(m, rng)
    sets = tuple(
        Halfspace(np.array([np.cos(a), np.sin(a)]), radius) for a in angles
    )
    family = ConstraintFamily(sets)
    psi = rng.uniform(0.0, 2.0 * np.pi)
    beta_star = 2.0 * radius * np.array([np.cos(psi), np.sin(psi)])
    witness = np.zeros(2)
    if _witness_slack(family, witness) < 1e-6:
        raise RuntimeError("sphere scenario witness lost feasibility")
    parts = _ScenarioParts("least_squares", 2, family, beta_star)
    x_opt = reference_optimum(parts)
    # Second-moment bound documented for ||beta - beta*|| <= 4*radius:
    # E||g||^2 = 4((n+2)||b-b*||^2 + var*n) under X ~ N(0, I_n).
    bound_radius = 4.0 * radius
    b_sq = 4.0 * ((n + 2) * bound_radius**2 + _NOISE_VARIANCE * n)
    return Problem(
        kind="least_squares",
        dimension=2,
        family=family,
        subgradient_sampler=LeastSquaresSampler(beta_star, float(np.sqrt(_NOISE_VARIANCE))),
        strong_convexity=2.0,
        reference_optimum=x_opt,
        gradient_bound_B=float(np.sqrt(b_sq)),
        planted_point=beta_star,
        feasible_witness=witness,
        scale=float(radius),
    )


def make_two_sphere_scenario(
    m: int = 300,
    data_seed: int = 0,
    n: int = 2,
    stream_index: int = SCENARIO_STREAM,
) -> Problem:
    """Cutting planes of two overlapping spheres of radius 61 centered at
    (-60, 0) and (60, 0); the feasible set is the thin lens around the
    origin and generates near-opposed constraint normals at its tips.
    """
    if n != 2:
        raise ValueError("two-sphere scenario is two-dimensional")
    if m < 4 or m % 2:
        raise ValueError("m must be even and at least 4")
    rng = rng_stream(data_seed, stream_index)
    r = _TWO_SPHERE_RADIUS
    sets: list[ConvexSet] = []
    for cx, cy in _TWO_SPHERE_CENTERS:
        center = np.array([cx, cy])
        for a in _jittered_angles(m // 2, rng):
            u = np.array([np.cos(a), np.sin(a)])
            sets.append(Halfspace(u, r + float(u @ center)))
    family = ConstraintFamily(tuple(sets))
    # Planted coefficient above the upper lens tip (0, 11): trajectories
    # started there funnel through the tip region where cutting planes
    # from the two spheres cross at a sharp angle.
    tau = rng.uniform(-0.087, 0.087)
    beta_star = 40.0 * np.array([np.sin(tau), np.cos(tau)])
    witness = np.zeros(2)
    if _witness_slack(family, witness) < 1e-6:
        raise RuntimeError("two-sphere scenario witness lost feasibility")
    parts = _ScenarioParts("least_squares", 2, family, beta_star)
    x_opt = reference_optimum(parts)
    bound_radius = 60.0
    b_sq = 4.0 * ((n + 2) * bound_radius**2 + _NOISE_VARIANCE * n)
    return Problem(
        kind="least_squares",
        dimension=2,
        family=family,
        subgradient_sampler=LeastSquaresSampler(beta_star, float(np.sqrt(_NOISE_VARIANCE))),
        strong_convexity=2.0,
        reference_optimum=x_opt,
        gradient_bound_B=float(np.sqrt(b_sq)),
        planted_point=beta_star,
        feasible_witness=witness,
        scale=15.0,
    )


def make_svm_scenario(
    d: int = 100,
    m: int = 200,
    margin_seed: int = 0,
    margin: float = 0.5,
    separation: float = 2.5,
    stream_index: int = SCENARIO_STREAM,
) -> Problem:
    """Hard-margin SVM on separable two-component Gaussian mixture data.

    Labels follow the sign of a planted direction; rescaling that
    direction to unit functional margin (plus slack) certifies
    feasibility. Constraints are the halfspaces -y_i x_i' b <= -1.
    """
    if d < 2:
        raise ValueError("need dimension >= 2")
    if m < d:
        raise ValueError("need at least d data points")
    if margin <= 0:
        raise ValueError("margin must be positive")
    rng = rng_stream(margin_seed, stream_index)
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    xs = np.empty((m, d))
    for i in range(m):
        while True:
            side = 1.0 if rng.integers(0, 2) else -1.0
            x = side * separation * w + rng.standard_normal(d)
            if np.linalg.norm(x) > 1e-12 and abs(float(x @ w)) > 1e-12:
                xs[i] = x
                break
    labels = np.sign(xs @ w)
    raw_margins = labels * (xs @ w)
    c = (1.0 + margin) / float(np.min(raw_margins))
    planted = c * w
    sets = tuple(Halfspace(-labels[i] * xs[i], -1.0) for i in range(m))
    family = ConstraintFamily(sets)
    slack = _witness_slack(family, planted)
    if slack < 1e-6:
        raise RuntimeError(f"SVM witness slack {slack:g} below tolerance")
    parts = _ScenarioParts("svm", d, family, planted)
    x_opt = reference_optimum(parts)
    # ||g(b)|| = ||b||; documented for iterates within twice the optimum
    # norm of the origin (runs start at zero).
    b_bound = 1.0 + 2.0 * float(np.linalg.norm(x_opt))
    return Problem(
        kind="svm",
        dimension=d,
        family=family,
        subgradient_sampler=NormGradient(),
        strong_convexity=1.0,
        reference_optimum=x_opt,
        gradient_bound_B=b_bound,
        planted_point=planted,
        feasible_witness=planted,
        scale=max(1.0, 2.0 * float(np.linalg.norm(x_opt))),
    )


_SCENARIO_BUILDERS = {
    "sphere": make_sphere_scenario,
    "two_sphere": make_two_sphere_scenario,
    "svm": make_svm_scenario,
}


def build_scenario(kind: str, params: dict, data_seed: int, stream_index: int = SCENARIO_STREAM) -> Problem:
    if kind not in _SCENARIO_BUILDERS:
        raise ValueError(f"unknown scenario kind: {kind!r}")
    if kind == "svm":
        return make_svm_scenario(margin_seed=data_seed, stream_index=stream_index, **params)
    return _SCENARIO_BUILDERS[kind](data_seed=data_seed, stream_index=stream_index, **params)
