"""Cutting polyhedra and exact projection onto small dense polyhedra.

The polyhedral feasibility update builds, per iteration, a polyhedron from
supporting hyperplanes at sampled projection points and projects onto it.
The projection QP is solved by Hildreth's dual coordinate descent; a
brute-force active-set enumeration serves as an independent oracle for
verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .geometry import as_vector

HILDRETH_TOL = 1e-10
HILDRETH_MAX_ITER = 100_000
ACTIVE_TOL = 1e-8

# Multiplier / feasibility slack accepted by the active-set oracle.
_ORACLE_MULT_TOL = 1e-10
_ORACLE_FEAS_TOL = 1e-9


@dataclass(frozen=True)
class Polyhedron:
    """A finite system {a_i'x <= b_i}; zero rows denote the whole space."""

    normals: np.ndarray  # (rows, n)
    offsets: np.ndarray  # (rows,)
    dimension: int
    norms_sq: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.asarray(self.normals, dtype=float).reshape(-1, self.dimension)
        b = np.asarray(self.offsets, dtype=float).reshape(-1)
        if a.shape[0] != b.shape[0]:
            raise ValueError("row count mismatch between normals and offsets")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("polyhedron rows must be finite")
        nsq = np.einsum("ij,ij->i", a, a)
        if np.any(nsq <= 0.0):
            raise ValueError("zero-normal row in polyhedron")
        object.__setattr__(self, "normals", a)
        object.__setattr__(self, "offsets", b)
        object.__setattr__(self, "norms_sq", nsq)

    @property
    def rows(self) -> int:
        return self.normals.shape[0]

    def max_violation(self, x: np.ndarray) -> float:
        if self.rows == 0:
            return 0.0
        return max(0.0, float(np.max(self.normals @ x - self.offsets)))


def empty_polyhedron(dimension: int) -> Polyhedron:
    return Polyhedron(np.zeros((0, dimension)), np.zeros(0), dimension)


@dataclass(frozen=True)
class QpSolution:
    point: np.ndarray
    multipliers: np.ndarray
    max_violation: float
    complementarity_residual: float
    iterations: int


class QpNonconvergence(RuntimeError):
    """Hildreth iteration budget exhausted; carries the best iterate."""

    def __init__(self, message: str, best: QpSolution):
        super().__init__(message)
        self.best = best


def build_cutting_polyhedron(y, projections) -> Polyhedron:
    """Supporting-hyperplane system at the sampled projection points.

    Row i is a_i = y - p_i, b_i = a_i'p_i, so every point of the sampled
    set lies on the feasible side. Rows where y already belongs to the
    sampled set (vanishing a_i) are dropped.
    """
    yv = as_vector(y)
    n = yv.shape[0]
    p = np.asarray(projections, dtype=float).reshape(-1, n)
    if not np.all(np.isfinite(p)):
        raise ValueError("non-finite projection point")
    a = yv[None, :] - p
    norms = np.linalg.norm(a, axis=1)
    zero_tol = 1e-12 * (1.0 + float(np.linalg.norm(yv)))
    keep = norms > zero_tol
    if not np.any(keep):
        return empty_polyhedron(n)
    a = a[keep]
    b = np.einsum("ij,ij->i", a, p[keep])
    return Polyhedron(a, b, n)


def _qp_solution(y, a: np.ndarray, b: np.ndarray, lam: np.ndarray, sweeps: int) -> QpSolution:
    x = y - a.T @ lam
    slack = a @ x - b
    viol = max(0.0, float(np.max(slack)))
    comp = float(np.max(np.abs(lam * slack)))
    return QpSolution(x, lam.copy(), viol, comp, sweeps)


def hildreth_arrays(
    yv: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    nsq: np.ndarray,
    tol: float,
    max_iter: int,
) -> QpSolution:
    """Hildreth core on pre-validated row arrays (a, b with ||a_i||^2 nsq)."""
    r = a.shape[0]
    if r == 0:
        return QpSolution(yv.copy(), np.zeros(0), 0.0, 0.0, 0)
    scale = tol * (1.0 + float(np.linalg.norm(yv)))
    s = a @ yv - b  # row slacks at y
    if r == 1:
        # One ascent step is exact for a single halfspace.
        lam0 = max(0.0, float(s[0]) / float(nsq[0]))
        return _qp_solution(yv, a, b, np.array([lam0]), 1)
    g = a @ a.T
    lam = np.zeros(r)
    w = np.zeros(r)  # w = G lam, kept incrementally
    for sweep in range(1, max_iter + 1):
        for i in range(r):
            new = lam[i] + (s[i] - w[i]) / nsq[i]
            if new < 0.0:
                new = 0.0
            delta = new - lam[i]
            if delta != 0.0:
                w += delta * g[i]
                lam[i] = new
        slack = s - w
        viol = max(0.0, float(np.max(slack)))
        comp = float(np.max(np.abs(lam * slack)))
        if viol <= scale and comp <= scale:
            return _qp_solution(yv, a, b, lam, sweep)
    best = _qp_solution(yv, a, b, lam, max_iter)
    raise QpNonconvergence(
        f"Hildreth did not reach tolerance {tol:g} within {max_iter} sweeps "
        f"(violation {best.max_violation:.3e})",
        best,
    )


def project_hildreth(
    y,
    poly: Polyhedron,
    tol: float = HILDRETH_TOL,
    max_iter: int = HILDRETH_MAX_ITER,
) -> QpSolution:
    """Project y onto the polyhedron by dual coordinate descent.

    Maintains x = y - sum_i lam_i a_i with lam >= 0 and cyclically
    maximizes the dual one coordinate at a time. Success requires both the
    worst constraint violation and the complementarity residual to fall
    below tol*(1+||y||); exhausting max_iter sweeps raises
    QpNonconvergence carrying the best iterate found.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    yv = as_vector(y, poly.dimension)
    return hildreth_arrays(yv, poly.normals, poly.offsets, poly.norms_sq, tol, max_iter)


def _enumerate_active_sets(
    yv: np.ndarray, a: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray, int] | None:
    """First KKT-consistent subset projection, or None if none verifies.

    Subsets are tried in increasing size (lexicographic within a size);
    singular normal-equation systems (redundant rows) are skipped.
    """
    rows = a.shape[0]
    scale = 1.0 + float(np.linalg.norm(yv))
    examined = 0
    for size in range(rows + 1):
        for subset in combinations(range(rows), size):
            examined += 1
            idx = list(subset)
            if size == 0:
                x = yv.copy()
                mu = np.zeros(0)
            else:
                a_s = a[idx]
                rhs = a_s @ yv - b[idx]
                try:
                    mu = np.linalg.solve(a_s @ a_s.T, rhs)
                except np.linalg.LinAlgError:
                    continue
                if not np.all(np.isfinite(mu)):
                    continue
                x = yv - a_s.T @ mu
                # Near-singular solves can return garbage that fails the
                # equality constraints; reject those.
                if np.max(np.abs(a_s @ x - b[idx])) > _ORACLE_FEAS_TOL * scale:
                    continue
                if np.min(mu) < -_ORACLE_MULT_TOL * scale:
                    continue
            if rows and np.max(a @ x - b) > _ORACLE_FEAS_TOL * scale:
                continue
            mult = np.zeros(rows)
            if size:
                mult[idx] = np.maximum(mu, 0.0)
            return x, mult, examined
    return None


def project_activeset_oracle(y, poly: Polyhedron) -> QpSolution:
    """Exact projection by enumerating candidate active sets.

    Intended purely as a verification oracle, hence the hard size limits
    (enumeration is exponential in the row count).
    """
    if poly.rows > 12:
        raise ValueError("oracle limited to 12 rows")
    if poly.dimension > 16:
        raise ValueError("oracle limited to 16 dimensions")
    yv = as_vector(y, poly.dimension)
    found = _enumerate_active_sets(yv, poly.normals, poly.offsets)
    if found is None:
        raise ValueError("no KKT-consistent active set; polyhedron numerically infeasible")
    x, mult, examined = found
    slack = poly.normals @ x - poly.offsets if poly.rows else np.zeros(0)
    viol = max(0.0, float(np.max(slack))) if poly.rows else 0.0
    comp = float(np.max(np.abs(mult * slack))) if poly.rows else 0.0
    return QpSolution(x, mult, viol, comp, examined)


def improvement_factor(y, poly: Polyhedron, solution: QpSolution) -> float:
    """Feasibility-gain diagnostic of the polyhedral update, >= 1.

    For the unit normals of the rows active at the projection, returns
    k^2 / ||sum of unit normals||^2 (k = active count). This equals 1 for
    a single active row and grows without bound as active normals become
    opposed, e.g. near the tip of a thin lens-shaped intersection.
    """
    yv = as_vector(y, poly.dimension)
    if poly.rows == 0:
        raise ValueError("improvement factor undefined without rows")
    scale = ACTIVE_TOL * (1.0 + float(np.linalg.norm(yv)))
    slack_y = poly.normals @ yv - poly.offsets
    slack_x = poly.normals @ solution.point - poly.offsets
    active = (solution.multipliers > ACTIVE_TOL) | (
        (slack_y > 0.0) & (np.abs(slack_x) <= scale)
    )
    k = int(np.count_nonzero(active))
    if k == 0:
        raise ValueError("no active rows; y is interior to the polyhedron")
    units = poly.normals[active] / np.sqrt(poly.norms_sq[active])[:, None]
    ssq = float(np.linalg.norm(units.sum(axis=0)) ** 2)
    if ssq <= 1e-30:
        return float("inf")
    return k * k / ssq
