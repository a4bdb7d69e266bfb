"""Projectable convex sets (halfspaces and balls) and the projection
primitives used by every feasibility-update scheme.

All operations are pure and all types are immutable after construction,
so instances can be shared freely across threads and worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Power iteration on the (small) Gram matrix.
_POWER_MAX_ITER = 10_000
_POWER_REL_TOL = 1e-10


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Validate and return a finite 1-d float64 array."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {v.shape[0]}")
    return v


@dataclass(frozen=True)
class Halfspace:
    """The set {x : normal'x <= offset}."""

    normal: np.ndarray
    offset: float
    norm_sq: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = as_vector(self.normal)
        if not np.isfinite(self.offset):
            raise ValueError("offset must be finite")
        nsq = float(n @ n)
        if nsq <= 0.0:
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))
        object.__setattr__(self, "norm_sq", nsq)

    @property
    def dimension(self) -> int:
        return self.normal.shape[0]


@dataclass(frozen=True)
class Ball:
    """The closed Euclidean ball of given center and radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = as_vector(self.center)
        if not (np.isfinite(self.radius) and self.radius > 0.0):
            raise ValueError("ball radius must be a positive finite real")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dimension(self) -> int:
        return self.center.shape[0]


# A constraint superset is exactly one of the supported variants.
ConvexSet = Halfspace | Ball


@dataclass(frozen=True)
class ConstraintFamily:
    """An ordered family of m >= 1 constraint supersets.

    The intersection is assumed nonempty; scenario builders enforce this
    by constructing every set around a known interior point.
    """

    sets: tuple[ConvexSet, ...]

    def __post_init__(self):
        sets = tuple(self.sets)
        if len(sets) < 1:
            raise ValueError("a constraint family needs at least one set")
        dims = {s.dimension for s in sets}
        if len(dims) != 1:
            raise ValueError(f"mixed dimensions in family: {sorted(dims)}")
        object.__setattr__(self, "sets", sets)

    @property
    def m(self) -> int:
        return len(self.sets)

    @property
    def dimension(self) -> int:
        return self.sets[0].dimension

    @property
    def halfspace_only(self) -> bool:
        return all(isinstance(s, Halfspace) for s in self.sets)

    def stacked_halfspaces(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked (normals, offsets, squared row norms) for vectorized work.

        Only valid for all-halfspace families; cached after first use.
        """
        cached = getattr(self, "_stacked", None)
        if cached is None:
            if not self.halfspace_only:
                raise ValueError("family contains non-halfspace sets")
            a = np.array([s.normal for s in self.sets])
            b = np.array([s.offset for s in self.sets])
            nsq = np.array([s.norm_sq for s in self.sets])
            cached = (a, b, nsq)
            object.__setattr__(self, "_stacked", cached)
        return cached


def project(s: ConvexSet, x) -> np.ndarray:
    """Euclidean projection of x onto the set; returns x itself if feasible."""
    if isinstance(s, Halfspace):
        v = as_vector(x, s.dimension)
        t = float(s.normal @ v) - s.offset
        if t <= 0.0:
            return v
        return v - (t / s.norm_sq) * s.normal
    if isinstance(s, Ball):
        v = as_vector(x, s.dimension)
        d = v - s.center
        r = float(np.linalg.norm(d))
        if r <= s.radius:
            return v
        return s.center + (s.radius / r) * d
    raise TypeError(f"not a convex set variant: {type(s).__name__}")


def distance(s: ConvexSet, x) -> float:
    """Euclidean distance from x to the set (zero iff x is a member)."""
    if isinstance(s, Halfspace):
        v = as_vector(x, s.dimension)
        t = float(s.normal @ v) - s.offset
        return max(0.0, t) / np.sqrt(s.norm_sq)
    if isinstance(s, Ball):
        v = as_vector(x, s.dimension)
        r = float(np.linalg.norm(v - s.center))
        return max(0.0, r - s.radius)
    raise TypeError(f"not a convex set variant: {type(s).__name__}")


def contains(s: ConvexSet, x, tol: float = 0.0) -> bool:
    """Membership test up to a nonnegative distance tolerance."""
    if tol < 0.0:
        raise ValueError("tolerance must be nonnegative")
    return distance(s, x) <= tol


def gram_spectral_norm(rows: list[np.ndarray] | np.ndarray) -> float:
    """Largest eigenvalue of A A' (equal to ||A'A||) for the stacked rows.

    Uses power iteration on the small Gram matrix; the row count here is
    at most the per-iteration sample size, i.e. a few dozen.
    """
    a = np.atleast_2d(np.asarray(rows, dtype=float))
    if a.size == 0:
        raise ValueError("need at least one row")
    norms = np.linalg.norm(a, axis=1)
    if np.any(norms <= 0.0):
        raise ValueError("all-zero row in Gram computation")
    g = a @ a.T
    v = g[0].copy()
    nv = np.linalg.norm(v)
    v = v / nv if nv > 0.0 else np.ones(g.shape[0])
    lam = float(v @ g @ v) / float(v @ v)
    for _ in range(_POWER_MAX_ITER):
        w = g @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            break
        v = w / nw
        lam_new = float(v @ g @ v)
        if abs(lam_new - lam) <= _POWER_REL_TOL * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return lam
