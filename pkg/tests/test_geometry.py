import numpy as np
import pytest

from randproj.geometry import (
    Ball,
    ConstraintFamily,
    Halfspace,
    contains,
    distance,
    gram_spectral_norm,
    project,
)
from randproj.metrics import reference_projection
from randproj.problems import rng_stream


def unit(angle):
    return np.array([np.cos(angle), np.sin(angle)])


def random_set(rng, n):
    if rng.uniform() < 0.5:
        a = rng.normal(size=n)
        while np.linalg.norm(a) < 1e-6:
            a = rng.normal(size=n)
        return Halfspace(a, rng.normal(scale=2.0))
    return Ball(rng.normal(scale=2.0, size=n), rng.uniform(0.3, 3.0))


def random_member(rng, s, n):
    # a point of the set: project a random draw into it
    return project(s, rng.normal(scale=3.0, size=n))


class TestConstruction:
    def test_halfspace_rejects_zero_normal(self):
        with pytest.raises(ValueError):
            Halfspace(np.zeros(3), 1.0)

    def test_halfspace_rejects_nan(self):
        with pytest.raises(ValueError):
            Halfspace(np.array([1.0, np.nan]), 0.0)
        with pytest.raises(ValueError):
            Halfspace(np.array([1.0, 0.0]), np.inf)

    def test_ball_rejects_bad_radius(self):
        for r in (0.0, -1.0, np.nan):
            with pytest.raises(ValueError):
                Ball(np.zeros(2), r)

    def test_family_needs_matching_dimensions(self):
        with pytest.raises(ValueError):
            ConstraintFamily((Halfspace(np.ones(2), 1.0), Halfspace(np.ones(3), 1.0)))

    def test_family_needs_at_least_one_set(self):
        with pytest.raises(ValueError):
            ConstraintFamily(())


class TestProject:
    def test_axis_aligned_halfspace(self):
        h = Halfspace(np.array([1.0, 0.0]), 1.0)
        np.testing.assert_allclose(project(h, [2.0, 0.0]), [1.0, 0.0])

    def test_ball_radial_scaling(self):
        b = Ball(np.zeros(2), 61.0)
        np.testing.assert_allclose(project(b, [122.0, 0.0]), [61.0, 0.0])

    def test_diagonal_halfspace_closed_form(self):
        # x - ((a'x - b)/||a||^2) a with a=(1,1), b=0, x=(1,1)
        h = Halfspace(np.array([1.0, 1.0]), 0.0)
        np.testing.assert_allclose(project(h, [1.0, 1.0]), [0.0, 0.0], atol=1e-15)

    def test_member_point_unchanged(self):
        h = Halfspace(np.array([1.0, 0.0]), 1.0)
        x = np.array([0.5, 3.0])
        assert project(h, x) is x or np.array_equal(project(h, x), x)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project(Halfspace(np.ones(2), 1.0), np.ones(3))

    def test_non_finite_input(self):
        with pytest.raises(ValueError):
            project(Ball(np.zeros(2), 1.0), np.array([np.nan, 0.0]))


class TestDistance:
    def test_halfspace(self):
        assert distance(Halfspace(np.array([1.0, 0.0]), 1.0), [2.0, 0.0]) == pytest.approx(1.0)

    def test_member_distance_zero(self):
        rng = rng_stream(7, 0)
        for _ in range(50):
            s = random_set(rng, 3)
            z = random_member(rng, s, 3)
            assert distance(s, z) <= 1e-12

    def test_ball_outside(self):
        # ||x|| - r = 5 - 1
        assert distance(Ball(np.zeros(2), 1.0), [3.0, 4.0]) == pytest.approx(4.0)

    def test_matches_projection(self):
        rng = rng_stream(8, 0)
        for _ in range(200):
            s = random_set(rng, 4)
            x = rng.normal(scale=3.0, size=4)
            assert distance(s, x) == pytest.approx(np.linalg.norm(x - project(s, x)), abs=1e-12)


class TestContains:
    def test_boundary(self):
        h = Halfspace(np.array([1.0, 0.0]), 1.0)
        assert contains(h, [1.0, 0.0], tol=0.0)
        assert not contains(h, [1.0 + 1e-8, 0.0], tol=1e-9)
        assert contains(h, [1.0 + 1e-8, 0.0], tol=1e-6)

    def test_rejects_negative_tol(self):
        with pytest.raises(ValueError):
            contains(Ball(np.zeros(2), 1.0), [0.0, 0.0], tol=-1.0)


class TestGramSpectralNorm:
    def test_single_unit_row(self):
        assert gram_spectral_norm([np.array([1.0, 0.0])]) == pytest.approx(1.0)

    def test_orthonormal_rows(self):
        rows = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        assert gram_spectral_norm(rows) == pytest.approx(1.0, rel=1e-8)

    def test_two_rows_at_angle(self):
        # eigenvalues of the 2x2 Gram are 1 +/- cos(phi); the norm is the
        # larger one, 1 + |cos(phi)|
        for phi in (np.pi / 3, 2 * np.pi / 3, 0.95 * np.pi):
            got = gram_spectral_norm([unit(0.0), unit(phi)])
            assert got == pytest.approx(1.0 + abs(np.cos(phi)), rel=1e-7)

    def test_matches_eigvalsh(self):
        rng = rng_stream(9, 0)
        for _ in range(50):
            rows = rng.normal(size=(rng.integers(1, 7), rng.integers(2, 6)))
            rows = rows[np.linalg.norm(rows, axis=1) > 1e-6]
            if len(rows) == 0:
                continue
            expected = float(np.max(np.linalg.eigvalsh(rows @ rows.T)))
            assert gram_spectral_norm(rows) == pytest.approx(expected, rel=1e-7)

    def test_zero_row_rejected(self):
        with pytest.raises(ValueError):
            gram_spectral_norm([np.zeros(2)])


class TestProjectionProperties:
    N_CASES = 400

    def test_idempotence(self):
        rng = rng_stream(10, 0)
        for _ in range(self.N_CASES):
            n = int(rng.integers(2, 6))
            s = random_set(rng, n)
            p = project(s, rng.normal(scale=4.0, size=n))
            assert np.linalg.norm(project(s, p) - p) <= 1e-12

    def test_nonexpansiveness(self):
        rng = rng_stream(11, 0)
        for _ in range(self.N_CASES):
            n = int(rng.integers(2, 6))
            s = random_set(rng, n)
            x, y = rng.normal(scale=4.0, size=n), rng.normal(scale=4.0, size=n)
            lhs = np.linalg.norm(project(s, x) - project(s, y))
            assert lhs <= np.linalg.norm(x - y) + 1e-12

    def test_obtuse_angle(self):
        rng = rng_stream(12, 0)
        for _ in range(self.N_CASES):
            n = int(rng.integers(2, 6))
            s = random_set(rng, n)
            x = rng.normal(scale=4.0, size=n)
            px = project(s, x)
            z = random_member(rng, s, n)
            assert float((z - px) @ (x - px)) <= 1e-10

    def test_member_distance_bounded_by_intersection_distance(self):
        rng = rng_stream(13, 0)
        for _ in range(100):
            n = int(rng.integers(2, 4))
            center = rng.normal(scale=1.0, size=n)
            sets = []
            for _ in range(int(rng.integers(2, 5))):
                s = random_set(rng, n)
                # recenter so the family surely intersects at `center`
                if isinstance(s, Halfspace):
                    s = Halfspace(s.normal, float(s.normal @ center) + rng.uniform(0.1, 1.0))
                else:
                    s = Ball(center + rng.normal(scale=0.2, size=n), s.radius + 1.0)
                sets.append(s)
            fam = ConstraintFamily(tuple(sets))
            x = rng.normal(scale=3.0, size=n)
            d_int = np.linalg.norm(x - reference_projection(fam, x, tol=1e-10))
            for s in fam.sets:
                assert distance(s, x) <= d_int + 1e-9
