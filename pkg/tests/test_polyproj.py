import numpy as np
import pytest

from randproj.geometry import Ball, Halfspace, project
from randproj.polyproj import (
    Polyhedron,
    QpNonconvergence,
    build_cutting_polyhedron,
    empty_polyhedron,
    improvement_factor,
    project_activeset_oracle,
    project_hildreth,
)
from randproj.problems import rng_stream


def box_poly():
    return Polyhedron(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, 1.0]), 2)


def consistent_random_poly(rng, n_rows, n):
    """Rows constructed around a random interior point, so the polyhedron
    is guaranteed nonempty."""
    z0 = rng.normal(scale=2.0, size=n)
    rows = rng.normal(size=(n_rows, n))
    norms = np.linalg.norm(rows, axis=1)
    while np.any(norms < 1e-6):
        rows[norms < 1e-6] = rng.normal(size=(int(np.sum(norms < 1e-6)), n))
        norms = np.linalg.norm(rows, axis=1)
    offsets = rows @ z0 + rng.uniform(0.0, 2.0, n_rows)
    return Polyhedron(rows, offsets, n)


class TestPolyhedron:
    def test_zero_row_rejected(self):
        with pytest.raises(ValueError):
            Polyhedron(np.array([[0.0, 0.0]]), np.array([1.0]), 2)

    def test_empty_is_whole_space(self):
        p = empty_polyhedron(3)
        assert p.rows == 0
        assert p.max_violation(np.array([5.0, -7.0, 1.0])) == 0.0


class TestBuildCuttingPolyhedron:
    def test_hand_worked_rows(self):
        y = np.array([2.0, 2.0])
        poly = build_cutting_polyhedron(y, [np.array([1.0, 2.0]), np.array([2.0, 1.0])])
        np.testing.assert_allclose(poly.normals, [[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(poly.offsets, [1.0, 1.0])

    def test_all_degenerate_rows_dropped(self):
        y = np.array([0.5, -0.25])
        poly = build_cutting_polyhedron(y, [y.copy(), y.copy()])
        assert poly.rows == 0

    def test_duplicate_rows_kept(self):
        y = np.array([2.0, 0.0])
        p = np.array([1.0, 0.0])
        poly = build_cutting_polyhedron(y, [p, p])
        assert poly.rows == 2
        np.testing.assert_allclose(poly.normals, [[1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_allclose(poly.offsets, [1.0, 1.0])

    def test_row_identity_a_y_minus_b(self):
        # kept rows satisfy a'y - b = ||a||^2 by construction
        rng = rng_stream(21, 0)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            y = rng.normal(scale=2.0, size=n)
            sets = [Ball(rng.normal(size=n), rng.uniform(0.2, 1.5)) for _ in range(4)]
            proj = [project(s, y) for s in sets]
            poly = build_cutting_polyhedron(y, proj)
            if poly.rows:
                res = poly.normals @ y - poly.offsets
                np.testing.assert_allclose(res, poly.norms_sq, rtol=1e-9, atol=1e-12)

    def test_rows_support_their_sampled_sets(self):
        # row i is a supporting halfspace of the set it was cut from: any
        # member of that set satisfies it; a shared interior point of all
        # sampled sets satisfies every row
        rng = rng_stream(22, 0)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            y = rng.normal(scale=3.0, size=n)
            center = rng.normal(size=n)
            sets = []
            for _ in range(3):
                if rng.uniform() < 0.5:
                    a = rng.normal(size=n)
                    sets.append(Halfspace(a, float(a @ center) + rng.uniform(0.1, 1.0)))
                else:
                    sets.append(Ball(center + rng.normal(scale=0.2, size=n), rng.uniform(1.0, 2.0)))
            projections = [project(s, y) for s in sets]
            if min(np.linalg.norm(p - y) for p in projections) < 1e-9:
                continue  # keep the row-to-set mapping trivial
            poly = build_cutting_polyhedron(y, projections)
            assert poly.rows == len(sets)
            for i, s in enumerate(sets):
                z = project(s, rng.normal(scale=2.0, size=n))
                slack = float(poly.normals[i] @ z) - poly.offsets[i]
                assert slack <= 1e-10 * (1.0 + np.linalg.norm(z))
            assert poly.max_violation(center) <= 1e-10 * (1.0 + np.linalg.norm(center))

    def test_dominance_over_sampled_distances(self):
        # d(y, P) >= max_i d(y, X_i) since P supports each sampled set
        rng = rng_stream(23, 0)
        for _ in range(100):
            n = int(rng.integers(2, 5))
            y = rng.normal(scale=3.0, size=n)
            sets = [Ball(rng.normal(size=n), rng.uniform(0.2, 1.0)) for _ in range(4)]
            proj = [project(s, y) for s in sets]
            poly = build_cutting_polyhedron(y, proj)
            if poly.rows == 0:
                continue
            sol = project_hildreth(y, poly)
            d_poly = np.linalg.norm(sol.point - y)
            d_max = max(np.linalg.norm(p - y) for p in proj)
            assert d_poly >= d_max - 1e-9


class TestHildreth:
    def test_box_corner(self):
        sol = project_hildreth(np.array([2.0, 2.0]), box_poly())
        np.testing.assert_allclose(sol.point, [1.0, 1.0], atol=1e-9)

    def test_empty_returns_y(self):
        y = np.array([3.0, -1.0])
        sol = project_hildreth(y, empty_polyhedron(2))
        np.testing.assert_array_equal(sol.point, y)
        assert sol.iterations == 0

    def test_single_halfspace_multiplier(self):
        poly = Polyhedron(np.array([[1.0, 0.0]]), np.array([1.0]), 2)
        sol = project_hildreth(np.array([2.0, 0.0]), poly)
        np.testing.assert_allclose(sol.point, [1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(sol.multipliers, [1.0], atol=1e-12)

    def test_identity_on_feasible_point(self):
        rng = rng_stream(24, 0)
        for _ in range(50):
            poly = consistent_random_poly(rng, 5, 3)
            z = rng.normal(scale=2.0, size=3)
            if poly.max_violation(z) > 0.0:
                continue
            sol = project_hildreth(z, poly)
            np.testing.assert_array_equal(sol.point, z)

    def test_nonconvergence_carries_best_iterate(self):
        poly = Polyhedron(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([-1.0, -1.0]), 2)
        with pytest.raises(QpNonconvergence) as info:
            project_hildreth(np.array([5.0, 5.0]), poly, tol=1e-14, max_iter=1)
        assert info.value.best.point.shape == (2,)

    def test_tolerance_validation(self):
        with pytest.raises(ValueError):
            project_hildreth(np.zeros(2), box_poly(), tol=0.0)
        with pytest.raises(ValueError):
            project_hildreth(np.zeros(2), box_poly(), max_iter=0)


class TestActiveSetOracle:
    def test_box_corner_normal_equations(self):
        sol = project_activeset_oracle(np.array([2.0, 2.0]), box_poly())
        np.testing.assert_allclose(sol.point, [1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(sol.multipliers, [1.0, 1.0], atol=1e-12)

    def test_interior_point(self):
        sol = project_activeset_oracle(np.array([0.0, 0.5]), box_poly())
        np.testing.assert_array_equal(sol.point, [0.0, 0.5])
        np.testing.assert_array_equal(sol.multipliers, [0.0, 0.0])

    def test_redundant_duplicate_row(self):
        poly = Polyhedron(np.array([[1.0, 0.0], [1.0, 0.0]]), np.array([1.0, 1.0]), 2)
        sol = project_activeset_oracle(np.array([2.0, 0.0]), poly)
        np.testing.assert_allclose(sol.point, [1.0, 0.0], atol=1e-12)

    def test_size_limits(self):
        rng = rng_stream(25, 0)
        big = consistent_random_poly(rng, 13, 2)
        with pytest.raises(ValueError):
            project_activeset_oracle(np.zeros(2), big)

    def test_oracle_equivalence_randomized(self):
        rng = rng_stream(26, 0)
        for _ in range(300):
            n = int(rng.integers(2, 6))
            poly = consistent_random_poly(rng, int(rng.integers(1, 9)), n)
            y = rng.normal(scale=3.0, size=n)
            a = project_hildreth(y, poly)
            b = project_activeset_oracle(y, poly)
            assert np.linalg.norm(a.point - b.point) <= 1e-6 * (1.0 + np.linalg.norm(y))


class TestImprovementFactor:
    def test_single_active_row_is_one(self):
        poly = Polyhedron(np.array([[1.0, 0.0]]), np.array([1.0]), 2)
        y = np.array([2.0, 0.0])
        sol = project_hildreth(y, poly)
        assert improvement_factor(y, poly, sol) == pytest.approx(1.0)

    def test_two_orthogonal_rows(self):
        y = np.array([2.0, 2.0])
        sol = project_hildreth(y, box_poly())
        assert improvement_factor(y, box_poly(), sol) == pytest.approx(2.0, rel=1e-9)

    def test_nearly_opposed_normals_blow_up(self):
        # two active unit rows at 170 degrees: 2/(1 + cos 170) ~ 131.6
        phi = np.radians(170.0)
        a = np.array([[1.0, 0.0], [np.cos(phi), np.sin(phi)]])
        poly = Polyhedron(a, np.zeros(2), 2)
        # y inside the cone spanned by both normals, so the projection is
        # the wedge apex with both rows active
        y = np.array([0.1, 1.0])
        sol = project_hildreth(y, poly, tol=1e-12, max_iter=500_000)
        np.testing.assert_allclose(sol.point, [0.0, 0.0], atol=1e-9)
        assert np.all(sol.multipliers > 1e-8)
        theta = improvement_factor(y, poly, sol)
        expected = 2.0 / (1.0 + np.cos(phi))
        assert theta == pytest.approx(expected, rel=1e-6)

    def test_always_at_least_one(self):
        rng = rng_stream(27, 0)
        checked = 0
        for _ in range(300):
            n = int(rng.integers(2, 5))
            y = rng.normal(scale=3.0, size=n)
            sets = [Ball(rng.normal(size=n), rng.uniform(0.2, 1.0)) for _ in range(4)]
            poly = build_cutting_polyhedron(y, [project(s, y) for s in sets])
            if poly.rows == 0:
                continue
            sol = project_hildreth(y, poly)
            theta = improvement_factor(y, poly, sol)
            assert theta >= 1.0 - 1e-9
            checked += 1
        assert checked > 200

    def test_interior_point_rejected(self):
        poly = box_poly()
        y = np.array([0.0, 0.0])
        sol = project_hildreth(y, poly)
        with pytest.raises(ValueError):
            improvement_factor(y, poly, sol)
