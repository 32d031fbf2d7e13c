from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from replidyn.errors import DimensionError, DomainError, ParameterError
from replidyn.simplex import (
    Face,
    OrderPattern,
    SimplexPoint,
    face_center,
    faces,
    l1_distance,
    majorizes,
    max_ind,
    order_violations,
    sample_ball,
    sample_simplex,
    similar_order_equal,
)


def simplex_points(min_m=2, max_m=6):
    """Hypothesis strategy: points of the simplex with positive coordinates."""

    def build(ws):
        w = np.asarray(ws, dtype=float)
        return (w / w.sum()).tolist()

    return st.integers(min_m, max_m).flatmap(
        lambda m: st.lists(st.floats(0.01, 1.0), min_size=m, max_size=m).map(build)
    )


def _brute_pattern(x):
    return [[(a > b) - (a < b) for b in x] for a in x]


class TestSimilarOrder:
    def test_increasing_pair(self):
        assert similar_order_equal([1, 2, 3], [4, 5, 6])

    def test_tie_broken(self):
        assert not similar_order_equal([1, 1, 2], [1, 2, 2])

    def test_squares_keep_order(self):
        assert similar_order_equal([0.5, 0.3, 0.2], [0.25, 0.09, 0.04])
        assert _brute_pattern([0.5, 0.3, 0.2]) == _brute_pattern([0.25, 0.09, 0.04])

    def test_tolerance_makes_ties(self):
        assert similar_order_equal([1.0, 1.0 + 1e-13], [2.0, 2.0], tol=1e-12)
        assert not similar_order_equal([1.0, 1.0 + 1e-13], [2.0, 2.0], tol=0)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            similar_order_equal([1, 2], [1, 2, 3])

    def test_violations_list_pairs(self):
        assert order_violations([1, 2, 3], [2, 1, 3]) == [(0, 1)]

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=6, unique=True))
    def test_matches_brute_force(self, x):
        y = [v**3 for v in x]
        assert similar_order_equal(x, y) == (_brute_pattern(x) == _brute_pattern(y))

    @given(
        st.lists(st.integers(-5, 5), min_size=3, max_size=5),
        st.lists(st.integers(-5, 5), min_size=3, max_size=5),
        st.lists(st.integers(-5, 5), min_size=3, max_size=5),
    )
    def test_equivalence_relation(self, x, y, z):
        n = min(len(x), len(y), len(z))
        x, y, z = x[:n], y[:n], z[:n]
        assert similar_order_equal(x, x)
        assert similar_order_equal(x, y) == similar_order_equal(y, x)
        if similar_order_equal(x, y) and similar_order_equal(y, z):
            assert similar_order_equal(x, z)

    @given(simplex_points())
    def test_order_pattern_antisymmetric(self, x):
        r = np.array(OrderPattern.of(x).ranks)
        assert np.array_equal(r, -r.T)


class TestPoints:
    def test_renormalizes_small_error(self):
        p = SimplexPoint.from_coords([0.5, 0.3, 0.2 + 1e-8])
        assert abs(p.as_float().sum() - 1) < 1e-15

    def test_rejects_large_error(self):
        with pytest.raises(DomainError):
            SimplexPoint.from_coords([0.5, 0.3, 0.3])

    def test_rejects_negative(self):
        with pytest.raises(DomainError):
            SimplexPoint.from_coords([1.1, -0.1])

    def test_rejects_m1(self):
        with pytest.raises(DimensionError):
            SimplexPoint.from_coords([1.0])

    def test_extended_sum(self):
        p = SimplexPoint.from_coords([0.5, 0.3, 0.2], 256)
        assert abs(float(p.coords.sum() - 1)) < 2.0**-128

    def test_support_and_null(self):
        p = SimplexPoint.from_coords([0.5, 0, 0.5])
        assert p.support() == {1, 3}
        assert p.null() == {2}

    def test_immutable(self):
        p = SimplexPoint.from_coords([0.5, 0.5])
        with pytest.raises(ValueError):
            p.coords[0] = 1.0

    def test_vertex(self):
        assert SimplexPoint.vertex(2, 3).as_float().tolist() == [0, 1, 0]
        with pytest.raises(ParameterError):
            SimplexPoint.vertex(4, 3)


class TestFaces:
    def test_center_full(self):
        c = face_center(Face({1, 2, 3}, 3))
        assert np.allclose(c.as_float(), [1 / 3] * 3, rtol=0, atol=1e-16)

    def test_center_vertex(self):
        assert face_center(Face({2}, 3)).as_float().tolist() == [0, 1, 0]

    def test_center_pair(self):
        assert face_center(Face({1, 3}, 4)).as_float().tolist() == [0.5, 0, 0.5, 0]

    def test_invalid_faces(self):
        with pytest.raises(ParameterError):
            Face(set(), 3)
        with pytest.raises(ParameterError):
            Face({4}, 3)

    def test_face_count(self):
        for m in range(2, 7):
            assert len(list(faces(m))) == 2**m - 1

    @pytest.mark.parametrize("m", [2, 3, 4, 5])
    def test_center_is_permutation_invariant(self, m):
        for face in faces(m):
            c = face_center(face).as_float()
            idx = face.sorted()
            for perm in itertools.permutations(idx):
                d = c.copy()
                d[[i - 1 for i in idx]] = c[[p - 1 for p in perm]]
                assert np.array_equal(d, c)

    @pytest.mark.parametrize("m", [2, 3, 4, 5])
    def test_max_ind_of_center_is_face(self, m):
        for face in faces(m):
            assert max_ind(face_center(face), face) == face.indices


class TestMaxInd:
    def test_unique_max(self):
        assert max_ind(SimplexPoint.from_coords([0.5, 0.3, 0.2]), Face.full(3)) == {1}

    def test_center(self):
        assert max_ind(face_center(Face.full(3)), Face.full(3)) == {1, 2, 3}

    def test_tied_pair(self):
        x = SimplexPoint.from_coords([0.4, 0.4, 0.2])
        assert max_ind(x, Face.full(3), 1e-12) == {1, 2}

    def test_support_outside_face(self):
        with pytest.raises(DomainError):
            max_ind(SimplexPoint.from_coords([0.5, 0.3, 0.2]), Face({1, 2}, 3))


class TestMajorization:
    def test_vertex_majorizes_center(self):
        assert majorizes([1, 0, 0], [1 / 3, 1 / 3, 1 / 3], tol=1e-12)
        assert not majorizes([1 / 3, 1 / 3, 1 / 3], [1, 0, 0], tol=1e-12)

    def test_reflexive(self):
        assert majorizes([0.5, 0.3, 0.2], [0.5, 0.3, 0.2])

    def test_partial_sums(self):
        # 0.5 >= 0.4, 0.8 >= 0.8, equal totals
        assert majorizes([0.5, 0.3, 0.2], [0.4, 0.4, 0.2], tol=1e-12)

    def test_unequal_totals(self):
        assert not majorizes([1, 0], [0.4, 0.4])

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            majorizes([1, 0], [1, 0, 0])

    @given(simplex_points())
    def test_center_of_support_is_minimal(self, x):
        m = len(x)
        assert majorizes(x, [1 / m] * m, tol=1e-12)


class TestSampling:
    def test_simplex_samples(self, rng):
        pts = sample_simplex(rng, 4, 1000)
        assert np.all(pts >= 0) and np.allclose(pts.sum(axis=1), 1)
        # uniform on the simplex: each coordinate has mean 1/m
        assert np.allclose(pts.mean(axis=0), 0.25, atol=0.02)

    def test_ball_samples(self, rng):
        pts = sample_ball(rng, 3, 2000)
        s = pts.sum(axis=1)
        assert np.all(pts >= 0) and np.all(s <= 1 + 1e-12)
        # the l1 norm of a uniform point of B_+^m has CDF t^m, so mean m/(m+1)
        assert abs(s.mean() - 0.75) < 0.02

    def test_l1_distance(self):
        assert l1_distance([0.5, 0.3, 0.2], [1 / 3] * 3) == pytest.approx(1 / 3)
