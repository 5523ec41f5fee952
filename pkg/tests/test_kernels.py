"""Parity and contract tests for the numba/numpy kernel pairs."""

import numpy as np
import pytest

from memtrack3d import kernels


needs_numba = pytest.mark.skipif(
    not kernels.NUMBA_AVAILABLE, reason="numba backend not active"
)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


class TestFps:
    def test_start_comes_first(self, rng):
        pts = rng.normal(size=(50, 3))
        idx = kernels.fps_indices_numpy(pts, 10, 3)
        assert idx[0] == 3

    def test_full_sample_is_permutation(self, rng):
        pts = rng.normal(size=(20, 3))
        idx = kernels.fps_indices_numpy(pts, 20, 0)
        assert sorted(idx) == list(range(20))

    def test_collinear_extremes(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], dtype=float)
        idx = kernels.fps_indices_numpy(pts, 2, 0)
        assert set(idx) == {0, 3}

    @needs_numba
    def test_backend_parity(self, rng):
        pts = rng.normal(size=(200, 3))
        a = kernels.fps_indices_numpy(pts, 64, 5)
        b = kernels.fps_indices_numba(pts, 64, 5)
        np.testing.assert_array_equal(a, b)


class TestKnn:
    def test_self_is_first_neighbour(self, rng):
        pts = rng.normal(size=(30, 3))
        idx = kernels.knn_indices_numpy(pts, pts, 4)
        np.testing.assert_array_equal(idx[:, 0], np.arange(30))

    def test_known_line(self):
        ref = np.array([[0, 0, 0], [1, 0, 0], [5, 0, 0]], dtype=float)
        q = np.array([[0.9, 0, 0]])
        idx = kernels.knn_indices_numpy(q, ref, 2)
        np.testing.assert_array_equal(idx[0], [1, 0])

    @needs_numba
    def test_backend_parity(self, rng):
        q = rng.normal(size=(40, 3))
        ref = rng.normal(size=(100, 3))
        a = kernels.knn_indices_numpy(q, ref, 8)
        b = kernels.knn_indices_numba(q, ref, 8)
        np.testing.assert_array_equal(a, b)


class TestPointsInBoxKernel:
    @needs_numba
    def test_backend_parity(self, rng):
        pts = rng.normal(scale=2.0, size=(500, 3))
        args = (0.3, -0.2, 0.1, 1.0, 2.0, 0.7, 0.6)
        a = kernels.points_in_box_numpy(pts, *args)
        b = kernels.points_in_box_numba(pts, *args)
        np.testing.assert_array_equal(a, b)


class TestPolygonIntersection:
    def square(self, cx, cy, half):
        return np.array(
            [
                [cx + half, cy - half],
                [cx + half, cy + half],
                [cx - half, cy + half],
                [cx - half, cy - half],
            ],
            dtype=float,
        )

    def test_identical_squares(self):
        s = self.square(0, 0, 1)
        assert kernels.polygon_intersection_area_numpy(s, s) == pytest.approx(4.0)

    def test_half_overlap(self):
        a = self.square(0, 0, 1)
        b = self.square(1, 0, 1)
        assert kernels.polygon_intersection_area_numpy(a, b) == pytest.approx(2.0)

    def test_disjoint(self):
        a = self.square(0, 0, 1)
        b = self.square(5, 0, 1)
        assert kernels.polygon_intersection_area_numpy(a, b) == 0.0

    @needs_numba
    def test_backend_parity(self, rng):
        for _ in range(50):
            a = self.square(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 2))
            theta = rng.uniform(-np.pi, np.pi)
            rot = np.array(
                [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
            )
            b = self.square(0, 0, rng.uniform(0.5, 2)) @ rot.T + rng.uniform(-1, 1, 2)
            got_np = kernels.polygon_intersection_area_numpy(a, b)
            got_nb = kernels.polygon_intersection_area_numba(a, b)
            assert got_np == pytest.approx(got_nb, abs=1e-12)
