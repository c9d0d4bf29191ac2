import numpy as np
import pytest

from drapekit.geometry import (
    closest_point_on_polyline,
    closest_point_on_segments,
    closest_point_on_triangles,
    face_normals,
)

TRI = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def _query(points):
    p = np.asarray(points, dtype=np.float64)
    n = p.shape[0]
    return closest_point_on_triangles(p, np.tile(TRI[0], (n, 1)), np.tile(TRI[1], (n, 1)), np.tile(TRI[2], (n, 1)))


@pytest.mark.parametrize("p, expected", [
    ((0.2, 0.2, 1.0), (0.2, 0.2, 0.0)),
    ((-1.0, -1.0, 0.0), (0.0, 0.0, 0.0)),
    ((2.0, -1.0, 0.0), (1.0, 0.0, 0.0)),
    ((0.5, -1.0, 0.3), (0.5, 0.0, 0.0)),
    ((1.0, 1.0, 0.0), (0.5, 0.5, 0.0)),
    ((-0.5, 0.5, 0.0), (0.0, 0.5, 0.0)),
    ((-0.1, 3.0, 0.0), (0.0, 1.0, 0.0)),
])
def test_closest_point_regions(p, expected):
    points, bary = _query([p])
    np.testing.assert_allclose(points[0], expected, atol=1e-14)
    np.testing.assert_allclose(bary[0].sum(), 1.0)
    np.testing.assert_allclose(bary[0] @ TRI, expected, atol=1e-14)


def test_closest_point_is_optimal(rng):
    p = rng.uniform(-1.5, 2.0, size=(200, 3))
    q, _ = _query(p)
    # variational inequality for the projection onto a convex set, checked on a sample of the triangle
    s = rng.dirichlet(np.ones(3), size=300) @ TRI
    inner = np.einsum("nd,nsd->ns", p - q, s[None] - q[:, None])
    assert inner.max() < 1e-12


def test_segments_clamp_parameter():
    feet, t = closest_point_on_segments(np.array([[2.0, 1.0], [-1.0, 0.0], [0.5, 3.0]]),
                                        np.array([0.0, 0.0]), np.array([1.0, 0.0]))
    np.testing.assert_allclose(t, [1.0, 0.0, 0.5])
    np.testing.assert_allclose(feet, [[1.0, 0.0], [0.0, 0.0], [0.5, 0.0]])


def test_closed_polyline_uses_closing_segment():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    feet, seg = closest_point_on_polyline(np.array([[-0.5, 0.5]]), square, closed=True)
    np.testing.assert_allclose(feet, [[0.0, 0.5]])
    assert seg[0] == 3
    feet, _ = closest_point_on_polyline(np.array([[-0.5, 0.5]]), square, closed=False)
    assert np.linalg.norm(feet[0] - [-0.5, 0.5]) > 0.5


def test_face_normals_and_areas():
    normals, areas = face_normals(TRI, np.array([[0, 1, 2], [0, 2, 1]]))
    np.testing.assert_allclose(normals, [[0, 0, 1], [0, 0, -1]])
    np.testing.assert_allclose(areas, [0.5, 0.5])
