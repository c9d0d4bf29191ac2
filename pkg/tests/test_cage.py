import json

import numpy as np
import pytest

from drapekit.cage import build_cage, mvc_weights, select_handles
from drapekit.errors import CageContainmentError, CageError, DimensionMismatchError, InvertedElementError
from drapekit.pattern import SeamPair, make_pattern

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
L_SHAPE = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]])


@pytest.fixture
def rectangle(make_grid):
    return make_pattern(*make_grid(4, 3, 0.4, 0.3))


def _loop_points(mesh):
    loop = mesh.boundary_loops[0]
    return np.asarray(loop.vertices), mesh.vertices_2d[list(loop.vertices)]


def test_rectangle_selects_its_corners(rectangle):
    ids, pts = _loop_points(rectangle)
    assert sorted(ids[select_handles(pts)].tolist()) == [0, 4, 15, 19]


def test_handle_selection_is_rigid_invariant(rectangle):
    _, pts = _loop_points(rectangle)
    c, s = np.cos(0.7), np.sin(0.7)
    moved = pts @ np.array([[c, s], [-s, c]]) + np.array([3.0, -1.0])
    np.testing.assert_array_equal(select_handles(moved), select_handles(pts))


def test_regular_polygon_is_all_hull():
    t = 2 * np.pi * np.arange(64) / 64
    assert select_handles(np.column_stack([np.cos(t), np.sin(t)])).size == 64


def test_short_loop_is_rejected():
    with pytest.raises(CageError):
        select_handles(np.zeros((2, 2)))


def test_square_center_weights():
    np.testing.assert_allclose(mvc_weights(np.array([[0.5, 0.5]]), SQUARE), [[0.25, 0.25, 0.25, 0.25]], atol=1e-15)


def test_handle_and_edge_rows():
    W = mvc_weights(np.array([[1.0, 1.0], [0.25, 0.0]]), SQUARE)
    np.testing.assert_allclose(W[0], [0, 0, 1, 0])
    np.testing.assert_allclose(W[1], [0.75, 0.25, 0, 0])


def test_concave_cage_reproduces_interior_points(rng):
    pts = rng.uniform(0.05, 0.95, size=(30, 2))
    pts[::2] += [0.0, 1.0]           # upper arm of the L
    W = mvc_weights(pts, L_SHAPE)
    np.testing.assert_allclose(W.sum(1), 1.0, atol=1e-12)
    np.testing.assert_allclose(W @ L_SHAPE, pts, atol=1e-9)


def test_point_outside_cage_is_reported():
    with pytest.raises(CageContainmentError) as err:
        mvc_weights(np.array([[0.5, 0.5], [1.5, 1.5]]), L_SHAPE, vertex_ids=[7, 8])
    assert err.value.vertex == 8


def test_cage_reproduces_and_is_linear(rectangle, rng):
    cage = build_cage(rectangle)
    assert cage.n_handles == 4
    W = cage.panels[0].W
    np.testing.assert_allclose(W.sum(1), 1.0, atol=1e-9)
    np.testing.assert_allclose(cage.deform(cage.zeta0), rectangle.vertices_2d, atol=1e-12)
    np.testing.assert_allclose(cage.deform(1.2 * cage.zeta0), 1.2 * rectangle.vertices_2d, atol=1e-12)
    t = np.array([0.3, -0.2])
    np.testing.assert_allclose(cage.deform(cage.zeta0 + t), rectangle.vertices_2d + t, atol=1e-12)
    z1, z2 = rng.normal(size=(2, 4, 2))
    np.testing.assert_allclose(cage.deform(0.3 * z1 + 0.7 * z2, check=False),
                               0.3 * cage.deform(z1, check=False) + 0.7 * cage.deform(z2, check=False), atol=1e-12)


def test_chain_gradient_is_transpose_action(rectangle, rng):
    cage = build_cage(rectangle)
    g = rng.normal(size=(rectangle.n_vertices, 2))
    dz = rng.normal(size=cage.zeta0.shape)
    lhs = float((g * (cage.deform(cage.zeta0 + dz, check=False) - cage.deform(cage.zeta0))).sum())
    rhs = float((cage.chain_gradient(g) * dz).sum())
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert not cage.chain_gradient(np.zeros_like(g)).any()


def test_handles_on_every_vertex_pass_gradients_through(triangle):
    cage = build_cage(triangle)
    np.testing.assert_allclose(cage.panels[0].W, np.eye(3), atol=1e-15)
    g = np.arange(6.0).reshape(3, 2)
    np.testing.assert_allclose(cage.chain_gradient(g), g)


def test_annulus_hole_follows_outer_cage():
    v = [[0, 0], [3, 0], [3, 3], [0, 3], [1, 1], [2, 1], [2, 2], [1, 2]]
    f = [[0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]]
    mesh = make_pattern(v, f)
    cage = build_cage(mesh)
    assert sorted(cage.panels[0].handles.tolist()) == [0, 1, 2, 3]
    np.testing.assert_allclose(cage.deform(cage.zeta0), mesh.vertices_2d, atol=1e-12)


def test_mirrored_panel_is_rejected(rectangle):
    cage = build_cage(rectangle)
    with pytest.raises(InvertedElementError):
        cage.deform(cage.zeta0 * np.array([-1.0, 1.0]))


def test_bad_handle_vectors(rectangle):
    cage = build_cage(rectangle)
    with pytest.raises(DimensionMismatchError):
        cage.deform(np.zeros((3, 2)))
    with pytest.raises(CageError):
        cage.deform(np.full((4, 2), np.nan))


def test_symmetrize_mirrors_paired_handles(rng, tmp_path):
    v = [[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [3, 0], [3, 1], [2, 1]]
    f = [[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]]
    mesh = make_pattern(v, f, [SeamPair(panel_a=0, side_a=(1, 2), panel_b=1, side_b=(4, 7))])
    cage = build_cage(mesh)
    g = rng.normal(size=(cage.n_handles, 2))
    out = cage.symmetrize(g, [((0, 1), (1, 0))])
    np.testing.assert_allclose(out[1], out[4] * np.array([-1.0, 1.0]))
    np.testing.assert_allclose(out[[0, 2, 3, 5, 6, 7]], g[[0, 2, 3, 5, 6, 7]])

    cage.export(tmp_path / "cage.json")
    data = json.loads((tmp_path / "cage.json").read_text())
    assert [p["panel"] for p in data["panels"]] == [0, 1]
    assert data["panels"][1]["handles"] == [4, 5, 6, 7]
