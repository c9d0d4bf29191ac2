import math

import numpy as np
import pytest

from drapekit.errors import (
    DegenerateElementError,
    InvertedElementError,
    NonManifoldError,
    PatternError,
    PatternParseError,
)
from drapekit.pattern import (
    PanelPlacement,
    SeamPair,
    boundary_edge_count,
    build_rest_shape,
    extract_boundary_loops,
    interior_edges,
    load_pattern,
    load_seams,
    make_pattern,
    place_panels,
    save_pattern,
    triangle_quality,
    weld_map,
)


def _two_squares(with_seam=True):
    v = [[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [3, 0], [3, 1], [2, 1]]
    f = [[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]]
    seams = [SeamPair(panel_a=0, side_a=(1, 2), panel_b=1, side_b=(4, 7))] if with_seam else []
    return make_pattern(v, f, seams)


def _annulus():
    v = [[0, 0], [3, 0], [3, 3], [0, 3], [1, 1], [2, 1], [2, 2], [1, 2]]
    f = [[0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]]
    return make_pattern(v, f)


def test_single_triangle_has_one_panel_and_loop(triangle):
    assert triangle.n_panels == 1
    assert len(triangle.boundary_loops) == 1
    assert triangle.boundary_loops[0].vertices == (0, 1, 2)


def test_disjoint_triangles_are_separate_panels():
    mesh = make_pattern([[0, 0], [1, 0], [0, 1], [2, 0], [3, 0], [2, 1]], [[0, 1, 2], [3, 4, 5]])
    assert mesh.n_panels == 2
    assert [lp.panel for lp in mesh.boundary_loops] == [0, 1]


def test_clockwise_triangle_is_rejected():
    with pytest.raises(InvertedElementError) as err:
        make_pattern([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert err.value.faces == [0]
    assert "inverted rest element" in str(err.value)


def test_collinear_triangle_is_degenerate():
    with pytest.raises(DegenerateElementError):
        make_pattern([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_square_loop_is_ccw_from_lowest_vertex(unit_square):
    loops = extract_boundary_loops(unit_square)
    assert len(loops) == 1
    assert loops[0].vertices == (0, 1, 2, 3)
    assert not loops[0].is_hole


def test_annulus_has_outer_and_hole_loop():
    mesh = _annulus()
    outer, hole = mesh.boundary_loops
    assert outer.vertices == (0, 1, 2, 3) and not outer.is_hole
    assert hole.vertices == (4, 7, 6, 5) and hole.is_hole
    assert sum(len(lp) for lp in mesh.boundary_loops) == boundary_edge_count(mesh.faces)


def test_loops_grouped_by_panel():
    mesh = _two_squares(with_seam=False)
    assert [lp.panel for lp in mesh.boundary_loops] == [0, 1]
    assert mesh.boundary_loops[1].vertices == (4, 5, 6, 7)


def test_edge_shared_by_three_faces_is_non_manifold():
    v = [[0, 0], [1, 0], [0.5, 1], [0.5, -1], [0.5, 2]]
    with pytest.raises(NonManifoldError):
        make_pattern(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])


def test_rest_shape_of_unit_right_triangle():
    mesh = make_pattern([[1, 0], [0, 1], [0, 0]], [[0, 1, 2]])
    rest = build_rest_shape(mesh, density=0.15)
    np.testing.assert_allclose(rest.Dbar[0], np.eye(2))
    np.testing.assert_allclose(rest.Dbar_inv[0], np.eye(2))
    assert rest.area[0] == pytest.approx(0.5)
    np.testing.assert_allclose(rest.mass, [0.025, 0.025, 0.025])


def test_rest_shape_inverse_and_mass_sum(make_grid, rng):
    v, f = make_grid(6, 5, 0.6, 0.5)
    v = v + rng.uniform(-0.02, 0.02, size=v.shape)
    mesh = make_pattern(v, f)
    rest = build_rest_shape(mesh, density=0.2)
    eye = np.einsum("fij,fjk->fik", rest.Dbar, rest.Dbar_inv)
    np.testing.assert_allclose(eye, np.broadcast_to(np.eye(2), eye.shape), atol=1e-12)
    assert rest.mass.sum() == pytest.approx(0.2 * rest.total_area, rel=1e-9)


def test_rest_shape_needs_positive_density(triangle):
    with pytest.raises(ValueError):
        build_rest_shape(triangle, density=0.0)


def test_triangle_quality_reference_values():
    eq = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    assert triangle_quality(eq, np.array([[0, 1, 2]])).min == pytest.approx(1.0)
    right = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert triangle_quality(right, np.array([[0, 1, 2]])).mean == pytest.approx(0.8660254, abs=1e-6)
    flat = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    assert triangle_quality(flat, np.array([[0, 1, 2]])).min == 0.0


def test_triangle_quality_is_scale_invariant(grid):
    q1 = triangle_quality(grid.vertices_2d, grid.faces).per_face
    q2 = triangle_quality(7.5 * grid.vertices_2d, grid.faces).per_face
    np.testing.assert_allclose(q1, q2, rtol=1e-12)


def test_round_trip_keeps_geometry_and_seams(tmp_path):
    mesh = _two_squares()
    path = tmp_path / "two.obj"
    save_pattern(mesh, path)
    assert (tmp_path / "two.seams").exists()
    back = load_pattern(path)
    np.testing.assert_allclose(back.vertices_2d, mesh.vertices_2d, atol=1e-9)
    np.testing.assert_array_equal(back.faces, mesh.faces)
    assert back.seams == mesh.seams


def test_face_without_texture_coordinate_fails_to_parse(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1 2 3\n")
    with pytest.raises(PatternParseError) as err:
        load_pattern(path)
    assert err.value.line_no == 5


def test_seam_line_with_odd_entries_fails(tmp_path):
    path = tmp_path / "x.seams"
    path.write_text("seam 0 1 2 1 4\n")
    with pytest.raises(PatternParseError):
        load_seams(path)


def test_seam_chains_must_match():
    with pytest.raises(PatternError):
        SeamPair(panel_a=0, side_a=(1, 2, 3), panel_b=1, side_b=(4, 7))


def test_seam_on_interior_edge_is_rejected():
    v = [[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [3, 0], [3, 1], [2, 1]]
    f = [[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]]
    with pytest.raises(PatternError):
        make_pattern(v, f, [SeamPair(panel_a=0, side_a=(0, 2), panel_b=1, side_b=(4, 7))])


def test_weld_map_merges_seam_vertices():
    sim_index, n_sim = weld_map(_two_squares())
    assert n_sim == 6
    np.testing.assert_array_equal(sim_index, [0, 1, 2, 3, 1, 4, 5, 2])


def test_interior_edges_of_square(unit_square):
    np.testing.assert_array_equal(interior_edges(unit_square.faces), [[2, 0, 1, 3]])


def test_with_vertices_rejects_flipped_panel(unit_square):
    flipped = unit_square.vertices_2d * np.array([-1.0, 1.0])
    with pytest.raises(InvertedElementError):
        unit_square.with_vertices(flipped)


@pytest.mark.parametrize("placement", [
    PanelPlacement(kind="plane", origin=(0.1, 0.5, 0.0), axis_v=(0.0, 0.0, -1.0), anchor=(0.2, 0.1)),
    PanelPlacement(kind="cylinder", origin=(0.0, 0.5, 0.0), radius=0.2, angle0=0.7, anchor=(0.1, 0.0)),
])
def test_placement_jacobian_matches_differences(placement, rng):
    uv = rng.uniform(0.0, 0.3, size=(5, 2))
    _, jac = placement.apply(uv)
    h = 1e-6
    for k in range(2):
        step = np.zeros(2)
        step[k] = h
        fd = (placement.apply(uv + step)[0] - placement.apply(uv - step)[0]) / (2 * h)
        np.testing.assert_allclose(jac[:, :, k], fd, atol=1e-8)


def test_embedding_averages_welded_vertices():
    mesh = _two_squares()
    sim_index, n_sim = weld_map(mesh)
    emb = place_panels(mesh, {0: PanelPlacement(), 1: PanelPlacement(origin=(-1.0, 0.0, 0.0))}, sim_index, n_sim)
    # panel 1 shifted left by one: vertex 4 lands on vertex 1
    np.testing.assert_allclose(emb.positions[1], [1.0, 0.0, 0.0])
    g = np.zeros((n_sim, 3))
    g[1] = [1.0, 0.0, 0.0]
    grad = emb.pullback(g)
    np.testing.assert_allclose(grad[1], [0.5, 0.0])
    np.testing.assert_allclose(grad[4], [0.5, 0.0])
