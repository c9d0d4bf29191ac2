import numpy as np
import pytest

from drapekit.errors import LabelMismatchError
from drapekit.gradcheck import central_difference
from drapekit.loss import (
    GarmentLoss,
    Polyline,
    TargetGarment,
    boundary_loss,
    chamfer_brute,
    curvature_loss,
    interior_chamfer,
    load_target,
    metric_chamfer,
    save_target,
    seam_length_loss,
)
from drapekit.pattern import BoundaryLoop, SeamPair


def _target(polylines=None, interior=None):
    interior = np.zeros((1, 3)) if interior is None else interior
    return TargetGarment(interior=interior, polylines={pl.label: pl for pl in polylines or []})


def _segment(label="hem"):
    return Polyline(label, np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), closed=False)


def _similarity(p, angle=0.4, scale=1.3, shift=(0.2, -0.1)):
    c, s = np.cos(angle), np.sin(angle)
    return scale * p @ np.array([[c, s], [-s, c]]) + np.asarray(shift)


def _hexagon(rng):
    t = np.linspace(0, 2 * np.pi, 7)[:-1]
    p_ref = np.column_stack([np.cos(t), np.sin(t)])
    return p_ref, (BoundaryLoop(panel=0, vertices=tuple(range(6))),)


def test_boundary_on_target_is_zero():
    x = np.array([[0.2, 0.0, 0.0], [0.9, 0.0, 0.0]])
    value, grad = boundary_loss(x, {"hem": np.array([0, 1])}, _target([_segment()]))
    assert value == 0.0
    assert not grad.any()


def test_boundary_single_vertex_distance():
    x = np.array([[0.5, 0.3, 0.0]])
    value, grad = boundary_loss(x, {"hem": np.array([0])}, _target([_segment()]))
    assert value == pytest.approx(0.09)
    np.testing.assert_allclose(grad[0], [0.0, 0.6, 0.0])


def test_boundary_gradient_matches_differences(rng):
    x = rng.uniform(0.1, 0.9, size=(6, 3))
    loops = {"hem": np.array([0, 2, 4]), "waist": np.array([1, 3])}
    waist = Polyline("waist", np.array([[0.0, 1.0, 0.0], [1.0, 1.0, 0.5], [0.0, 1.0, 1.0]]), closed=True)
    target = _target([_segment(), waist])
    _, grad = boundary_loss(x, loops, target)
    fd = central_difference(lambda v: boundary_loss(v.reshape(x.shape), loops, target)[0], x.ravel())
    np.testing.assert_allclose(grad.ravel(), fd, rtol=1e-6, atol=1e-9)


def test_unmatched_labels_are_listed():
    with pytest.raises(LabelMismatchError) as err:
        boundary_loss(np.zeros((2, 3)), {"cuff": np.array([0])}, _target([_segment()]))
    assert err.value.missing_targets == ["cuff"]
    assert err.value.missing_loops == ["hem"]


def test_chamfer_of_identical_sets_is_zero(rng):
    a = rng.normal(size=(40, 3))
    value, grad = interior_chamfer(a, a.copy())
    assert value == 0.0
    assert not grad.any()


def test_chamfer_of_two_points():
    value, grad = interior_chamfer(np.array([[0.0, 0.0, 0.0]]), np.array([[0.0, 0.0, 0.3]]))
    assert value == pytest.approx(2 * 0.09)
    np.testing.assert_allclose(grad[0], [0.0, 0.0, -1.2])


def test_chamfer_matches_brute_force(rng):
    a = rng.uniform(size=(500, 3))
    b = rng.uniform(size=(500, 3))
    value, _ = interior_chamfer(a, b)
    assert value == pytest.approx(chamfer_brute(a, b), rel=1e-12)
    assert value == pytest.approx(interior_chamfer(b, a)[0], rel=1e-12)


def test_chamfer_gradient_matches_differences(rng):
    a = rng.uniform(size=(12, 3))
    b = rng.uniform(size=(9, 3))
    _, grad = interior_chamfer(a, b)
    fd = central_difference(lambda v: interior_chamfer(v.reshape(a.shape), b)[0], a.ravel())
    np.testing.assert_allclose(grad.ravel(), fd, atol=1e-8)


def test_metric_chamfer_of_translated_grid():
    u, v = np.meshgrid(np.linspace(0, 1, 11), np.linspace(0, 1, 11))
    a = np.column_stack([u.ravel(), v.ravel(), np.zeros(u.size)])
    t = np.array([0.001, 0.002, 0.0])
    assert metric_chamfer(a, a) == 0.0
    assert metric_chamfer(a, a + t) == pytest.approx(2 * (t @ t) * 1e6)
    assert metric_chamfer(a, a + t, units="m") == pytest.approx(2 * (t @ t))
    assert metric_chamfer(a[:30], a[5:40] + t, units="m") == pytest.approx(chamfer_brute(a[:30], a[5:40] + t))


def test_seam_loss_variants():
    p = np.array([[0.0, 0.0], [1.1, 0.0], [3.0, 0.0], [4.0, 0.0]])
    seam = SeamPair(panel_a=0, side_a=(0, 1), panel_b=1, side_b=(2, 3))
    signed, _ = seam_length_loss(p, [seam], signed=True)
    squared, _ = seam_length_loss(p, [seam])
    assert signed == pytest.approx(0.21)
    assert squared == pytest.approx(0.21 ** 2)
    mirrored = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [3.0, 1.0]])
    assert seam_length_loss(mirrored, [seam])[0] == 0.0


@pytest.mark.parametrize("signed", [False, True])
def test_seam_gradient_matches_differences(signed, rng):
    p = rng.normal(size=(8, 2))
    seams = [SeamPair(panel_a=0, side_a=(0, 1, 2), panel_b=1, side_b=(5, 4, 3)),
             SeamPair(panel_a=0, side_a=(6, 7), panel_b=1, side_b=(2, 3))]
    _, grad = seam_length_loss(p, seams, signed)
    fd = central_difference(lambda v: seam_length_loss(v.reshape(p.shape), seams, signed)[0], p.ravel())
    np.testing.assert_allclose(grad.ravel(), fd, rtol=1e-8, atol=1e-8)


def test_curvature_zero_at_reference_and_under_similarity(rng):
    p_ref, loops = _hexagon(rng)
    assert curvature_loss(p_ref, p_ref, loops)[0] == pytest.approx(0.0, abs=1e-28)
    assert curvature_loss(_similarity(p_ref), p_ref, loops)[0] == pytest.approx(0.0, abs=1e-24)


def test_curvature_invariant_to_joint_similarity(rng):
    p_ref, loops = _hexagon(rng)
    p = p_ref + 0.1 * rng.normal(size=p_ref.shape)
    value, _ = curvature_loss(p, p_ref, loops)
    assert value > 0
    assert curvature_loss(_similarity(p), _similarity(p_ref), loops)[0] == pytest.approx(value * 1.3 ** 2, rel=1e-10)
    assert curvature_loss(_similarity(p, scale=1.0), _similarity(p_ref, scale=1.0), loops)[0] == pytest.approx(
        value, rel=1e-10)


def test_curvature_gradient_matches_differences(rng):
    p_ref, loops = _hexagon(rng)
    p = p_ref + 0.1 * rng.normal(size=p_ref.shape)
    weights = rng.uniform(0.5, 2.0, size=6)
    _, grad = curvature_loss(p, p_ref, loops, weights)
    fd = central_difference(lambda v: curvature_loss(v.reshape(p.shape), p_ref, loops, weights)[0], p.ravel())
    np.testing.assert_allclose(grad.ravel(), fd, rtol=1e-5, atol=1e-9)


def _garment_loss(rng, **weights):
    p_ref, loops = _hexagon(rng)
    target = _target([_segment()], interior=rng.uniform(size=(20, 3)))
    seams = (SeamPair(panel_a=0, side_a=(0, 1), panel_b=0, side_b=(3, 4)),)
    return GarmentLoss(target=target, boundary_loops={"hem": np.array([0, 1])}, seams=seams,
                       pattern_loops=loops, reference=p_ref, **weights)


def test_all_zero_weights_give_zero(rng):
    loss = _garment_loss(rng, rho=0.0, sigma=0.0, alpha_reg=0.0, beta=0.0)
    x = rng.uniform(size=(10, 3))
    p = loss.reference + 0.05
    res = loss(x, p)
    assert res.value == 0.0
    assert not res.grad_x.any() and not res.grad_p.any()


def test_total_is_weighted_sum_of_terms(rng):
    x = rng.uniform(size=(10, 3))
    loss = _garment_loss(rng, rho=0.7, sigma=2.0, alpha_reg=0.3, beta=0.5)
    p = loss.reference + 0.05 * rng.normal(size=loss.reference.shape)
    res = loss(x, p)
    b, gb = boundary_loss(x, loss.boundary_loops, loss.target)
    i, gi = interior_chamfer(x, loss.target.interior)
    s, gs = seam_length_loss(p, loss.seams)
    c, gc = curvature_loss(p, loss.reference, loss.pattern_loops)
    assert res.value == pytest.approx(0.7 * b + 2.0 * i + 0.3 * s + 0.5 * c, rel=1e-12)
    np.testing.assert_allclose(res.grad_x, 0.7 * gb + 2.0 * gi, atol=1e-14)
    np.testing.assert_allclose(res.grad_p, 0.3 * gs + 0.5 * gc, atol=1e-14)

    only_sigma = _garment_loss(rng, rho=0.0, sigma=2.0, alpha_reg=0.0, beta=0.0)
    only_sigma.target = loss.target
    assert only_sigma(x, p).value == pytest.approx(2.0 * i)


def test_target_round_trip(tmp_path, rng):
    mask = rng.random(15) > 0.2
    target = TargetGarment(interior=rng.normal(size=(15, 3)), polylines={"hem": _segment()}, mask=mask)
    path = tmp_path / "target.obj"
    save_target(target, path)
    back = load_target(path)
    np.testing.assert_allclose(back.interior, target.interior)
    np.testing.assert_array_equal(back.mask, mask)
    assert not back.polylines["hem"].closed
    np.testing.assert_allclose(back.polylines["hem"].points, _segment().points)
    assert back.valid_interior.shape[0] == mask.sum()


def test_empty_target_is_rejected():
    with pytest.raises(ValueError):
        TargetGarment(interior=np.zeros((0, 3)))
