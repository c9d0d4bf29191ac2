import numpy as np
import pytest

from drapekit.assets import humanoid, sphere
from drapekit.body import BodyModel, PosedBody, init_fit, load_body, save_body
from drapekit.errors import DimensionMismatchError, DrapekitError


@pytest.fixture(scope="module")
def figure():
    return humanoid()


def _random_params(body, rng, scale=0.1):
    return rng.uniform(-scale, scale, body.n_shape), rng.uniform(-scale, scale, body.n_pose)


def test_zero_parameters_give_rest_surface(figure):
    posed = figure.pose(figure.zero_shape(), figure.zero_pose())
    np.testing.assert_allclose(posed.vertices, figure.rest_vertices, atol=1e-14)


def test_sphere_inflates_along_normals():
    body = sphere(radius=0.2)
    posed = body.pose(np.array([0.02]), body.zero_pose())
    np.testing.assert_allclose(np.linalg.norm(posed.vertices, axis=1), 0.22, atol=1e-12)


def test_root_translation_moves_everything(figure):
    psi = figure.zero_pose()
    psi[:3] = [0.1, -0.2, 0.05]
    posed = figure.pose(figure.zero_shape(), psi)
    np.testing.assert_allclose(posed.vertices - figure.rest_vertices, np.tile(psi[:3], (figure.n_vertices, 1)),
                               atol=1e-12)


def test_jacobians_match_differences(figure, rng):
    nu, psi = _random_params(figure, rng)
    J_nu, J_psi = figure.jacobians(nu, psi)
    h = 1e-6

    def x(n, p):
        return figure.skin_vertices(figure.shape(n), p)

    for k in range(figure.n_shape):
        e = np.zeros_like(nu)
        e[k] = h
        np.testing.assert_allclose(J_nu[:, :, k], (x(nu + e, psi) - x(nu - e, psi)) / (2 * h), atol=1e-7)
    for k in range(figure.n_pose):
        e = np.zeros_like(psi)
        e[k] = h
        np.testing.assert_allclose(J_psi[:, :, k], (x(nu, psi + e) - x(nu, psi - e)) / (2 * h), atol=1e-7)


def test_pullback_contracts_jacobians(figure, rng):
    nu, psi = _random_params(figure, rng)
    g = rng.normal(size=(figure.n_vertices, 3))
    J_nu, J_psi = figure.jacobians(nu, psi)
    g_nu, g_psi = figure.pullback(nu, psi, g)
    np.testing.assert_allclose(g_nu, np.einsum("vdk,vd->k", J_nu, g))
    np.testing.assert_allclose(g_psi, np.einsum("vdp,vd->p", J_psi, g))


def test_closest_point_matches_brute_force(figure, rng):
    posed = figure.pose(*_random_params(figure, rng))
    query = rng.uniform([-0.8, 0.0, -0.3], [0.8, 1.8, 0.3], size=(150, 3))
    fast = posed.closest_point(query)
    brute = posed.closest_point_brute(query)
    np.testing.assert_allclose(np.abs(fast.distance), np.abs(brute.distance), atol=1e-12)
    np.testing.assert_allclose(fast.point, posed.contact_points(fast.face, fast.bary), atol=1e-12)


def test_inside_points_have_negative_distance():
    posed = sphere(radius=0.2).pose(np.zeros(1), np.zeros(7))
    hit = posed.closest_point(np.array([[0.0, 0.05, 0.0], [0.0, 0.4, 0.0]]))
    assert hit.distance[0] < 0 < hit.distance[1]


def _dimpled_octahedron() -> PosedBody:
    verts = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0], [0, 0, -0.3], [0, 0, -1.0]])
    faces = []
    for sx, ix in ((1, 0), (-1, 1)):
        for sy, iy in ((1, 2), (-1, 3)):
            for sz, iz in ((1, 4), (-1, 5)):
                faces.append([ix, iy, iz] if sx * sy * sz > 0 else [ix, iz, iy])
    return PosedBody(verts, np.array(faces))


def _winding_number(mesh: PosedBody, points: np.ndarray) -> np.ndarray:
    total = np.zeros(points.shape[0])
    for tri in mesh.vertices[mesh.faces]:
        a, b, c = (tri[k] - points for k in range(3))
        la, lb, lc = (np.linalg.norm(v, axis=1) for v in (a, b, c))
        num = (a * np.cross(b, c)).sum(1)
        den = la * lb * lc + (a * b).sum(1) * lc + (a * c).sum(1) * lb + (b * c).sum(1) * la
        total += 2.0 * np.arctan2(num, den)
    return total / (4.0 * np.pi)


def test_sign_is_correct_near_concave_edges_and_vertices(rng):
    mesh = _dimpled_octahedron()
    query = np.vstack([rng.uniform(-1.2, 1.2, size=(3000, 3)),
                       rng.uniform([-0.3, -0.3, -0.6], [0.3, 0.3, 0.2], size=(1000, 3))])
    inside = _winding_number(mesh, query) > 0.5
    for hit in (mesh.closest_point(query), mesh.closest_point_brute(query)):
        keep = np.abs(hit.distance) > 1e-9
        np.testing.assert_array_equal(hit.distance[keep] < 0, inside[keep])
    # just above and just below the dimple apex
    hit = mesh.closest_point(np.array([[0.0, 0.0, -0.25], [0.0, 0.0, -0.35]]))
    assert hit.distance[0] > 0 > hit.distance[1]


def test_distance_is_one_lipschitz(figure, rng):
    posed = figure.pose(*_random_params(figure, rng))
    p = rng.uniform([-0.8, 0.0, -0.3], [0.8, 1.8, 0.3], size=(400, 3))
    q = np.vstack([p[:200] + rng.normal(scale=0.01, size=(200, 3)),
                   rng.uniform([-0.8, 0.0, -0.3], [0.8, 1.8, 0.3], size=(200, 3))])
    gap = np.abs(np.abs(posed.closest_point(p).distance) - np.abs(posed.closest_point(q).distance))
    assert (gap <= np.linalg.norm(p - q, axis=1) + 1e-12).all()

    mesh = _dimpled_octahedron()
    p = rng.uniform(-1.2, 1.2, size=(2000, 3))
    q = p + rng.normal(scale=0.05, size=p.shape)
    gap = np.abs(mesh.closest_point(p).distance - mesh.closest_point(q).distance)
    assert (gap <= np.linalg.norm(p - q, axis=1) + 1e-12).all()


def test_clamp_respects_limits(figure):
    nu = np.full(figure.n_shape, 5.0)
    psi = np.full(figure.n_pose, -5.0)
    nu_c, psi_c = figure.clamp(nu, psi)
    lo, hi = figure.pose_bounds()
    assert (nu_c <= figure.shape_limits[:, 1]).all()
    np.testing.assert_allclose(psi_c, lo)
    assert (psi_c <= hi).all()


def test_wrong_vector_sizes_are_rejected(figure):
    with pytest.raises(DimensionMismatchError):
        figure.shape(np.zeros(figure.n_shape + 1))
    with pytest.raises(DimensionMismatchError):
        figure.kinematics(np.zeros(3))


def test_weights_must_be_a_partition_of_unity():
    with pytest.raises(DrapekitError):
        BodyModel(rest_vertices=np.zeros((2, 3)), faces=np.zeros((0, 3)), basis=np.zeros((0, 2, 3)),
                  parents=[-1], rest_joints=np.zeros((1, 3)), skin_weights=np.array([[1.0], [0.5]]))


def test_save_and_load_body(tmp_path):
    body = sphere(radius=0.2)
    path = tmp_path / "ball.obj"
    save_body(body, path)
    back = load_body(path)
    np.testing.assert_allclose(back.rest_vertices, body.rest_vertices, atol=1e-12)
    np.testing.assert_array_equal(back.faces, body.faces)
    np.testing.assert_allclose(back.basis, body.basis)
    assert back.basis_names == ["inflate"]
    np.testing.assert_allclose(back.shape_limits, body.shape_limits)


def test_init_fit_reduces_chamfer():
    body = sphere(radius=0.2)
    psi = body.zero_pose()
    psi[:3] = [0.03, 0.0, -0.02]
    target = body.pose(np.array([0.015]), psi).vertices
    fit = init_fit(target, body, iterations=60)
    assert fit.objective < fit.history[0]
    assert all(b <= a for a, b in zip(fit.history, fit.history[1:]))


def test_init_fit_recovers_body_scale(figure):
    nu_true = figure.zero_shape()
    nu_true[0] = 0.02
    target = figure.pose(nu_true, figure.zero_pose()).vertices
    fit = init_fit(target, figure, iterations=200)
    assert abs(fit.nu[0] - 0.02) < 0.002
    assert fit.objective < 1e-2 * fit.history[0]


def test_init_fit_can_hold_shape_fixed():
    body = sphere(radius=0.2)
    psi = body.zero_pose()
    psi[:3] = [0.02, 0.01, 0.0]
    target = body.pose(np.array([0.01]), psi).vertices
    fit = init_fit(target, body, iterations=50, nu0=np.zeros(1), fit_shape=False)
    np.testing.assert_array_equal(fit.nu, [0.0])
    assert fit.objective < fit.history[0]
    with pytest.raises(ValueError):
        init_fit(np.zeros((0, 3)), body)
