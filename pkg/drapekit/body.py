"""
Parametric body: shape basis + joint tree with linear blend skinning.

Pose vector layout: psi = [root translation (3) | Euler XYZ per joint (3J) | bone-length channel per joint (J)].
Bone channel l_a scales the rest offset from the parent joint by (1 + l_a).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import Bounds, minimize
from scipy.spatial import cKDTree

from .errors import DimensionMismatchError, DrapekitError
from .geometry import closest_point_on_triangles, edge_pseudo_normals, face_normals, vertex_pseudo_normals

logger = logging.getLogger(__name__)

_FEATURE_EPS = 1e-12


# ---------- rotations ----------

def _rx(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _drx(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _dry(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _drz(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def euler_xyz(angles: np.ndarray) -> np.ndarray:
    """Intrinsic XYZ: R = Rx Ry Rz."""
    return _rx(angles[0]) @ _ry(angles[1]) @ _rz(angles[2])


def euler_xyz_derivatives(angles: np.ndarray) -> list[np.ndarray]:
    rx, ry, rz = _rx(angles[0]), _ry(angles[1]), _rz(angles[2])
    return [
        _drx(angles[0]) @ ry @ rz,
        rx @ _dry(angles[1]) @ rz,
        rx @ ry @ _drz(angles[2]),
    ]


# ---------- posed body / queries ----------

@dataclass(frozen=True)
class ClosestHit:
    point: np.ndarray      # (n, 3)
    normal: np.ndarray     # (n, 3) face normal at the hit
    face: np.ndarray       # (n,)
    bary: np.ndarray       # (n, 3)
    distance: np.ndarray   # (n,) signed by the face normal


class PosedBody:
    """Posed body surface with a centroid tree for exact closest-point queries."""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray, k_candidates: int = 16):
        self.vertices = np.asarray(vertices, dtype=np.float64)
        self.faces = np.asarray(faces, dtype=np.int64)
        if not np.isfinite(self.vertices).all():
            raise DrapekitError("posed body has non-finite vertices")
        self.face_normals, self.face_areas = face_normals(self.vertices, self.faces)
        self.vertex_normals = vertex_pseudo_normals(self.vertices, self.faces, self.face_normals)
        self.edge_normals = edge_pseudo_normals(self.faces, self.face_normals)
        tri = self.vertices[self.faces]
        self.centroids = tri.mean(axis=1)
        self.face_radius = np.linalg.norm(tri - self.centroids[:, None, :], axis=2).max(axis=1)
        self.max_radius = float(self.face_radius.max()) if self.faces.size else 0.0
        self.tree = cKDTree(self.centroids)
        self.k = min(k_candidates, self.faces.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    def _eval_faces(self, points: np.ndarray, faces: np.ndarray):
        tri = self.vertices[self.faces[faces]]
        feet, bary = closest_point_on_triangles(points, tri[:, 0], tri[:, 1], tri[:, 2])
        d = np.linalg.norm(points - feet, axis=1)
        return feet, bary, d

    def _inside_sign(self, query: np.ndarray, feet: np.ndarray, face: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """-1 inside, +1 outside. Feet on an edge or vertex use the pseudo-normal of that feature."""
        zero = bary <= _FEATURE_EPS
        n_zero = zero.sum(1)
        normal = self.face_normals[face].copy()
        on_edge = n_zero == 1
        if on_edge.any():
            k = np.argmax(zero[on_edge], axis=1)
            normal[on_edge] = self.edge_normals[face[on_edge], k]
        on_vertex = n_zero >= 2
        if on_vertex.any():
            k = np.argmax(bary[on_vertex], axis=1)
            normal[on_vertex] = self.vertex_normals[self.faces[face[on_vertex], k]]
        return np.where(((query - feet) * normal).sum(1) < 0.0, -1.0, 1.0)

    def closest_point(self, query: np.ndarray) -> ClosestHit:
        query = np.atleast_2d(np.asarray(query, dtype=np.float64))
        n = query.shape[0]
        cd, cand = self.tree.query(query, k=self.k)
        cd = cd.reshape(n, -1)
        cand = cand.reshape(n, -1)
        rep = np.repeat(query, cand.shape[1], axis=0)
        feet, bary, d = self._eval_faces(rep, cand.ravel())
        d = d.reshape(n, -1)
        best = np.argmin(d, axis=1)
        rows = np.arange(n)
        face = cand[rows, best]
        dist = d[rows, best]
        feet = feet.reshape(n, -1, 3)[rows, best]
        bary = bary.reshape(n, -1, 3)[rows, best]

        # exact when no unseen face can be closer than the best hit
        unsure = np.flatnonzero(dist > cd[:, -1] - self.max_radius) if self.k < self.n_faces else np.array([], int)
        for i in unsure:
            cands = np.asarray(self.tree.query_ball_point(query[i], dist[i] + self.max_radius), dtype=np.int64)
            if cands.size == 0:
                continue
            f_feet, f_bary, f_d = self._eval_faces(np.repeat(query[i:i + 1], cands.size, axis=0), cands)
            j = int(np.argmin(f_d))
            if f_d[j] < dist[i]:
                face[i], dist[i], feet[i], bary[i] = cands[j], f_d[j], f_feet[j], f_bary[j]

        sign = self._inside_sign(query, feet, face, bary)
        return ClosestHit(point=feet, normal=self.face_normals[face], face=face, bary=bary, distance=sign * dist)

    def closest_point_brute(self, query: np.ndarray) -> ClosestHit:
        query = np.atleast_2d(np.asarray(query, dtype=np.float64))
        n, f = query.shape[0], self.n_faces
        rep = np.repeat(query, f, axis=0)
        feet, bary, d = self._eval_faces(rep, np.tile(np.arange(f), n))
        d = d.reshape(n, f)
        best = np.argmin(d, axis=1)
        rows = np.arange(n)
        feet = feet.reshape(n, f, 3)[rows, best]
        bary = bary.reshape(n, f, 3)[rows, best]
        normal = self.face_normals[best]
        sign = self._inside_sign(query, feet, best, bary)
        return ClosestHit(point=feet, normal=normal, face=best, bary=bary, distance=sign * d[rows, best])

    def contact_points(self, face: np.ndarray, bary: np.ndarray) -> np.ndarray:
        tri = self.vertices[self.faces[face]]
        return np.einsum("nk,nkd->nd", bary, tri)


# ---------- body model ----------

@dataclass
class Kinematics:
    R: np.ndarray      # (J, 3, 3) world rotations
    p: np.ndarray      # (J, 3) world joint positions
    local: np.ndarray  # (J, 3, 3) local rotations


@dataclass
class BodyModel:
    rest_vertices: np.ndarray           # (Vb, 3)
    faces: np.ndarray                   # (Fb, 3)
    basis: np.ndarray                   # (K, Vb, 3)
    parents: np.ndarray                 # (J,) parent index, -1 for root
    rest_joints: np.ndarray             # (J, 3)
    skin_weights: np.ndarray            # (Vb, J)
    joint_names: list[str] = field(default_factory=list)
    basis_names: list[str] = field(default_factory=list)
    angle_limits: np.ndarray | None = None   # (J, 3, 2)
    bone_limits: np.ndarray | None = None    # (J, 2)
    shape_limits: np.ndarray | None = None   # (K, 2)
    translation_limit: float = 1.0

    def __post_init__(self):
        self.rest_vertices = np.asarray(self.rest_vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.basis = np.asarray(self.basis, dtype=np.float64).reshape(-1, *self.rest_vertices.shape)
        self.parents = np.asarray(self.parents, dtype=np.int64)
        self.rest_joints = np.asarray(self.rest_joints, dtype=np.float64)
        self.skin_weights = np.asarray(self.skin_weights, dtype=np.float64)
        J = self.n_joints
        if self.skin_weights.shape != (self.n_vertices, J):
            raise DimensionMismatchError(f"skin weights {self.skin_weights.shape} != ({self.n_vertices}, {J})")
        if (self.skin_weights < 0).any() or not np.allclose(self.skin_weights.sum(1), 1.0, atol=1e-9):
            raise DrapekitError("skinning weights must be non-negative with rows summing to 1")
        if self.parents[0] != -1 or any(self.parents[a] >= a or self.parents[a] < 0 for a in range(1, J)):
            raise DrapekitError("skeleton must be a tree with parents listed before children")
        if not self.joint_names:
            self.joint_names = [f"joint{a}" for a in range(J)]
        if not self.basis_names:
            self.basis_names = [f"shape{k}" for k in range(self.n_shape)]
        if self.angle_limits is None:
            self.angle_limits = np.tile(np.array([-np.pi, np.pi]), (J, 3, 1))
        if self.bone_limits is None:
            self.bone_limits = np.tile(np.array([-0.5, 0.5]), (J, 1))
        if self.shape_limits is None:
            self.shape_limits = np.tile(np.array([-1.0, 1.0]), (self.n_shape, 1))
        self.angle_limits = np.asarray(self.angle_limits, dtype=np.float64)
        self.bone_limits = np.asarray(self.bone_limits, dtype=np.float64)
        self.shape_limits = np.asarray(self.shape_limits, dtype=np.float64)
        self._children = [np.flatnonzero(self.parents == a) for a in range(J)]
        self._subtree = [self._collect_subtree(a) for a in range(J)]

    # sizes
    @property
    def n_vertices(self) -> int:
        return int(self.rest_vertices.shape[0])

    @property
    def n_joints(self) -> int:
        return int(self.parents.shape[0])

    @property
    def n_shape(self) -> int:
        return int(self.basis.shape[0])

    @property
    def n_pose(self) -> int:
        return 3 + 4 * self.n_joints

    def _collect_subtree(self, a: int) -> np.ndarray:
        out, stack = [], [a]
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(int(c) for c in np.flatnonzero(self.parents == j))
        return np.array(sorted(out), dtype=np.int64)

    def subtree(self, a: int) -> np.ndarray:
        return self._subtree[a]

    def zero_shape(self) -> np.ndarray:
        return np.zeros(self.n_shape)

    def zero_pose(self) -> np.ndarray:
        return np.zeros(self.n_pose)

    def split_pose(self, psi: np.ndarray):
        psi = np.asarray(psi, dtype=np.float64)
        if psi.shape != (self.n_pose,):
            raise DimensionMismatchError(f"pose vector has {psi.size} entries, expected {self.n_pose}")
        J = self.n_joints
        return psi[:3], psi[3:3 + 3 * J].reshape(J, 3), psi[3 + 3 * J:]

    def pose_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        J = self.n_joints
        lo = np.concatenate([np.full(3, -self.translation_limit), self.angle_limits[:, :, 0].ravel(),
                             self.bone_limits[:, 0]])
        hi = np.concatenate([np.full(3, self.translation_limit), self.angle_limits[:, :, 1].ravel(),
                             self.bone_limits[:, 1]])
        return lo, hi

    # forward maps
    def shape(self, nu: np.ndarray) -> np.ndarray:
        nu = np.asarray(nu, dtype=np.float64)
        if nu.shape != (self.n_shape,):
            raise DimensionMismatchError(f"shape vector has {nu.size} entries, expected {self.n_shape}")
        return self.rest_vertices + np.tensordot(nu, self.basis, axes=1)

    def kinematics(self, psi: np.ndarray) -> Kinematics:
        tau, angles, bones = self.split_pose(psi)
        J = self.n_joints
        R = np.empty((J, 3, 3))
        p = np.empty((J, 3))
        local = np.empty((J, 3, 3))
        for a in range(J):
            local[a] = euler_xyz(angles[a])
            par = self.parents[a]
            if par < 0:
                R[a] = local[a]
                p[a] = self.rest_joints[a] + tau
            else:
                offset = self.rest_joints[a] - self.rest_joints[par]
                R[a] = R[par] @ local[a]
                p[a] = p[par] + (1.0 + bones[a]) * (R[par] @ offset)
        return Kinematics(R=R, p=p, local=local)

    def _per_joint_positions(self, rest: np.ndarray, kin: Kinematics) -> np.ndarray:
        """x_ij = R_j (X_i - J_j) + p_j, shape (Vb, J, 3)."""
        rel = rest[:, None, :] - self.rest_joints[None, :, :]
        return np.einsum("jde,vje->vjd", kin.R, rel) + kin.p[None]

    def skin_vertices(self, rest: np.ndarray, psi: np.ndarray) -> np.ndarray:
        kin = self.kinematics(psi)
        return np.einsum("vj,vjd->vd", self.skin_weights, self._per_joint_positions(rest, kin))

    def skin(self, rest: np.ndarray, psi: np.ndarray) -> PosedBody:
        return PosedBody(self.skin_vertices(rest, psi), self.faces)

    def pose(self, nu: np.ndarray, psi: np.ndarray) -> PosedBody:
        return self.skin(self.shape(nu), psi)

    # derivatives
    def jacobians(self, nu: np.ndarray, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(d x_body / d nu (Vb, 3, K), d x_body / d psi (Vb, 3, P))."""
        rest = self.shape(nu)
        kin = self.kinematics(psi)
        W = self.skin_weights
        J = self.n_joints

        blended_R = np.einsum("vj,jde->vde", W, kin.R)
        J_nu = np.einsum("vde,kve->vdk", blended_R, self.basis)

        xij = self._per_joint_positions(rest, kin)
        J_psi = np.zeros((self.n_vertices, 3, self.n_pose))
        J_psi[:, :, :3] = np.eye(3)[None]
        _, angles, _ = self.split_pose(psi)
        for a in range(J):
            sub = self._subtree[a]
            par = self.parents[a]
            R_par = kin.R[par] if par >= 0 else np.eye(3)
            w_sub = W[:, sub]
            lever = np.einsum("vj,vjd->vd", w_sub, xij[:, sub] - kin.p[a][None, None])
            for k, dR in enumerate(euler_xyz_derivatives(angles[a])):
                omega = R_par @ dR @ kin.local[a].T @ R_par.T
                J_psi[:, :, 3 + 3 * a + k] = lever @ omega.T
            if par >= 0:
                offset = self.rest_joints[a] - self.rest_joints[par]
                J_psi[:, :, 3 + 3 * J + a] = w_sub.sum(1)[:, None] * (R_par @ offset)[None]
        return J_nu, J_psi

    def pullback(self, nu: np.ndarray, psi: np.ndarray, grad_vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Chain a posed-vertex cotangent (Vb, 3) into (d/d nu, d/d psi)."""
        J_nu, J_psi = self.jacobians(nu, psi)
        return (np.einsum("vdk,vd->k", J_nu, grad_vertices),
                np.einsum("vdp,vd->p", J_psi, grad_vertices))

    def clamp(self, nu: np.ndarray, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.pose_bounds()
        return (np.clip(nu, self.shape_limits[:, 0], self.shape_limits[:, 1]), np.clip(psi, lo, hi))


# ---------- initialization fit ----------

@dataclass
class FitResult:
    nu: np.ndarray
    psi: np.ndarray
    objective: float
    iterations: int
    history: list[float]
    converged: bool


def init_fit(target: np.ndarray, body: BodyModel, iterations: int = 200,
             nu0: np.ndarray | None = None, psi0: np.ndarray | None = None,
             tol: float = 1e-15, fit_shape: bool = True) -> FitResult:
    """Bounded L-BFGS on the symmetric Chamfer distance between the posed body and a target point cloud.

    Every parameter is divided by the vertex displacement it causes at the start point, so shape
    coefficients, translations, joint angles and bone offsets are equally conditioned. The model's
    box limits bound the search; a joint with limits [0, 0] stays locked.
    """
    from .loss import interior_chamfer

    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if target.shape[0] == 0:
        raise ValueError("init_fit needs a non-empty target")
    nu = body.zero_shape() if nu0 is None else np.array(nu0, dtype=np.float64)
    psi = body.zero_pose() if psi0 is None else np.array(psi0, dtype=np.float64)
    nu, psi = body.clamp(nu, psi)
    K = body.n_shape

    def objective(n, p):
        return interior_chamfer(body.skin_vertices(body.shape(n), p), target)

    f0, _ = objective(nu, psi)
    if iterations <= 0 or f0 == 0.0:
        return FitResult(nu=nu, psi=psi, objective=f0, iterations=0, history=[f0], converged=f0 == 0.0)

    J_nu, J_psi = body.jacobians(nu, psi)
    reach = np.concatenate([np.linalg.norm(J_nu, axis=(0, 1)), np.linalg.norm(J_psi, axis=(0, 1))])
    scale = np.where(reach > 1e-12, 1.0 / np.where(reach > 1e-12, reach, 1.0), 1.0)
    shape_lo, shape_hi = (body.shape_limits[:, 0], body.shape_limits[:, 1]) if fit_shape else (nu, nu)
    pose_lo, pose_hi = body.pose_bounds()
    bounds = Bounds(np.concatenate([shape_lo, pose_lo]) / scale, np.concatenate([shape_hi, pose_hi]) / scale)

    values: dict[bytes, float] = {}

    def fun(y):
        x = y * scale
        value, grad_x = objective(x[:K], x[K:])
        g_nu, g_psi = body.pullback(x[:K], x[K:], grad_x)
        values[y.tobytes()] = value
        return value / f0, np.concatenate([g_nu, g_psi]) * scale / f0

    history = [f0]

    def record(y):
        key = y.tobytes()
        history.append(values[key] if key in values else fun(y)[0] * f0)

    res = minimize(fun, np.concatenate([nu, psi]) / scale, jac=True, method="L-BFGS-B", bounds=bounds,
                   callback=record, options={"maxiter": iterations, "ftol": tol, "gtol": 1e-12})
    x = res.x * scale
    fit_nu, fit_psi = body.clamp(x[:K], x[K:])
    if not fit_shape:
        fit_nu = nu
    value, _ = objective(fit_nu, fit_psi)
    if value > f0:
        fit_nu, fit_psi, value = nu, psi, f0
    if not res.success:
        logger.warning("init_fit stopped after %d iterations (chamfer %.3e): %s", res.nit, value, res.message)
    return FitResult(nu=fit_nu, psi=fit_psi, objective=float(value), iterations=int(res.nit), history=history,
                     converged=bool(res.success))


# ---------- file IO ----------

def save_body(body: BodyModel, path: str | Path) -> None:
    """OBJ mesh plus a JSON sidecar (<name>.skel.json) with skeleton, weights and basis."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# drapekit body: {body.n_vertices} vertices, {body.n_joints} joints\n")
        for v in body.rest_vertices:
            f.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for a, b, c in body.faces + 1:
            f.write(f"f {a} {b} {c}\n")
    sidecar = {
        "joint_names": body.joint_names,
        "parents": body.parents.tolist(),
        "rest_joints": body.rest_joints.tolist(),
        "skin_weights": body.skin_weights.tolist(),
        "basis_names": body.basis_names,
        "basis": body.basis.tolist(),
        "angle_limits": body.angle_limits.tolist(),
        "bone_limits": body.bone_limits.tolist(),
        "shape_limits": body.shape_limits.tolist(),
        "translation_limit": body.translation_limit,
    }
    with open(path.with_suffix(".skel.json"), "w", encoding="utf-8") as f:
        json.dump(sidecar, f)


def load_body(path: str | Path) -> BodyModel:
    from .schemas import BodySidecar

    path = Path(path)
    verts, faces = [], []
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            parts = raw.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(t) for t in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in parts[1:]]
                for k in range(1, len(idx) - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
    sidecar_path = path.with_suffix(".skel.json")
    with open(sidecar_path, "r", encoding="utf-8") as f:
        meta = BodySidecar.model_validate_json(f.read())
    body = BodyModel(
        rest_vertices=np.asarray(verts),
        faces=np.asarray(faces),
        basis=np.asarray(meta.basis) if meta.basis else np.zeros((0, len(verts), 3)),
        parents=np.asarray(meta.parents),
        rest_joints=np.asarray(meta.rest_joints),
        skin_weights=np.asarray(meta.skin_weights),
        joint_names=meta.joint_names,
        basis_names=meta.basis_names,
        angle_limits=np.asarray(meta.angle_limits) if meta.angle_limits else None,
        bone_limits=np.asarray(meta.bone_limits) if meta.bone_limits else None,
        shape_limits=np.asarray(meta.shape_limits) if meta.shape_limits else None,
        translation_limit=meta.translation_limit,
    )
    logger.info("loaded body %s: %d vertices, %d joints, %d shape fields",
                path.name, body.n_vertices, body.n_joints, body.n_shape)
    return body
