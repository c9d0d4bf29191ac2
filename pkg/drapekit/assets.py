"""
Bundled procedural assets: small garment patterns and two bodies.

Names accepted wherever a path is expected: builtin:strip, builtin:quad, builtin:patch,
builtin:cloth, builtin:skirt, builtin:top (patterns); builtin:humanoid, builtin:sphere (bodies).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .body import BodyModel, save_body
from .errors import ConfigError
from .pattern import PanelPlacement, PatternMesh, SeamPair, make_pattern, save_pattern

logger = logging.getLogger(__name__)

BUILTIN_PREFIX = "builtin:"


@dataclass
class GarmentAsset:
    pattern: PatternMesh
    placements: dict[int, PanelPlacement] = field(default_factory=dict)
    pinned: list[int] = field(default_factory=list)       # pattern vertex ids
    boundary_labels: list[str] = field(default_factory=list)
    body: str | None = None


# ---------- pattern construction ----------

@dataclass
class _Grid:
    vertices: np.ndarray
    faces: np.ndarray
    nx: int
    ny: int
    offset: int = 0

    def vid(self, i: int, j: int) -> int:
        return self.offset + j * (self.nx + 1) + i

    def left(self) -> tuple[int, ...]:
        return tuple(self.vid(0, j) for j in range(self.ny + 1))

    def right(self) -> tuple[int, ...]:
        return tuple(self.vid(self.nx, j) for j in range(self.ny + 1))

    def top(self) -> tuple[int, ...]:
        return tuple(self.vid(i, self.ny) for i in range(self.nx + 1))

    def bottom(self) -> tuple[int, ...]:
        return tuple(self.vid(i, 0) for i in range(self.nx + 1))


def trapezoid_grid(bottom_width: float, top_width: float, height: float, nx: int, ny: int,
                   center_u: float = 0.0, offset: int = 0) -> _Grid:
    """Counter-clockwise triangulated trapezoid, rows bottom to top."""
    verts = []
    for j in range(ny + 1):
        t = j / ny
        half = 0.5 * ((1.0 - t) * bottom_width + t * top_width)
        for i in range(nx + 1):
            verts.append((center_u - half + 2.0 * half * i / nx, height * t))
    faces = []
    for j in range(ny):
        for i in range(nx):
            a = offset + j * (nx + 1) + i
            b, c, d = a + 1, a + nx + 1, a + nx + 2
            faces.append((a, b, d))
            faces.append((a, d, c))
    return _Grid(np.asarray(verts), np.asarray(faces, dtype=np.int64), nx, ny, offset)


def _cylinder_panels(widths: list[tuple[float, float]], height: float, nx: int, ny: int, radius: float,
                     y0: float, spacing: float = 0.1):
    grids, verts, faces, placements = [], [], [], {}
    offset = 0
    cursor = 0.0
    n = len(widths)
    for k, (wb, wt) in enumerate(widths):
        half = 0.5 * max(wb, wt)
        cu = cursor + half
        g = trapezoid_grid(wb, wt, height, nx, ny, center_u=cu, offset=offset)
        grids.append(g)
        verts.append(g.vertices)
        faces.append(g.faces)
        placements[k] = PanelPlacement(kind="cylinder", origin=(0.0, y0, 0.0), anchor=(cu, 0.0),
                                       radius=radius, angle0=2.0 * math.pi * k / n)
        offset += g.vertices.shape[0]
        cursor += 2.0 * half + spacing
    return grids, np.vstack(verts), np.vstack(faces), placements


def strip() -> GarmentAsset:
    """0.1 m x 0.3 m strip hanging from its pinned top row."""
    g = trapezoid_grid(0.1, 0.1, 0.3, 4, 12)
    mesh = make_pattern(g.vertices, g.faces)
    placement = PanelPlacement(kind="plane", origin=(0.0, 0.7, 0.0), anchor=(0.0, 0.0))
    return GarmentAsset(mesh, {0: placement}, pinned=list(g.top()), boundary_labels=["edge"], body=None)


def quad() -> GarmentAsset:
    """Two triangles resting just above the sphere body."""
    g = trapezoid_grid(0.04, 0.04, 0.04, 1, 1)
    mesh = make_pattern(g.vertices, g.faces)
    placement = PanelPlacement(kind="plane", origin=(0.0, 0.2025, 0.02),
                               axis_u=(1.0, 0.0, 0.0), axis_v=(0.0, 0.0, -1.0))
    return GarmentAsset(mesh, {0: placement}, boundary_labels=["edge"], body="builtin:sphere")


def patch() -> GarmentAsset:
    """Six-vertex patch (2 x 3 grid) resting just above the sphere body."""
    g = trapezoid_grid(0.04, 0.04, 0.02, 2, 1)
    mesh = make_pattern(g.vertices, g.faces)
    placement = PanelPlacement(kind="plane", origin=(0.0, 0.2025, 0.01),
                               axis_u=(1.0, 0.0, 0.0), axis_v=(0.0, 0.0, -1.0))
    return GarmentAsset(mesh, {0: placement}, boundary_labels=["edge"], body="builtin:sphere")


def cloth(size: float = 0.5, n: int = 10) -> GarmentAsset:
    """Square cloth dropped over the sphere body."""
    g = trapezoid_grid(size, size, size, n, n)
    mesh = make_pattern(g.vertices, g.faces)
    placement = PanelPlacement(kind="plane", origin=(0.0, 0.23, 0.5 * size),
                               axis_u=(1.0, 0.0, 0.0), axis_v=(0.0, 0.0, -1.0))
    return GarmentAsset(mesh, {0: placement}, boundary_labels=["edge"], body="builtin:sphere")


def skirt(nx: int = 6, ny: int = 10) -> GarmentAsset:
    """Four trapezoid panels sewn into a tube; waist pinned at hip height."""
    widths = [(0.30, 0.18)] * 4
    grids, verts, faces, placements = _cylinder_panels(widths, 0.45, nx, ny, radius=0.19, y0=0.55)
    seams = []
    for k, g in enumerate(grids):
        nxt = grids[(k + 1) % len(grids)]
        seams.append(SeamPair(panel_a=k, side_a=g.right(), panel_b=(k + 1) % len(grids), side_b=nxt.left()))
    mesh = make_pattern(verts, faces, seams)
    pinned = [v for g in grids for v in g.top()]
    return GarmentAsset(mesh, placements, pinned=pinned, boundary_labels=["waist", "hem"],
                        body="builtin:humanoid")


def top(nx: int = 8, ny: int = 8) -> GarmentAsset:
    """Two rectangular panels sewn at the sides into a tube top; neckline pinned."""
    widths = [(0.6, 0.6)] * 2
    grids, verts, faces, placements = _cylinder_panels(widths, 0.4, nx, ny, radius=0.19, y0=1.05)
    seams = [
        SeamPair(panel_a=0, side_a=grids[0].right(), panel_b=1, side_b=grids[1].left()),
        SeamPair(panel_a=1, side_a=grids[1].right(), panel_b=0, side_b=grids[0].left()),
    ]
    mesh = make_pattern(verts, faces, seams)
    pinned = [v for g in grids for v in g.top()]
    return GarmentAsset(mesh, placements, pinned=pinned, boundary_labels=["neck", "hem"],
                        body="builtin:humanoid")


# ---------- bodies ----------

def _ellipsoid(center, radii, n_u: int = 16, n_v: int = 10, offset: int = 0):
    """Closed UV ellipsoid with outward-facing triangles, polar axis y."""
    cx, cy, cz = center
    rx, ry, rz = radii
    verts = [(cx, cy + ry, cz)]
    for j in range(1, n_v):
        phi = math.pi * j / n_v
        for i in range(n_u):
            th = 2.0 * math.pi * i / n_u
            verts.append((cx + rx * math.sin(phi) * math.cos(th), cy + ry * math.cos(phi),
                          cz + rz * math.sin(phi) * math.sin(th)))
    verts.append((cx, cy - ry, cz))
    south = len(verts) - 1

    def ring(j, i):
        return 1 + (j - 1) * n_u + (i % n_u)

    faces = []
    for i in range(n_u):
        faces.append((0, ring(1, i + 1), ring(1, i)))
    for j in range(1, n_v - 1):
        for i in range(n_u):
            a, b = ring(j, i), ring(j, i + 1)
            c, d = ring(j + 1, i), ring(j + 1, i + 1)
            faces.append((a, b, c))
            faces.append((b, d, c))
    for i in range(n_u):
        faces.append((ring(n_v - 1, i), ring(n_v - 1, i + 1), south))
    return np.asarray(verts), np.asarray(faces, dtype=np.int64) + offset


def _ramp(t: np.ndarray) -> np.ndarray:
    return np.clip(t, 0.0, 1.0)


def humanoid() -> BodyModel:
    """Low-resolution T-pose figure built from overlapping ellipsoids, 12 joints, 4 shape fields."""
    names = ["pelvis", "spine", "chest", "head", "l_shoulder", "l_elbow", "r_shoulder", "r_elbow",
             "l_hip", "l_knee", "r_hip", "r_knee"]
    parents = [-1, 0, 1, 2, 2, 4, 2, 6, 0, 8, 0, 10]
    joints = np.array([
        [0.0, 1.00, 0.0], [0.0, 1.15, 0.0], [0.0, 1.35, 0.0], [0.0, 1.55, 0.0],
        [0.18, 1.45, 0.0], [0.45, 1.45, 0.0], [-0.18, 1.45, 0.0], [-0.45, 1.45, 0.0],
        [0.10, 0.95, 0.0], [0.10, 0.50, 0.0], [-0.10, 0.95, 0.0], [-0.10, 0.50, 0.0],
    ])
    J = len(names)
    # (center, radii, kind, side)
    parts = [
        ((0.0, 1.2, 0.0), (0.16, 0.30, 0.11), "torso", 0),
        ((0.0, 1.66, 0.0), (0.09, 0.11, 0.10), "head", 0),
        ((0.315, 1.45, 0.0), (0.16, 0.045, 0.045), "upper_arm", 1),
        ((0.585, 1.45, 0.0), (0.16, 0.04, 0.04), "forearm", 1),
        ((-0.315, 1.45, 0.0), (0.16, 0.045, 0.045), "upper_arm", -1),
        ((-0.585, 1.45, 0.0), (0.16, 0.04, 0.04), "forearm", -1),
        ((0.10, 0.725, 0.0), (0.075, 0.26, 0.075), "thigh", 1),
        ((0.10, 0.29, 0.0), (0.055, 0.24, 0.055), "shin", 1),
        ((-0.10, 0.725, 0.0), (0.075, 0.26, 0.075), "thigh", -1),
        ((-0.10, 0.29, 0.0), (0.055, 0.24, 0.055), "shin", -1),
    ]
    idx = {n: k for k, n in enumerate(names)}
    all_v, all_f, weights, girth, limb = [], [], [], [], []
    offset = 0
    for center, radii, kind, side in parts:
        v, f = _ellipsoid(center, radii, offset=offset)
        offset += v.shape[0]
        w = np.zeros((v.shape[0], J))
        g = np.zeros_like(v)
        l = np.zeros_like(v)
        y, x = v[:, 1], v[:, 0]
        if kind == "torso":
            t1 = _ramp((y - 1.0) / 0.15)
            t2 = _ramp((y - 1.15) / 0.20)
            w[:, idx["pelvis"]] = 1.0 - t1
            w[:, idx["spine"]] = t1 * (1.0 - t2)
            w[:, idx["chest"]] = t1 * t2
            g[:, 0] = x - center[0]
            g[:, 2] = v[:, 2] - center[2]
        elif kind == "head":
            w[:, idx["head"]] = 1.0
        elif kind in ("upper_arm", "forearm"):
            sh, el = ("l_shoulder", "l_elbow") if side > 0 else ("r_shoulder", "r_elbow")
            if kind == "upper_arm":
                t = _ramp((side * x - 0.40) / 0.05)
                w[:, idx[sh]] = 1.0 - t
                w[:, idx[el]] = t
            else:
                w[:, idx[el]] = 1.0
            l[:, 0] = np.maximum(side * x - 0.18, 0.0) * side
        else:
            hip, knee = ("l_hip", "l_knee") if side > 0 else ("r_hip", "r_knee")
            if kind == "thigh":
                t = _ramp((0.55 - y) / 0.05)
                w[:, idx[hip]] = 1.0 - t
                w[:, idx[knee]] = t
            else:
                w[:, idx[knee]] = 1.0
            l[:, 1] = np.minimum(y - 0.95, 0.0)
        all_v.append(v)
        all_f.append(f)
        weights.append(w)
        girth.append(g)
        limb.append(l)
    V0 = np.vstack(all_v)
    basis = np.stack([
        V0.copy(),                                            # global scale about the feet
        np.vstack(girth),                                     # torso girth
        np.vstack(limb),                                      # limb length
        np.column_stack([np.zeros(len(V0)), V0[:, 1], np.zeros(len(V0))]),   # height
    ])
    angle_limits = np.tile(np.array([-0.5 * math.pi, 0.5 * math.pi]), (J, 3, 1))
    angle_limits[0] = [-math.pi, math.pi]
    bone_limits = np.tile(np.array([-0.3, 0.3]), (J, 1))
    return BodyModel(
        rest_vertices=V0,
        faces=np.vstack(all_f),
        basis=basis,
        parents=parents,
        rest_joints=joints,
        skin_weights=np.vstack(weights),
        joint_names=names,
        basis_names=["scale", "girth", "limb_length", "height"],
        angle_limits=angle_limits,
        bone_limits=bone_limits,
        shape_limits=np.tile(np.array([-0.3, 0.3]), (4, 1)),
        translation_limit=0.5,
    )


def sphere(radius: float = 0.2, center=(0.0, 0.0, 0.0), n_u: int = 24, n_v: int = 12) -> BodyModel:
    """UV sphere bound to one joint; one shape field inflates along the normals (1 unit = 1 m)."""
    v, f = _ellipsoid(center, (radius, radius, radius), n_u, n_v)
    normals = v - np.asarray(center)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return BodyModel(
        rest_vertices=v,
        faces=f,
        basis=normals[None],
        parents=[-1],
        rest_joints=np.asarray([center], dtype=np.float64),
        skin_weights=np.ones((v.shape[0], 1)),
        joint_names=["root"],
        basis_names=["inflate"],
        shape_limits=np.array([[-0.1, 0.1]]),
    )


PATTERNS = {"strip": strip, "quad": quad, "patch": patch, "cloth": cloth, "skirt": skirt, "top": top}
BODIES = {"humanoid": humanoid, "sphere": sphere}


def is_builtin(name: str | None) -> bool:
    return bool(name) and name.startswith(BUILTIN_PREFIX)


def builtin_garment(name: str) -> GarmentAsset:
    key = name[len(BUILTIN_PREFIX):] if is_builtin(name) else name
    if key not in PATTERNS:
        raise ConfigError("paths.pattern", f"unknown builtin pattern {name!r}; choose from {sorted(PATTERNS)}")
    return PATTERNS[key]()


def builtin_body(name: str) -> BodyModel:
    key = name[len(BUILTIN_PREFIX):] if is_builtin(name) else name
    if key not in BODIES:
        raise ConfigError("paths.body", f"unknown builtin body {name!r}; choose from {sorted(BODIES)}")
    return BODIES[key]()


def export_assets(directory: str | Path) -> list[Path]:
    """Write every builtin as files (pattern OBJ + .seams, body OBJ + .skel.json)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, make in PATTERNS.items():
        path = directory / f"{name}.obj"
        save_pattern(make().pattern, path)
        written.append(path)
    for name, make in BODIES.items():
        path = directory / f"{name}_body.obj"
        save_body(make(), path)
        written.append(path)
    logger.info("exported %d assets to %s", len(written), directory)
    return written
