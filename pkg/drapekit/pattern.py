"""
2D sewing patterns: OBJ reader/writer, boundary loops, seams, rest-shape matrices.

A pattern vertex is a `vt` entry of the OBJ file. Panels are the connected components of the
2D triangulation. Seam chains weld pattern vertices into the shared 3D simulation mesh.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DegenerateElementError,
    InvertedElementError,
    NonManifoldError,
    PatternError,
    PatternParseError,
)

logger = logging.getLogger(__name__)

DEGENERATE_DET = 1e-12


@dataclass(frozen=True)
class SeamPair:
    panel_a: int
    side_a: tuple[int, ...]
    panel_b: int
    side_b: tuple[int, ...]

    def __post_init__(self):
        if len(self.side_a) != len(self.side_b):
            raise PatternError(f"seam chains differ in length: {len(self.side_a)} vs {len(self.side_b)}")
        if len(self.side_a) < 2:
            raise PatternError("seam chains need at least 2 vertices")

    @property
    def n_edges(self) -> int:
        return len(self.side_a) - 1


@dataclass(frozen=True)
class BoundaryLoop:
    panel: int
    vertices: tuple[int, ...]
    is_hole: bool = False

    def __len__(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class PatternMesh:
    vertices_2d: np.ndarray
    faces: np.ndarray
    panel_id: np.ndarray
    seams: tuple[SeamPair, ...] = ()
    boundary_loops: tuple[BoundaryLoop, ...] = ()
    vertices_3d: np.ndarray | None = None

    @property
    def n_vertices(self) -> int:
        return int(self.vertices_2d.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    @property
    def n_panels(self) -> int:
        return int(self.panel_id.max()) + 1 if self.n_faces else 0

    def panel_vertices(self, panel: int) -> np.ndarray:
        return np.unique(self.faces[self.panel_id == panel])

    def vertex_panel(self) -> np.ndarray:
        out = np.full(self.n_vertices, -1, dtype=np.int64)
        for k in range(3):
            out[self.faces[:, k]] = self.panel_id
        return out

    def outer_loops(self) -> list[BoundaryLoop]:
        return [lp for lp in self.boundary_loops if not lp.is_hole]

    def with_vertices(self, vertices_2d: np.ndarray) -> "PatternMesh":
        """Same topology, new rest coordinates; rejects inverted or degenerate faces."""
        vertices_2d = np.asarray(vertices_2d, dtype=np.float64).reshape(self.n_vertices, 2)
        check_orientation(vertices_2d, self.faces)
        return replace(self, vertices_2d=_frozen(vertices_2d))


@dataclass(frozen=True)
class RestShapeData:
    Dbar: np.ndarray        # (F, 2, 2) columns x0-x2, x1-x2
    Dbar_inv: np.ndarray    # (F, 2, 2)
    area: np.ndarray        # (F,)
    mass: np.ndarray        # (V_pattern,) lumped
    density: float

    @property
    def total_area(self) -> float:
        return float(self.area.sum())


@dataclass(frozen=True)
class TriangleQuality:
    per_face: np.ndarray
    min: float
    mean: float


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


# ---------- geometry helpers ----------

def signed_areas(vertices_2d: np.ndarray, faces: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (vertices_2d[faces[:, k]] for k in range(3))
    e1 = p1 - p0
    e2 = p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def check_orientation(vertices_2d: np.ndarray, faces: np.ndarray) -> None:
    areas = signed_areas(vertices_2d, faces)
    inverted = np.flatnonzero(areas < -0.5 * DEGENERATE_DET)
    if inverted.size:
        raise InvertedElementError(inverted)
    degenerate = np.flatnonzero(np.abs(areas) <= 0.5 * DEGENERATE_DET)
    if degenerate.size:
        raise DegenerateElementError(degenerate)


def polygon_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _panels_from_faces(faces: np.ndarray, n_vertices: int) -> np.ndarray:
    if faces.size == 0:
        return np.zeros(0, dtype=np.int64)
    rows = faces[:, [0, 1, 2]].ravel()
    cols = faces[:, [1, 2, 0]].ravel()
    graph = coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n_vertices, n_vertices))
    _, labels = connected_components(graph, directed=False)
    face_label = labels[faces[:, 0]]
    # renumber panels by first appearance in face order
    _, first, inverse = np.unique(face_label, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inverse.ravel()].astype(np.int64)


# ---------- boundary ----------

def _edge_counts(faces: np.ndarray):
    directed = np.stack([faces[:, [0, 1, 2]].ravel(), faces[:, [1, 2, 0]].ravel()], axis=1)
    undirected = np.sort(directed, axis=1)
    keys, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    return directed, keys, inverse.ravel(), counts


def extract_boundary_loops(mesh_or_faces, vertices_2d: np.ndarray | None = None,
                           panel_id: np.ndarray | None = None) -> list[BoundaryLoop]:
    """Ordered boundary cycles following face orientation, starting at their lowest vertex.

    Outer loops of counter-clockwise faces come out counter-clockwise; hole loops come out
    clockwise and are flagged.
    """
    if isinstance(mesh_or_faces, PatternMesh):
        faces = mesh_or_faces.faces
        vertices_2d = mesh_or_faces.vertices_2d
        panel_id = mesh_or_faces.panel_id
    else:
        faces = np.asarray(mesh_or_faces, dtype=np.int64)
    if vertices_2d is None or panel_id is None:
        raise PatternError("extract_boundary_loops needs vertices and panel ids")

    directed, keys, inverse, counts = _edge_counts(faces)
    over = np.flatnonzero(counts > 2)
    if over.size:
        a, b = keys[over[0]]
        raise NonManifoldError(edge=(int(a), int(b)), count=int(counts[over[0]]))

    boundary = np.flatnonzero(counts[inverse] == 1)
    nxt: dict[int, int] = {}
    edge_face: dict[int, int] = {}
    for idx in boundary:
        a, b = int(directed[idx, 0]), int(directed[idx, 1])
        if a in nxt:
            raise NonManifoldError(vertex=a)
        nxt[a] = b
        edge_face[a] = idx // 3

    loops: list[BoundaryLoop] = []
    visited: set[int] = set()
    for start in sorted(nxt):
        if start in visited:
            continue
        cycle = [start]
        visited.add(start)
        cur = nxt[start]
        while cur != start:
            if cur in visited or cur not in nxt:
                raise NonManifoldError(vertex=cur)
            cycle.append(cur)
            visited.add(cur)
            cur = nxt[cur]
        panel = int(panel_id[edge_face[start]])
        is_hole = polygon_area(vertices_2d[np.array(cycle)]) < 0.0
        loops.append(BoundaryLoop(panel=panel, vertices=tuple(cycle), is_hole=bool(is_hole)))

    loops.sort(key=lambda lp: (lp.panel, lp.is_hole, lp.vertices[0]))
    return loops


def boundary_edge_count(faces: np.ndarray) -> int:
    _, _, _, counts = _edge_counts(np.asarray(faces, dtype=np.int64))
    return int(np.sum(counts == 1))


# ---------- seams ----------

def _validate_seams(seams: Sequence[SeamPair], loops: Sequence[BoundaryLoop]) -> None:
    boundary_edges: dict[tuple[int, int], int] = {}
    for li, lp in enumerate(loops):
        vs = lp.vertices
        for k in range(len(vs)):
            a, b = vs[k], vs[(k + 1) % len(vs)]
            boundary_edges[(min(a, b), max(a, b))] = lp.panel
    used: set[tuple[int, int]] = set()
    for s_idx, seam in enumerate(seams):
        for panel, chain in ((seam.panel_a, seam.side_a), (seam.panel_b, seam.side_b)):
            for a, b in zip(chain[:-1], chain[1:]):
                key = (min(a, b), max(a, b))
                if key not in boundary_edges:
                    raise PatternError(f"seam {s_idx}: edge {key} is not a boundary edge")
                if boundary_edges[key] != panel:
                    raise PatternError(f"seam {s_idx}: edge {key} does not belong to panel {panel}")
                if key in used:
                    raise PatternError(f"seam {s_idx}: boundary edge {key} is sewn twice")
                used.add(key)
        shared = set(seam.side_a[1:-1]) & set(seam.side_b[1:-1])
        if shared:
            raise PatternError(f"seam {s_idx}: chains share interior vertices {sorted(shared)}")


def load_seams(path: str | Path) -> list[SeamPair]:
    seams: list[SeamPair] = []
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if tokens[0] != "seam":
                raise PatternParseError(str(path), line_no, f"unknown record {tokens[0]!r}")
            values = tokens[1:]
            # seam <panel_a> <i0 ...> <panel_b> <j0 ...> with equal-length chains
            if len(values) % 2 or len(values) < 6:
                raise PatternParseError(str(path), line_no, "seam chains must have equal length >= 2")
            try:
                ints = [int(v) for v in values]
            except ValueError:
                raise PatternParseError(str(path), line_no, "seam entries must be integers")
            half = len(ints) // 2
            try:
                seams.append(SeamPair(panel_a=ints[0], side_a=tuple(ints[1:half]),
                                      panel_b=ints[half], side_b=tuple(ints[half + 1:])))
            except PatternError as e:
                raise PatternParseError(str(path), line_no, str(e))
    return seams


def save_seams(seams: Iterable[SeamPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("# seam <panel_a> <side_a...> <panel_b> <side_b...>\n")
        for s in seams:
            a = " ".join(str(v) for v in s.side_a)
            b = " ".join(str(v) for v in s.side_b)
            f.write(f"seam {s.panel_a} {a} {s.panel_b} {b}\n")


# ---------- construction / IO ----------

def make_pattern(vertices_2d, faces, seams: Sequence[SeamPair] = (),
                 vertices_3d=None) -> PatternMesh:
    """Validate raw arrays and assemble a PatternMesh (panels and loops derived)."""
    vertices_2d = np.asarray(vertices_2d, dtype=np.float64).reshape(-1, 2)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if faces.size and (faces.min() < 0 or faces.max() >= vertices_2d.shape[0]):
        raise PatternError("face index out of range")
    check_orientation(vertices_2d, faces)
    panel_id = _panels_from_faces(faces, vertices_2d.shape[0])
    loops = extract_boundary_loops(faces, vertices_2d, panel_id)
    seams = tuple(seams)
    _validate_seams(seams, loops)
    v3 = None if vertices_3d is None else _frozen(np.asarray(vertices_3d, dtype=np.float64).reshape(-1, 3))
    return PatternMesh(
        vertices_2d=_frozen(vertices_2d),
        faces=_frozen(faces),
        panel_id=_frozen(panel_id),
        seams=seams,
        boundary_loops=tuple(loops),
        vertices_3d=v3,
    )


def _obj_index(token: str, count: int, path: str, line_no: int) -> int:
    try:
        idx = int(token)
    except ValueError:
        raise PatternParseError(path, line_no, f"bad index {token!r}")
    idx = idx - 1 if idx > 0 else count + idx
    if idx < 0 or idx >= count:
        raise PatternParseError(path, line_no, f"index {token} out of range")
    return idx


def load_pattern(path: str | Path, seam_path: str | Path | None = None) -> PatternMesh:
    """Read an OBJ whose `vt` lines are the 2D rest coordinates (meters)."""
    path = Path(path)
    spath = str(path)
    positions: list[list[float]] = []
    uvs: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    uv_to_v: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *rest = line.split()
            try:
                if tag == "v":
                    positions.append([float(t) for t in rest[:3]])
                elif tag == "vt":
                    uvs.append([float(t) for t in rest[:2]])
                elif tag == "f":
                    corners = []
                    for token in rest:
                        parts = token.split("/")
                        if len(parts) < 2 or not parts[1]:
                            raise PatternParseError(spath, line_no, "face corner without texture coordinate")
                        vt = _obj_index(parts[1], len(uvs), spath, line_no)
                        if parts[0]:
                            v = _obj_index(parts[0], len(positions), spath, line_no)
                            uv_to_v.setdefault(vt, v)
                        corners.append(vt)
                    if len(corners) < 3:
                        raise PatternParseError(spath, line_no, "face with fewer than 3 corners")
                    for k in range(1, len(corners) - 1):
                        faces.append((corners[0], corners[k], corners[k + 1]))
            except ValueError as e:
                raise PatternParseError(spath, line_no, str(e))
    if not uvs or not faces:
        raise PatternParseError(spath, 0, "no texture coordinates or faces found")

    vertices_3d = None
    if positions and len(uv_to_v) == len(uvs):
        pos = np.asarray(positions, dtype=np.float64)
        vertices_3d = pos[[uv_to_v[i] for i in range(len(uvs))]]

    if seam_path is None and path.with_suffix(".seams").exists():
        seam_path = path.with_suffix(".seams")
    seams = load_seams(seam_path) if seam_path else []
    mesh = make_pattern(uvs, faces, seams, vertices_3d)
    logger.info("loaded pattern %s: %d vertices, %d faces, %d panels, %d seams",
                path.name, mesh.n_vertices, mesh.n_faces, mesh.n_panels, len(mesh.seams))
    return mesh


def save_pattern(mesh: PatternMesh, path: str | Path, vertices_3d: np.ndarray | None = None) -> None:
    path = Path(path)
    v3 = vertices_3d if vertices_3d is not None else mesh.vertices_3d
    if v3 is None:
        v3 = np.column_stack([mesh.vertices_2d, np.zeros(mesh.n_vertices)])
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# drapekit pattern: {mesh.n_vertices} vertices, {mesh.n_panels} panels\n")
        for p in v3:
            f.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        for uv in mesh.vertices_2d:
            f.write(f"vt {uv[0]:.17g} {uv[1]:.17g}\n")
        for a, b, c in mesh.faces + 1:
            f.write(f"f {a}/{a} {b}/{b} {c}/{c}\n")
    if mesh.seams:
        save_seams(mesh.seams, path.with_suffix(".seams"))


# ---------- rest shape ----------

def build_rest_shape(mesh: PatternMesh, density: float, vertices_2d: np.ndarray | None = None) -> RestShapeData:
    if not density > 0:
        raise ValueError(f"density must be positive, got {density}")
    v2 = mesh.vertices_2d if vertices_2d is None else vertices_2d
    x0, x1, x2 = (v2[mesh.faces[:, k]] for k in range(3))
    Dbar = np.stack([x0 - x2, x1 - x2], axis=2)
    det = Dbar[:, 0, 0] * Dbar[:, 1, 1] - Dbar[:, 0, 1] * Dbar[:, 1, 0]
    bad = np.flatnonzero(np.abs(det) < DEGENERATE_DET)
    if bad.size:
        raise DegenerateElementError(bad)
    Dbar_inv = np.empty_like(Dbar)
    Dbar_inv[:, 0, 0] = Dbar[:, 1, 1] / det
    Dbar_inv[:, 1, 1] = Dbar[:, 0, 0] / det
    Dbar_inv[:, 0, 1] = -Dbar[:, 0, 1] / det
    Dbar_inv[:, 1, 0] = -Dbar[:, 1, 0] / det
    area = 0.5 * np.abs(det)
    mass = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(mass, mesh.faces[:, k], density * area / 3.0)
    return RestShapeData(Dbar=Dbar, Dbar_inv=Dbar_inv, area=area, mass=mass, density=float(density))


def triangle_quality(vertices: np.ndarray, faces: np.ndarray) -> TriangleQuality:
    """q = 4*sqrt(3)*area / sum(edge^2); 1 for equilateral, 0 for degenerate or inverted (2D)."""
    vertices = np.asarray(vertices, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    p0, p1, p2 = (vertices[faces[:, k]] for k in range(3))
    e0, e1, e2 = p1 - p0, p2 - p1, p0 - p2
    sum_sq = (e0 * e0).sum(1) + (e1 * e1).sum(1) + (e2 * e2).sum(1)
    if vertices.shape[1] == 2:
        area = np.clip(signed_areas(vertices, faces), 0.0, None)
    else:
        area = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(sum_sq > 0, 4.0 * math.sqrt(3.0) * area / sum_sq, 0.0)
    q = np.clip(q, 0.0, 1.0)
    if q.size == 0:
        return TriangleQuality(per_face=q, min=0.0, mean=0.0)
    return TriangleQuality(per_face=q, min=float(q.min()), mean=float(q.mean()))


# ---------- shared 3D topology ----------

def weld_map(mesh: PatternMesh) -> tuple[np.ndarray, int]:
    """Union-find over seam pairs: pattern vertex -> simulated (welded) vertex."""
    parent = np.arange(mesh.n_vertices)

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return int(i)

    for seam in mesh.seams:
        for a, b in zip(seam.side_a, seam.side_b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(mesh.n_vertices)])
    _, sim_index = np.unique(roots, return_inverse=True)
    return sim_index.astype(np.int64), int(sim_index.max()) + 1 if sim_index.size else 0


def interior_edges(faces: np.ndarray) -> np.ndarray:
    """Hinge stencils (a, b, c, d): edge a-b shared by faces (a, b, c) and (b, a, d)."""
    faces = np.asarray(faces, dtype=np.int64)
    by_edge: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for f in faces:
        for k in range(3):
            a, b, c = int(f[k]), int(f[(k + 1) % 3]), int(f[(k + 2) % 3])
            by_edge.setdefault((min(a, b), max(a, b)), []).append((a, b, c))
    hinges = []
    skipped = 0
    for key in sorted(by_edge):
        entries = by_edge[key]
        if len(entries) != 2:
            skipped += len(entries) > 2
            continue
        (a, b, c), (_, _, d) = entries
        hinges.append((a, b, c, d))
    if skipped:
        logger.warning("skipped %d edges shared by more than two faces", skipped)
    return np.asarray(hinges, dtype=np.int64).reshape(-1, 4)


@dataclass(frozen=True)
class PanelPlacement:
    """Initial 3D embedding of one panel, a differentiable function of its 2D coordinates.

    plane:    x = origin + (u - anchor_u) * axis_u + (v - anchor_v) * axis_v
    cylinder: wrap about a vertical axis through `origin`, angle = angle0 + (u - anchor_u) / radius
    """
    kind: str = "plane"
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis_u: tuple[float, float, float] = (1.0, 0.0, 0.0)
    axis_v: tuple[float, float, float] = (0.0, 1.0, 0.0)
    anchor: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0
    angle0: float = 0.0

    def apply(self, uv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return positions (n, 3) and Jacobians d x / d uv (n, 3, 2)."""
        du = uv[:, 0] - self.anchor[0]
        dv = uv[:, 1] - self.anchor[1]
        origin = np.asarray(self.origin, dtype=np.float64)
        n = uv.shape[0]
        jac = np.zeros((n, 3, 2))
        if self.kind == "plane":
            au = np.asarray(self.axis_u, dtype=np.float64)
            av = np.asarray(self.axis_v, dtype=np.float64)
            pos = origin + du[:, None] * au + dv[:, None] * av
            jac[:, :, 0] = au
            jac[:, :, 1] = av
        elif self.kind == "cylinder":
            theta = self.angle0 + du / self.radius
            pos = np.column_stack([
                origin[0] + self.radius * np.sin(theta),
                origin[1] + dv,
                origin[2] + self.radius * np.cos(theta),
            ])
            jac[:, 0, 0] = np.cos(theta)
            jac[:, 2, 0] = -np.sin(theta)
            jac[:, 1, 1] = 1.0
        else:
            raise PatternError(f"unknown placement kind {self.kind!r}")
        return pos, jac


@dataclass(frozen=True)
class Embedding:
    positions: np.ndarray     # (n_sim, 3)
    jacobian: np.ndarray      # (n_pattern, 3, 2), zero where the embedding is fixed
    sim_index: np.ndarray
    class_size: np.ndarray    # (n_sim,)

    def pullback(self, grad_positions: np.ndarray) -> np.ndarray:
        """Chain d phi / d x0 (n_sim, 3) into d phi / d x_bar (n_pattern, 2)."""
        share = grad_positions[self.sim_index] / self.class_size[self.sim_index, None]
        return np.einsum("pdk,pd->pk", self.jacobian, share)


def place_panels(mesh: PatternMesh, placements: Mapping[int, PanelPlacement] | None,
                 sim_index: np.ndarray, n_sim: int, vertices_2d: np.ndarray | None = None) -> Embedding:
    v2 = mesh.vertices_2d if vertices_2d is None else vertices_2d
    n = mesh.n_vertices
    pos = np.zeros((n, 3))
    jac = np.zeros((n, 3, 2))
    placements = placements or {}
    vpanel = mesh.vertex_panel()
    for panel in range(mesh.n_panels):
        idx = np.flatnonzero(vpanel == panel)
        placement = placements.get(panel)
        if placement is None:
            if mesh.vertices_3d is not None:
                pos[idx] = mesh.vertices_3d[idx]
                continue
            placement = PanelPlacement()
        pos[idx], jac[idx] = placement.apply(v2[idx])
    class_size = np.bincount(sim_index, minlength=n_sim).astype(np.float64)
    sim_pos = np.zeros((n_sim, 3))
    np.add.at(sim_pos, sim_index, pos)
    sim_pos /= class_size[:, None]
    return Embedding(positions=sim_pos, jacobian=jac, sim_index=sim_index, class_size=class_size)


def boundary_cycles(faces: np.ndarray) -> list[np.ndarray]:
    """Boundary cycles of an arbitrary (e.g. welded 3D) triangle mesh, each starting at its lowest vertex."""
    faces = np.asarray(faces, dtype=np.int64)
    directed, _, inverse, counts = _edge_counts(faces)
    nxt: dict[int, int] = {}
    for idx in np.flatnonzero(counts[inverse] == 1):
        a, b = int(directed[idx, 0]), int(directed[idx, 1])
        if a in nxt:
            raise NonManifoldError(vertex=a)
        nxt[a] = b
    cycles, visited = [], set()
    for start in sorted(nxt):
        if start in visited:
            continue
        cycle, cur = [start], nxt[start]
        visited.add(start)
        while cur != start:
            if cur in visited or cur not in nxt:
                raise NonManifoldError(vertex=cur)
            cycle.append(cur)
            visited.add(cur)
            cur = nxt[cur]
        cycles.append(np.asarray(cycle, dtype=np.int64))
    return cycles
