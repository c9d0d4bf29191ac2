"""
Control cages: sparse boundary handles per panel with mean value coordinates.

Pattern coordinates are a fixed linear function of the handles, xbar = W zeta, with W
computed once from the initial pattern.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import CageContainmentError, CageError, DimensionMismatchError
from .pattern import PatternMesh, check_orientation

logger = logging.getLogger(__name__)

CONTAINMENT_TOL = 1e-9
_EPS = 1e-14


def select_handles(loop_points: np.ndarray, angle_threshold: float = 10.0) -> np.ndarray:
    """Loop positions that lie on the 2D convex hull or turn by more than angle_threshold degrees."""
    pts = np.asarray(loop_points, dtype=np.float64)
    L = pts.shape[0]
    if L < 3:
        raise CageError(f"boundary loop has {L} vertices; need at least 3")
    selected = np.zeros(L, dtype=bool)
    try:
        selected[ConvexHull(pts).vertices] = True
    except QhullError:
        logger.debug("convex hull failed for a %d-vertex loop; using turning angles only", L)

    a = pts - np.roll(pts, 1, axis=0)
    b = np.roll(pts, -1, axis=0) - pts
    turn = np.arctan2(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0], (a * b).sum(1))
    selected |= np.abs(turn) > math.radians(angle_threshold)

    handles = np.flatnonzero(selected)
    if handles.size < 3:
        stride = math.ceil(L / 8)
        handles = np.arange(0, L, stride)
        logger.warning("only %d handles found on a %d-vertex loop; falling back to every %d-th vertex",
                       int(selected.sum()), L, stride)
    return handles


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((p - a) * ab).sum(-1) / np.maximum((ab * ab).sum(-1), _EPS), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)


def polygon_distance(points: np.ndarray, polygon: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(inside flag by winding number, distance to the polygon boundary)."""
    s = polygon[None, :, :] - points[:, None, :]
    s_next = np.roll(s, -1, axis=1)
    det = s[..., 0] * s_next[..., 1] - s[..., 1] * s_next[..., 0]
    dot = (s * s_next).sum(-1)
    winding = np.arctan2(det, dot).sum(1) / (2.0 * math.pi)
    dist = _segment_distance(points[:, None, :], polygon[None], np.roll(polygon, -1, axis=0)[None]).min(1)
    return np.abs(winding) > 0.5, dist


def mvc_weights(points: np.ndarray, cage: np.ndarray, vertex_ids: Sequence[int] | None = None) -> np.ndarray:
    """Mean value coordinates of points (n, 2) with respect to a simple polygon cage (h, 2)."""
    points = np.asarray(points, dtype=np.float64)
    cage = np.asarray(cage, dtype=np.float64)
    n, h = points.shape[0], cage.shape[0]
    ids = np.arange(n) if vertex_ids is None else np.asarray(vertex_ids)
    s = cage[None, :, :] - points[:, None, :]              # (n, h, 2)
    r = np.linalg.norm(s, axis=2)
    s_next = np.roll(s, -1, axis=1)
    r_next = np.roll(r, -1, axis=1)
    det = s[..., 0] * s_next[..., 1] - s[..., 1] * s_next[..., 0]
    dot = (s * s_next).sum(-1)
    scale = np.maximum(r * r_next, _EPS)

    W = np.zeros((n, h))
    done = np.zeros(n, dtype=bool)

    # coincident with a handle
    hit_v = r < 1e-12
    rows = np.flatnonzero(hit_v.any(1))
    W[rows, np.argmax(hit_v[rows], axis=1)] = 1.0
    done[rows] = True

    # on a cage edge
    on_edge = (np.abs(det) <= 1e-12 * scale) & (dot < 0) & ~done[:, None]
    rows = np.flatnonzero(on_edge.any(1))
    for i in rows:
        e = int(np.argmax(on_edge[i]))
        ri, rn = r[i, e], r_next[i, e]
        W[i, e] = rn / (ri + rn)
        W[i, (e + 1) % h] = ri / (ri + rn)
    done[rows] = True

    inside, dist = polygon_distance(points, cage)
    outside = ~inside & ~done
    if outside.any():
        bad = np.flatnonzero(outside)
        far = bad[dist[bad] > CONTAINMENT_TOL]
        if far.size:
            worst = far[np.argmax(dist[far])]
            raise CageContainmentError(int(ids[worst]), float(dist[worst]))

    rest = ~done
    if rest.any():
        with np.errstate(divide="ignore", invalid="ignore"):
            tan_half = det[rest] / (r[rest] * r_next[rest] + dot[rest])
            w = (np.roll(tan_half, 1, axis=1) + tan_half) / r[rest]
        W[rest] = w / w.sum(1, keepdims=True)
    return W


@dataclass
class PanelCage:
    panel: int
    handles: np.ndarray        # pattern vertex ids, loop order
    vertices: np.ndarray       # pattern vertex ids deformed by this cage
    W: np.ndarray              # (len(vertices), len(handles))

    @property
    def n_handles(self) -> int:
        return int(self.handles.shape[0])


class ControlCage:
    """Per-panel handle polygons; zeta is stored flat as (total handles, 2)."""

    def __init__(self, mesh: PatternMesh, panels: list[PanelCage]):
        self.mesh = mesh
        self.panels = panels
        self.offsets = np.cumsum([0] + [pc.n_handles for pc in panels])
        self.zeta0 = np.vstack([mesh.vertices_2d[pc.handles] for pc in panels])

    @property
    def n_handles(self) -> int:
        return int(self.offsets[-1])

    def panel_slice(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def deform(self, zeta: np.ndarray, check: bool = True) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=np.float64).reshape(-1, 2)
        if zeta.shape[0] != self.n_handles:
            raise DimensionMismatchError(f"expected {self.n_handles} handles, got {zeta.shape[0]}")
        if not np.isfinite(zeta).all():
            raise CageError("handle positions must be finite")
        xbar = self.mesh.vertices_2d.copy()
        for k, pc in enumerate(self.panels):
            xbar[pc.vertices] = pc.W @ zeta[self.panel_slice(k)]
        if check:
            check_orientation(xbar, self.mesh.faces)
        return xbar

    def chain_gradient(self, grad_xbar: np.ndarray) -> np.ndarray:
        """dphi/dzeta = W^T dphi/dxbar per panel."""
        grad_xbar = np.asarray(grad_xbar, dtype=np.float64)
        if grad_xbar.shape != (self.mesh.n_vertices, 2):
            raise DimensionMismatchError(f"gradient shape {grad_xbar.shape} != ({self.mesh.n_vertices}, 2)")
        out = np.zeros((self.n_handles, 2))
        for k, pc in enumerate(self.panels):
            out[self.panel_slice(k)] = pc.W.T @ grad_xbar[pc.vertices]
        return out

    def symmetrize(self, grad_zeta: np.ndarray, pairs: Sequence[Sequence[Sequence[int]]]) -> np.ndarray:
        """Average mirrored handle gradients; pairs are ((panel, handle), (panel, handle)), mirror u -> -u."""
        out = np.array(grad_zeta, dtype=np.float64, copy=True)
        mirror = np.array([-1.0, 1.0])
        for (pa, ha), (pb, hb) in pairs:
            ia = int(self.offsets[pa]) + ha
            ib = int(self.offsets[pb]) + hb
            avg = 0.5 * (out[ia] + mirror * out[ib])
            out[ia] = avg
            out[ib] = mirror * avg
        return out

    def to_dict(self, zeta: np.ndarray | None = None) -> dict:
        zeta = self.zeta0 if zeta is None else np.asarray(zeta).reshape(-1, 2)
        return {"panels": [
            {"panel": pc.panel, "handles": pc.handles.tolist(), "positions": zeta[self.panel_slice(k)].tolist()}
            for k, pc in enumerate(self.panels)
        ]}

    def export(self, path: str | Path, zeta: np.ndarray | None = None) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(zeta), f, indent=2)


def build_cage(mesh: PatternMesh, angle_threshold: float = 10.0) -> ControlCage:
    """Handles from each panel's outer loop; W from the initial pattern and held fixed afterwards."""
    vpanel = mesh.vertex_panel()
    panels = []
    for panel in range(mesh.n_panels):
        outer = [lp for lp in mesh.boundary_loops if lp.panel == panel and not lp.is_hole]
        if not outer:
            raise CageError(f"panel {panel} has no outer boundary loop")
        loop = max(outer, key=len)
        loop_ids = np.asarray(loop.vertices)
        loop_pts = mesh.vertices_2d[loop_ids]
        picked = set(select_handles(loop_pts, angle_threshold).tolist())

        # grow the cage until every loop vertex is inside or on it
        while True:
            order = np.array(sorted(picked))
            inside, dist = polygon_distance(loop_pts, loop_pts[order])
            outside = np.flatnonzero(~inside & (dist > CONTAINMENT_TOL))
            if outside.size == 0:
                break
            picked.add(int(outside[np.argmax(dist[outside])]))

        handles = loop_ids[np.array(sorted(picked))]
        verts = np.flatnonzero(vpanel == panel)
        W = mvc_weights(mesh.vertices_2d[verts], mesh.vertices_2d[handles], verts)
        panels.append(PanelCage(panel=panel, handles=handles, vertices=verts, W=W))
        logger.info("panel %d: %d handles on a %d-vertex boundary", panel, handles.size, loop_ids.size)
    return ControlCage(mesh, panels)
