"""Vectorized closest-point queries on triangles and segments."""
from __future__ import annotations

import numpy as np


def closest_point_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray,
                               c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Closest point of p[i] on triangle (a[i], b[i], c[i]) by Voronoi-region tests.
    Returns (points (n, 3), barycentric coordinates (n, 3)).
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = (ab * ap).sum(1)
    d2 = (ac * ap).sum(1)
    bp = p - b
    d3 = (ab * bp).sum(1)
    d4 = (ac * bp).sum(1)
    cp = p - c
    d5 = (ab * cp).sum(1)
    d6 = (ac * cp).sum(1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    n = p.shape[0]
    bary = np.empty((n, 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 1.0 / 3.0)
        w = np.where(denom != 0, vc / denom, 1.0 / 3.0)
        bary[:] = np.column_stack([1.0 - v - w, v, w])

        # edge bc
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        bary[m] = np.column_stack([np.zeros(m.sum()), 1.0 - t[m], t[m]])
        # edge ac
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t = d2 / (d2 - d6)
        bary[m] = np.column_stack([1.0 - t[m], np.zeros(m.sum()), t[m]])
        # vertex c
        m = (d6 >= 0) & (d5 <= d6)
        bary[m] = (0.0, 0.0, 1.0)
        # edge ab
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t = d1 / (d1 - d3)
        bary[m] = np.column_stack([1.0 - t[m], t[m], np.zeros(m.sum())])
        # vertex b
        m = (d3 >= 0) & (d4 <= d3)
        bary[m] = (0.0, 1.0, 0.0)
        # vertex a
        m = (d1 <= 0) & (d2 <= 0)
        bary[m] = (1.0, 0.0, 0.0)

    bary = np.nan_to_num(bary, nan=1.0 / 3.0)
    points = bary[:, 0, None] * a + bary[:, 1, None] * b + bary[:, 2, None] * c
    return points, bary


def closest_point_on_segments(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Foot of p on segment a-b with parameter t in [0, 1]; p (n, d), a/b (n, d) or (d,)."""
    ab = b - a
    denom = (ab * ab).sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, ((p - a) * ab).sum(-1) / denom, 0.0)
    t = np.clip(t, 0.0, 1.0)
    return a + t[..., None] * ab, t


def closest_point_on_polyline(points: np.ndarray, polyline: np.ndarray,
                              closed: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Closest feet of many points on one polyline: (feet (n, d), segment index (n,))."""
    seg_a = polyline[:-1]
    seg_b = polyline[1:]
    if closed:
        seg_a = np.vstack([seg_a, polyline[-1:]])
        seg_b = np.vstack([seg_b, polyline[:1]])
    # (n, S, d) pairwise; polylines are short
    feet, _ = closest_point_on_segments(points[:, None, :], seg_a[None], seg_b[None])
    d2 = ((points[:, None, :] - feet) ** 2).sum(-1)
    best = np.argmin(d2, axis=1)
    return feet[np.arange(points.shape[0]), best], best


def face_normals(vertices: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals and areas of triangles."""
    a, b, c = (vertices[faces[:, k]] for k in range(3))
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n, axis=1)
    safe = np.where(norm > 0, norm, 1.0)
    return n / safe[:, None], 0.5 * norm


def vertex_pseudo_normals(vertices: np.ndarray, faces: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Angle-weighted sum of incident face normals per vertex (not normalized)."""
    out = np.zeros_like(vertices, dtype=np.float64)
    for k in range(3):
        a = vertices[faces[:, (k + 1) % 3]] - vertices[faces[:, k]]
        b = vertices[faces[:, (k + 2) % 3]] - vertices[faces[:, k]]
        denom = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        cos = np.divide((a * b).sum(1), denom, out=np.ones_like(denom), where=denom > 0)
        angle = np.arccos(np.clip(cos, -1.0, 1.0))
        np.add.at(out, faces[:, k], angle[:, None] * normals)
    return out


def edge_pseudo_normals(faces: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """(F, 3, 3): sum of the face normals sharing the edge opposite local vertex k of each face."""
    edges = np.stack([faces[:, [1, 2]], faces[:, [2, 0]], faces[:, [0, 1]]], axis=1).reshape(-1, 2)
    _, inverse = np.unique(np.sort(edges, axis=1), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    sums = np.zeros((inverse.max() + 1 if inverse.size else 0, 3))
    np.add.at(sums, inverse, np.repeat(normals, 3, axis=0))
    return sums[inverse].reshape(-1, 3, 3)
