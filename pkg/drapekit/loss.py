"""
Garment loss: feature terms on the draped state and regularizers on the 2D pattern.

    phi = rho * boundary + sigma * interior + alpha_reg * seam + beta * curvature

Feature terms return gradients with respect to simulated positions (n_sim, 3); regularizers
return gradients with respect to pattern coordinates (n_pattern, 2).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatchError, LabelMismatchError
from .geometry import closest_point_on_polyline
from .pattern import BoundaryLoop, SeamPair

logger = logging.getLogger(__name__)


# ---------- target garment ----------

@dataclass(frozen=True)
class Polyline:
    label: str
    points: np.ndarray
    closed: bool = True


@dataclass
class TargetGarment:
    interior: np.ndarray
    polylines: dict[str, Polyline] = field(default_factory=dict)
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.interior = np.asarray(self.interior, dtype=np.float64).reshape(-1, 3)
        if self.interior.shape[0] == 0:
            raise ValueError("target interior point set is empty")
        for pl in self.polylines.values():
            if pl.points.shape[0] < 2:
                raise ValueError(f"target polyline {pl.label!r} needs at least 2 points")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != (self.interior.shape[0],):
                raise DimensionMismatchError("target mask length differs from interior point count")

    @property
    def valid_interior(self) -> np.ndarray:
        return self.interior if self.mask is None else self.interior[self.mask]


def save_target(target: TargetGarment, path: str | Path) -> None:
    """Interior points as OBJ `v` lines plus <name>.boundary.json with labeled polylines."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# drapekit target: {target.interior.shape[0]} interior points\n")
        for p in target.interior:
            f.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
    payload = {
        "polylines": [
            {"label": pl.label, "closed": pl.closed, "points": pl.points.tolist()}
            for pl in target.polylines.values()
        ],
        "mask": None if target.mask is None else target.mask.astype(int).tolist(),
    }
    with open(path.with_suffix(".boundary.json"), "w", encoding="utf-8") as f:
        json.dump(payload, f)


def load_target(path: str | Path) -> TargetGarment:
    from .schemas import TargetSidecar

    path = Path(path)
    pts = []
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            parts = raw.split("#", 1)[0].split()
            if parts and parts[0] == "v":
                pts.append([float(t) for t in parts[1:4]])
    polylines: dict[str, Polyline] = {}
    mask = None
    sidecar = path.with_suffix(".boundary.json")
    if sidecar.exists():
        meta = TargetSidecar.model_validate_json(sidecar.read_text(encoding="utf-8"))
        for pl in meta.polylines:
            polylines[pl.label] = Polyline(pl.label, np.asarray(pl.points, dtype=np.float64), pl.closed)
        if meta.mask is not None:
            mask = np.asarray(meta.mask, dtype=bool)
    target = TargetGarment(interior=np.asarray(pts), polylines=polylines, mask=mask)
    logger.info("loaded target %s: %d points, %d boundary polylines", path.name,
                target.interior.shape[0], len(polylines))
    return target


# ---------- feature terms ----------

def boundary_loss(x: np.ndarray, loops: Mapping[str, np.ndarray],
                  target: TargetGarment) -> tuple[float, np.ndarray]:
    """Sum of squared distances from labeled simulated boundary vertices to their target polylines."""
    missing_targets = [lbl for lbl in loops if lbl not in target.polylines]
    missing_loops = [lbl for lbl in target.polylines if lbl not in loops]
    if missing_targets or missing_loops:
        raise LabelMismatchError(missing_targets, missing_loops)
    grad = np.zeros_like(x)
    value = 0.0
    for label, verts in loops.items():
        pl = target.polylines[label]
        pts = x[verts]
        feet, _ = closest_point_on_polyline(pts, pl.points, pl.closed)
        diff = pts - feet
        value += float((diff * diff).sum())
        np.add.at(grad, verts, 2.0 * diff)
    return value, grad


def _nearest(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    _, idx = cKDTree(dst).query(src, k=1)
    return np.asarray(idx, dtype=np.int64)


def interior_chamfer(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """Symmetric Chamfer: mean_a |a - nn_b(a)|^2 + mean_b |b - nn_a(b)|^2, gradient w.r.t. a."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("chamfer needs non-empty point sets")
    nn_ab = _nearest(a, b)
    nn_ba = _nearest(b, a)
    d_ab = a - b[nn_ab]
    d_ba = b - a[nn_ba]
    value = float((d_ab * d_ab).sum(1).mean() + (d_ba * d_ba).sum(1).mean())
    grad = 2.0 * d_ab / a.shape[0]
    np.add.at(grad, nn_ba, -2.0 * d_ba / b.shape[0])
    return value, grad


def chamfer_brute(a: np.ndarray, b: np.ndarray) -> float:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    return float(d2.min(1).mean() + d2.min(0).mean())


def metric_chamfer(a: np.ndarray, b: np.ndarray, units: str = "mm") -> float:
    """Reporting-only symmetric Chamfer in mm^2 (default) or m^2."""
    value, _ = interior_chamfer(a, b)
    if units == "mm":
        return value * 1e6
    if units == "m":
        return value
    raise ValueError(f"unknown units {units!r}")


# ---------- pattern regularizers ----------

def seam_length_loss(p: np.ndarray, seams: Sequence[SeamPair], signed: bool = False) -> tuple[float, np.ndarray]:
    """Squared-edge-length differences of paired seam edges.

    Default: sum_k d_k^2 with d_k = |e_a,k|^2 - |e_b,k|^2. Signed: sum_k d_k per seam, summed.
    """
    grad = np.zeros_like(p)
    value = 0.0
    for seam in seams:
        a = np.asarray(seam.side_a)
        b = np.asarray(seam.side_b)
        ea = p[a[1:]] - p[a[:-1]]
        eb = p[b[1:]] - p[b[:-1]]
        d = (ea * ea).sum(1) - (eb * eb).sum(1)
        coef = np.ones_like(d) if signed else 2.0 * d
        value += float(d.sum() if signed else (d * d).sum())
        ga = 2.0 * coef[:, None] * ea
        gb = -2.0 * coef[:, None] * eb
        np.add.at(grad, a[1:], ga)
        np.add.at(grad, a[:-1], -ga)
        np.add.at(grad, b[1:], gb)
        np.add.at(grad, b[:-1], -gb)
    return value, grad


def seam_mismatch(p: np.ndarray, seams: Sequence[SeamPair]) -> float:
    """Largest relative length mismatch over paired seam chains."""
    worst = 0.0
    for seam in seams:
        la = np.linalg.norm(np.diff(p[list(seam.side_a)], axis=0), axis=1).sum()
        lb = np.linalg.norm(np.diff(p[list(seam.side_b)], axis=0), axis=1).sum()
        worst = max(worst, abs(la - lb) / max(la, lb, 1e-15))
    return float(worst)


def _perp(v: np.ndarray) -> np.ndarray:
    return np.stack([-v[:, 1], v[:, 0]], axis=1)


def _stencils(loops: Sequence[BoundaryLoop]) -> np.ndarray:
    rows = []
    for lp in loops:
        vs = np.asarray(lp.vertices)
        rows.append(np.column_stack([np.roll(vs, 1), vs, np.roll(vs, -1)]))
    return np.vstack(rows) if rows else np.zeros((0, 3), dtype=np.int64)


def curvature_loss(p: np.ndarray, p_ref: np.ndarray, loops: Sequence[BoundaryLoop],
                   weights: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """
    Boundary curvature distortion: per boundary vertex the two incident edges are matched to
    their reference edges by the best 2D similarity T = [[a, -b], [b, a]] and the summed
    residual is penalized, w_i |(e1 - T e1_ref) + (e2 - T e2_ref)|^2.
    The gradient includes the dependence of T on the edges.
    """
    st = _stencils(loops)
    grad = np.zeros_like(p)
    if st.shape[0] == 0:
        return 0.0, grad
    prev, mid, nxt = st[:, 0], st[:, 1], st[:, 2]
    e1 = p[nxt] - p[mid]
    e2 = p[prev] - p[mid]
    r1 = p_ref[nxt] - p_ref[mid]
    r2 = p_ref[prev] - p_ref[mid]
    S = (r1 * r1).sum(1) + (r2 * r2).sum(1)
    ok = S > 1e-24
    if not ok.all():
        logger.warning("skipping %d degenerate curvature stencils", int((~ok).sum()))
    w = np.ones(p.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    wi = np.where(ok, w[mid], 0.0)
    S = np.where(ok, S, 1.0)

    a = ((e1 * r1).sum(1) + (e2 * r2).sum(1)) / S
    b = ((e1 * _perp(r1)).sum(1) + (e2 * _perp(r2)).sum(1)) / S
    rs = r1 + r2
    res = (e1 + e2) - (a[:, None] * rs + b[:, None] * _perp(rs))
    value = float((wi * (res * res).sum(1)).sum())

    proj_s = (rs * res).sum(1) / S
    proj_p = (_perp(rs) * res).sum(1) / S
    g1 = 2.0 * wi[:, None] * (res - (r1 * proj_s[:, None] + _perp(r1) * proj_p[:, None]))
    g2 = 2.0 * wi[:, None] * (res - (r2 * proj_s[:, None] + _perp(r2) * proj_p[:, None]))
    np.add.at(grad, nxt, g1)
    np.add.at(grad, prev, g2)
    np.add.at(grad, mid, -(g1 + g2))
    return value, grad


def curvature_distortion(p: np.ndarray, p_ref: np.ndarray, loops: Sequence[BoundaryLoop]) -> float:
    value, _ = curvature_loss(p, p_ref, loops)
    return value


# ---------- total ----------

@dataclass
class LossResult:
    value: float
    terms: dict[str, float]
    grad_x: np.ndarray
    grad_p: np.ndarray


@dataclass
class GarmentLoss:
    """Everything the loss needs besides the two evaluated point sets."""
    target: TargetGarment
    boundary_loops: dict[str, np.ndarray]      # label -> simulated vertex ids
    seams: tuple[SeamPair, ...]
    pattern_loops: tuple[BoundaryLoop, ...]
    reference: np.ndarray                      # initial pattern coordinates
    rho: float = 1.0
    sigma: float = 1.0
    alpha_reg: float = 0.1
    beta: float = 0.1
    curvature_weights: np.ndarray | None = None
    seam_signed: bool = False
    # Simulated vertex ids matched against the target point cloud. None uses every
    # vertex, which suits scans that cover the whole garment surface.
    interior: np.ndarray | None = None

    def __call__(self, x: np.ndarray, p: np.ndarray) -> LossResult:
        grad_x = np.zeros_like(x)
        grad_p = np.zeros_like(p)
        terms = {"boundary": 0.0, "interior": 0.0, "seam": 0.0, "curvature": 0.0}
        if self.rho and self.boundary_loops:
            v, g = boundary_loss(x, self.boundary_loops, self.target)
            terms["boundary"] = v
            grad_x += self.rho * g
        if self.sigma:
            if self.interior is None:
                v, g = interior_chamfer(x, self.target.valid_interior)
                grad_x += self.sigma * g
            else:
                v, g = interior_chamfer(x[self.interior], self.target.valid_interior)
                np.add.at(grad_x, self.interior, self.sigma * g)
            terms["interior"] = v
        if self.alpha_reg and self.seams:
            v, g = seam_length_loss(p, self.seams, self.seam_signed)
            terms["seam"] = v
            grad_p += self.alpha_reg * g
        if self.beta:
            v, g = curvature_loss(p, self.reference, self.pattern_loops, self.curvature_weights)
            terms["curvature"] = v
            grad_p += self.beta * g
        value = (self.rho * terms["boundary"] + self.sigma * terms["interior"]
                 + self.alpha_reg * terms["seam"] + self.beta * terms["curvature"])
        return LossResult(value=float(value), terms=terms, grad_x=grad_x, grad_p=grad_p)


def total_loss(x: np.ndarray, p: np.ndarray, loss: GarmentLoss) -> tuple[float, np.ndarray, np.ndarray]:
    res = loss(x, p)
    return res.value, res.grad_x, res.grad_p
