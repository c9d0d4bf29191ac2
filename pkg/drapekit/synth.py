"""
Synthetic targets: drape a scene with overridden "true" parameters and sample it like a scan.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .loss import Polyline, TargetGarment, metric_chamfer
from .scene import Scene
from .schemas import SynthConfig
from .xpbd import Trajectory

logger = logging.getLogger(__name__)


@dataclass
class SynthResult:
    target: TargetGarment
    truth: np.ndarray            # equilibrium vertex positions
    xbar: np.ndarray             # true pattern coordinates
    trajectory: Trajectory
    chamfer_mm: float            # sampled target vs truth


def scale_panels(scene: Scene, s: float, xbar: np.ndarray | None = None) -> np.ndarray:
    """Scale every panel uniformly about its own centroid."""
    xbar = scene.pattern.vertices_2d if xbar is None else xbar
    out = xbar.copy()
    vpanel = scene.pattern.vertex_panel()
    for panel in range(scene.pattern.n_panels):
        idx = vpanel == panel
        c = xbar[idx].mean(0)
        out[idx] = c + s * (xbar[idx] - c)
    return out


def synth_target(scene: Scene, cfg: SynthConfig, seed: int = 0) -> SynthResult:
    material = scene.material
    if cfg.bend_compliance is not None:
        material = replace(material, bend=cfg.bend_compliance)
    if cfg.stretch_compliance is not None:
        material = replace(material, stretch=tuple(cfg.stretch_compliance))
    nu = psi = None
    if scene.body_model is not None:
        nu = scene.nu if cfg.body_shape is None else np.asarray(cfg.body_shape, dtype=np.float64)
        psi = scene.psi if cfg.body_pose is None else np.asarray(cfg.body_pose, dtype=np.float64)
    xbar = scale_panels(scene, cfg.pattern_scale) if cfg.pattern_scale != 1.0 else None

    compiled = scene.compile(xbar=xbar, material=material, nu=nu, psi=psi)
    trajectory = scene.drape(compiled)
    truth = trajectory.final.x.copy()

    rng = np.random.default_rng(seed)
    keep = rng.random(truth.shape[0]) >= cfg.dropout
    if not keep.any():
        keep[rng.integers(truth.shape[0])] = True
    points = truth[keep]
    if cfg.noise > 0:
        points = points + rng.normal(scale=cfg.noise, size=points.shape)

    polylines = {lbl: Polyline(lbl, truth[ids].copy(), closed=True) for lbl, ids in scene.loops.items()}
    target = TargetGarment(interior=points, polylines=polylines)
    chamfer = metric_chamfer(points, truth, units="mm")
    logger.info("synthetic target: %d/%d points, noise %.2g m, chamfer to truth %.4g mm^2",
                points.shape[0], truth.shape[0], cfg.noise, chamfer)
    return SynthResult(target=target, truth=truth, xbar=compiled.xbar, trajectory=trajectory,
                       chamfer_mm=chamfer)
