"""
Scene assembly: garment pattern + placements + body + material + simulation settings, compiled
into a SimModel for a given parameter set, plus the forward drape and its full gradient.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import config
from .adjoint import (
    AdjointResult,
    GradientBundle,
    adjoint_sweep,
    grad_wrt_body,
    grad_wrt_material,
    grad_wrt_rest,
    total_gradient,
)
from .assets import builtin_body, builtin_garment, is_builtin
from .body import BodyModel, PosedBody, init_fit, load_body
from .errors import ConfigError, DimensionMismatchError
from .loss import GarmentLoss, LossResult, TargetGarment
from .pattern import (
    Embedding,
    PanelPlacement,
    PatternMesh,
    RestShapeData,
    boundary_cycles,
    build_rest_shape,
    load_pattern,
    place_panels,
    triangle_quality,
    weld_map,
)
from .schemas import LossConfig, RunConfig, SimulationConfig
from .xpbd import MaterialParams, SimModel, SimState, Trajectory, build_model, drape_to_equilibrium

logger = logging.getLogger(__name__)


def resolve_path(value: str, key: str) -> Path:
    """Existing file path, looked up as given and then under DRAPEKIT_ASSET_DIR."""
    path = Path(value)
    if path.exists():
        return path
    if config.ASSET_DIR is not None and (config.ASSET_DIR / value).exists():
        return config.ASSET_DIR / value
    raise ConfigError(key, f"file not found: {value}")


def material_from_config(cfg) -> MaterialParams:
    return MaterialParams(stretch=tuple(cfg.stretch_compliance), bend=cfg.bend_compliance,
                          density=cfg.density, thickness=cfg.thickness)


@dataclass
class CompiledScene:
    model: SimModel
    rest: RestShapeData
    embedding: Embedding
    xbar: np.ndarray
    body: PosedBody | None
    state0: SimState
    cold: bool = True       # free vertices start from the placement of xbar


@dataclass
class Scene:
    pattern: PatternMesh
    placements: dict[int, PanelPlacement]
    pinned: np.ndarray                      # pattern vertex ids
    boundary_labels: list[str]
    material: MaterialParams
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    body_model: BodyModel | None = None
    nu: np.ndarray | None = None
    psi: np.ndarray | None = None

    def __post_init__(self):
        self.pinned = np.asarray(self.pinned, dtype=np.int64).reshape(-1)
        self.sim_index, self.n_sim = weld_map(self.pattern)
        self.sim_faces = self.sim_index[self.pattern.faces]
        self.sim_pinned = np.unique(self.sim_index[self.pinned]) if self.pinned.size else self.pinned
        if self.body_model is not None:
            if self.nu is None:
                self.nu = self.body_model.zero_shape()
            if self.psi is None:
                self.psi = self.body_model.zero_pose()
            self.nu = np.asarray(self.nu, dtype=np.float64)
            self.psi = np.asarray(self.psi, dtype=np.float64)
            if self.nu.shape != (self.body_model.n_shape,) or self.psi.shape != (self.body_model.n_pose,):
                raise DimensionMismatchError(
                    f"body parameters ({self.nu.size}, {self.psi.size}) != "
                    f"({self.body_model.n_shape}, {self.body_model.n_pose})")
        self.loops = self.label_loops()

    @property
    def n_pattern(self) -> int:
        return self.pattern.n_vertices

    def label_loops(self, positions: np.ndarray | None = None) -> dict[str, np.ndarray]:
        """Welded boundary cycles named by boundary_labels, highest mean height first."""
        if positions is None:
            positions = place_panels(self.pattern, self.placements, self.sim_index, self.n_sim).positions
        cycles = boundary_cycles(self.sim_faces)
        cycles.sort(key=lambda c: -float(positions[c, 1].mean()))
        labels = list(self.boundary_labels)
        if len(labels) < len(cycles):
            labels += [f"loop{k}" for k in range(len(labels), len(cycles))]
        elif len(labels) > len(cycles):
            logger.warning("%d boundary labels for %d boundary loops; ignoring %s",
                           len(labels), len(cycles), labels[len(cycles):])
        return {lbl: c for lbl, c in zip(labels, cycles)}

    def compile(self, xbar: np.ndarray | None = None, material: MaterialParams | None = None,
                nu: np.ndarray | None = None, psi: np.ndarray | None = None) -> CompiledScene:
        xbar = self.pattern.vertices_2d if xbar is None else np.asarray(xbar, dtype=np.float64)
        material = material or self.material
        rest = build_rest_shape(self.pattern, material.density, xbar)
        mass = np.bincount(self.sim_index, weights=rest.mass, minlength=self.n_sim)
        embedding = place_panels(self.pattern, self.placements, self.sim_index, self.n_sim, xbar)
        body = None
        if self.body_model is not None:
            body = self.body_model.pose(self.nu if nu is None else nu, self.psi if psi is None else psi)
        sim = self.simulation
        model = build_model(self.sim_faces, rest.Dbar_inv, rest.area, mass, material,
                            pinned=self.sim_pinned, body=body, dt=sim.dt, iterations=sim.solver_iters,
                            damping=sim.damping, gravity=sim.gravity, contact_margin=sim.contact_margin,
                            divergence_speed=sim.divergence_speed)
        state0 = SimState(embedding.positions.copy(), np.zeros((self.n_sim, 3)))
        return CompiledScene(model=model, rest=rest, embedding=embedding, xbar=xbar, body=body, state0=state0)

    def drape(self, compiled: CompiledScene, max_steps: int | None = None, fixed_steps: bool | None = None,
              contact_schedule=None, on_step=None) -> Trajectory:
        sim = self.simulation
        return drape_to_equilibrium(
            compiled.model, compiled.state0,
            max_steps=sim.max_steps if max_steps is None else max_steps,
            v_tol=sim.v_tol,
            fixed_steps=sim.fixed_steps if fixed_steps is None else fixed_steps,
            contact_schedule=contact_schedule,
            on_step=on_step,
        )

    def gradient(self, compiled: CompiledScene, trajectory: Trajectory, loss: GarmentLoss,
                 cage=None) -> tuple[LossResult, GradientBundle, AdjointResult]:
        """Loss at the final state and its gradient with respect to every parameter group."""
        result = loss(trajectory.final.x, compiled.xbar)
        adj = adjoint_sweep(compiled.model, trajectory, (result.grad_x, np.zeros_like(result.grad_x)))
        bundle = self.gradient_from_adjoint(compiled, adj)
        return result, total_gradient(bundle, explicit_rest=result.grad_p, cage=cage), adj

    def gradient_from_adjoint(self, compiled: CompiledScene, adj: AdjointResult) -> GradientBundle:
        rest = grad_wrt_rest(compiled.model, adj.raw, self.pattern.faces, compiled.rest.Dbar_inv,
                             self.n_pattern, compiled.model.material.density,
                             include_mass=self.simulation.mass_gradient,
                             embedding=compiled.embedding if compiled.cold else None)
        if not compiled.cold:
            # warm starts still place pinned vertices from the pattern
            pinned_x0 = np.where(compiled.model.pinned[:, None], adj.raw.x0, 0.0)
            rest += compiled.embedding.pullback(pinned_x0)
        bend, stretch = grad_wrt_material(adj.raw)
        shape = pose = None
        if self.body_model is not None:
            shape, pose = grad_wrt_body(adj.raw, self.body_model, self.nu, self.psi)
        return GradientBundle(rest=rest, bend=bend, stretch=stretch, shape=shape, pose=pose)

    def quality(self, xbar: np.ndarray | None = None):
        return triangle_quality(self.pattern.vertices_2d if xbar is None else xbar, self.pattern.faces)

    def with_body_params(self, nu: np.ndarray, psi: np.ndarray) -> "Scene":
        return replace(self, nu=np.asarray(nu, dtype=np.float64), psi=np.asarray(psi, dtype=np.float64))


def make_loss(scene: Scene, target: TargetGarment, cfg: LossConfig,
              reference: np.ndarray | None = None) -> GarmentLoss:
    weights = None if cfg.curvature_weights is None else np.asarray(cfg.curvature_weights, dtype=np.float64)
    if weights is not None and weights.shape != (scene.n_pattern,):
        raise ConfigError("loss.curvature_weights", f"expected {scene.n_pattern} entries, got {weights.size}")
    loops = {lbl: ids for lbl, ids in scene.loops.items() if lbl in target.polylines}
    skipped = sorted(set(scene.loops) - set(loops))
    if skipped:
        logger.info("boundary loops without target polylines: %s", skipped)
    interior = None
    if cfg.chamfer_vertices == "interior":
        on_boundary = np.zeros(scene.n_sim, dtype=bool)
        for ids in scene.loops.values():
            on_boundary[ids] = True
        interior = np.flatnonzero(~on_boundary)
        if interior.size == 0:
            raise ConfigError("loss.chamfer_vertices", "every simulated vertex lies on a labeled boundary loop")
    return GarmentLoss(
        target=target,
        boundary_loops=loops,
        seams=tuple(scene.pattern.seams),
        pattern_loops=tuple(scene.pattern.boundary_loops),
        reference=scene.pattern.vertices_2d.copy() if reference is None else reference,
        rho=cfg.rho, sigma=cfg.sigma, alpha_reg=cfg.alpha_reg, beta=cfg.beta,
        curvature_weights=weights, seam_signed=cfg.seam_signed, interior=interior,
    )


def _placements_from_config(raw) -> dict[int, PanelPlacement]:
    return {int(k): PanelPlacement(kind=p.kind, origin=tuple(p.origin), axis_u=tuple(p.axis_u),
                                   axis_v=tuple(p.axis_v), anchor=tuple(p.anchor), radius=p.radius,
                                   angle0=p.angle0)
            for k, p in raw.items()}


def load_body_asset(name: str | None) -> BodyModel | None:
    if name is None or name.lower() == "none":
        return None
    if is_builtin(name):
        return builtin_body(name)
    return load_body(resolve_path(name, "paths.body"))


def build_scene(cfg: RunConfig, pattern: str | None = None, body: str | None = None,
                target: TargetGarment | None = None) -> Scene:
    """Resolve the configured assets into a Scene; explicit `pattern`/`body` names win over cfg.paths."""
    pattern_name = pattern or cfg.paths.pattern
    if not pattern_name:
        raise ConfigError("paths.pattern", "no pattern given")
    if is_builtin(pattern_name):
        asset = builtin_garment(pattern_name)
        mesh, placements = asset.pattern, asset.placements
        pinned, labels, default_body = asset.pinned, asset.boundary_labels, asset.body
    else:
        seams = resolve_path(cfg.paths.seams, "paths.seams") if cfg.paths.seams else None
        mesh = load_pattern(resolve_path(pattern_name, "paths.pattern"), seams)
        placements, pinned, labels, default_body = {}, [], [], None

    sc = cfg.scene
    if sc.placements is not None:
        placements = _placements_from_config(sc.placements)
    if sc.pinned is not None:
        pinned = sc.pinned
    if sc.boundary_labels is not None:
        labels = sc.boundary_labels
    if pinned and (min(pinned) < 0 or max(pinned) >= mesh.n_vertices):
        raise ConfigError("scene.pinned", f"vertex ids must lie in 0..{mesh.n_vertices - 1}")

    body_name = body if body is not None else (cfg.paths.body if cfg.paths.body is not None else default_body)
    body_model = load_body_asset(body_name)
    nu = psi = None
    if body_model is not None:
        nu = body_model.zero_shape() if sc.body_shape is None else np.asarray(sc.body_shape, dtype=np.float64)
        psi = body_model.zero_pose() if sc.body_pose is None else np.asarray(sc.body_pose, dtype=np.float64)
        if nu.shape != (body_model.n_shape,):
            raise ConfigError("scene.body_shape", f"expected {body_model.n_shape} entries, got {nu.size}")
        if psi.shape != (body_model.n_pose,):
            raise ConfigError("scene.body_pose", f"expected {body_model.n_pose} entries, got {psi.size}")
        if sc.fit_body and target is not None:
            fit = init_fit(target.valid_interior, body_model, iterations=sc.fit_iterations, nu0=nu, psi0=psi)
            nu, psi = fit.nu, fit.psi
            logger.info("body fit: chamfer %.3e after %d iterations", fit.objective, fit.iterations)

    scene = Scene(pattern=mesh, placements=placements, pinned=np.asarray(pinned, dtype=np.int64),
                  boundary_labels=list(labels), material=material_from_config(cfg.material),
                  simulation=cfg.simulation, body_model=body_model, nu=nu, psi=psi)
    logger.info("scene: %d pattern vertices -> %d simulated, %d faces, %d pinned, loops %s",
                mesh.n_vertices, scene.n_sim, mesh.n_faces, scene.sim_pinned.size, list(scene.loops))
    return scene
