"""
Co-optimization of cage handles / pattern, material, and body parameters against a target garment.

Each iteration drapes to quasi-equilibrium, evaluates the loss, runs the adjoint sweep and takes a
per-group normalized gradient-descent step with backtracking on the loss.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .cage import ControlCage, build_cage
from .errors import (
    ConfigError,
    DegenerateElementError,
    DimensionMismatchError,
    InvertedElementError,
    SimulationError,
    TopologyMismatchError,
)
from .loss import GarmentLoss, LossResult, TargetGarment
from .pattern import signed_areas
from .scene import CompiledScene, Scene, make_loss
from .schemas import GROUPS, IterationRecord, OptimizationReport, QualityStats, RunConfig
from .xpbd import MaterialParams, SimState, Trajectory

logger = logging.getLogger(__name__)

STAGE_ALIASES = {"body": ("shape", "pose")}


# ---------- parameter vector ----------

@dataclass
class ParameterVector:
    """Named parameter blocks; only enabled blocks appear in the flat array."""
    values: dict[str, np.ndarray]
    enabled: tuple[str, ...] = ()
    material_params: tuple[str, ...] = ("bend",)

    def __post_init__(self):
        self.values = {k: np.asarray(v, dtype=np.float64).ravel() for k, v in self.values.items()}
        missing = [g for g in self.enabled if g not in self.values]
        if missing:
            raise DimensionMismatchError(f"enabled groups without values: {missing}")

    def offsets(self) -> dict[str, slice]:
        out, start = {}, 0
        for g in self.enabled:
            size = self.values[g].size
            out[g] = slice(start, start + size)
            start += size
        return out

    @property
    def size(self) -> int:
        return sum(self.values[g].size for g in self.enabled)

    def pack(self) -> np.ndarray:
        if not self.enabled:
            return np.zeros(0)
        return np.concatenate([self.values[g] for g in self.enabled])

    def unpack(self, flat: np.ndarray) -> "ParameterVector":
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if flat.size != self.size:
            raise DimensionMismatchError(f"flat parameter array has {flat.size} entries, expected {self.size}")
        values = {k: v.copy() for k, v in self.values.items()}
        for g, sl in self.offsets().items():
            values[g] = flat[sl].copy()
        return ParameterVector(values, self.enabled, self.material_params)

    def with_enabled(self, groups) -> "ParameterVector":
        return ParameterVector({k: v.copy() for k, v in self.values.items()}, tuple(groups), self.material_params)

    def copy(self) -> "ParameterVector":
        return self.with_enabled(self.enabled)


def material_to_log(material: MaterialParams, params) -> np.ndarray:
    vals = []
    for name in params:
        vals.extend([material.bend] if name == "bend" else list(material.stretch))
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(vals, dtype=np.float64))


def material_from_log(base: MaterialParams, params, logs: np.ndarray) -> MaterialParams:
    vals = np.exp(logs)
    k = 0
    out = base
    for name in params:
        if name == "bend":
            out = replace(out, bend=float(vals[k]))
            k += 1
        else:
            out = replace(out, stretch=tuple(float(v) for v in vals[k:k + 3]))
            k += 3
    return out


def warm_start(previous: Trajectory, compiled: CompiledScene) -> SimState:
    """Previous equilibrium as the next initial state, zero velocity, pinned vertices re-placed."""
    prev = previous.final.x
    if prev.shape != compiled.state0.x.shape:
        raise TopologyMismatchError(
            f"previous trajectory has {prev.shape[0]} vertices, new scene has {compiled.state0.x.shape[0]}")
    x = prev.copy()
    pinned = compiled.model.pinned
    x[pinned] = compiled.embedding.positions[pinned]
    return SimState(x, np.zeros_like(x))


# ---------- loop ----------

@dataclass
class Evaluation:
    params: ParameterVector
    compiled: CompiledScene
    trajectory: Trajectory
    result: LossResult
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.result.value


@dataclass
class OptimizationResult:
    params: ParameterVector
    report: OptimizationReport
    best: Evaluation
    initial: Evaluation


@dataclass
class StepOutcome:
    accepted: bool = False
    aborted: bool = False
    scale: float = 1.0
    backtracks: int = 0
    rejected: int = 0
    evaluation: Evaluation | None = None


def _rms(g: np.ndarray) -> float:
    return float(np.sqrt(np.mean(g * g))) if g.size else 0.0


def _quality(scene: Scene, xbar: np.ndarray) -> QualityStats:
    q = scene.quality(xbar)
    return QualityStats(min=q.min, mean=q.mean)


class CoOptimizer:
    def __init__(self, scene: Scene, target: TargetGarment, cfg: RunConfig, cage: ControlCage | None = None,
                 on_iteration: Callable[[IterationRecord, Evaluation], None] | None = None):
        self.scene = scene
        self.cfg = cfg
        self.opt = cfg.optimizer
        self.on_iteration = on_iteration
        self.stages = self._stages()
        used = {g for stage in self.stages for g in stage}
        if "cage" in used and "pattern" in used:
            raise ConfigError("optimizer.stages", "'cage' and 'pattern' groups are exclusive")
        if used & {"shape", "pose"} and scene.body_model is None:
            raise ConfigError("optimizer.groups", "body groups need a body model")
        self.cage = cage
        if self.cage is None and "cage" in used:
            self.cage = build_cage(scene.pattern, self.opt.angle_threshold)
        self.shape_mode = "cage" if "cage" in used else ("pattern" if "pattern" in used else None)
        self.loss: GarmentLoss = make_loss(scene, target, cfg.loss)
        self.rate_factor = 1.0
        if "material" in used and (material_to_log(scene.material, self.opt.material_params) == -np.inf).any():
            raise ConfigError("optimizer.material_params", "optimized compliances must be positive")

    def _stages(self) -> list[tuple[str, ...]]:
        if not self.opt.stages:
            return [tuple(self.opt.groups)]
        stages = []
        for stage in self.opt.stages:
            groups = []
            for g in stage:
                for name in STAGE_ALIASES.get(g, (g,)):
                    if name not in GROUPS:
                        raise ConfigError("optimizer.stages", f"unknown group {g!r}")
                    groups.append(name)
            stages.append(tuple(dict.fromkeys(groups)))
        return stages

    def initial_parameters(self) -> ParameterVector:
        sc = self.scene
        values = {
            "pattern": sc.pattern.vertices_2d.copy(),
            "material": material_to_log(sc.material, self.opt.material_params),
        }
        if self.cage is not None:
            values["cage"] = self.cage.zeta0.copy()
        if sc.body_model is not None:
            values["shape"] = sc.nu.copy()
            values["pose"] = sc.psi.copy()
        return ParameterVector(values, (), tuple(self.opt.material_params))

    # decoding

    def decode(self, pv: ParameterVector):
        if self.shape_mode == "cage":
            xbar = self.cage.deform(pv.values["cage"], check=True)
        else:
            xbar = pv.values["pattern"].reshape(-1, 2)
        material = material_from_log(self.scene.material, pv.material_params, pv.values["material"])
        nu = pv.values.get("shape")
        psi = pv.values.get("pose")
        return xbar, material, nu, psi

    def forward(self, pv: ParameterVector, previous: Trajectory | None = None) -> Evaluation:
        xbar, material, nu, psi = self.decode(pv)
        compiled = self.scene.compile(xbar=xbar, material=material, nu=nu, psi=psi)
        if previous is not None and self.opt.warm_start:
            compiled.state0 = warm_start(previous, compiled)
            compiled.cold = False
        trajectory = self.scene.drape(compiled)
        result = self.loss(trajectory.final.x, compiled.xbar)
        return Evaluation(pv, compiled, trajectory, result)

    def gradient(self, ev: Evaluation) -> dict[str, np.ndarray]:
        scene = self.scene
        if scene.body_model is not None:
            scene = replace(scene, nu=ev.params.values["shape"], psi=ev.params.values["pose"])
        _, bundle, _ = scene.gradient(ev.compiled, ev.trajectory, self.loss,
                                      cage=self.cage if self.shape_mode == "cage" else None)
        grads = {"pattern": bundle.rest.ravel()}
        if bundle.cage is not None:
            g = bundle.cage
            if self.opt.mirror_pairs:
                g = self.cage.symmetrize(g, self.opt.mirror_pairs)
            grads["cage"] = g.ravel()
        material = ev.compiled.model.material
        mg = []
        for name in ev.params.material_params:
            if name == "bend":
                mg.append(bundle.bend * material.bend)
            else:
                mg.extend(bundle.stretch * material.stretch_array)
        grads["material"] = np.asarray(mg)
        if bundle.shape is not None:
            grads["shape"] = np.asarray(bundle.shape)
            grads["pose"] = np.asarray(bundle.pose)
        ev.grads = grads
        return grads

    def propose(self, pv: ParameterVector, grads: dict[str, np.ndarray], scale: float) -> ParameterVector:
        values = {k: v.copy() for k, v in pv.values.items()}
        for g in pv.enabled:
            grad = grads[g]
            gmax = float(np.abs(grad).max()) if grad.size else 0.0
            if gmax == 0.0:
                continue
            rate = self.opt.rates.get(g, 0.0) * self.rate_factor
            values[g] = values[g] - scale * rate * grad / gmax
        if self.scene.body_model is not None:
            values["shape"], values["pose"] = self.scene.body_model.clamp(values["shape"], values["pose"])
        return ParameterVector(values, pv.enabled, pv.material_params)

    def _inverted(self, xbar: np.ndarray) -> int:
        return int((signed_areas(xbar, self.scene.pattern.faces) <= 0).sum())

    def run(self, pv: ParameterVector | None = None) -> OptimizationResult:
        t_start = time.perf_counter()
        pv = pv or self.initial_parameters()
        report = OptimizationReport()
        current = self.forward(pv)
        self.gradient(current)
        initial = current
        report.initial_loss = current.value
        report.quality_initial = _quality(self.scene, current.compiled.xbar)
        iteration = 0
        stop = "max iterations"

        if all(len(s) == 0 for s in self.stages):
            report.iterations.append(IterationRecord(
                iteration=1, loss=current.value, terms=current.result.terms, grad_norms={}, step_scale=0.0,
                accepted=False, drape_steps=current.trajectory.n_steps))
            report.notes.append("no parameter groups enabled; parameters unchanged")
            stop = "no parameter groups enabled"
            return self._finish(report, current, initial, stop, t_start)

        for stage in self.stages:
            current = Evaluation(current.params.with_enabled(stage), current.compiled, current.trajectory,
                                 current.result, current.grads)
            scale = 1.0
            stop = "max iterations"
            for _ in range(self.opt.max_iters):
                iteration += 1
                t_iter = time.perf_counter()
                norms = {g: _rms(current.grads[g]) for g in stage}
                if all(n < self.opt.grad_tol for n in norms.values()):
                    stop = "gradient tolerance"
                    break
                step = self._line_search(current, scale)
                record = IterationRecord(
                    iteration=iteration, loss=current.value, terms=current.result.terms, grad_norms=norms,
                    step_scale=step.scale, accepted=step.accepted, backtracks=step.backtracks,
                    rejected_inverted=step.rejected, drape_steps=current.trajectory.n_steps)
                if step.aborted:
                    stop = "forward simulation diverged"
                    report.iterations.append(record)
                    break
                if not step.accepted:
                    stop = "no accepted step at minimum step size"
                    report.iterations.append(record)
                    break
                current = step.evaluation
                self.gradient(current)
                scale = min(1.0, 2.0 * step.scale)
                record.loss = current.value
                record.terms = current.result.terms
                record.inverted = self._inverted(current.compiled.xbar)
                record.drape_steps = current.trajectory.n_steps
                record.wall_time = time.perf_counter() - t_iter
                report.iterations.append(record)
                logger.info("iter %d: loss %.6e (%s) scale %.3g backtracks %d", iteration, current.value,
                            ", ".join(f"{k} {v:.3e}" for k, v in current.result.terms.items()),
                            step.scale, step.backtracks)
                if self.on_iteration is not None:
                    self.on_iteration(record, current)
            if stop == "forward simulation diverged":
                break
        report.retries = int(round(-math.log2(self.rate_factor)))
        return self._finish(report, current, initial, stop, t_start)

    def _line_search(self, current: Evaluation, scale: float) -> StepOutcome:
        out = StepOutcome(scale=scale)
        retried = False
        while out.scale >= self.opt.min_step and out.backtracks <= self.opt.max_backtracks:
            cand = self.propose(current.params, current.grads, out.scale)
            try:
                ev = self.forward(cand, current.trajectory)
            except (InvertedElementError, DegenerateElementError) as exc:
                logger.info("step rejected: %s", exc)
                out.rejected += 1
                out.scale *= 0.5
                continue
            except SimulationError as exc:
                if retried or self.rate_factor < 1.0:
                    logger.error("forward simulation failed again: %s", exc)
                    out.aborted = True
                    return out
                logger.warning("forward simulation failed (%s); halving all rates and retrying", exc)
                self.rate_factor *= 0.5
                retried = True
                continue
            if not self.opt.backtracking or (np.isfinite(ev.value) and ev.value <= current.value):
                out.accepted = True
                out.evaluation = ev
                return out
            out.scale *= 0.5
            out.backtracks += 1
        return out

    def _finish(self, report: OptimizationReport, current: Evaluation, initial: Evaluation, stop: str,
                t_start: float) -> OptimizationResult:
        pv = current.params
        xbar, material, nu, psi = self.decode(pv)
        report.final_loss = current.value
        report.final_terms = current.result.terms
        report.parameters = {
            "bend_compliance": [material.bend],
            "stretch_compliance": list(material.stretch),
        }
        if self.cage is not None:
            report.parameters["cage"] = pv.values["cage"].tolist()
        if nu is not None:
            report.parameters["shape"] = nu.tolist()
            report.parameters["pose"] = psi.tolist()
        report.quality_final = _quality(self.scene, xbar)
        report.stop_reason = stop
        report.wall_time = time.perf_counter() - t_start
        logger.info("optimization stopped (%s): loss %.6e -> %.6e", stop, report.initial_loss, report.final_loss)
        return OptimizationResult(params=pv, report=report, best=current, initial=initial)


def co_optimize(scene: Scene, target: TargetGarment, cfg: RunConfig, cage: ControlCage | None = None,
                on_iteration=None) -> OptimizationResult:
    return CoOptimizer(scene, target, cfg, cage=cage, on_iteration=on_iteration).run()
