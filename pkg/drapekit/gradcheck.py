"""
Finite-difference validation of the adjoint gradients.

Perturbed forward runs replay the contact sets of the unperturbed run, so every evaluation sees
the same discrete structure and central differences converge to the analytic gradient.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .cage import build_cage
from .errors import ConfigError
from .loss import LossResult
from .scene import CompiledScene, Scene, build_scene
from .schemas import GradcheckReport, GradcheckRow, RunConfig, SimulationConfig

logger = logging.getLogger(__name__)

GROUPS = ("pattern", "cage", "material", "stretch", "shape", "pose")


def central_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6,
                       indices: Sequence[int] | None = None, scale: np.ndarray | None = None) -> np.ndarray:
    """Central differences of a scalar function of a flat vector; step h * scale[i] per entry."""
    x = np.asarray(x, dtype=np.float64).ravel()
    idx = range(x.size) if indices is None else indices
    out = np.zeros(len(idx))
    for k, i in enumerate(idx):
        step = h * (1.0 if scale is None else scale[i])
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        out[k] = (f(xp) - f(xm)) / (2.0 * step)
    return out


def _is_noisy(errors: Sequence[float]) -> bool:
    """Error rises and then falls again as h shrinks."""
    e = list(errors)
    for k in range(1, len(e) - 1):
        if e[k] > e[k - 1] and e[k] > e[k + 1]:
            return True
    return False


def finite_difference_check(f: Callable[[np.ndarray], float], x0: np.ndarray, analytic: np.ndarray,
                            h_list: Sequence[float] = (1e-4, 1e-5, 1e-6), tolerance: float = 1e-3,
                            indices: Sequence[int] | None = None, names: Sequence[str] | None = None,
                            group: str = "param", relative_step: bool = False) -> list[GradcheckRow]:
    """Best-over-h relative error per selected parameter; a non-monotone error curve is flagged noisy."""
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    idx = list(range(x0.size)) if indices is None else [int(i) for i in indices]
    scale = np.maximum(np.abs(x0), 1e-2) if relative_step else None
    floor = 1e-4 * float(np.abs(analytic).max()) + 1e-12 if analytic.size else 1e-12
    fds = np.stack([central_difference(f, x0, h, idx, scale) for h in h_list])
    rows = []
    for k, i in enumerate(idx):
        a = float(analytic[i])
        errs = [abs(a - float(fd)) / max(abs(a), abs(float(fd)), floor) for fd in fds[:, k]]
        best = int(np.argmin(errs))
        rows.append(GradcheckRow(
            group=group,
            parameter=names[k] if names is not None else f"{group}[{i}]",
            analytic=a,
            finite_difference=float(fds[best, k]),
            rel_error=float(errs[best]),
            best_h=float(h_list[best]),
            noisy=_is_noisy(errs),
            passed=errs[best] < tolerance,
        ))
    return rows


@dataclass
class ProbeLoss:
    """Smooth test functional phi(x) = c . x + 0.5 |x - t|^2 on the final positions."""
    c: np.ndarray
    t: np.ndarray

    def __call__(self, x: np.ndarray, p: np.ndarray) -> LossResult:
        d = x - self.t
        value = float((self.c * x).sum() + 0.5 * (d * d).sum())
        return LossResult(value=value, terms={"probe": value}, grad_x=self.c + d, grad_p=np.zeros_like(p))

    @classmethod
    def around(cls, x: np.ndarray, seed: int = 0, offset: float = 0.01) -> "ProbeLoss":
        rng = np.random.default_rng(seed)
        return cls(c=rng.normal(size=x.shape), t=x + offset * rng.normal(size=x.shape))


def _spread(n: int, k: int) -> np.ndarray:
    if n <= k:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, k).round().astype(np.int64))


class _Runner:
    """phi as a function of one parameter group with everything else held at the base point."""

    def __init__(self, scene: Scene, steps: int, loss: ProbeLoss, schedule):
        self.scene = scene
        self.steps = steps
        self.loss = loss
        self.schedule = schedule

    def phi(self, compiled: CompiledScene) -> float:
        traj = self.scene.drape(compiled, max_steps=self.steps, fixed_steps=True, contact_schedule=self.schedule)
        return self.loss(traj.final.x, compiled.xbar).value


def gradcheck_simulation(cfg: RunConfig) -> SimulationConfig:
    """Simulation settings for finite-difference runs: fixed step count, no velocity damping."""
    return cfg.simulation.model_copy(update={"fixed_steps": True, "max_steps": cfg.gradcheck.steps, "damping": 1.0})


def run_gradcheck(cfg: RunConfig, groups: Sequence[str] | None = None) -> GradcheckReport:
    gc = cfg.gradcheck
    groups = list(groups or gc.groups)
    bad = [g for g in groups if g not in GROUPS]
    if bad:
        raise ConfigError("gradcheck.groups", f"unknown groups {bad}; choose from {list(GROUPS)}")
    sim = gradcheck_simulation(cfg)
    scene = build_scene(cfg.model_copy(update={"simulation": sim}), pattern=gc.pattern,
                        body=gc.body if gc.body is not None else "none")

    base = scene.compile()
    traj = scene.drape(base)
    schedule = traj.contact_schedule()
    loss = ProbeLoss.around(traj.final.x, seed=cfg.seed)
    _, grads, adj = scene.gradient(base, traj, loss)
    logger.info("gradcheck scene: %d vertices, %d steps, %d contacts in the last step, replay residual %.1e",
                scene.n_sim, traj.n_steps, len(schedule[-1]) if schedule else 0, adj.max_replay_residual)
    run = _Runner(scene, gc.steps, loss, schedule)
    corrupt = gc.corrupt
    rows: list[GradcheckRow] = []

    def check(group, x0, analytic, f, names=None, relative=False):
        idx = _spread(np.asarray(x0).size, gc.max_params)
        picked = None if names is None else [names[i] for i in idx]
        rows.extend(finite_difference_check(f, x0, corrupt * np.asarray(analytic), gc.h_list, gc.tolerance,
                                            idx, picked, group, relative_step=relative))

    if "pattern" in groups:
        x0 = base.xbar.ravel()
        check("pattern", x0, grads.rest.ravel(),
              lambda th: run.phi(scene.compile(xbar=th.reshape(-1, 2))),
              [f"xbar[{i // 2}].{'uv'[i % 2]}" for i in range(x0.size)])
    if "cage" in groups:
        cage = build_cage(scene.pattern, cfg.optimizer.angle_threshold)
        z0 = cage.zeta0.ravel()
        check("cage", z0, cage.chain_gradient(grads.rest).ravel(),
              lambda th: run.phi(scene.compile(xbar=cage.deform(th, check=False))),
              [f"zeta[{i // 2}].{'uv'[i % 2]}" for i in range(z0.size)])
    if "material" in groups:
        check("material", np.array([scene.material.bend]), np.array([grads.bend]),
              lambda th: run.phi(scene.compile(material=replace(scene.material, bend=float(th[0])))),
              ["bend_compliance"], relative=True)
    if "stretch" in groups:
        check("stretch", scene.material.stretch_array, grads.stretch,
              lambda th: run.phi(scene.compile(material=replace(scene.material, stretch=tuple(th)))),
              ["stretch_weft", "stretch_warp", "stretch_shear"], relative=True)
    body = scene.body_model
    if body is not None and "shape" in groups:
        check("shape", scene.nu, grads.shape, lambda th: run.phi(scene.compile(nu=th)), body.basis_names)
    if body is not None and "pose" in groups:
        names = (["tx", "ty", "tz"] + [f"{j}.r{a}" for j in body.joint_names for a in "xyz"]
                 + [f"{j}.bone" for j in body.joint_names])
        check("pose", scene.psi, grads.pose, lambda th: run.phi(scene.compile(psi=th)), names)

    report = GradcheckReport(rows=rows, tolerance=gc.tolerance, passed=all(r.passed for r in rows))
    for r in rows:
        if r.noisy:
            logger.warning("noisy finite differences for %s %s", r.group, r.parameter)
        if not r.passed:
            logger.error("gradient mismatch %s %s: analytic %.6e fd %.6e rel %.2e",
                         r.group, r.parameter, r.analytic, r.finite_difference, r.rel_error)
    return report
