"""
XPBD cloth stepping on the welded garment mesh.

One step:
    y = x_n + dt v_n + dt^2 g          (free vertices only)
    contacts detected at y (or replayed from a schedule)
    colored Gauss-Seidel: strain colors, bend colors, then the contact batch, `iterations` times
    x_{n+1} = projected y;  v_{n+1} = damping (x_{n+1} - x_n) / dt
Multipliers restart from zero every step.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .coloring import graph_coloring
from .constraints import (
    LocalSolve,
    collision_constraints,
    collision_eval,
    dihedral_eval,
    local_solve,
    strain_coefficients,
    strain_eval,
)
from .errors import DimensionMismatchError, NonFiniteStateError, SimulationDiverged
from .pattern import interior_edges

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaterialParams:
    stretch: tuple[float, float, float] = (1e-3, 1e-3, 4e-3)
    bend: float = 1e3
    density: float = 0.15
    thickness: float = 0.002

    def __post_init__(self):
        if any(a < 0 for a in self.stretch) or self.bend < 0:
            raise ValueError("compliances must be non-negative")
        if not self.density > 0:
            raise ValueError("density must be positive")
        if self.thickness < 0:
            raise ValueError("thickness must be non-negative")

    @property
    def stretch_array(self) -> np.ndarray:
        return np.asarray(self.stretch, dtype=np.float64)


@dataclass
class SimState:
    x: np.ndarray
    v: np.ndarray
    n: int = 0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.x.shape != self.v.shape or self.x.ndim != 2 or self.x.shape[1] != 3:
            raise DimensionMismatchError(f"state shapes x{self.x.shape} v{self.v.shape}")

    def copy(self) -> "SimState":
        return SimState(self.x.copy(), self.v.copy(), self.n)

    @property
    def max_speed(self) -> float:
        return float(np.linalg.norm(self.v, axis=1).max()) if self.v.size else 0.0


@dataclass(frozen=True)
class ContactSet:
    vertex: np.ndarray   # cloth vertex ids
    face: np.ndarray     # body face ids
    bary: np.ndarray     # (n, 3)
    normal: np.ndarray   # (n, 3) frozen outward normals

    @classmethod
    def empty(cls) -> "ContactSet":
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros((0, 3)))

    def __len__(self) -> int:
        return int(self.vertex.shape[0])


@dataclass
class StepRecord:
    contacts: ContactSet
    lam_strain: np.ndarray
    lam_bend: np.ndarray
    lam_contact: np.ndarray
    dx: np.ndarray           # x_{n+1} - y


@dataclass
class Trajectory:
    states: list[SimState]
    records: list[StepRecord]
    converged: bool = False

    @property
    def n_steps(self) -> int:
        return len(self.records)

    @property
    def final(self) -> SimState:
        return self.states[-1]

    def contact_schedule(self) -> list[ContactSet]:
        return [r.contacts for r in self.records]


@dataclass
class TapeEntry:
    kind: str                 # "strain" | "bend" | "contact"
    batch: np.ndarray         # constraint ids within the kind
    stencil: np.ndarray       # (n, s) vertex ids
    X: np.ndarray             # stencil positions before the update
    lam: np.ndarray           # multipliers before the update
    C: np.ndarray
    G: np.ndarray
    w: np.ndarray
    at: np.ndarray
    sol: LocalSolve
    valid: np.ndarray | None = None


@dataclass
class SimModel:
    """Compiled simulation problem: topology, rest data, masses, material and collider."""
    faces: np.ndarray            # (F, 3) simulated vertex ids
    c: np.ndarray                # (F, 3, 2) strain coefficient rows from Dbar^-1
    area: np.ndarray             # (F,)
    mass: np.ndarray             # (n,)
    pinned: np.ndarray           # (n,) bool
    hinges: np.ndarray           # (H, 4)
    material: MaterialParams
    dt: float = 1.0 / 120.0
    iterations: int = 20
    damping: float = 0.998
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.81, 0.0]))
    contact_margin: float | None = None
    divergence_speed: float = 1e3
    body: object | None = None   # PosedBody
    strain_colors: list[np.ndarray] = field(default_factory=list)
    bend_colors: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=np.float64)
        if not self.strain_colors and self.faces.size:
            self.strain_colors = graph_coloring(self.faces, self.n_vertices)
        if not self.bend_colors and self.hinges.size:
            self.bend_colors = graph_coloring(self.hinges, self.n_vertices)

    @property
    def n_vertices(self) -> int:
        return int(self.mass.shape[0])

    @property
    def inv_mass(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.pinned | (self.mass <= 0), 0.0, 1.0 / self.mass)

    @property
    def margin(self) -> float:
        return self.material.thickness if self.contact_margin is None else self.contact_margin

    def alpha_tilde_strain(self) -> np.ndarray:
        return self.material.stretch_array[None, :] / (self.area[:, None] * self.dt ** 2)

    def alpha_tilde_bend(self) -> np.ndarray:
        return np.full((self.hinges.shape[0], 1), self.material.bend / self.dt ** 2)

    def with_material(self, material: MaterialParams) -> "SimModel":
        return replace(self, material=material)


def build_model(sim_faces: np.ndarray, Dbar_inv: np.ndarray, area: np.ndarray, mass: np.ndarray,
                material: MaterialParams, pinned: np.ndarray | None = None, body=None,
                dt: float = 1.0 / 120.0, iterations: int = 20, damping: float = 0.998,
                gravity=(0.0, -9.81, 0.0), contact_margin: float | None = None,
                divergence_speed: float = 1e3) -> SimModel:
    sim_faces = np.asarray(sim_faces, dtype=np.int64)
    n = mass.shape[0]
    pin = np.zeros(n, dtype=bool)
    if pinned is not None:
        pin[np.asarray(pinned, dtype=np.int64)] = True
    return SimModel(
        faces=sim_faces,
        c=strain_coefficients(Dbar_inv),
        area=np.asarray(area, dtype=np.float64),
        mass=np.asarray(mass, dtype=np.float64),
        pinned=pin,
        hinges=interior_edges(sim_faces),
        material=material,
        dt=dt,
        iterations=iterations,
        damping=damping,
        gravity=np.asarray(gravity, dtype=np.float64),
        contact_margin=contact_margin,
        divergence_speed=divergence_speed,
        body=body,
    )


# ---------- single step ----------

def predict(model: SimModel, state: SimState) -> np.ndarray:
    free = (model.inv_mass > 0)[:, None]
    return state.x + model.dt * state.v + (model.dt ** 2) * model.gravity[None, :] * free


def detect_contacts(model: SimModel, y: np.ndarray) -> ContactSet:
    if model.body is None:
        return ContactSet.empty()
    return collision_constraints(y, model.body, model.material.thickness, model.margin, model.inv_mass)


@dataclass
class Projection:
    x: np.ndarray
    lam_strain: np.ndarray
    lam_bend: np.ndarray
    lam_contact: np.ndarray


def contact_points(model: SimModel, contacts: ContactSet) -> np.ndarray:
    if len(contacts) == 0:
        return np.zeros((0, 3))
    return model.body.contact_points(contacts.face, contacts.bary)


def xpbd_project(model: SimModel, y: np.ndarray, contacts: ContactSet, iterations: int | None = None,
                 tape: list[TapeEntry] | None = None) -> Projection:
    """Gauss-Seidel over colored constraint batches; multipliers start at zero."""
    x = y.copy()
    w = model.inv_mass
    at_s = model.alpha_tilde_strain()
    at_b = model.alpha_tilde_bend()
    lam_s = np.zeros((model.faces.shape[0], 3))
    lam_b = np.zeros((model.hinges.shape[0], 1))
    lam_c = np.zeros((len(contacts), 1))
    p_c = contact_points(model, contacts)
    thickness = model.material.thickness
    iterations = model.iterations if iterations is None else iterations
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    for _ in range(iterations):
        for batch in model.strain_colors:
            idx = model.faces[batch]
            X = x[idx]
            C, G = strain_eval(X, model.c[batch])
            wb, at, lam = w[idx], at_s[batch], lam_s[batch]
            sol = local_solve(G, C, wb, at, lam)
            if tape is not None:
                tape.append(TapeEntry("strain", batch, idx, X, lam.copy(), C, G, wb, at, sol))
            lam_s[batch] = lam + sol.dlam
            x[idx] = X + sol.dx
        for batch in model.bend_colors:
            idx = model.hinges[batch]
            X = x[idx]
            C, G, valid = dihedral_eval(X)
            wb, at, lam = w[idx], at_b[batch], lam_b[batch]
            sol = local_solve(G, C, wb, at, lam)
            if tape is not None:
                tape.append(TapeEntry("bend", batch, idx, X, lam.copy(), C, G, wb, at, sol, valid))
            lam_b[batch] = lam + sol.dlam
            x[idx] = X + sol.dx
        if len(contacts):
            idx = contacts.vertex[:, None]
            X = x[idx]
            C, G = collision_eval(X[:, 0], p_c, contacts.normal, thickness)
            wb = w[idx]
            at = np.zeros_like(C)
            lam = lam_c
            sol = local_solve(G, C, wb, at, lam, unilateral=True)
            if tape is not None:
                batch = np.arange(len(contacts))
                tape.append(TapeEntry("contact", batch, idx, X, lam.copy(), C, G, wb, at, sol))
            lam_c = lam + sol.dlam
            x[idx] = X + sol.dx
    return Projection(x=x, lam_strain=lam_s, lam_bend=lam_b[:, 0], lam_contact=lam_c[:, 0])


def step(model: SimModel, state: SimState, contacts: ContactSet | None = None,
         tape: list[TapeEntry] | None = None) -> tuple[SimState, StepRecord]:
    if model.dt <= 0:
        raise ValueError("dt must be positive")
    y = predict(model, state)
    if contacts is None:
        contacts = detect_contacts(model, y)
    proj = xpbd_project(model, y, contacts, tape=tape)
    x_new = proj.x
    n = state.n + 1
    if not np.isfinite(x_new).all():
        raise NonFiniteStateError(n)
    v_new = model.damping * (x_new - state.x) / model.dt
    record = StepRecord(contacts=contacts, lam_strain=proj.lam_strain, lam_bend=proj.lam_bend,
                        lam_contact=proj.lam_contact, dx=x_new - y)
    return SimState(x_new, v_new, n), record


# ---------- energies / drape ----------

def energies(model: SimModel, state: SimState) -> dict[str, float]:
    free = ~model.pinned
    kinetic = 0.5 * float((model.mass[free] * (state.v[free] ** 2).sum(1)).sum())
    C, _ = strain_eval(state.x[model.faces], model.c)
    alpha = model.material.stretch_array
    with np.errstate(divide="ignore", invalid="ignore"):
        per = np.where(alpha > 0, C ** 2 / alpha, 0.0)
    strain = 0.5 * float((model.area[:, None] * per).sum())
    bending = 0.0
    if model.hinges.size and model.material.bend > 0:
        Cb, _, _ = dihedral_eval(state.x[model.hinges])
        bending = 0.5 * float((Cb ** 2).sum()) / model.material.bend
    return {"kinetic": kinetic, "strain": strain, "bending": bending,
            "max_strain": float(np.abs(C).max()) if C.size else 0.0}


def drape_to_equilibrium(model: SimModel, state0: SimState, max_steps: int, v_tol: float = 1e-3,
                         fixed_steps: bool = False,
                         contact_schedule: Sequence[ContactSet] | None = None,
                         on_step: Callable[[int, SimState, StepRecord], None] | None = None) -> Trajectory:
    """Step until max speed < v_tol (unless fixed_steps) or max_steps is reached."""
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if contact_schedule is not None and len(contact_schedule) < max_steps:
        raise ValueError("contact schedule shorter than max_steps")
    states = [state0.copy()]
    records: list[StepRecord] = []
    state = states[0]
    converged = False
    for k in range(max_steps):
        contacts = contact_schedule[k] if contact_schedule is not None else None
        state, record = step(model, state, contacts)
        states.append(state)
        records.append(record)
        speed = state.max_speed
        if on_step is not None:
            on_step(k + 1, state, record)
        if speed > model.divergence_speed:
            raise SimulationDiverged(state.n, speed)
        if not fixed_steps and speed < v_tol:
            converged = True
            break
    logger.debug("drape finished after %d steps (max speed %.3g, converged=%s)",
                 len(records), states[-1].max_speed, converged)
    return Trajectory(states=states, records=records, converged=converged)


def energy_logger(model: SimModel, path: str | Path) -> Callable[[int, SimState, StepRecord], None]:
    """on_step callback writing one JSON line per step."""
    fh = open(path, "w", encoding="utf-8")

    def _log(n: int, state: SimState, record: StepRecord) -> None:
        row = {"step": n, **energies(model, state), "max_speed": state.max_speed,
               "contacts": len(record.contacts)}
        fh.write(json.dumps(row) + "\n")
        fh.flush()

    _log.close = fh.close  # type: ignore[attr-defined]
    return _log


def export_obj(x: np.ndarray, faces: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in x:
            f.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
        for a, b, c in np.asarray(faces) + 1:
            f.write(f"f {a} {b} {c}\n")


def export_trajectory_obj(trajectory: Trajectory, faces: np.ndarray, directory: str | Path,
                          every: int = 1) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for i, state in enumerate(trajectory.states):
        if i % every and i != len(trajectory.states) - 1:
            continue
        path = directory / f"frame_{i:05d}.obj"
        export_obj(state.x, faces, path)
        written.append(path)
    return written


def momentum_residual(mass: np.ndarray, dx: np.ndarray) -> float:
    """|sum m dx| relative to sum m |dx| for one constraint projection."""
    total = (mass[:, None] * dx).sum(0)
    scale = (mass * np.linalg.norm(dx, axis=1)).sum()
    return float(np.linalg.norm(total) / scale) if scale > 0 else 0.0


