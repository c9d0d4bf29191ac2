"""
Adjoint (reverse-mode) pass over a stored XPBD trajectory.

Each step is replayed from its stored start state and contact set to rebuild the Gauss-Seidel
tape; the tape is then walked backwards batch by batch. The reverse of every local solve uses

    dlam = J^-1 b,   d(dlam) = -J^-1 (dJ dlam - db),   J = G W G^T + diag(at),  b = -C - at lam

so the per-step adjoint system is solved as the exact transpose of the forward iteration.
Parameter sensitivities are collected as raw cotangents (strain coefficients, rest areas,
inverse masses, compliances, posed body vertices, initial state) and converted afterwards.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .constraints import EDGE_MAP, dihedral_pullback, local_solve_reverse, strain_pullback
from .errors import AdjointError, DimensionMismatchError
from .xpbd import SimModel, Trajectory, TapeEntry, predict, xpbd_project

logger = logging.getLogger(__name__)

REPLAY_TOL = 1e-9


@dataclass
class AdjointState:
    x_hat: np.ndarray
    v_hat: np.ndarray
    n: int


@dataclass
class RawCotangents:
    c: np.ndarray            # (F, 3, 2)
    area: np.ndarray         # (F,)
    inv_mass: np.ndarray     # (n,)
    stretch: np.ndarray      # (3,)
    bend: float
    body_vertices: np.ndarray | None
    x0: np.ndarray
    v0: np.ndarray

    @classmethod
    def zeros(cls, model: SimModel) -> "RawCotangents":
        body = None if model.body is None else np.zeros_like(model.body.vertices)
        n = model.n_vertices
        return cls(
            c=np.zeros_like(model.c),
            area=np.zeros_like(model.area),
            inv_mass=np.zeros(n),
            stretch=np.zeros(3),
            bend=0.0,
            body_vertices=body,
            x0=np.zeros((n, 3)),
            v0=np.zeros((n, 3)),
        )

    def scaled(self, s: float) -> "RawCotangents":
        return RawCotangents(
            c=s * self.c, area=s * self.area, inv_mass=s * self.inv_mass, stretch=s * self.stretch,
            bend=s * self.bend, body_vertices=None if self.body_vertices is None else s * self.body_vertices,
            x0=s * self.x0, v0=s * self.v0,
        )


@dataclass
class AdjointResult:
    states: list[AdjointState]
    raw: RawCotangents
    max_replay_residual: float = 0.0


@dataclass
class GradientBundle:
    rest: np.ndarray | None = None        # (n_pattern, 2)
    cage: np.ndarray | None = None        # flat handle coordinates
    bend: float = 0.0
    stretch: np.ndarray = field(default_factory=lambda: np.zeros(3))
    shape: np.ndarray | None = None
    pose: np.ndarray | None = None

    def is_finite(self) -> bool:
        parts = [self.rest, self.cage, self.stretch, self.shape, self.pose, np.array([self.bend])]
        return all(p is None or np.isfinite(p).all() for p in parts)


def _normalize_partials(partials, n_steps: int, n: int) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    if isinstance(partials, tuple):
        partials = {n_steps: partials}
    out = {}
    for k, (dx, dv) in partials.items():
        if k < 0 or k > n_steps:
            raise DimensionMismatchError(f"loss partial for step {k} outside trajectory 0..{n_steps}")
        dx = np.zeros((n, 3)) if dx is None else np.asarray(dx, dtype=np.float64)
        dv = np.zeros((n, 3)) if dv is None else np.asarray(dv, dtype=np.float64)
        if dx.shape != (n, 3) or dv.shape != (n, 3):
            raise DimensionMismatchError(f"loss partial shapes {dx.shape}, {dv.shape} != ({n}, 3)")
        out[int(k)] = (dx, dv)
    return out


def _reverse_tape(model: SimModel, tape: list[TapeEntry], xb: np.ndarray, raw: RawCotangents,
                  n_strain: int, n_bend: int, n_contact: int, contacts) -> np.ndarray:
    dt2 = model.dt ** 2
    lam_bar = {
        "strain": np.zeros((n_strain, 3)),
        "bend": np.zeros((n_bend, 1)),
        "contact": np.zeros((n_contact, 1)),
    }
    for entry in reversed(tape):
        xb_st = xb[entry.stencil]
        lb = lam_bar[entry.kind][entry.batch]
        Cbar, Gbar, wbar, atbar, lam_in_bar = local_solve_reverse(
            entry.G, entry.w, entry.at, entry.lam, entry.sol, xb_st, lb)
        lam_bar[entry.kind][entry.batch] = lam_in_bar
        np.add.at(raw.inv_mass, entry.stencil.ravel(), wbar.ravel())

        if entry.kind == "strain":
            c = model.c[entry.batch]
            Xbar, cbar = strain_pullback(entry.X, c, Cbar, Gbar)
            raw.c[entry.batch] += cbar
            area = model.area[entry.batch]
            raw.area[entry.batch] -= (atbar * entry.at).sum(1) / area
            raw.stretch += (atbar / (area[:, None] * dt2)).sum(0)
        elif entry.kind == "bend":
            Xbar = dihedral_pullback(entry.X, Cbar, Gbar, entry.valid)
            raw.bend += float(atbar[entry.valid].sum()) / dt2
        else:
            normal = contacts.normal
            Xbar = (Cbar[:, 0, None] * normal)[:, None, :]
            if raw.body_vertices is not None:
                body_faces = model.body.faces[contacts.face]
                push = -Cbar[:, 0, None, None] * contacts.bary[:, :, None] * normal[:, None, :]
                np.add.at(raw.body_vertices, body_faces.ravel(), push.reshape(-1, 3))
        xb[entry.stencil] = xb_st + Xbar
    return xb


def adjoint_sweep(model: SimModel, trajectory: Trajectory, loss_partials) -> AdjointResult:
    """
    Backward recursion from the final state.

    `loss_partials` is either (dphi/dx_N, dphi/dv_N) or a mapping step -> (dphi/dx_n, dphi/dv_n)
    for losses that also read intermediate states.
    """
    N = trajectory.n_steps
    n = model.n_vertices
    partials = _normalize_partials(loss_partials, N, n)
    zero = np.zeros((n, 3))
    x_hat, v_hat = (p.copy() for p in partials.get(N, (zero, zero)))
    states = [AdjointState(x_hat.copy(), v_hat.copy(), N)]
    raw = RawCotangents.zeros(model)
    d_over_dt = model.damping / model.dt
    worst = 0.0

    for k in range(N - 1, -1, -1):
        start = trajectory.states[k]
        record = trajectory.records[k]
        tape: list[TapeEntry] = []
        y = predict(model, start)
        proj = xpbd_project(model, y, record.contacts, tape=tape)
        residual = float(np.abs(proj.x - trajectory.states[k + 1].x).max()) if n else 0.0
        worst = max(worst, residual)
        if residual > REPLAY_TOL:
            raise AdjointError(k, residual)

        xb = x_hat + d_over_dt * v_hat
        y_bar = _reverse_tape(model, tape, xb, raw, model.faces.shape[0], model.hinges.shape[0],
                              len(record.contacts), record.contacts)
        dx, dv = partials.get(k, (zero, zero))
        x_hat = y_bar - d_over_dt * v_hat + dx
        v_hat = model.dt * y_bar + dv
        if not (np.isfinite(x_hat).all() and np.isfinite(v_hat).all()):
            raise AdjointError(k, float(np.nan_to_num(np.linalg.norm(x_hat), nan=np.inf)))
        states.append(AdjointState(x_hat.copy(), v_hat.copy(), k))

    states.reverse()
    raw.x0 = states[0].x_hat.copy()
    raw.v0 = states[0].v_hat.copy()
    logger.debug("adjoint sweep over %d steps, max replay residual %.2e", N, worst)
    return AdjointResult(states=states, raw=raw, max_replay_residual=worst)


# ---------- parameter Jacobians ----------

def dF_dxbar(D: np.ndarray, Dbar_inv: np.ndarray) -> np.ndarray:
    """
    d F_ij / d xbar_{v,m} for F = D Dbar^-1 with D held fixed; shape (..., 3, 2, rows, 2)
    indexed [vertex, component, i, j]. Vertex 2 is minus the sum of vertices 0 and 1.
    """
    D = np.asarray(D, dtype=np.float64)
    B = np.asarray(Dbar_inv, dtype=np.float64)
    DB = D @ B
    # T[v, m, i, j] = -(D B)_{i m} B_{v j}
    T01 = -np.einsum("...im,...vj->...vmij", DB, B)
    T2 = -(T01[..., 0, :, :, :] + T01[..., 1, :, :, :])
    return np.concatenate([T01, T2[..., None, :, :, :]], axis=-4)


def grad_wrt_rest(model: SimModel, raw: RawCotangents, pattern_faces: np.ndarray, Dbar_inv: np.ndarray,
                  n_pattern: int, density: float, include_mass: bool = True,
                  embedding=None) -> np.ndarray:
    """dphi/dxbar (n_pattern, 2) from the raw cotangents."""
    area = model.area.copy()
    area_bar = raw.area.copy()
    if include_mass:
        w = model.inv_mass
        m_bar = -raw.inv_mass * w * w          # pinned vertices have w = 0
        area_bar += density / 3.0 * m_bar[model.faces].sum(1)

    Bm_bar = np.einsum("kr,nkj->nrj", EDGE_MAP, raw.c)
    eye = np.broadcast_to(np.eye(2), Dbar_inv.shape)
    T = dF_dxbar(eye, Dbar_inv)                              # d Dbar^-1 / d xbar
    per_face = np.einsum("nij,nvmij->nvm", Bm_bar, T)
    # dA/dDbar = A Dbar^-T, moved to the vertices through the edge columns
    dA = area[:, None, None] * np.swapaxes(Dbar_inv, 1, 2)
    per_face[:, 0] += area_bar[:, None] * dA[:, :, 0]
    per_face[:, 1] += area_bar[:, None] * dA[:, :, 1]
    per_face[:, 2] -= area_bar[:, None] * (dA[:, :, 0] + dA[:, :, 1])

    grad = np.zeros((n_pattern, 2))
    np.add.at(grad, pattern_faces.ravel(), per_face.reshape(-1, 2))
    if embedding is not None:
        grad += embedding.pullback(raw.x0)
    return grad


def grad_wrt_material(raw: RawCotangents) -> tuple[float, np.ndarray]:
    return float(raw.bend), raw.stretch.copy()


def grad_wrt_body(raw: RawCotangents, body_model, nu: np.ndarray, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if raw.body_vertices is None:
        return np.zeros(body_model.n_shape), np.zeros(body_model.n_pose)
    return body_model.pullback(nu, psi, raw.body_vertices)


def total_gradient(adjoint_terms: GradientBundle, explicit_rest: np.ndarray | None = None,
                   cage=None) -> GradientBundle:
    """Adjoint-weighted Jacobian products plus explicit partials, chained through the cage if given."""
    rest = adjoint_terms.rest
    if explicit_rest is not None:
        if rest is not None and rest.shape != explicit_rest.shape:
            raise DimensionMismatchError(f"rest gradient {rest.shape} vs explicit {explicit_rest.shape}")
        rest = explicit_rest.copy() if rest is None else rest + explicit_rest
    out = GradientBundle(rest=rest, bend=adjoint_terms.bend, stretch=adjoint_terms.stretch.copy(),
                         shape=adjoint_terms.shape, pose=adjoint_terms.pose)
    if cage is not None and rest is not None:
        out.cage = cage.chain_gradient(rest)
    return out
