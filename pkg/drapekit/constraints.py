"""
Constraint kernels for the XPBD cloth solver and their reverse-mode counterparts.

Every kernel is batched: a batch holds n constraints of the same kind, each with m scalar
rows acting on a stencil of s vertices. Shapes used throughout:

    X  (n, s, 3)      stencil positions
    C  (n, m)         constraint values
    G  (n, m, s, 3)   constraint gradients
    w  (n, s)         inverse masses
    at (n, m)         time-scaled compliance alpha / dt^2
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

# rows of E map (x0, x1, x2) onto the rest edge columns (x0 - x2, x1 - x2)
EDGE_MAP = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
DEGENERATE_AREA = 1e-12
SINGULAR_REG = 1e-10
COMPLEX_STEP = 1e-20


# ---------- strain (Green-Lagrange, orthotropic) ----------

def deformation_gradient(x_tri: np.ndarray, Dbar_inv: np.ndarray) -> np.ndarray:
    """F = [x0 - x2 | x1 - x2] Dbar^-1; accepts a single triangle or a batch."""
    x_tri = np.asarray(x_tri, dtype=np.float64)
    D = np.stack([x_tri[..., 0, :] - x_tri[..., 2, :], x_tri[..., 1, :] - x_tri[..., 2, :]], axis=-1)
    return D @ Dbar_inv


def green_strain(F: np.ndarray) -> np.ndarray:
    """[eps00, eps11, eps01] of 0.5 (F^T F - I)."""
    f0 = F[..., :, 0]
    f1 = F[..., :, 1]
    return np.stack([
        0.5 * ((f0 * f0).sum(-1) - 1.0),
        0.5 * ((f1 * f1).sum(-1) - 1.0),
        0.5 * (f0 * f1).sum(-1),
    ], axis=-1)


def strain_coefficients(Dbar_inv: np.ndarray) -> np.ndarray:
    """Per-vertex rows c_k with F = sum_k x_k c_k^T, shape (n, 3, 2)."""
    return np.einsum("kr,nrj->nkj", EDGE_MAP, Dbar_inv)


def strain_eval(X: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    F = np.einsum("nkd,nkj->ndj", X, c)
    f0, f1 = F[:, :, 0], F[:, :, 1]
    C = green_strain(F)
    G = np.empty((X.shape[0], 3, 3, 3))
    G[:, 0] = c[:, :, 0, None] * f0[:, None, :]
    G[:, 1] = c[:, :, 1, None] * f1[:, None, :]
    G[:, 2] = 0.5 * (c[:, :, 1, None] * f0[:, None, :] + c[:, :, 0, None] * f1[:, None, :])
    return C, G


def strain_pullback(X: np.ndarray, c: np.ndarray, Cbar: np.ndarray,
                    Gbar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cotangents of stencil positions and of the coefficient rows c."""
    F = np.einsum("nkd,nkj->ndj", X, c)
    f0, f1 = F[:, :, 0], F[:, :, 1]
    c0, c1 = c[:, :, 0], c[:, :, 1]

    fb0 = Cbar[:, 0, None] * f0 + 0.5 * Cbar[:, 2, None] * f1
    fb1 = Cbar[:, 1, None] * f1 + 0.5 * Cbar[:, 2, None] * f0
    fb0 = fb0 + np.einsum("nk,nkd->nd", c0, Gbar[:, 0]) + 0.5 * np.einsum("nk,nkd->nd", c1, Gbar[:, 2])
    fb1 = fb1 + np.einsum("nk,nkd->nd", c1, Gbar[:, 1]) + 0.5 * np.einsum("nk,nkd->nd", c0, Gbar[:, 2])

    cbar = np.zeros_like(c)
    cbar[:, :, 0] = np.einsum("nkd,nd->nk", Gbar[:, 0], f0) + 0.5 * np.einsum("nkd,nd->nk", Gbar[:, 2], f1)
    cbar[:, :, 1] = np.einsum("nkd,nd->nk", Gbar[:, 1], f1) + 0.5 * np.einsum("nkd,nd->nk", Gbar[:, 2], f0)

    Fbar = np.stack([fb0, fb1], axis=-1)
    Xbar = np.einsum("nkj,ndj->nkd", c, Fbar)
    cbar += np.einsum("nkd,ndj->nkj", X, Fbar)
    return Xbar, cbar


# ---------- dihedral bending ----------

def _hinge_normals(X):
    a, b, c, d = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    e = b - a
    n1 = np.cross(e, c - a)
    n2 = np.cross(a - b, d - b)
    return a, e, c, d, n1, n2


def dihedral_angle(X: np.ndarray) -> np.ndarray:
    """Signed angle between the two face normals about the shared edge (0 when flat)."""
    _, e, _, _, n1, n2 = _hinge_normals(X)
    ehat = e / np.linalg.norm(e, axis=1, keepdims=True)
    return np.arctan2((ehat * np.cross(n1, n2)).sum(1), (n1 * n2).sum(1))


def dihedral_valid(X: np.ndarray) -> np.ndarray:
    _, e, _, _, n1, n2 = _hinge_normals(X)
    return (0.5 * np.linalg.norm(n1, axis=1) > DEGENERATE_AREA) & (0.5 * np.linalg.norm(n2, axis=1) > DEGENERATE_AREA)


def dihedral_gradient(X: np.ndarray) -> np.ndarray:
    """Gradient of C = pi - psi - rest for each stencil vertex; analytic in X, so complex input works."""
    a, e, c, d, n1, n2 = _hinge_normals(X)
    ee = (e * e).sum(1)
    ell = np.sqrt(ee)
    q1 = (ell / (n1 * n1).sum(1))[:, None] * n1
    q2 = (ell / (n2 * n2).sum(1))[:, None] * n2
    tc = ((c - a) * e).sum(1) / ee
    td = ((d - a) * e).sum(1) / ee
    G = np.empty(X.shape, dtype=np.result_type(X, np.float64))
    G[:, 0] = -((1.0 - tc)[:, None] * q1 + (1.0 - td)[:, None] * q2)
    G[:, 1] = -(tc[:, None] * q1 + td[:, None] * q2)
    G[:, 2] = q1
    G[:, 3] = q2
    return G


def dihedral_eval(X: np.ndarray, rest_angle: float | np.ndarray = math.pi):
    """C = theta - rest with theta = pi - psi; returns (C (n,1), G (n,1,4,3), valid)."""
    valid = dihedral_valid(X)
    C = (math.pi - dihedral_angle(X) - rest_angle)[:, None]
    G = np.zeros((X.shape[0], 1, 4, 3))
    if valid.any():
        G[valid, 0] = dihedral_gradient(X[valid])
    C[~valid] = 0.0
    return C, G, valid


def dihedral_constraint(x4: np.ndarray, rest_angle: float = math.pi) -> tuple[float, np.ndarray, bool]:
    """Single-hinge form: (C, gradients (4, 3), valid). Degenerate hinges return zeros."""
    X = np.asarray(x4, dtype=np.float64).reshape(1, 4, 3)
    C, G, valid = dihedral_eval(X, rest_angle)
    if not valid[0]:
        logger.warning("degenerate hinge skipped")
    return float(C[0, 0]), G[0, 0], bool(valid[0])


def dihedral_pullback(X: np.ndarray, Cbar: np.ndarray, Gbar: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """X cotangent: Cbar * grad C plus the Hessian of C applied to Gbar (complex step)."""
    Xbar = np.zeros_like(X)
    if not valid.any():
        return Xbar
    Xv = X[valid]
    gb = Gbar[valid, 0]
    Xbar[valid] = Cbar[valid, 0, None, None] * dihedral_gradient(Xv)
    hvp = dihedral_gradient(Xv + 1j * COMPLEX_STEP * gb).imag / COMPLEX_STEP
    Xbar[valid] += hvp
    return Xbar


# ---------- collision ----------

def collision_eval(x: np.ndarray, p: np.ndarray, normal: np.ndarray, thickness: float):
    """Unilateral C = n.(x - p) - r on single-vertex stencils: (C (n,1), G (n,1,1,3))."""
    C = ((x - p) * normal).sum(1, keepdims=True) - thickness
    G = normal[:, None, None, :].copy()
    return C, G


def collision_constraints(x: np.ndarray, body, thickness: float, margin: float = 0.0,
                          inv_mass: np.ndarray | None = None):
    """Contacts for every vertex closer to the body than thickness + margin."""
    from .xpbd import ContactSet  # local import: xpbd builds on this module

    candidates = np.arange(x.shape[0]) if inv_mass is None else np.flatnonzero(inv_mass > 0)
    if body is None or candidates.size == 0:
        return ContactSet.empty()
    hit = body.closest_point(x[candidates])
    near = hit.distance < thickness + margin
    return ContactSet(
        vertex=candidates[near],
        face=hit.face[near],
        bary=hit.bary[near],
        normal=body.face_normals[hit.face[near]],
    )


# ---------- generic local solve ----------

@dataclass
class LocalSolve:
    dlam: np.ndarray      # (n, m) applied multiplier update
    dx: np.ndarray        # (n, s, 3)
    J: np.ndarray         # (n, m, m)
    clamped: np.ndarray   # (n,) rows where lambda hit zero
    active: np.ndarray    # (n,) rows that were solved


def _assemble(G, w, at):
    WG = G * w[:, None, :, None]
    J = np.einsum("nisd,njsd->nij", G, WG)
    m = J.shape[1]
    J[:, np.arange(m), np.arange(m)] += at
    active = (w.sum(1) > 0) | (at.sum(1) > 0)
    eye = np.broadcast_to(np.eye(m), J.shape)
    J = np.where(active[:, None, None], J, eye)
    det = np.linalg.det(J)
    scale = np.abs(np.einsum("nii->n", J)) ** m + 1e-300
    singular = active & (np.abs(det) <= 1e-14 * scale)
    if singular.any():
        J[singular] += SINGULAR_REG * np.eye(m)
        logger.debug("regularized %d singular local systems", int(singular.sum()))
    return J, WG, active


def local_solve(G: np.ndarray, C: np.ndarray, w: np.ndarray, at: np.ndarray, lam: np.ndarray,
                unilateral: bool = False) -> LocalSolve:
    """(G W G^T + diag at) dlam = -C - at lam;  dx = W G^T dlam."""
    J, WG, active = _assemble(G, w, at)
    b = np.where(active[:, None], -C - at * lam, 0.0)
    dlam = np.linalg.solve(J, b[..., None])[..., 0]
    clamped = np.zeros(C.shape[0], dtype=bool)
    if unilateral:
        clamped = (lam + dlam < 0.0).any(1) & active
        dlam = np.where(clamped[:, None], -lam, dlam)
    dx = np.einsum("nisd,ni->nsd", WG, dlam)
    return LocalSolve(dlam=dlam, dx=dx, J=J, clamped=clamped, active=active)


def local_solve_reverse(G, w, at, lam, sol: LocalSolve, xb: np.ndarray, lb: np.ndarray):
    """Reverse of local_solve given cotangents of the updated stencil positions (xb) and multipliers (lb).

    Returns (Cbar, Gbar, wbar, atbar, lam_bar) where lam_bar is the cotangent of the incoming multipliers.
    """
    dlam = sol.dlam
    WG = G * w[:, None, :, None]
    # total cotangent of dlam: direct (lambda_new = lambda + dlam) plus through dx
    dlam_bar = lb + np.einsum("nisd,nsd->ni", WG, xb)
    z = np.linalg.solve(sol.J, dlam_bar[..., None])[..., 0]

    GTdl = np.einsum("nisd,ni->nsd", G, dlam)
    GTz = np.einsum("nisd,ni->nsd", G, z)
    Cbar = -z
    atbar = -z * (dlam + lam)
    lam_bar = lb - at * z
    Gbar = (dlam[:, :, None, None] * (w[:, None, :, None] * (xb - GTz)[:, None])
            - z[:, :, None, None] * (w[:, :, None] * GTdl)[:, None])
    wbar = ((xb - GTz) * GTdl).sum(-1)

    if sol.clamped.any():
        k = sol.clamped
        Cbar[k] = 0.0
        atbar[k] = 0.0
        lam_bar[k] = -(dlam_bar[k] - lb[k])
        Gbar[k] = dlam[k][:, :, None, None] * (w[k][:, None, :, None] * xb[k][:, None])
        wbar[k] = (xb[k] * GTdl[k]).sum(-1)

    inactive = ~sol.active
    if inactive.any():
        Cbar[inactive] = 0.0
        atbar[inactive] = 0.0
        Gbar[inactive] = 0.0
        wbar[inactive] = 0.0
        lam_bar[inactive] = lb[inactive]
    return Cbar, Gbar, wbar, atbar, lam_bar
