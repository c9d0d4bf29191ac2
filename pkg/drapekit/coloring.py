"""Greedy graph coloring of constraint stencils for batched Gauss-Seidel projection."""
from __future__ import annotations

import logging

import numpy as np

logger = logging.getLogger(__name__)


def graph_coloring(stencils: np.ndarray, n_vertices: int) -> list[np.ndarray]:
    """
    Greedy coloring of constraints that share particles.
    Returns a list of index arrays; constraints inside one array touch disjoint vertices
    and can be projected together. Order is deterministic (constraint index order).
    """
    stencils = np.asarray(stencils, dtype=np.int64)
    if stencils.ndim == 1:
        stencils = stencils[:, None]
    n_constraints = stencils.shape[0]
    if n_constraints == 0:
        return []

    # particle -> constraints touching it
    vertex_constraints: list[list[int]] = [[] for _ in range(n_vertices)]
    for c_idx, stencil in enumerate(stencils):
        for p in stencil:
            vertex_constraints[p].append(c_idx)

    colors = np.full(n_constraints, -1, dtype=np.int64)
    n_colors = 0
    for c_idx, stencil in enumerate(stencils):
        used = set()
        for p in stencil:
            for other in vertex_constraints[p]:
                if other != c_idx and colors[other] >= 0:
                    used.add(int(colors[other]))
        color = 0
        while color in used:
            color += 1
        colors[c_idx] = color
        n_colors = max(n_colors, color + 1)

    batches = [np.flatnonzero(colors == c) for c in range(n_colors)]
    logger.debug("graph coloring: %d constraints in %d colors", n_constraints, n_colors)
    return batches


def is_valid_coloring(stencils: np.ndarray, batches: list[np.ndarray]) -> bool:
    stencils = np.asarray(stencils, dtype=np.int64)
    seen = np.zeros(stencils.shape[0], dtype=bool)
    for batch in batches:
        verts = stencils[batch].ravel()
        if np.unique(verts).size != verts.size:
            return False
        seen[batch] = True
    return bool(seen.all())
