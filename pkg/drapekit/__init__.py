"""drapekit: differentiable XPBD garment draping and inverse garment design."""
from . import config  # noqa: F401  (sets thread limits before numpy loads)
from .errors import DrapekitError
from .pattern import PatternMesh, load_pattern, make_pattern, save_pattern
from .scene import Scene, build_scene
from .schemas import RunConfig
from .xpbd import MaterialParams, SimState, Trajectory, drape_to_equilibrium

__all__ = [
    "DrapekitError",
    "MaterialParams",
    "PatternMesh",
    "RunConfig",
    "Scene",
    "SimState",
    "Trajectory",
    "build_scene",
    "drape_to_equilibrium",
    "load_pattern",
    "make_pattern",
    "save_pattern",
]
