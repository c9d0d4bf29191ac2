"""Exception hierarchy shared by every drapekit module."""
from __future__ import annotations

from typing import Sequence


class DrapekitError(Exception):
    """Base class for all errors raised by drapekit."""


class ConfigError(DrapekitError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class DimensionMismatchError(DrapekitError):
    pass


class TopologyMismatchError(DrapekitError):
    pass


class LabelMismatchError(DrapekitError):
    def __init__(self, missing_targets: Sequence[str], missing_loops: Sequence[str]):
        self.missing_targets = list(missing_targets)
        self.missing_loops = list(missing_loops)
        parts = []
        if self.missing_targets:
            parts.append(f"no target polyline for {sorted(self.missing_targets)}")
        if self.missing_loops:
            parts.append(f"no simulated loop for {sorted(self.missing_loops)}")
        super().__init__("unmatched boundary labels: " + "; ".join(parts))


# ---------- pattern ----------

class PatternError(DrapekitError):
    pass


class PatternParseError(PatternError):
    def __init__(self, path: str, line_no: int, message: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class InvertedElementError(PatternError):
    def __init__(self, faces: Sequence[int]):
        self.faces = [int(f) for f in faces]
        shown = ", ".join(str(f) for f in self.faces[:10])
        more = "" if len(self.faces) <= 10 else f" (+{len(self.faces) - 10} more)"
        super().__init__(f"inverted rest element at face {shown}{more}")


class DegenerateElementError(PatternError):
    def __init__(self, faces: Sequence[int]):
        self.faces = [int(f) for f in faces]
        super().__init__(f"degenerate rest element at face {', '.join(str(f) for f in self.faces[:10])}")


class NonManifoldError(PatternError):
    def __init__(self, edge: tuple[int, int] | None = None, vertex: int | None = None, count: int = 0):
        self.edge = edge
        self.vertex = vertex
        if edge is not None:
            msg = f"non-manifold edge {edge} shared by {count} faces"
        else:
            msg = f"non-manifold boundary at vertex {vertex}"
        super().__init__(msg)


# ---------- cage ----------

class CageError(DrapekitError):
    pass


class CageContainmentError(CageError):
    def __init__(self, vertex: int, distance: float):
        self.vertex = int(vertex)
        self.distance = float(distance)
        super().__init__(f"pattern vertex {vertex} lies outside its cage polygon by {distance:.3g} m")


# ---------- simulation ----------

class SimulationError(DrapekitError):
    pass


class NonFiniteStateError(SimulationError):
    def __init__(self, step: int):
        self.step = int(step)
        super().__init__(f"non-finite positions detected at step {step}")


class SimulationDiverged(SimulationError):
    def __init__(self, step: int, speed: float):
        self.step = int(step)
        self.speed = float(speed)
        super().__init__(f"simulation diverged at step {step}: max speed {speed:.3g} m/s")


class AdjointError(DrapekitError):
    def __init__(self, step: int, residual: float):
        self.step = int(step)
        self.residual = float(residual)
        super().__init__(f"adjoint sweep failed at step {step} (residual {residual:.3g})")
