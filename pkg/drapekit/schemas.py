from __future__ import annotations

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import config

GROUPS = ("cage", "pattern", "material", "shape", "pose")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ---------- run configuration ----------

class PathsConfig(_Section):
    pattern: str = "builtin:skirt"
    seams: Optional[str] = None
    body: Optional[str] = None          # None: the garment asset's own body; "none": no collider
    target: Optional[str] = None


class PlacementConfig(_Section):
    kind: str = "plane"
    origin: List[float] = [0.0, 0.0, 0.0]
    axis_u: List[float] = [1.0, 0.0, 0.0]
    axis_v: List[float] = [0.0, 1.0, 0.0]
    anchor: List[float] = [0.0, 0.0]
    radius: float = 1.0
    angle0: float = 0.0

    @field_validator("kind")
    @classmethod
    def _kind(cls, v: str) -> str:
        if v not in ("plane", "cylinder"):
            raise ValueError("placement kind must be 'plane' or 'cylinder'")
        return v


class SceneConfig(_Section):
    pinned: Optional[List[int]] = None
    boundary_labels: Optional[List[str]] = None
    placements: Optional[Dict[int, PlacementConfig]] = None
    body_shape: Optional[List[float]] = None
    body_pose: Optional[List[float]] = None
    fit_body: bool = False
    fit_iterations: int = Field(200, ge=1)


class SimulationConfig(_Section):
    dt: float = Field(1.0 / 120.0, gt=0)
    solver_iters: int = Field(20, ge=1)
    max_steps: int = Field(400, ge=1)
    v_tol: float = Field(1e-3, gt=0)
    damping: float = Field(0.998, gt=0, le=1)
    gravity: List[float] = [0.0, -9.81, 0.0]
    contact_margin: Optional[float] = Field(None, ge=0)
    fixed_steps: bool = False
    divergence_speed: float = Field(1e3, gt=0)
    mass_gradient: bool = True

    @field_validator("gravity")
    @classmethod
    def _gravity(cls, v: List[float]) -> List[float]:
        if len(v) != 3:
            raise ValueError("gravity needs 3 components")
        return v


class MaterialConfig(_Section):
    stretch_compliance: List[float] = [1e-3, 1e-3, 4e-3]
    bend_compliance: float = Field(1e3, ge=0)
    density: float = Field(0.15, gt=0)
    thickness: float = Field(0.002, ge=0)

    @field_validator("stretch_compliance")
    @classmethod
    def _stretch(cls, v: List[float]) -> List[float]:
        if len(v) != 3 or any(c < 0 for c in v):
            raise ValueError("stretch_compliance needs 3 non-negative entries (weft, warp, shear)")
        return v


class LossConfig(_Section):
    rho: float = Field(1.0, ge=0)
    sigma: float = Field(1.0, ge=0)
    alpha_reg: float = Field(0.1, ge=0)
    beta: float = Field(0.1, ge=0)
    curvature_weights: Optional[List[float]] = None
    seam_signed: bool = False
    # "interior" leaves labeled boundary loops out of the chamfer term
    chamfer_vertices: Literal["all", "interior"] = "all"


class OptimizerConfig(_Section):
    max_iters: int = Field(200, ge=0)
    groups: List[str] = ["cage", "material"]
    rates: Dict[str, float] = {"cage": 1e-3, "pattern": 1e-3, "material": 0.1, "shape": 1e-2, "pose": 1e-2}
    material_params: List[str] = ["bend"]
    grad_tol: float = Field(1e-6, ge=0)
    min_step: float = Field(1e-4, gt=0)
    backtracking: bool = True
    max_backtracks: int = Field(8, ge=0)
    stages: Optional[List[List[str]]] = None
    warm_start: bool = True
    angle_threshold: float = Field(10.0, gt=0, lt=180)
    mirror_pairs: List[List[List[int]]] = []
    snapshots: bool = False

    @field_validator("groups")
    @classmethod
    def _groups(cls, v: List[str]) -> List[str]:
        bad = [g for g in v if g not in GROUPS]
        if bad:
            raise ValueError(f"unknown parameter groups {bad}; choose from {list(GROUPS)}")
        return v

    @field_validator("material_params")
    @classmethod
    def _material(cls, v: List[str]) -> List[str]:
        if any(m not in ("bend", "stretch") for m in v):
            raise ValueError("material_params entries must be 'bend' or 'stretch'")
        return v

    @model_validator(mode="after")
    def _check(self):
        if "cage" in self.groups and "pattern" in self.groups:
            raise ValueError("'cage' and 'pattern' groups are exclusive")
        if any(r < 0 for r in self.rates.values()):
            raise ValueError("learning rates must be non-negative")
        return self


class GradcheckConfig(_Section):
    groups: List[str] = ["pattern", "cage", "material", "stretch", "shape", "pose"]
    h_list: List[float] = [1e-4, 1e-5, 1e-6]
    tolerance: float = Field(1e-3, gt=0)
    steps: int = Field(30, ge=1)
    max_params: int = Field(6, ge=1)
    corrupt: float = 1.0
    pattern: str = "builtin:patch"
    body: Optional[str] = "builtin:sphere"


class SynthConfig(_Section):
    noise: float = Field(0.0, ge=0)
    dropout: float = Field(0.0, ge=0, lt=1)
    bend_compliance: Optional[float] = Field(None, ge=0)
    stretch_compliance: Optional[List[float]] = None
    pattern_scale: float = Field(1.0, gt=0)
    body_shape: Optional[List[float]] = None
    body_pose: Optional[List[float]] = None
    output: str = "target.obj"


class RunConfig(_Section):
    paths: PathsConfig = PathsConfig()
    scene: SceneConfig = SceneConfig()
    simulation: SimulationConfig = SimulationConfig()
    material: MaterialConfig = MaterialConfig()
    loss: LossConfig = LossConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    gradcheck: GradcheckConfig = GradcheckConfig()
    synth: SynthConfig = SynthConfig()
    output_dir: str = Field(default_factory=lambda: str(config.OUTPUT_DIR))
    seed: int = Field(default_factory=lambda: config.SEED)
    threads: int = Field(default_factory=lambda: config.THREADS, ge=1)
    log_level: str = Field(default_factory=lambda: config.LOG_LEVEL)


# ---------- file sidecars ----------

class BodySidecar(BaseModel):
    joint_names: List[str]
    parents: List[int]
    rest_joints: List[List[float]]
    skin_weights: List[List[float]]
    basis_names: List[str] = []
    basis: List[List[List[float]]] = []
    angle_limits: Optional[List[List[List[float]]]] = None
    bone_limits: Optional[List[List[float]]] = None
    shape_limits: Optional[List[List[float]]] = None
    translation_limit: float = 1.0


class PolylineIn(BaseModel):
    label: str
    closed: bool = True
    points: List[List[float]]


class TargetSidecar(BaseModel):
    polylines: List[PolylineIn] = []
    mask: Optional[List[int]] = None


# ---------- reports ----------

class IterationRecord(BaseModel):
    iteration: int
    loss: float
    terms: Dict[str, float]
    grad_norms: Dict[str, float]
    step_scale: float
    accepted: bool
    backtracks: int = 0
    rejected_inverted: int = 0
    inverted: int = 0
    drape_steps: int = 0
    wall_time: float = 0.0


class QualityStats(BaseModel):
    min: float
    mean: float


class OptimizationReport(BaseModel):
    iterations: List[IterationRecord] = []
    initial_loss: float = 0.0
    final_loss: float = 0.0
    final_terms: Dict[str, float] = {}
    parameters: Dict[str, List[float]] = {}
    quality_initial: Optional[QualityStats] = None
    quality_final: Optional[QualityStats] = None
    stop_reason: str = ""
    retries: int = 0
    wall_time: float = 0.0
    notes: List[str] = []


class GradcheckRow(BaseModel):
    group: str
    parameter: str
    analytic: float
    finite_difference: float
    rel_error: float
    best_h: float
    noisy: bool = False
    passed: bool


class GradcheckReport(BaseModel):
    rows: List[GradcheckRow] = []
    tolerance: float
    passed: bool


class ExperimentReport(BaseModel):
    name: str
    metrics: Dict[str, float] = {}
    checks: Dict[str, bool] = {}
    passed: bool = True
    reports: Dict[str, OptimizationReport] = {}
