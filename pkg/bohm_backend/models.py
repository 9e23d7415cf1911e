"""
Pydantic models for the scenario harness.

Defines data structures for:
- Run configuration (ScenarioConfig and its blocks)
- Check outcomes and the per-scenario report
"""

import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

ScenarioName = Literal[
    "free_gaussian",
    "boosted_gaussian",
    "harmonic",
    "two_gaussian_interference",
    "ring_state",
    "stern_gerlach",
    "pointer_measurement",
    "two_fermion",
    "two_boson",
    "qtm_free_gaussian",
]
OutputFormat = Literal["csv", "json", "dump", "md", "html"]

# Blocks a scenario cannot run without
REQUIRED_BLOCKS: Dict[str, List[str]] = {
    "free_gaussian": ["grid", "solver", "trajectories"],
    "boosted_gaussian": ["grid", "solver", "trajectories"],
    "harmonic": ["grid", "solver", "trajectories"],
    "two_gaussian_interference": ["grid", "solver", "trajectories"],
    "ring_state": ["grid", "solver"],
    "stern_gerlach": ["trajectories"],
    "pointer_measurement": ["trajectories"],
    "two_fermion": ["grid", "solver", "trajectories"],
    "two_boson": ["grid", "solver", "trajectories"],
    "qtm_free_gaussian": ["grid", "solver", "qtm"],
}


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridBlock(_Block):
    """Lattice of the scenario; one entry per configuration axis"""
    points: List[int]
    extents: List[float]
    boundary: Literal["periodic", "box"] = "periodic"

    @model_validator(mode="after")
    def _aligned(self):
        if len(self.points) != len(self.extents) or not self.points:
            raise ValueError("points and extents need one entry per axis")
        if any(p < 4 for p in self.points) or any(not e > 0 for e in self.extents):
            raise ValueError("need >= 4 points and a positive extent per axis")
        return self


class SolverBlock(_Block):
    method: Literal["split_spectral", "crank_nicolson"] = "split_spectral"
    dt: float = Field(gt=0)
    T: float = Field(ge=0)
    snapshot_stride: int = Field(default=10, ge=1)


class TrajectoryBlock(_Block):
    n: int = Field(ge=1)
    dt_traj: float = Field(gt=0)
    seed: Optional[int] = None                          # defaults to the run seed
    interpolation: Literal["trilinear", "spectral"] = "trilinear"
    node_epsilon: float = Field(default=1e-6, gt=0, le=1e-3)
    newton_samples: int = Field(default=100, ge=0)      # trajectories checked against the Newton form


class QtmBlock(_Block):
    n: int = Field(ge=100)
    dt: float = Field(gt=0)
    T: float = Field(gt=0)
    bandwidth_scale: float = Field(default=1.0, gt=0)
    fixed_bandwidth: Optional[float] = Field(default=None, gt=0)
    variance_correction: bool = True
    refinement: bool = False
    refinement_sizes: List[int] = [1000, 4000, 16000]
    refinement_dt_factors: List[float] = [2.0, 1.0, 0.5]


class PhysicsBlock(_Block):
    """Initial state and potential parameters (natural units by default)"""
    mass: float = Field(default=1.0, gt=0)
    hbar: float = Field(default=1.0, gt=0)
    width: float = Field(default=1.0, gt=0)             # packet sigma
    center: float = 0.0
    wavevector: float = 0.0
    omega: float = Field(default=1.0, gt=0)             # harmonic frequency
    separation: float = Field(default=4.0, ge=0)        # distance between the two packets


class ParametersBlock(_Block):
    """Scenario-specific knobs"""
    windings: List[int] = [-1, 1, 2]                    # ring_state
    theta: float = math.pi / 2                          # stern_gerlach spinor (cos(theta/2), sin(theta/2))
    gradient: float = 4.0                               # stern_gerlach field gradient b
    moment: float = 1.0                                 # stern_gerlach magnetic moment
    velocity_kick: float = Field(default=0.5, gt=0)     # free_gaussian: absolute kick of the second-order run
    born_weights: List[float] = [0.5, 0.8, 1.0]         # pointer_measurement |c_0|^2 values

    @model_validator(mode="after")
    def _weights(self):
        if any(not 0.0 <= p <= 1.0 for p in self.born_weights):
            raise ValueError("born_weights must lie in [0, 1]")
        return self


class OutputBlock(_Block):
    directory: Optional[str] = None
    formats: List[OutputFormat] = ["csv", "json", "dump", "md", "html"]
    max_csv_trajectories: int = Field(default=1000, ge=0)


class ScenarioConfig(_Block):
    """Validated run configuration"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: Literal[1] = Field(alias="schema")
    scenario: ScenarioName
    seed: int
    name: Optional[str] = None                          # output subdirectory (default: scenario)
    grid: Optional[GridBlock] = None
    solver: Optional[SolverBlock] = None
    trajectories: Optional[TrajectoryBlock] = None
    qtm: Optional[QtmBlock] = None
    physics: PhysicsBlock = PhysicsBlock()
    parameters: ParametersBlock = ParametersBlock()
    output: OutputBlock = OutputBlock()

    @model_validator(mode="after")
    def _complete(self):
        missing = [b for b in REQUIRED_BLOCKS[self.scenario] if getattr(self, b) is None]
        if missing:
            raise ValueError(f"scenario '{self.scenario}' needs the blocks: {', '.join(missing)}")
        return self

    @property
    def label(self) -> str:
        return self.name or self.scenario

    @property
    def trajectory_seed(self) -> int:
        if self.trajectories is not None and self.trajectories.seed is not None:
            return self.trajectories.seed
        return self.seed


class CheckResult(BaseModel):
    """Single pass/fail criterion"""
    name: str
    value: float
    threshold: float
    upper: Optional[float] = None                       # upper bound for "in"
    comparison: Literal["<", ">", "<=", ">=", "==", "in"]
    passed: bool
    detail: str = ""


class ScenarioReport(BaseModel):
    """Everything a run writes to metrics.json"""
    scenario: str
    label: str
    seed: int
    passed: bool
    checks: List[CheckResult]
    metrics: Dict[str, Any]
    outputs: List[str] = []
