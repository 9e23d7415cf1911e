"""
Records produced and consumed by the dynamics modules.

Defines:
- MagneticSpec: uniform/gradient magnetic field and uniform vector potential
- EvolutionRecord: snapshots of a solver run
- VelocityProbe: frozen guidance field of one snapshot
- Trajectory / Ensemble: Bohmian paths on a shared time base
- NewtonResidualReport: force balance along a trajectory
- QtmSettings / QtmState / ReconstructedWave: Lagrangian trajectory solver state
- PhaseField / BranchJump / WindingResult / PhaseResiduals: polar decomposition results
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Literal, Optional, Tuple

import numpy as np

from wave_lattice.errors import DomainError
from wave_lattice.models import Grid, PotentialSpec, ScalarField, VectorField, WaveFunction

SolverMethod = Literal["split_spectral", "crank_nicolson"]
Interpolation = Literal["trilinear", "spectral"]


@dataclass(frozen=True)
class MagneticSpec:
    """
    Magnetic data for the Pauli step.

    B(r) = field_uniform + field_gradient @ r, with r the particle position
    embedded in 3-D space through coordinate_axes (for d=1 the coordinate is z).
    """
    moments: Tuple[float, ...]                                  # mu_k, one per particle
    charges: Tuple[float, ...] = ()                             # e_k, default zero
    field_uniform: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    field_gradient: Tuple[Tuple[float, float, float], ...] = ((0.0,) * 3,) * 3
    vector_potential: Tuple[float, float, float] = (0.0, 0.0, 0.0)   # uniform A
    coordinate_axes: Optional[Tuple[int, ...]] = None           # 3-D axis of each particle coordinate

    def __post_init__(self):
        values = [*self.moments, *self.charges, *self.field_uniform, *self.vector_potential]
        values += [g for row in self.field_gradient for g in row]
        if not np.all(np.isfinite(values)):
            raise DomainError("magnetic parameters must be finite")
        if np.shape(self.field_gradient) != (3, 3):
            raise DomainError("field_gradient must be a 3x3 matrix")

    def axes_for(self, dims_per_particle: int) -> Tuple[int, ...]:
        if self.coordinate_axes is not None:
            return tuple(self.coordinate_axes)
        return {1: (2,), 2: (0, 2), 3: (0, 1, 2)}[dims_per_particle]

    def charge(self, particle: int) -> float:
        return self.charges[particle] if self.charges else 0.0

    @property
    def has_field(self) -> bool:
        return bool(np.any(self.field_uniform) or np.any(self.field_gradient))


@dataclass
class EvolutionRecord:
    """Snapshots of one solver run; enough metadata to re-step between snapshots"""
    times: List[float]
    snapshots: List[WaveFunction]
    method: SolverMethod
    dt: float
    potential: PotentialSpec
    magnetic: Optional[MagneticSpec] = None

    def __post_init__(self):
        if len(self.times) != len(self.snapshots) or not self.snapshots:
            raise DomainError("times and snapshots must be aligned and non-empty")
        if np.any(np.diff(self.times) <= 0):
            raise DomainError("record times must be strictly increasing")

    @property
    def grid(self) -> Grid:
        return self.snapshots[0].grid

    @property
    def initial(self) -> WaveFunction:
        return self.snapshots[0]

    @property
    def final(self) -> WaveFunction:
        return self.snapshots[-1]

    def snapshot_index(self, t: float, tolerance: float = 1e-9) -> Optional[int]:
        index = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        if abs(self.times[index] - t) <= tolerance * max(1.0, abs(t)):
            return index
        return None


@dataclass(frozen=True)
class VelocityProbe:
    """Guidance field of one snapshot, ready for evaluation at arbitrary points"""
    source: WaveFunction
    interpolation: Interpolation
    node_epsilon: float
    current: np.ndarray         # (D, *grid.shape)
    density: np.ndarray         # (*grid.shape)
    velocity: np.ndarray        # (D, *grid.shape), regularized below the node threshold
    threshold: float            # epsilon_abs = node_epsilon * max density

    def __post_init__(self):
        if not 0 < self.node_epsilon <= 1e-3:
            raise DomainError(f"node_epsilon must lie in (0, 1e-3], got {self.node_epsilon}")
        for name in ("current", "density", "velocity"):
            getattr(self, name).setflags(write=False)

    @property
    def grid(self) -> Grid:
        return self.source.grid


class TrajectoryFlag(IntEnum):
    OK = 0
    NODE_REGULARIZED = 1
    LEFT_DOMAIN = 2


@dataclass
class Trajectory:
    """Q(t) on a time base; points are unwrapped (no periodic folding)"""
    times: np.ndarray           # (T,)
    points: np.ndarray          # (T, D)
    flags: np.ndarray           # (T,) int8 TrajectoryFlag
    velocities: Optional[np.ndarray] = None     # (T, D), second-order integrations only

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        self.flags = np.asarray(self.flags, dtype=np.int8)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise DomainError("trajectory times must be strictly increasing")
        if self.points.shape[0] != len(self.times) or len(self.flags) != len(self.times):
            raise DomainError("trajectory points and flags must align with times")

    @property
    def ok(self) -> bool:
        return bool(np.all(self.flags == TrajectoryFlag.OK))

    @property
    def left_domain(self) -> bool:
        return bool(np.any(self.flags == TrajectoryFlag.LEFT_DOMAIN))

    def at(self, t: float) -> np.ndarray:
        index = int(np.argmin(np.abs(self.times - t)))
        return self.points[index]


@dataclass
class Ensemble:
    """Trajectories on a shared time base, stored as arrays (n, T, D)"""
    times: np.ndarray
    points: np.ndarray
    flags: np.ndarray
    seed: Optional[int] = None
    source_record: Optional[EvolutionRecord] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        self.flags = np.asarray(self.flags, dtype=np.int8)
        if self.points.ndim != 3 or self.points.shape[0] < 1:
            raise DomainError("ensemble needs at least one trajectory")
        if self.points.shape[1] != len(self.times) or self.flags.shape != self.points.shape[:2]:
            raise DomainError("ensemble arrays do not share the time base")

    def __len__(self) -> int:
        return self.points.shape[0]

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(self.times, self.points[i], self.flags[i])

    @property
    def trajectories(self) -> List[Trajectory]:
        return [self[i] for i in range(len(self))]

    @property
    def dimension(self) -> int:
        return self.points.shape[2]

    def time_index(self, t: float, tolerance: float = 1e-9) -> int:
        index = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[index] - t) > tolerance * max(1.0, abs(t)):
            raise DomainError(f"t={t} is not in the ensemble time base")
        return index

    def positions_at(self, t: float) -> np.ndarray:
        return self.points[:, self.time_index(t)]

    def ok_mask(self) -> np.ndarray:
        """Trajectories whose every sample is flagged ok"""
        return np.all(self.flags == TrajectoryFlag.OK, axis=1)

    def flag_summary(self) -> dict:
        final = np.max(self.flags, axis=1)
        return {flag.name.lower(): int(np.sum(final == flag)) for flag in TrajectoryFlag}


@dataclass
class NewtonResidualReport:
    """Per-time ||m Q'' + grad(V + V_qu)||; NaN marks excluded samples"""
    times: np.ndarray
    residual_norm: np.ndarray
    excluded_fraction: float
    trajectory: Optional[Trajectory] = None

    @property
    def max_residual(self) -> float:
        finite = self.residual_norm[np.isfinite(self.residual_norm)]
        return float(finite.max()) if finite.size else float("nan")


@dataclass(frozen=True)
class QtmSettings:
    """Tuning knobs of the Lagrangian trajectory solver"""
    bandwidth_scale: float = 1.0            # multiplies sigma * n^(-1/(D+4))
    fixed_bandwidth: Optional[float] = None
    variance_correction: bool = True        # shrink the ensemble so the KDE keeps its variance
    node_epsilon: float = 1e-4              # mask threshold for V_qu and the phase
    force_cap: float = 1e4
    force_cap_fraction: float = 0.01
    neighbors: int = 8                      # IDW neighbours for velocity scattering
    idw_power: float = 2.0

    def __post_init__(self):
        if not self.bandwidth_scale > 0:
            raise DomainError("bandwidth_scale must be positive")
        if self.fixed_bandwidth is not None and not self.fixed_bandwidth > 0:
            raise DomainError("fixed_bandwidth must be positive")
        if self.neighbors < 1:
            raise DomainError("neighbors must be >= 1")


@dataclass
class QtmState:
    """Ensemble of quantum trajectories at one time"""
    grid: Grid                  # evaluation lattice for density and forces
    points: np.ndarray          # (n, D)
    velocities: np.ndarray      # (n, D)
    time: float
    bandwidth: float
    masses: Tuple[float, ...]
    hbar: float = 1.0
    forces: Optional[np.ndarray] = None     # (n, D) at the current points, reused by the next step

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.points.shape[0] < 100:
            raise DomainError(f"QTM ensembles need n >= 100, got {self.points.shape[0]}")
        if not np.all(np.isfinite(self.points)):
            raise DomainError("QTM points must be finite")
        if not self.bandwidth > float(np.max(self.grid.spacing)) / 4.0:
            raise DomainError(f"bandwidth {self.bandwidth} is below a quarter of the grid spacing")

    @property
    def axis_masses(self) -> np.ndarray:
        return np.repeat(np.array(self.masses), self.grid.dims_per_particle)


@dataclass
class ReconstructedWave:
    """psi_hat = modulus * exp(i S / hbar) on the unmasked set"""
    grid: Grid
    modulus: ScalarField
    phase: ScalarField
    gauge_anchor: Tuple[int, ...]
    component_anchors: List[Tuple[int, ...]] = field(default_factory=list)
    hbar: float = 1.0

    def amplitudes(self) -> np.ndarray:
        phase = np.where(self.phase.valid, self.phase.values, 0.0)
        return self.modulus.values * np.exp(1j * phase / self.hbar)

    def wavefunction(self, masses: Tuple[float, ...]) -> WaveFunction:
        return WaveFunction(self.grid, self.amplitudes(), masses, self.hbar)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes()) ** 2) * self.grid.cell_volume))


@dataclass(frozen=True)
class BranchJump:
    """Phase discontinuity between index and index + e_axis"""
    index: Tuple[int, ...]
    axis: int
    multiple: int               # jump in units of 2*pi*hbar
    residue: float              # distance of the raw jump from the integer multiple


@dataclass
class PhaseField:
    """Unwrapped phase S with its gradient and the branch-jump ledger"""
    grid: Grid
    S: ScalarField
    gradient: VectorField
    branch_jumps: List[BranchJump]
    hbar: float = 1.0

    def ledger(self) -> List[dict]:
        return [
            {"index": list(j.index), "axis": j.axis, "multiple": j.multiple}
            for j in self.branch_jumps
        ]


@dataclass(frozen=True)
class WindingResult:
    number: int
    residue: float


@dataclass(frozen=True)
class PhaseResiduals:
    """L1 residuals of the continuity and Hamilton-Jacobi equations"""
    continuity: float
    hamilton_jacobi: float
    masked_fraction: float
