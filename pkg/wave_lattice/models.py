"""
Data structures for wave mechanics on uniform lattices.

Defines:
- Grid: uniform rectangular lattice over configuration space
- WaveFunction: scalar or spinor amplitudes on a Grid
- ScalarField / VectorField: sampled fields with an optional validity mask
- PotentialSpec: description of the external potential V
"""

from dataclasses import dataclass, replace
from typing import List, Literal, Optional, Tuple

import numpy as np

from wave_lattice.errors import DomainError


Boundary = Literal["periodic", "box"]
PotentialKind = Literal["zero", "harmonic", "softcoulomb", "linear_gradient", "custom_table"]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over configuration space R^D, D = d*N"""
    dims_per_particle: int                  # d, physical dimensions per particle
    particle_count: int                     # N
    points_per_axis: Tuple[int, ...]        # length D
    axis_extent: Tuple[float, ...]          # length D, units of length
    boundary: Boundary = "periodic"

    def __post_init__(self):
        object.__setattr__(self, "points_per_axis", tuple(int(p) for p in self.points_per_axis))
        object.__setattr__(self, "axis_extent", tuple(float(e) for e in self.axis_extent))
        if self.dims_per_particle < 1 or self.particle_count < 1:
            raise DomainError("dims_per_particle and particle_count must be >= 1")
        if len(self.points_per_axis) != self.dimension or len(self.axis_extent) != self.dimension:
            raise DomainError(
                f"expected {self.dimension} axes, got points={self.points_per_axis} "
                f"extents={self.axis_extent}"
            )
        if any(p < 4 for p in self.points_per_axis):
            raise DomainError(f"every axis needs at least 4 points, got {self.points_per_axis}")
        if any(not np.isfinite(e) or e <= 0 for e in self.axis_extent):
            raise DomainError(f"axis extents must be positive, got {self.axis_extent}")
        if self.boundary not in ("periodic", "box"):
            raise DomainError(f"unknown boundary '{self.boundary}'")

    @property
    def dimension(self) -> int:
        return self.dims_per_particle * self.particle_count

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.points_per_axis

    @property
    def spacing(self) -> np.ndarray:
        return np.array(self.axis_extent) / np.array(self.points_per_axis)

    @property
    def total_points(self) -> int:
        return int(np.prod(self.points_per_axis))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lower(self) -> np.ndarray:
        return -0.5 * np.array(self.axis_extent)

    @property
    def upper(self) -> np.ndarray:
        return 0.5 * np.array(self.axis_extent)

    def axis_coordinates(self, axis: int) -> np.ndarray:
        """Lattice coordinates along one axis: x_i = -L/2 + i*h"""
        h = self.axis_extent[axis] / self.points_per_axis[axis]
        return -0.5 * self.axis_extent[axis] + h * np.arange(self.points_per_axis[axis])

    def coordinates(self) -> List[np.ndarray]:
        """Full coordinate arrays, one per axis, in 'ij' indexing"""
        axes = [self.axis_coordinates(a) for a in range(self.dimension)]
        return np.meshgrid(*axes, indexing="ij")

    def wavenumbers(self, axis: int) -> np.ndarray:
        """Angular wavenumbers k = 2*pi*m/L in FFT order"""
        n = self.points_per_axis[axis]
        return 2.0 * np.pi * np.fft.fftfreq(n, d=self.axis_extent[axis] / n)

    def particle_axes(self, particle: int) -> range:
        d = self.dims_per_particle
        return range(particle * d, (particle + 1) * d)

    def axis_particle(self, axis: int) -> int:
        return axis // self.dims_per_particle

    def index_to_coordinate(self, index) -> np.ndarray:
        """Map integer lattice indices (..., D) to coordinates (..., D)"""
        index = np.asarray(index)
        return self.lower + index * self.spacing

    def coordinate_to_index(self, points) -> np.ndarray:
        """
        Map coordinates (..., D) to the nearest lattice index (..., D).

        Periodic grids wrap the index; box grids clip it to the lattice.
        """
        points = np.asarray(points, dtype=float)
        index = np.rint((points - self.lower) / self.spacing).astype(np.int64)
        shape = np.array(self.points_per_axis)
        if self.boundary == "periodic":
            return np.mod(index, shape)
        return np.clip(index, 0, shape - 1)

    def wrap(self, points) -> np.ndarray:
        """Wrap coordinates into [lower, upper) on periodic grids; identity on box grids"""
        points = np.asarray(points, dtype=float)
        if self.boundary != "periodic":
            return points
        extent = np.array(self.axis_extent)
        return self.lower + np.mod(points - self.lower, extent)

    def contains(self, points) -> np.ndarray:
        """Boolean mask of points inside the domain (always True on periodic grids)"""
        points = np.asarray(points, dtype=float)
        if self.boundary == "periodic":
            return np.all(np.isfinite(points), axis=-1)
        upper = self.lower + self.spacing * (np.array(self.points_per_axis) - 1)
        return np.all((points >= self.lower) & (points <= upper), axis=-1)

    def minimal_image(self, displacement) -> np.ndarray:
        """Shortest periodic representative of a displacement"""
        displacement = np.asarray(displacement, dtype=float)
        if self.boundary != "periodic":
            return displacement
        extent = np.array(self.axis_extent)
        return displacement - extent * np.round(displacement / extent)


@dataclass(frozen=True)
class WaveFunction:
    """Complex amplitudes on a grid, component-first: shape (C, *grid.shape)"""
    grid: Grid
    amplitudes: np.ndarray          # complex128, (C, *grid.shape)
    masses: Tuple[float, ...]       # one per particle, mass units
    hbar: float = 1.0               # action units

    def __post_init__(self):
        amplitudes = np.array(self.amplitudes, dtype=np.complex128)
        if amplitudes.shape == self.grid.shape:
            amplitudes = amplitudes[np.newaxis]
        if amplitudes.shape[1:] != self.grid.shape:
            raise DomainError(
                f"amplitude shape {amplitudes.shape} does not match grid {self.grid.shape}"
            )
        components = amplitudes.shape[0]
        if components not in (1, 2 ** self.grid.particle_count):
            raise DomainError(
                f"{components} components; expected 1 or {2 ** self.grid.particle_count}"
            )
        if not np.all(np.isfinite(amplitudes)):
            raise DomainError("amplitudes contain NaN or Inf")
        masses = tuple(float(m) for m in self.masses)
        if len(masses) != self.grid.particle_count or any(m <= 0 for m in masses):
            raise DomainError(f"need {self.grid.particle_count} positive masses, got {masses}")
        if not self.hbar > 0:
            raise DomainError(f"hbar must be positive, got {self.hbar}")
        object.__setattr__(self, "amplitudes", _frozen(amplitudes))
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "hbar", float(self.hbar))

    @property
    def components(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def is_spinor(self) -> bool:
        return self.components > 1

    @property
    def axis_masses(self) -> np.ndarray:
        """Mass belonging to each configuration axis"""
        return np.repeat(np.array(self.masses), self.grid.dims_per_particle)

    def with_amplitudes(self, amplitudes: np.ndarray) -> "WaveFunction":
        return replace(self, amplitudes=amplitudes)


@dataclass(frozen=True)
class ScalarField:
    """Real or complex samples on a grid; mask marks valid points (None = all valid)"""
    grid: Grid
    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != self.grid.shape:
            raise DomainError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", _frozen(values.copy()))
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != self.grid.shape:
                raise DomainError("mask shape does not match grid")
            object.__setattr__(self, "mask", _frozen(mask.copy()))

    @property
    def valid(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.grid.shape, dtype=bool)
        return self.mask

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)


@dataclass(frozen=True)
class VectorField:
    """D components per grid point: values shape (D, *grid.shape)"""
    grid: Grid
    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (self.grid.dimension,) + self.grid.shape:
            raise DomainError(
                f"vector field shape {values.shape} does not match "
                f"{(self.grid.dimension,) + self.grid.shape}"
            )
        object.__setattr__(self, "values", _frozen(values.copy()))
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != self.grid.shape:
                raise DomainError("mask shape does not match grid")
            object.__setattr__(self, "mask", _frozen(mask.copy()))

    @property
    def valid(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.grid.shape, dtype=bool)
        return self.mask


@dataclass(frozen=True)
class PotentialSpec:
    """External potential; box grids add a confining wall of height wall_height"""
    kind: PotentialKind = "zero"
    omega: Tuple[float, ...] = ()                   # harmonic, one per axis
    charges: Tuple[float, ...] = ()                 # softcoulomb, one per particle
    softening: float = 1.0                          # softcoulomb core radius a
    slope: Tuple[float, ...] = ()                   # linear_gradient, one per axis
    table: Optional[ScalarField] = None             # custom_table
    wall_height: float = 0.0                        # box wall, energy units
    wall_width: float = 0.05                        # box wall thickness, fraction of extent
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("zero", "harmonic", "softcoulomb", "linear_gradient", "custom_table"):
            raise DomainError(f"unknown potential kind '{self.kind}'")
        if self.kind == "softcoulomb" and not self.softening > 0:
            raise DomainError(f"softening must be positive, got {self.softening}")
        if self.kind == "custom_table" and self.table is None:
            raise DomainError("custom_table potential needs a table")
        if self.wall_height < 0 or not 0 < self.wall_width < 0.5:
            raise DomainError("wall_height must be >= 0 and wall_width in (0, 0.5)")
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        object.__setattr__(self, "charges", tuple(float(e) for e in self.charges))
        object.__setattr__(self, "slope", tuple(float(s) for s in self.slope))


ZERO_POTENTIAL = PotentialSpec()
