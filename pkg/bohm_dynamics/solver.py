"""
Grid propagation of the Schrodinger and Pauli equations.

Two solvers share one interface (``step`` on a WaveFunction, ``step_array``
on raw component-first amplitudes):

- SplitSpectralSolver: Strang splitting
  exp(-iV dt/2hbar) exp(-iT dt/hbar) exp(-iV dt/2hbar), kinetic factor diagonal
  in k-space, optional pointwise 2x2 spin rotation per particle (Pauli term
  mu_k B.sigma_k) folded into the local half steps.
- CrankNicolsonSolver: (1 + iH dt/2hbar) psi' = (1 - iH dt/2hbar) psi with a
  second-difference kinetic operator and a sparse LU factorization; Dirichlet
  walls on box grids.
"""

import json
import logging
import math
from collections import OrderedDict
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft
from scipy import sparse
from scipy.sparse.linalg import splu
from tqdm import tqdm

from bohm_dynamics.models import EvolutionRecord, MagneticSpec, SolverMethod
from wave_lattice.dump import load_scalar_field, load_wavefunction, save_scalar_field, save_wavefunction
from wave_lattice.errors import ConfigurationError, DomainError, NumericalInstabilityError
from wave_lattice.grid import field_l2_distance, potential_values
from wave_lattice.models import Grid, PotentialSpec, WaveFunction

logger = logging.getLogger(__name__)

def _is_power_of_two(n: int) -> bool:
    return (n & (n - 1)) == 0

class SplitSpectralSolver:
    """Strang split-step Fourier propagator with optional Pauli coupling"""

    method = "split_spectral"

    def __init__(
        self,
        grid: Grid,
        potential: PotentialSpec,
        dt: float,
        masses: Sequence[float],
        hbar: float = 1.0,
        magnetic: Optional[MagneticSpec] = None,
    ):
        """
        Precompute the potential, kinetic and spin factors for one time step.

        Args:
            grid: Periodic (or walled box) grid with power-of-two axes
            potential: External potential
            dt: Time step (> 0)
            masses: Particle masses
            hbar: Reduced Planck constant
            magnetic: Optional magnetic data (vector potential, B field, moments)
        """
        if not dt > 0:
            raise DomainError(f"dt must be positive, got {dt}")
        if grid.boundary == "box" and not potential.wall_height > 0:
            raise ConfigurationError("split-step stepping on a box grid needs a confining wall (wall_height > 0)")
        if not all(_is_power_of_two(p) for p in grid.points_per_axis):
            raise ConfigurationError(f"split-step stepping needs power-of-two axes, got {grid.points_per_axis}")

        self.grid = grid
        self.potential = potential
        self.dt = float(dt)
        self.masses = tuple(float(m) for m in masses)
        self.hbar = float(hbar)
        self.magnetic = magnetic
        self._axes = tuple(range(-grid.dimension, 0))

        V = potential_values(potential, grid, self.masses)
        self._half_potential = np.exp(-0.5j * V * self.dt / self.hbar)

        axis_masses = np.repeat(np.array(self.masses), grid.dims_per_particle)
        kinetic = np.zeros(grid.shape)
        for axis in range(grid.dimension):
            p = self.hbar * grid.wavenumbers(axis) - self._vector_potential(axis)
            shape = [1] * grid.dimension
            shape[axis] = -1
            kinetic = kinetic + (p ** 2 / (2.0 * axis_masses[axis])).reshape(shape)
        self._kinetic = np.exp(-1j * kinetic * self.dt / self.hbar)

        self._spin_factors = []
        if magnetic is not None and magnetic.has_field:
            self._spin_factors = [self._spin_rotation(k) for k in range(grid.particle_count)]

    def _vector_potential(self, axis: int) -> float:
        """e_k A along a configuration axis"""
        if self.magnetic is None:
            return 0.0
        particle = self.grid.axis_particle(axis)
        local = axis - particle * self.grid.dims_per_particle
        direction = self.magnetic.axes_for(self.grid.dims_per_particle)[local]
        return self.magnetic.charge(particle) * self.magnetic.vector_potential[direction]

    def _spin_rotation(self, particle: int) -> Tuple[np.ndarray, ...]:
        """
        exp(-i dt/(2 hbar) mu_k B(q_k).sigma) as four pointwise matrix entries.

        With b = mu dt B/(2 hbar): U = cos|b| I - i sin|b| (b/|b|).sigma.
        """
        mag = self.magnetic
        grid = self.grid
        coords = grid.coordinates()
        position = [np.zeros(grid.shape) for _ in range(3)]
        for local, direction in enumerate(mag.axes_for(grid.dims_per_particle)):
            position[direction] = coords[grid.particle_axes(particle)[local]]
        gradient = np.array(mag.field_gradient, dtype=float)
        B = [
            mag.field_uniform[i] + sum(gradient[i, j] * position[j] for j in range(3))
            for i in range(3)
        ]
        scale = mag.moments[particle] * self.dt / (2.0 * self.hbar)
        bx, by, bz = (np.broadcast_to(scale * b, grid.shape) for b in B)
        size = np.sqrt(bx ** 2 + by ** 2 + bz ** 2)
        c = np.cos(size)
        s = np.sinc(size / np.pi)           # sin|b| / |b|, finite at b = 0
        return (
            c - 1j * s * bz,
            -1j * s * bx - s * by,
            -1j * s * bx + s * by,
            c + 1j * s * bz,
        )

    def _apply_spin(self, values: np.ndarray) -> np.ndarray:
        N = self.grid.particle_count
        lead = values.shape[: values.ndim - self.grid.dimension - 1]
        spins = values.reshape(lead + (2,) * N + self.grid.shape)
        for particle, (u00, u01, u10, u11) in enumerate(self._spin_factors):
            axis = len(lead) + particle
            up = np.take(spins, 0, axis=axis)
            down = np.take(spins, 1, axis=axis)
            spins = np.stack([u00 * up + u01 * down, u10 * up + u11 * down], axis=axis)
        return spins.reshape(values.shape)

    def _local_half_step(self, values: np.ndarray) -> np.ndarray:
        if self._spin_factors:
            values = self._apply_spin(values)
        return values * self._half_potential

    def step_array(self, values: np.ndarray) -> np.ndarray:
        """One Strang step on component-first amplitudes (leading batch axes allowed)"""
        values = self._local_half_step(values)
        values = sp_fft.ifftn(sp_fft.fftn(values, axes=self._axes) * self._kinetic, axes=self._axes)
        return self._local_half_step(values)

    def step(self, psi: WaveFunction) -> WaveFunction:
        if self._spin_factors and psi.components != 2 ** self.grid.particle_count:
            raise DomainError(f"Pauli stepping needs {2 ** self.grid.particle_count} components, got {psi.components}")
        return psi.with_amplitudes(self.step_array(np.asarray(psi.amplitudes)))

class CrankNicolsonSolver:
    """Implicit midpoint propagator on a second-difference Hamiltonian"""

    method = "crank_nicolson"

    def __init__(
        self,
        grid: Grid,
        potential: PotentialSpec,
        dt: float,
        masses: Sequence[float],
        hbar: float = 1.0,
        magnetic: Optional[MagneticSpec] = None,
    ):
        if not dt > 0:
            raise DomainError(f"dt must be positive, got {dt}")
        if magnetic is not None and magnetic.has_field:
            raise ConfigurationError("Pauli coupling is only available with split_spectral stepping")
        self.grid = grid
        self.potential = potential
        self.dt = float(dt)
        self.masses = tuple(float(m) for m in masses)
        self.hbar = float(hbar)
        self.magnetic = magnetic

        H = self._hamiltonian()
        identity = sparse.identity(grid.total_points, dtype=np.complex128, format="csc")
        factor = 0.5j * self.dt / self.hbar
        self._explicit = (identity - factor * H).tocsr()
        self._implicit = splu((identity + factor * H).tocsc())

    def _axis_operators(self, axis: int) -> Tuple[sparse.spmatrix, sparse.spmatrix]:
        n = self.grid.shape[axis]
        h = self.grid.spacing[axis]
        ones = np.ones(n)
        second = sparse.diags([ones[:-1], -2.0 * ones, ones[:-1]], [-1, 0, 1], format="lil")
        first = sparse.diags([-ones[:-1], ones[:-1]], [-1, 1], format="lil")
        if self.grid.boundary == "periodic":
            second[0, n - 1] = second[n - 1, 0] = 1.0
            first[0, n - 1] = -1.0
            first[n - 1, 0] = 1.0
        return second.tocsr() / h ** 2, first.tocsr() / (2.0 * h)

    def _hamiltonian(self) -> sparse.spmatrix:
        grid = self.grid
        axis_masses = np.repeat(np.array(self.masses), grid.dims_per_particle)
        H = sparse.diags(potential_values(self.potential, grid, self.masses).ravel()).astype(np.complex128)
        for axis in range(grid.dimension):
            second, first = self._axis_operators(axis)
            eA = 0.0
            if self.magnetic is not None:
                particle = grid.axis_particle(axis)
                local = axis - particle * grid.dims_per_particle
                direction = self.magnetic.axes_for(grid.dims_per_particle)[local]
                eA = self.magnetic.charge(particle) * self.magnetic.vector_potential[direction]
            n = grid.shape[axis]
            block = (
                -self.hbar ** 2 * second
                + 2j * self.hbar * eA * first
                + eA ** 2 * sparse.identity(n)
            ) / (2.0 * axis_masses[axis])
            term = sparse.identity(1, format="csr")
            for other in range(grid.dimension):
                factor = block if other == axis else sparse.identity(grid.shape[other], format="csr")
                term = sparse.kron(term, factor, format="csr")
            H = H + term
        return H.tocsr()

    def step_array(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.complex128)
        M = self.grid.total_points
        columns = values.reshape(-1, M).T
        updated = self._implicit.solve(np.ascontiguousarray(self._explicit @ columns))
        return updated.T.reshape(values.shape)

    def step(self, psi: WaveFunction) -> WaveFunction:
        return psi.with_amplitudes(self.step_array(np.asarray(psi.amplitudes)))

Solver = Union[SplitSpectralSolver, CrankNicolsonSolver]

def make_solver(
    method: SolverMethod,
    grid: Grid,
    potential: PotentialSpec,
    dt: float,
    masses: Sequence[float],
    hbar: float = 1.0,
    magnetic: Optional[MagneticSpec] = None,
) -> Solver:
    if method == "split_spectral":
        return SplitSpectralSolver(grid, potential, dt, masses, hbar, magnetic)
    if method == "crank_nicolson":
        return CrankNicolsonSolver(grid, potential, dt, masses, hbar, magnetic)
    raise ConfigurationError(f"unknown solver method '{method}'")

def step_split_spectral(psi: WaveFunction, potential: PotentialSpec, dt: float) -> WaveFunction:
    """Single Strang step of the Schrodinger equation"""
    return SplitSpectralSolver(psi.grid, potential, dt, psi.masses, psi.hbar).step(psi)

def step_pauli(psi: WaveFunction, potential: PotentialSpec, magnetic: MagneticSpec, dt: float) -> WaveFunction:
    """Single Strang step of the Pauli equation; psi must carry 2^N spinor components"""
    expected = 2 ** psi.grid.particle_count
    if psi.components != expected:
        raise DomainError(f"Pauli step needs {expected} spinor components, got {psi.components}")
    if len(magnetic.moments) != psi.grid.particle_count:
        raise DomainError("need one magnetic moment per particle")
    return SplitSpectralSolver(psi.grid, potential, dt, psi.masses, psi.hbar, magnetic).step(psi)

def _norm_squared(values: np.ndarray, grid: Grid) -> float:
    return float(np.sum(np.abs(values) ** 2) * grid.cell_volume)

def evolve(
    psi0: WaveFunction,
    potential: PotentialSpec,
    T: float,
    dt: float,
    snapshot_stride: int = 1,
    method: SolverMethod = "split_spectral",
    magnetic: Optional[MagneticSpec] = None,
    norm_tolerance: float = 1e-6,
    start_time: float = 0.0,
    progress: bool = False,
) -> EvolutionRecord:
    """
    Evolve psi0 for a total time T and keep every snapshot_stride-th step.

    Args:
        psi0: Initial wave function
        potential: External potential
        T: Total time (>= 0); must be a whole number of steps
        dt: Solver time step
        snapshot_stride: Steps between snapshots; must divide the step count
        method: "split_spectral" or "crank_nicolson"
        magnetic: Optional Pauli coupling
        norm_tolerance: Relative norm drift that aborts the run
        start_time: Time label of psi0
        progress: Show a tqdm progress bar

    Returns:
        EvolutionRecord with snapshots at start_time + j*snapshot_stride*dt
    """
    if T < 0:
        raise DomainError(f"T must be non-negative, got {T}")
    if snapshot_stride < 1:
        raise ConfigurationError("snapshot_stride must be >= 1")
    if T == 0:
        return EvolutionRecord([start_time], [psi0], method, dt, potential, magnetic)

    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigurationError(f"dt={dt} does not divide T={T}")
    if steps % snapshot_stride:
        raise ConfigurationError(f"snapshot_stride={snapshot_stride} does not divide the {steps} steps")

    solver = make_solver(method, psi0.grid, potential, dt, psi0.masses, psi0.hbar, magnetic)
    if magnetic is not None and magnetic.has_field and psi0.components != 2 ** psi0.grid.particle_count:
        raise DomainError("Pauli evolution needs a spinor wave function")

    reference = _norm_squared(psi0.amplitudes, psi0.grid)
    times, snapshots = [start_time], [psi0]
    values = np.array(psi0.amplitudes)
    logger.debug("evolve %s: %d steps of %g, stride %d", method, steps, dt, snapshot_stride)
    for i in tqdm(range(1, steps + 1), desc="evolve", disable=not progress):
        values = solver.step_array(values)
        if i % snapshot_stride == 0:
            drift = abs(_norm_squared(values, psi0.grid) - reference) / reference
            if not drift <= norm_tolerance:
                raise NumericalInstabilityError(
                    f"norm drift {drift:.3e} exceeds {norm_tolerance:.1e}",
                    module="eulerian-solver",
                    step=i,
                )
            times.append(start_time + i * dt)
            snapshots.append(psi0.with_amplitudes(values))
    return EvolutionRecord(times, snapshots, method, dt, potential, magnetic)

class RecordPlayback:
    """
    Wave function at any time inside a record's span.

    Intermediate times are reached by re-stepping the record's own solver from
    the nearest earlier snapshot with ceil(gap/dt) equal sub-steps.
    """

    def __init__(self, record: EvolutionRecord, cache_size: int = 8):
        self.record = record
        self.cache_size = cache_size
        self._solvers: Dict[float, Solver] = {}
        self._cache: "OrderedDict[float, WaveFunction]" = OrderedDict()
        self._times = np.asarray(record.times)

    def solver_for(self, dt: float) -> Solver:
        key = round(dt, 14)
        if key not in self._solvers:
            first = self.record.initial
            self._solvers[key] = make_solver(
                self.record.method, first.grid, self.record.potential, dt,
                first.masses, first.hbar, self.record.magnetic,
            )
        return self._solvers[key]

    def wave_at(self, t: float) -> WaveFunction:
        record = self.record
        tolerance = 1e-9 * max(1.0, abs(t))
        if t < self._times[0] - tolerance or t > self._times[-1] + tolerance:
            raise DomainError(f"t={t} lies outside the record span [{self._times[0]}, {self._times[-1]}]")
        index = record.snapshot_index(t)
        if index is not None:
            return record.snapshots[index]
        key = round(t, 12)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]

        k = int(np.searchsorted(self._times, t, side="right")) - 1
        gap = t - self._times[k]
        substeps = max(1, math.ceil(gap / record.dt - 1e-9))
        solver = self.solver_for(gap / substeps)
        values = np.array(record.snapshots[k].amplitudes)
        for _ in range(substeps):
            values = solver.step_array(values)
        psi = record.snapshots[k].with_amplitudes(values)

        self._cache[key] = psi
        if len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return psi

def time_reversal_error(
    psi0: WaveFunction,
    potential: PotentialSpec,
    T: float,
    dt: float,
    method: SolverMethod = "split_spectral",
) -> float:
    """
    L2 distance between psi0 and the state evolved for T, conjugated, evolved
    for T again and conjugated back.

    Conjugation reverses a scalar evolution with a real potential, so the
    result measures how far the discrete propagator is from being reversible.
    """
    if psi0.components != 1:
        raise DomainError("time reversal by conjugation needs a scalar wave function")
    stride = max(1, int(round(T / dt)))
    forward = evolve(psi0, potential, T, dt, stride, method=method).final
    reversed_ = forward.with_amplitudes(np.conj(forward.amplitudes))
    back = evolve(reversed_, potential, T, dt, stride, method=method).final
    return field_l2_distance(np.conj(back.amplitudes), psi0.amplitudes, psi0.grid)

def combine_records(records: Sequence[EvolutionRecord], coefficients: Sequence[complex]) -> EvolutionRecord:
    """
    Linear superposition of branch records sharing time base, grid and dynamics.

    By linearity of the evolution the combined snapshots are the evolution of
    the combined initial state.
    """
    if not records or len(records) != len(coefficients):
        raise DomainError("need one coefficient per record")
    base = records[0]
    for other in records[1:]:
        if not np.allclose(other.times, base.times) or other.grid != base.grid or other.dt != base.dt:
            raise DomainError("records must share grid, time base and step")
    snapshots = []
    for i, first in enumerate(base.snapshots):
        amplitudes = sum(complex(c) * r.snapshots[i].amplitudes for c, r in zip(coefficients, records))
        snapshots.append(first.with_amplitudes(amplitudes))
    return EvolutionRecord(list(base.times), snapshots, base.method, base.dt, base.potential, base.magnetic)

def stationary_state(
    solver: Solver,
    guess: WaveFunction,
    max_size: int = 2048,
) -> Tuple[WaveFunction, float]:
    """
    Eigenvector of the one-step propagator with the largest overlap with guess.

    The returned state is an exact fixed point (up to a phase) of the discrete
    dynamics; its global phase is chosen so that <guess|psi> is real positive.

    Returns:
        (normalized WaveFunction, quasi-energy E with U psi = exp(-i E dt/hbar) psi)
    """
    grid = guess.grid
    size = guess.components * grid.total_points
    if size > max_size:
        raise ConfigurationError(f"propagator of size {size} exceeds {max_size}")
    basis = np.eye(size, dtype=np.complex128).reshape((size, guess.components) + grid.shape)
    propagator = solver.step_array(basis).reshape(size, size).T
    eigenvalues, eigenvectors = np.linalg.eig(propagator)
    target = np.asarray(guess.amplitudes).ravel()
    overlaps = eigenvectors.conj().T @ target
    best = int(np.argmax(np.abs(overlaps)))
    vector = eigenvectors[:, best] * np.exp(-1j * np.angle(overlaps[best]))
    vector = vector / np.sqrt(np.sum(np.abs(vector) ** 2) * grid.cell_volume)
    energy = float(-guess.hbar * np.angle(eigenvalues[best]) / solver.dt)
    return guess.with_amplitudes(vector.reshape(guess.amplitudes.shape)), energy

# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _potential_to_dict(potential: PotentialSpec, directory: Path) -> dict:
    data = {k: v for k, v in asdict(potential).items() if k != "table"}
    if potential.table is not None:
        save_scalar_field(directory / "potential_table.bin", potential.table)
        data["table"] = "potential_table.bin"
    return data

def _potential_from_dict(data: dict, directory: Path) -> PotentialSpec:
    data = dict(data)
    if data.get("table"):
        data["table"] = load_scalar_field(directory / data["table"])
    else:
        data["table"] = None
    return PotentialSpec(**data)

def save_record(record: EvolutionRecord, directory: Union[str, Path]) -> Path:
    """Directory of snapshot dumps plus index.json {times, method, dt, ...}"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files: List[str] = []
    for i, (t, psi) in enumerate(zip(record.times, record.snapshots)):
        name = f"snapshot_{i:05d}.bin"
        save_wavefunction(directory / name, psi, {"time": t})
        files.append(name)
    index = {
        "times": list(record.times),
        "method": record.method,
        "dt": record.dt,
        "snapshots": files,
        "potential": _potential_to_dict(record.potential, directory),
        "magnetic": asdict(record.magnetic) if record.magnetic is not None else None,
    }
    with open(directory / "index.json", "w", encoding="utf-8") as f:
        json.dump(index, f, indent=2)
    return directory

def load_record(directory: Union[str, Path]) -> EvolutionRecord:
    directory = Path(directory)
    with open(directory / "index.json", encoding="utf-8") as f:
        index = json.load(f)
    magnetic = None
    if index.get("magnetic"):
        raw = index["magnetic"]
        magnetic = MagneticSpec(
            moments=tuple(raw["moments"]),
            charges=tuple(raw["charges"]),
            field_uniform=tuple(raw["field_uniform"]),
            field_gradient=tuple(tuple(row) for row in raw["field_gradient"]),
            vector_potential=tuple(raw["vector_potential"]),
            coordinate_axes=tuple(raw["coordinate_axes"]) if raw["coordinate_axes"] is not None else None,
        )
    snapshots = [load_wavefunction(directory / name) for name in index["snapshots"]]
    return EvolutionRecord(
        index["times"], snapshots, index["method"], index["dt"],
        _potential_from_dict(index["potential"], directory), magnetic,
    )
