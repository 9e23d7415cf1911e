"""
Quantum potential V_qu = -sum_a (hbar^2 / 2 m_a) d_a^2 |psi| / |psi| and the
Newton form m Q'' = -grad(V + V_qu) of the guidance dynamics.

|psi| is taken as sqrt(density), its Laplacian spectrally. Forces use a
4th-order centered gradient; the validity mask is eroded by the stencil reach.
"""

import logging
import math
from typing import Dict, Tuple

import numpy as np

from bohm_dynamics.guidance import DEFAULT_NODE_EPSILON, build_probe, evaluate_velocity
from bohm_dynamics.models import (
    EvolutionRecord,
    Interpolation,
    NewtonResidualReport,
    Trajectory,
    TrajectoryFlag,
)
from bohm_dynamics.solver import RecordPlayback
from wave_lattice.errors import ConfigurationError, DegenerateInputError, DomainError
from wave_lattice.grid import density_values, derivative, finite_difference, interpolate, potential_values
from wave_lattice.models import Grid, PotentialSpec, ScalarField, VectorField, WaveFunction

logger = logging.getLogger(__name__)

STENCIL_REACH = 2


def quantum_potential_values(
    rho: np.ndarray,
    grid: Grid,
    axis_masses: np.ndarray,
    hbar: float,
    node_epsilon: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """(V_qu, mask) from a density array; V_qu is zero on the masked set"""
    R = np.sqrt(np.maximum(rho, 0.0))
    mask = rho > node_epsilon * float(rho.max())
    curvature = np.zeros(grid.shape)
    for axis in range(grid.dimension):
        curvature += hbar ** 2 / (2.0 * axis_masses[axis]) * derivative(R, grid, axis, order=2)
    values = np.zeros(grid.shape)
    values[mask] = -curvature[mask] / R[mask]
    return values, mask


def quantum_potential(psi: WaveFunction, node_epsilon: float = DEFAULT_NODE_EPSILON) -> ScalarField:
    """V_qu on the grid, masked where density <= node_epsilon * max"""
    values, mask = quantum_potential_values(
        density_values(psi.amplitudes), psi.grid, psi.axis_masses, psi.hbar, node_epsilon
    )
    return ScalarField(psi.grid, values, mask)


def erode(mask: np.ndarray, grid: Grid, reach: int = STENCIL_REACH) -> np.ndarray:
    """Points whose whole centered stencil (reach cells per axis) lies in mask"""
    result = mask.copy()
    for axis in range(grid.dimension):
        for shift in range(1, reach + 1):
            for sign in (-1, 1):
                if grid.boundary == "periodic":
                    result &= np.roll(mask, sign * shift, axis=axis)
                else:
                    shifted = np.zeros_like(mask)
                    source = [slice(None)] * grid.dimension
                    target = [slice(None)] * grid.dimension
                    if sign > 0:
                        source[axis], target[axis] = slice(0, -shift), slice(shift, None)
                    else:
                        source[axis], target[axis] = slice(shift, None), slice(0, -shift)
                    shifted[tuple(target)] = mask[tuple(source)]
                    result &= shifted
    return result


def potential_gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    """4th-order centered gradient, shape (D, *grid.shape)"""
    return np.stack([finite_difference(values, grid, axis) for axis in range(grid.dimension)])


def force_field(
    psi: WaveFunction,
    potential: PotentialSpec,
    node_epsilon: float = DEFAULT_NODE_EPSILON,
) -> VectorField:
    """-grad(V + V_qu) with the node mask eroded by the stencil reach"""
    grid = psi.grid
    V = potential_values(potential, grid, psi.masses)
    V_qu, mask = quantum_potential_values(
        density_values(psi.amplitudes), grid, psi.axis_masses, psi.hbar, node_epsilon
    )
    return VectorField(grid, -potential_gradient(V + V_qu, grid), erode(mask, grid))


def classicality_indicator(psi: WaveFunction, node_epsilon: float = DEFAULT_NODE_EPSILON) -> ScalarField:
    """||grad V_qu|| pointwise; small values mark the classical regime"""
    field = quantum_potential(psi, node_epsilon)
    gradient = potential_gradient(np.asarray(field.values), psi.grid)
    return ScalarField(psi.grid, np.sqrt(np.sum(gradient ** 2, axis=0)), erode(field.valid, psi.grid))


class _ForceClock:
    """Force fields along a record, evaluated at points with the guidance interpolation"""

    def __init__(self, record: EvolutionRecord, potential: PotentialSpec, node_epsilon: float,
                 interpolation: Interpolation = "trilinear"):
        self.playback = RecordPlayback(record)
        self.potential = potential
        self.node_epsilon = node_epsilon
        self.interpolation = interpolation
        self._fields: Dict[float, VectorField] = {}

    def field(self, t: float) -> VectorField:
        key = round(t, 12)
        if key not in self._fields:
            if len(self._fields) >= 4:
                self._fields.pop(next(iter(self._fields)))
            self._fields[key] = force_field(self.playback.wave_at(t), self.potential, self.node_epsilon)
        return self._fields[key]

    def __call__(self, t: float, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(forces (n, D), valid (n,)) at time t"""
        field = self.field(t)
        grid = field.grid
        forces = interpolate(np.asarray(field.values), grid, points, self.interpolation).T
        valid = interpolate(field.valid.astype(float), grid, points, "trilinear") >= 1.0 - 1e-12
        return forces, valid


def newton_residual(
    trajectory: Trajectory,
    record: EvolutionRecord,
    potential: PotentialSpec,
    node_epsilon: float = DEFAULT_NODE_EPSILON,
    interpolation: Interpolation = "trilinear",
) -> NewtonResidualReport:
    """
    Compare m Q'' (three-point difference) with -grad(V + V_qu) along Q(t).

    Samples next to a flagged sample, or whose force stencil touches the node
    mask, are excluded; endpoints carry NaN.

    Args:
        trajectory: Bohmian trajectory with at least 3 samples inside the record span
        record: Eulerian solution guiding the trajectory
        potential: External potential of the record
        node_epsilon: Node threshold for V_qu
        interpolation: Force interpolation scheme

    Returns:
        NewtonResidualReport
    """
    times = trajectory.times
    if len(times) < 3:
        raise DomainError("newton residual needs at least 3 trajectory samples")
    if times[0] < record.times[0] - 1e-9 or times[-1] > record.times[-1] + 1e-9:
        raise DomainError("trajectory times fall outside the record span")

    masses = np.repeat(np.array(record.initial.masses), record.grid.dims_per_particle)
    clock = _ForceClock(record, potential, node_epsilon, interpolation)
    Q = trajectory.points
    residual = np.full(len(times), np.nan)
    interior = len(times) - 2
    excluded = 0
    for i in range(1, len(times) - 1):
        if np.any(trajectory.flags[i - 1:i + 2] != TrajectoryFlag.OK):
            excluded += 1
            continue
        forward, backward = times[i + 1] - times[i], times[i] - times[i - 1]
        acceleration = 2.0 * ((Q[i + 1] - Q[i]) / forward - (Q[i] - Q[i - 1]) / backward) / (forward + backward)
        force, valid = clock(times[i], Q[i][np.newaxis])
        if not valid[0]:
            excluded += 1
            continue
        residual[i] = float(np.linalg.norm(masses * acceleration - force[0]))

    if excluded == interior:
        raise DegenerateInputError("every trajectory sample is masked or flagged")
    return NewtonResidualReport(times, residual, excluded / interior, trajectory)


def _verlet(
    clock,
    record_times: np.ndarray,
    q0: np.ndarray,
    v0: np.ndarray,
    masses: np.ndarray,
    dt: float,
    grid: Grid,
) -> Trajectory:
    """Velocity Verlet over the record span, one output sample per step"""
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    span = record_times[-1] - record_times[0]
    steps = max(1, math.ceil(span / dt - 1e-9))
    h = span / steps
    t = record_times[0]
    q, v = q0.astype(float).copy(), v0.astype(float).copy()
    force, valid = clock(t, q[np.newaxis])
    acceleration = force[0] / masses
    times, points, velocities = [t], [q.copy()], [v.copy()]
    flags = [TrajectoryFlag.OK if valid[0] else TrajectoryFlag.NODE_REGULARIZED]
    left = False
    for i in range(1, steps + 1):
        t = record_times[0] + i * h
        if not left:
            half = v + 0.5 * h * acceleration
            moved = q + h * half
            left = not grid.contains(moved[np.newaxis])[0]
        if left:
            flag = TrajectoryFlag.LEFT_DOMAIN
        else:
            q = moved
            force, valid = clock(t, q[np.newaxis])
            acceleration = force[0] / masses
            v = half + 0.5 * h * acceleration
            flag = TrajectoryFlag.OK if valid[0] else TrajectoryFlag.NODE_REGULARIZED
        times.append(t)
        points.append(q.copy())
        velocities.append(v.copy())
        flags.append(flag)
    return Trajectory(np.array(times), np.array(points), np.array(flags, dtype=np.int8), np.array(velocities))


def integrate_newton(
    record: EvolutionRecord,
    q0,
    v0,
    dt: float,
    potential: PotentialSpec,
    node_epsilon: float = DEFAULT_NODE_EPSILON,
) -> Trajectory:
    """
    Integrate m Q'' = -grad(V + V_qu^{psi_t}) with velocity Verlet.

    Seeded with v0 = v^psi(q0) this reproduces the guidance trajectory; any
    other v0 gives a solution of the Newton form that is not Bohmian.
    """
    masses = np.repeat(np.array(record.initial.masses), record.grid.dims_per_particle)
    clock = _ForceClock(record, potential, node_epsilon)
    return _verlet(clock, np.asarray(record.times), np.asarray(q0, dtype=float),
                   np.asarray(v0, dtype=float), masses, dt, record.grid)


def constraint_deviation(
    trajectory: Trajectory,
    record: EvolutionRecord,
    node_epsilon: float = DEFAULT_NODE_EPSILON,
) -> float:
    """max_t ||Q'(t) - v^{psi_t}(Q(t))|| over ok samples of a second-order trajectory"""
    if trajectory.velocities is None:
        raise DomainError("constraint deviation needs a trajectory with velocities")
    playback = RecordPlayback(record)
    worst = 0.0
    for t, q, v, flag in zip(trajectory.times, trajectory.points, trajectory.velocities, trajectory.flags):
        if flag != TrajectoryFlag.OK:
            continue
        guided, _ = evaluate_velocity(build_probe(playback.wave_at(t), node_epsilon=node_epsilon), q[np.newaxis])
        worst = max(worst, float(np.linalg.norm(v - guided[0])))
    return worst


class _ClassicalForce:
    def __init__(self, grid: Grid, potential: PotentialSpec, masses):
        V = potential_values(potential, grid, masses)
        self.grid = grid
        self.gradient = -potential_gradient(V, grid)

    def __call__(self, t: float, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return interpolate(self.gradient, self.grid, points, "trilinear").T, np.ones(len(points), dtype=bool)


def classical_trajectory(
    grid: Grid,
    potential: PotentialSpec,
    q0,
    v0,
    masses,
    T: float,
    dt: float,
    start_time: float = 0.0,
) -> Trajectory:
    """Newton's law without the quantum potential, for classical-limit comparisons"""
    axis_masses = np.repeat(np.asarray(masses, dtype=float), grid.dims_per_particle)
    clock = _ClassicalForce(grid, potential, masses)
    return _verlet(clock, np.array([start_time, start_time + T]), np.asarray(q0, dtype=float),
                   np.asarray(v0, dtype=float), axis_masses, dt, grid)


def classical_deviation(bohmian: Trajectory, classical: Trajectory) -> float:
    """Largest distance between the two paths over the Bohmian time base"""
    worst = 0.0
    for t, q in zip(bohmian.times, bohmian.points):
        worst = max(worst, float(np.linalg.norm(q - classical.at(t))))
    return worst
