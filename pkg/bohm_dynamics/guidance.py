"""
Guidance law: probability current, velocity field and point evaluation.

v_a = (hbar/m_a) Im(psi^dagger d_a psi) / (psi^dagger psi), spinors included.
Below node_epsilon * max(density) the denominator is regularized with
epsilon_abs = node_epsilon * max(density) and the point is flagged.
"""

import logging
from typing import Tuple

import numpy as np

from bohm_dynamics.models import Interpolation, VelocityProbe
from wave_lattice.errors import DomainError
from wave_lattice.grid import density_values, derivative, interpolate
from wave_lattice.models import VectorField, WaveFunction

logger = logging.getLogger(__name__)

DEFAULT_NODE_EPSILON = 1e-6


def _current_values(psi: WaveFunction) -> np.ndarray:
    grid = psi.grid
    amplitudes = np.asarray(psi.amplitudes)
    masses = psi.axis_masses
    current = np.empty((grid.dimension,) + grid.shape)
    for axis in range(grid.dimension):
        gradient = derivative(amplitudes, grid, axis)
        current[axis] = psi.hbar / masses[axis] * np.sum(np.imag(np.conj(amplitudes) * gradient), axis=0)
    return current


def probability_current(psi: WaveFunction) -> VectorField:
    """j_a = (hbar/m_a) Im(psi^dagger d_a psi); identically zero for real psi"""
    return VectorField(psi.grid, _current_values(psi))


def _regularized_velocity(current: np.ndarray, rho: np.ndarray, node_epsilon: float) -> Tuple[np.ndarray, np.ndarray, float]:
    threshold = node_epsilon * float(rho.max())
    mask = rho > threshold
    denominator = np.where(mask, rho, rho + threshold)
    return current / denominator, mask, threshold


def velocity_field(psi: WaveFunction, node_epsilon: float = DEFAULT_NODE_EPSILON) -> VectorField:
    """
    v = j / density on the unmasked set.

    Masked points (density <= node_epsilon * max) carry the regularized value
    j / (density + epsilon_abs) and are marked invalid.
    """
    rho = density_values(psi.amplitudes)
    velocity, mask, _ = _regularized_velocity(_current_values(psi), rho, node_epsilon)
    return VectorField(psi.grid, velocity, mask)


def build_probe(
    psi: WaveFunction,
    interpolation: Interpolation = "trilinear",
    node_epsilon: float = DEFAULT_NODE_EPSILON,
) -> VelocityProbe:
    """Freeze the guidance field of one snapshot for repeated point evaluation"""
    current = _current_values(psi)
    rho = density_values(psi.amplitudes)
    velocity, _, threshold = _regularized_velocity(current, rho, node_epsilon)
    return VelocityProbe(psi, interpolation, node_epsilon, current, rho, velocity, threshold)


def evaluate_velocity(probe: VelocityProbe, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Velocities at points (n, D) and a flag per point telling whether the
    node regularization was active there.

    Points outside a box domain are not checked here; callers decide.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grid = probe.grid
    if probe.interpolation == "trilinear":
        velocity = interpolate(probe.velocity, grid, points, "trilinear").T
        rho = interpolate(probe.density, grid, points, "trilinear")
    else:
        current = interpolate(probe.current, grid, points, "spectral").T
        rho = interpolate(probe.density, grid, points, "spectral")
        regular = rho > probe.threshold
        denominator = np.where(regular, rho, np.maximum(rho, 0.0) + probe.threshold)
        velocity = current / denominator[:, np.newaxis]
    return velocity, rho <= probe.threshold


def velocity_at(probe: VelocityProbe, q) -> np.ndarray:
    """
    Guidance velocity at one point (D,) or many points (n, D).

    Periodic grids wrap q first; a point outside a box domain is a domain error.
    """
    q = np.asarray(q, dtype=float)
    points = np.atleast_2d(q)
    if points.shape[1] != probe.grid.dimension:
        raise DomainError(f"expected points of dimension {probe.grid.dimension}, got {points.shape[1]}")
    if not np.all(probe.grid.contains(points)):
        raise DomainError("velocity requested outside the box domain")
    velocity, _ = evaluate_velocity(probe, points)
    return velocity[0] if q.ndim == 1 else velocity


def continuity_residual(previous: WaveFunction, current: WaveFunction, dt: float) -> float:
    """
    L1 norm of d(density)/dt + div j between consecutive snapshots, per unit time.

    The time derivative is a forward difference and the divergence is the
    average of the two endpoints, so the residual is centered at the midpoint.
    """
    if previous.grid != current.grid:
        raise DomainError("snapshots must share a grid")
    grid = current.grid
    rate = (density_values(current.amplitudes) - density_values(previous.amplitudes)) / dt
    divergence = np.zeros(grid.shape)
    for psi in (previous, current):
        j = _current_values(psi)
        for axis in range(grid.dimension):
            divergence += 0.5 * derivative(j[axis], grid, axis)
    return float(np.sum(np.abs(rate + divergence)) * grid.cell_volume)
