"""
Lagrangian quantum trajectory method.

An ensemble sampled from |psi0|^2 with guidance velocities is pushed by
velocity Verlet under -grad(V + V_qu[rho_hat]), where rho_hat is a Gaussian
kernel density estimate of the ensemble on the grid:

- points are deposited with cloud-in-cell weights and the histogram is
  convolved with the Gaussian kernel in Fourier space;
- the bandwidth follows h = scale * sigma * n^(-1/(D+4)) unless fixed;
- with variance correction the ensemble is shrunk towards its mean first, so
  that the smoothed density keeps the ensemble variance.

psi is recovered as sqrt(rho_hat) exp(iS/hbar), S being the line integral of
m v from the densest point of each connected component, shifted so that
S(gauge_anchor) = 0.
"""

import logging
import math
from collections import deque
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy.spatial import cKDTree
from tqdm import tqdm

from bohm_dynamics.guidance import build_probe, evaluate_velocity
from bohm_dynamics.models import EvolutionRecord, QtmSettings, QtmState, ReconstructedWave
from bohm_dynamics.quantum_potential import erode, potential_gradient, quantum_potential_values
from bohm_dynamics.trajectories import propagate_ensemble, sample_initial
from wave_lattice.errors import ConfigurationError, DomainError, NumericalInstabilityError, accuracy_problem
from wave_lattice.grid import density_values, field_l2_distance, interpolate, phase_aligned_distance, potential_values
from wave_lattice.models import Grid, PotentialSpec, ScalarField, WaveFunction

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS = QtmSettings()


# ---------------------------------------------------------------------------
# Density estimation
# ---------------------------------------------------------------------------

def bandwidth_rule(points: np.ndarray, scale: float = 1.0) -> float:
    """scale * sigma_hat * n^(-1/(D+4)), sigma_hat the root mean per-axis variance"""
    points = np.atleast_2d(points)
    n, D = points.shape
    sigma = math.sqrt(float(np.mean(np.var(points, axis=0))))
    return scale * sigma * n ** (-1.0 / (D + 4))


def _bandwidth(points: np.ndarray, grid: Grid, settings: QtmSettings) -> float:
    if settings.fixed_bandwidth is not None:
        return settings.fixed_bandwidth
    floor = 0.2501 * float(np.max(grid.spacing))
    return max(bandwidth_rule(points, settings.bandwidth_scale), floor)


def _variance_preserving(points: np.ndarray, bandwidth: float, grid: Grid) -> np.ndarray:
    """Shrink towards the mean so that points + kernel + cloud-in-cell keep the ensemble variance"""
    mean = points.mean(axis=0)
    variance = points.var(axis=0)
    added = bandwidth ** 2 + grid.spacing ** 2 / 6.0
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.sqrt(np.clip(1.0 - added / variance, 0.0, 1.0))
    shrink = np.where(variance > 0, shrink, 1.0)
    return mean + shrink * (points - mean)


def estimate_density(
    points: np.ndarray,
    bandwidth: float,
    grid: Grid,
    variance_correction: bool = False,
) -> ScalarField:
    """
    Gaussian kernel density estimate of an ensemble on the grid.

    Args:
        points: Ensemble positions, shape (n, D)
        bandwidth: Kernel standard deviation (> 0)
        grid: Evaluation grid
        variance_correction: Shrink the ensemble so the estimate keeps its variance

    Returns:
        Strictly positive ScalarField integrating to 1
    """
    if not bandwidth > 0:
        raise DomainError(f"bandwidth must be positive, got {bandwidth}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if variance_correction and len(points) > 1:
        points = _variance_preserving(points, bandwidth, grid)

    periodic = grid.boundary == "periodic"
    pad = 0 if periodic else int(math.ceil(5.0 * bandwidth / float(np.min(grid.spacing)))) + 2
    shape = tuple(n + 2 * pad for n in grid.shape)

    position = (grid.wrap(points) - grid.lower) / grid.spacing + pad
    base = np.floor(position).astype(np.int64)
    fraction = position - base
    counts = np.zeros(int(np.prod(shape)))
    for corner in np.ndindex(*(2,) * grid.dimension):
        offset = np.array(corner)
        weight = np.prod(np.where(offset == 1, fraction, 1.0 - fraction), axis=1)
        index = base + offset
        if periodic:
            index = np.mod(index, shape)
        else:
            index = np.clip(index, 0, np.array(shape) - 1)
        np.add.at(counts, np.ravel_multi_index(tuple(index.T), shape), weight)
    counts = counts.reshape(shape)

    kernel = np.ones(shape)
    for axis in range(grid.dimension):
        k = 2.0 * np.pi * np.fft.fftfreq(shape[axis], d=grid.spacing[axis])
        view = [1] * grid.dimension
        view[axis] = -1
        kernel = kernel * np.exp(-0.5 * (bandwidth * k) ** 2).reshape(view)
    smoothed = sp_fft.ifftn(sp_fft.fftn(counts) * kernel).real
    if pad:
        smoothed = smoothed[tuple(slice(pad, pad + n) for n in grid.shape)]

    smoothed = np.maximum(smoothed, 1e-15 * float(smoothed.max()))
    smoothed /= smoothed.sum() * grid.cell_volume
    return ScalarField(grid, smoothed)


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

def qtm_init(
    psi0: WaveFunction,
    n: int,
    seed: int,
    settings: Optional[QtmSettings] = None,
) -> QtmState:
    """Sample n points from |psi0|^2 and give each its guidance velocity"""
    if n < 100:
        raise DomainError(f"QTM ensembles need n >= 100, got {n}")
    settings = settings or DEFAULT_SETTINGS
    points = sample_initial(psi0, n, seed)
    velocities, _ = evaluate_velocity(build_probe(psi0), points)
    return QtmState(
        psi0.grid, points, velocities, 0.0,
        _bandwidth(points, psi0.grid, settings), psi0.masses, psi0.hbar,
    )


def ensemble_forces(
    state: QtmState,
    potential: PotentialSpec,
    settings: Optional[QtmSettings] = None,
    step: Optional[int] = None,
) -> np.ndarray:
    """
    -grad(V + V_qu[rho_hat]) at every ensemble point.

    Points whose stencil touches the low-density mask feel -grad V only.
    A force above settings.force_cap at more than force_cap_fraction of the
    points raises NumericalInstabilityError.
    """
    settings = settings or DEFAULT_SETTINGS
    grid = state.grid
    rho = np.asarray(estimate_density(state.points, state.bandwidth, grid, settings.variance_correction).values)
    V_qu, mask = quantum_potential_values(rho, grid, state.axis_masses, state.hbar, settings.node_epsilon)
    V = potential_values(potential, grid, state.masses)
    quantum = interpolate(-potential_gradient(V + V_qu, grid), grid, state.points).T
    classical = interpolate(-potential_gradient(V, grid), grid, state.points).T
    valid = interpolate(erode(mask, grid).astype(float), grid, state.points) >= 1.0 - 1e-12
    forces = np.where(valid[:, np.newaxis], quantum, classical)

    magnitude = np.linalg.norm(forces, axis=1)
    offending = magnitude > settings.force_cap
    if np.mean(offending) > settings.force_cap_fraction:
        region = state.points[offending]
        raise NumericalInstabilityError(
            f"force above {settings.force_cap:g} at {int(offending.sum())} points in "
            f"[{region.min(axis=0)}, {region.max(axis=0)}] at t={state.time:.6g}",
            module="lagrangian-qtm",
            step=step,
        )
    return forces


def qtm_step(
    state: QtmState,
    potential: PotentialSpec,
    dt: float,
    settings: Optional[QtmSettings] = None,
    step: Optional[int] = None,
) -> QtmState:
    """One velocity-Verlet step of the whole ensemble"""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    settings = settings or DEFAULT_SETTINGS
    masses = state.axis_masses
    forces = state.forces if state.forces is not None else ensemble_forces(state, potential, settings, step)
    half = state.velocities + 0.5 * dt * forces / masses
    points = state.points + dt * half
    moved = QtmState(
        state.grid, points, half, state.time + dt,
        _bandwidth(points, state.grid, settings), state.masses, state.hbar,
    )
    new_forces = ensemble_forces(moved, potential, settings, step)
    moved.velocities = half + 0.5 * dt * new_forces / masses
    moved.forces = new_forces
    return moved


def qtm_run(
    psi0: WaveFunction,
    potential: PotentialSpec,
    n: int,
    T: float,
    dt: float,
    seed: int,
    snapshot_stride: Optional[int] = None,
    settings: Optional[QtmSettings] = None,
    progress: bool = False,
) -> Tuple[List[QtmState], List[ReconstructedWave]]:
    """
    Run the ensemble to time T and reconstruct psi at every snapshot.

    Args:
        psi0: Initial wave function (its grid is the evaluation grid)
        potential: External potential
        n: Ensemble size (>= 100)
        T: Final time; must be a whole number of steps
        dt: Verlet step
        seed: Sampling seed
        snapshot_stride: Steps between snapshots (default: initial and final only)
        settings: QTM tuning
        progress: Show a tqdm progress bar

    Returns:
        (states, reconstructions) at the snapshot times, initial state included
    """
    settings = settings or DEFAULT_SETTINGS
    state = qtm_init(psi0, n, seed, settings)
    states = [state]
    if T > 0:
        steps = int(round(T / dt))
        if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
            raise ConfigurationError(f"dt={dt} does not divide T={T}")
        stride = snapshot_stride or steps
        for i in tqdm(range(1, steps + 1), desc="qtm", disable=not progress):
            state = qtm_step(state, potential, dt, settings, step=i)
            if i % stride == 0 or i == steps:
                states.append(state)
    reconstructions = [reconstruct_wavefunction(s, settings=settings) for s in states]
    return states, reconstructions


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------

def scatter_velocities(state: QtmState, grid: Grid, settings: Optional[QtmSettings] = None) -> np.ndarray:
    """Inverse-distance weighted velocities on the grid from the k nearest points, shape (D, *grid.shape)"""
    settings = settings or DEFAULT_SETTINGS
    k = min(settings.neighbors, len(state.points))
    if grid.boundary == "periodic":
        extent = np.array(grid.axis_extent)
        shift = lambda q: np.mod(q - grid.lower, extent)
        tree = cKDTree(shift(state.points), boxsize=extent)
    else:
        shift = lambda q: q - grid.lower
        tree = cKDTree(shift(state.points))
    targets = np.stack([c.ravel() for c in grid.coordinates()], axis=1)
    distance, index = tree.query(shift(targets), k=k)
    distance = distance.reshape(len(targets), k)
    index = index.reshape(len(targets), k)
    weights = 1.0 / np.maximum(distance, 1e-300) ** settings.idw_power
    exact = distance[:, 0] < 1e-12
    weights[exact] = 0.0
    weights[exact, 0] = 1.0
    velocity = np.einsum("mk,mkd->md", weights, state.velocities[index]) / weights.sum(axis=1)[:, np.newaxis]
    return velocity.T.reshape((grid.dimension,) + grid.shape)


def _neighbours(index: Tuple[int, ...], grid: Grid) -> Iterable[Tuple[Tuple[int, ...], int, int]]:
    for axis in range(grid.dimension):
        for sign in (1, -1):
            j = list(index)
            j[axis] += sign
            if grid.boundary == "periodic":
                j[axis] %= grid.shape[axis]
            elif not 0 <= j[axis] < grid.shape[axis]:
                continue
            yield tuple(j), axis, sign


def _integrate_phase(
    velocity: np.ndarray,
    mask: np.ndarray,
    root: Tuple[int, ...],
    grid: Grid,
    axis_masses: np.ndarray,
    phase: np.ndarray,
    visited: np.ndarray,
) -> List[Tuple[int, ...]]:
    """Breadth-first line integral of m v over the connected part of mask containing root"""
    phase[root] = 0.0
    visited[root] = True
    queue = deque([root])
    reached = [root]
    while queue:
        current = queue.popleft()
        for neighbour, axis, sign in _neighbours(current, grid):
            if visited[neighbour] or not mask[neighbour]:
                continue
            mean_velocity = 0.5 * (velocity[(axis,) + current] + velocity[(axis,) + neighbour])
            phase[neighbour] = phase[current] + axis_masses[axis] * mean_velocity * sign * grid.spacing[axis]
            visited[neighbour] = True
            queue.append(neighbour)
            reached.append(neighbour)
    return reached


def reconstruct_wavefunction(
    state: QtmState,
    grid: Optional[Grid] = None,
    gauge_anchor: Optional[Sequence[int]] = None,
    settings: Optional[QtmSettings] = None,
    strict: Optional[bool] = None,
) -> ReconstructedWave:
    """
    Recover psi_hat = sqrt(rho_hat) exp(iS/hbar) from an ensemble.

    Args:
        state: QTM state
        grid: Reconstruction grid (default: the state's grid)
        gauge_anchor: Lattice index with S = 0 (default: densest point)
        settings: QTM tuning (node threshold, neighbours, variance correction)
        strict: Raise instead of warn when the phase splits into components

    Returns:
        ReconstructedWave; disconnected regions get their own anchors (with an accuracy warning)
    """
    settings = settings or DEFAULT_SETTINGS
    grid = grid or state.grid
    rho = np.asarray(estimate_density(state.points, state.bandwidth, grid, settings.variance_correction).values)
    mask = rho > settings.node_epsilon * rho.max()
    anchor = tuple(int(i) for i in (gauge_anchor if gauge_anchor is not None else np.unravel_index(np.argmax(rho), grid.shape)))
    if not mask[anchor]:
        raise DomainError(f"gauge anchor {anchor} lies in the low-density mask")

    velocity = scatter_velocities(state, grid, settings)
    axis_masses = np.repeat(np.array(state.masses), grid.dims_per_particle)
    phase = np.zeros(grid.shape)
    visited = np.zeros(grid.shape, dtype=bool)

    # Each component is integrated from its densest point so that moving the
    # anchor only shifts S by a constant.
    anchors = [anchor]
    while True:
        remaining = mask & ~visited
        if not remaining.any():
            break
        candidates = np.where(remaining, rho, -np.inf)
        root = tuple(int(i) for i in np.unravel_index(np.argmax(candidates), grid.shape))
        reached = _integrate_phase(velocity, mask, root, grid, axis_masses, phase, visited)
        members = tuple(np.array(reached).T)
        if anchor in set(reached):
            phase[members] -= phase[anchor]
        else:
            anchors.append(root)
    if len(anchors) > 1:
        accuracy_problem(
            f"phase reconstruction split into {len(anchors)} components; extra anchors {anchors[1:]}", strict
        )

    return ReconstructedWave(
        grid,
        ScalarField(grid, np.sqrt(rho)),
        ScalarField(grid, np.where(visited, phase, 0.0), visited),
        anchor,
        anchors,
        state.hbar,
    )


# ---------------------------------------------------------------------------
# Comparisons
# ---------------------------------------------------------------------------

def modulus_error(reconstruction: ReconstructedWave, psi: WaveFunction) -> float:
    """L2 distance between sqrt(rho_hat) and |psi|"""
    return field_l2_distance(reconstruction.modulus.values, np.sqrt(density_values(psi.amplitudes)), psi.grid)


def aligned_error(reconstruction: ReconstructedWave, psi: WaveFunction) -> float:
    """min over a global phase of ||psi_hat e^{i theta} - psi||"""
    return phase_aligned_distance(reconstruction.wavefunction(psi.masses), psi)


def guidance_endpoint_error(
    initial: QtmState,
    final: QtmState,
    record: EvolutionRecord,
    dt_traj: float,
) -> float:
    """RMS distance at the final time between QTM points and guidance trajectories from the same starts"""
    ensemble = propagate_ensemble(record, initial.points, dt_traj)
    endpoints = ensemble.positions_at(final.time)
    return float(np.sqrt(np.mean(np.sum((final.points - endpoints) ** 2, axis=1))))


def refinement_lattice(
    psi0: WaveFunction,
    potential: PotentialSpec,
    record: EvolutionRecord,
    T: float,
    base_dt: float,
    seed: int,
    sizes: Sequence[int] = (1000, 4000, 16000),
    dt_factors: Sequence[float] = (2.0, 1.0, 0.5),
    dt_traj: Optional[float] = None,
    settings: Optional[QtmSettings] = None,
) -> List[dict]:
    """Endpoint error against guidance trajectories over an (n, dt) lattice"""
    rows = []
    for n in sizes:
        for factor in dt_factors:
            dt = base_dt * factor
            initial = qtm_init(psi0, n, seed, settings)
            state = initial
            steps = int(round(T / dt))
            for i in range(1, steps + 1):
                state = qtm_step(state, potential, dt, settings, step=i)
            error = guidance_endpoint_error(initial, state, record, dt_traj or min(dt, record.dt))
            logger.info("refinement n=%d dt=%g error=%.4e", n, dt, error)
            rows.append({"n": int(n), "dt": float(dt), "error": error})
    return rows


def refinement_is_monotone(rows: Sequence[dict], slack: float = 0.05) -> bool:
    """
    Error strictly decreases with n at every dt, and does not grow (beyond
    slack, relative) when dt is refined at fixed n.
    """
    sizes = sorted({r["n"] for r in rows})
    steps = sorted({r["dt"] for r in rows}, reverse=True)
    table = {(r["n"], r["dt"]): r["error"] for r in rows}
    for dt in steps:
        errors = [table[(n, dt)] for n in sizes]
        if any(b >= a for a, b in zip(errors, errors[1:])):
            return False
    for n in sizes:
        errors = [table[(n, dt)] for dt in steps]
        if any(b > a * (1.0 + slack) for a, b in zip(errors, errors[1:])):
            return False
    return True
