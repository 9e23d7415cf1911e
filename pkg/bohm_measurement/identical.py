"""
Identical particles: (anti)symmetrization, exchange symmetry of the guidance
field, permutation equivariance of the flow and the unordered configuration
view.

Exchanging particles i and j on the grid is an exact axis transposition, so
both particles must share points and extents on every one of their axes.
"""

import itertools
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from bohm_dynamics.guidance import DEFAULT_NODE_EPSILON, velocity_field
from bohm_dynamics.models import Ensemble, EvolutionRecord, Interpolation
from bohm_dynamics.trajectories import propagate_ensemble
from bohm_measurement.models import ExchangeReport
from wave_lattice.errors import DegenerateInputError, DomainError
from wave_lattice.grid import norm
from wave_lattice.models import Grid, WaveFunction

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]


def _check_identical(psi: WaveFunction, particles: Sequence[int]) -> None:
    grid = psi.grid
    if grid.particle_count < 2:
        raise DomainError("exchange needs at least two particles")
    if any(not 0 <= k < grid.particle_count for k in particles):
        raise DomainError(f"particles {particles} out of range")
    if len({psi.masses[k] for k in particles}) > 1:
        raise DomainError("exchanged particles must have equal masses")
    layouts = {
        tuple((grid.points_per_axis[a], grid.axis_extent[a]) for a in grid.particle_axes(k))
        for k in particles
    }
    if len(layouts) > 1:
        raise DomainError("exchanged particles must share their grid axes")


def _swap_order(grid: Grid, permutation: Sequence[int]) -> List[int]:
    """Configuration-axis order that moves particle permutation[k]'s block into slot k"""
    return [a for k in permutation for a in grid.particle_axes(k)]


def permute_particles(psi: WaveFunction, permutation: Sequence[int]) -> WaveFunction:
    """Relabel particles: particle permutation[k] moves to slot k, spin indices included"""
    grid = psi.grid
    N = grid.particle_count
    permutation = list(permutation)
    if sorted(permutation) != list(range(N)):
        raise DomainError(f"{permutation} is not a permutation of {N} particles")
    spatial = [1 + a for a in _swap_order(grid, permutation)]
    values = np.asarray(psi.amplitudes)
    if psi.is_spinor and N > 1:
        spins = values.reshape((2,) * N + grid.shape)
        moved = np.transpose(spins, permutation + [N - 1 + a for a in spatial])
        return psi.with_amplitudes(moved.reshape(values.shape))
    return psi.with_amplitudes(np.transpose(values, [0] + spatial))


def _transposition(grid: Grid, pair: Pair) -> List[int]:
    permutation = list(range(grid.particle_count))
    permutation[pair[0]], permutation[pair[1]] = pair[1], pair[0]
    return permutation


def swap_particles(psi: WaveFunction, pair: Pair = (0, 1)) -> WaveFunction:
    return permute_particles(psi, _transposition(psi.grid, pair))


def _parity(permutation: Sequence[int]) -> int:
    inversions = sum(1 for a, b in itertools.combinations(permutation, 2) if a > b)
    return -1 if inversions % 2 else 1


def symmetrize(psi: WaveFunction, sign: int, pair: Optional[Pair] = (0, 1)) -> WaveFunction:
    """
    Bosonic (sign=+1) or fermionic (sign=-1) projection, renormalized.

    Args:
        psi: N >= 2 particle wave function
        sign: +1 or -1
        pair: Particle pair to (anti)symmetrize; None uses the full permutation group

    Raises:
        DegenerateInputError: the projection vanishes (antisymmetrizing a symmetric state)
    """
    if sign not in (1, -1):
        raise DomainError(f"sign must be +1 or -1, got {sign}")
    N = psi.grid.particle_count
    particles = range(N) if pair is None else pair
    _check_identical(psi, list(particles))
    if pair is None:
        permutations = list(itertools.permutations(range(N)))
    else:
        permutations = [list(range(N)), _transposition(psi.grid, pair)]

    total = np.zeros_like(np.asarray(psi.amplitudes))
    for permutation in permutations:
        weight = _parity(permutation) if sign < 0 else 1
        total = total + weight * np.asarray(permute_particles(psi, permutation).amplitudes)
    projected = psi.with_amplitudes(total)
    size = norm(projected)
    if size <= 1e-12 * norm(psi):
        raise DegenerateInputError("the (anti)symmetrized state has zero norm")
    return psi.with_amplitudes(total / size)


def _swap_vector_field(values: np.ndarray, grid: Grid, pair: Pair) -> np.ndarray:
    """w_a(q) = v_{s(a)}(swap q), with s exchanging the component blocks of the pair"""
    order = _swap_order(grid, _transposition(grid, pair))
    moved = np.transpose(values, [0] + [1 + a for a in order])
    return moved[order]


def _wave_violation(psi: WaveFunction, pair: Pair) -> Tuple[str, float]:
    values = np.asarray(psi.amplitudes)
    swapped = np.asarray(swap_particles(psi, pair).amplitudes)
    scale = float(np.max(np.abs(values)))
    bosonic = float(np.max(np.abs(swapped - values))) / scale
    fermionic = float(np.max(np.abs(swapped + values))) / scale
    return ("bosonic", bosonic) if bosonic <= fermionic else ("fermionic", fermionic)


def velocity_exchange_check(
    psi: WaveFunction,
    pair: Pair = (0, 1),
    node_epsilon: float = DEFAULT_NODE_EPSILON,
) -> ExchangeReport:
    """
    Largest |v(q) - S v(swap q)| over points unmasked at q and at swap q.

    S exchanges the velocity components of the pair and leaves the others;
    the wave violation is max |psi(swap q) -/+ psi(q)| / max |psi| for the
    closer symmetry type.
    """
    _check_identical(psi, pair)
    symmetry, wave = _wave_violation(psi, pair)
    field = velocity_field(psi, node_epsilon)
    values = np.asarray(field.values)
    swapped = _swap_vector_field(values, psi.grid, pair)
    valid = field.valid & np.transpose(field.valid, _swap_order(psi.grid, _transposition(psi.grid, pair)))
    difference = np.max(np.abs(swapped - values), axis=0)
    velocity = float(np.max(difference[valid])) if np.any(valid) else 0.0
    return ExchangeReport(symmetry=symmetry, max_wave_violation=wave, max_velocity_violation=velocity)


def swap_points(points: np.ndarray, grid: Grid, pair: Pair = (0, 1)) -> np.ndarray:
    """Exchange the coordinate blocks of the pair in configurations (..., D)"""
    return np.asarray(points)[..., _swap_order(grid, _transposition(grid, pair))]


def flow_equivariance_check(
    record: EvolutionRecord,
    q0,
    pair: Pair = (0, 1),
    dt_traj: Optional[float] = None,
    interpolation: Interpolation = "trilinear",
) -> float:
    """max_t |Q_{swap q0}(t) - swap(Q_{q0}(t))| from a twin run"""
    grid = record.grid
    q0 = np.atleast_2d(np.asarray(q0, dtype=float))
    starts = np.concatenate([q0, swap_points(q0, grid, pair)])
    step = dt_traj or record.dt
    ensemble = propagate_ensemble(record, starts, step, interpolation, output="steps")
    n = len(q0)
    direct, twin = ensemble.points[:n], ensemble.points[n:]
    return float(np.max(np.linalg.norm(twin - swap_points(direct, grid, pair), axis=-1)))


def exchange_report(
    record: EvolutionRecord,
    starts,
    pair: Pair = (0, 1),
    dt_traj: Optional[float] = None,
    node_epsilon: float = DEFAULT_NODE_EPSILON,
) -> ExchangeReport:
    """Wave and velocity violations over every snapshot plus the flow violation from starts"""
    reports = [velocity_exchange_check(psi, pair, node_epsilon) for psi in record.snapshots]
    flow = flow_equivariance_check(record, starts, pair, dt_traj)
    worst = max(reports, key=lambda r: r.max_wave_violation)
    return ExchangeReport(
        symmetry=worst.symmetry,
        max_wave_violation=worst.max_wave_violation,
        max_velocity_violation=max(r.max_velocity_violation for r in reports),
        max_flow_violation=flow,
    )


def minimum_separation(ensemble: Ensemble, grid: Grid, pair: Pair = (0, 1)) -> float:
    """Smallest distance between the two particles over every trajectory and time"""
    i, j = pair
    separation = ensemble.points[..., list(grid.particle_axes(i))] - ensemble.points[..., list(grid.particle_axes(j))]
    if grid.boundary == "periodic":
        extent = np.array([grid.axis_extent[a] for a in grid.particle_axes(i)])
        separation = separation - extent * np.round(separation / extent)
    return float(np.min(np.linalg.norm(separation, axis=-1)))


# ---------------------------------------------------------------------------
# Unordered configurations
# ---------------------------------------------------------------------------

def unordered_view(configuration, dims_per_particle: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Canonical representative of an unordered configuration: particle blocks in
    lexicographic order (stable, so coincident blocks keep a defined order).

    Args:
        configuration: (D,) or (n, D) with D a multiple of dims_per_particle
        dims_per_particle: d

    Returns:
        (canonical configuration, coincidence flag), shaped like the input
        without the last axis for the flag
    """
    q = np.asarray(configuration, dtype=float)
    single = q.ndim == 1
    rows = np.atleast_2d(q)
    if rows.shape[1] % dims_per_particle:
        raise DomainError("configuration length is not a multiple of dims_per_particle")
    blocks = rows.reshape(len(rows), -1, dims_per_particle)
    canonical = np.empty_like(blocks)
    coincident = np.zeros(len(rows), dtype=bool)
    for r, particles in enumerate(blocks):
        order = sorted(range(len(particles)), key=lambda k: tuple(particles[k]))
        canonical[r] = particles[order]
        coincident[r] = bool(np.any(np.all(np.diff(canonical[r], axis=0) == 0.0, axis=1)))
    canonical = canonical.reshape(rows.shape)
    if single:
        return canonical[0], coincident[0]
    return canonical, coincident


def unordered_flow_deviation(
    record: EvolutionRecord,
    q0,
    dt_traj: Optional[float] = None,
    interpolation: Interpolation = "trilinear",
) -> float:
    """
    Start from every ordering of the particle blocks of q0 and compare the
    canonical trajectories: max over lifts and times of the distance to the
    canonical trajectory of q0 itself.
    """
    grid = record.grid
    q0 = np.asarray(q0, dtype=float)
    N = grid.particle_count
    lifts = np.stack([q0[_swap_order(grid, p)] for p in itertools.permutations(range(N))])
    ensemble = propagate_ensemble(record, lifts, dt_traj or record.dt, interpolation, output="steps")
    d = grid.dims_per_particle
    canonical, _ = unordered_view(ensemble.points.reshape(-1, grid.dimension), d)
    canonical = canonical.reshape(ensemble.points.shape)
    return float(np.max(np.linalg.norm(canonical - canonical[0], axis=-1)))
