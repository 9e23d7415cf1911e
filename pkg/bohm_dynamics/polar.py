"""
Polar form psi = R exp(iS/hbar).

S is unwrapped by a breadth-first flood fill from an anchor. Wherever the
continued phase disagrees with the stored one across a lattice edge, the
difference is recorded as a branch jump in units of 2*pi*hbar. Winding numbers
come from loop integrals of grad S = hbar Im(grad psi / psi), which is free of
cuts. The real equations for R and S are only checked as residuals between
snapshots, never integrated.
"""

import logging
from collections import deque
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from bohm_dynamics.guidance import DEFAULT_NODE_EPSILON, probability_current
from bohm_dynamics.models import BranchJump, PhaseField, PhaseResiduals, WindingResult
from wave_lattice.dump import save_scalar_field, save_vector_field
from wave_lattice.errors import DegenerateInputError, DomainError, InconsistentPhaseError
from wave_lattice.grid import density_values, derivative, potential_values
from wave_lattice.models import Grid, PotentialSpec, ScalarField, VectorField, WaveFunction

logger = logging.getLogger(__name__)

JUMP_TOLERANCE = 1e-6
WINDING_TOLERANCE = 0.05
MAX_MASKED_FRACTION = 0.5


def _scalar(psi: WaveFunction) -> np.ndarray:
    if psi.components != 1:
        raise DomainError("polar decomposition needs a scalar wave function")
    return np.asarray(psi.amplitudes[0])


def _edges(index: Tuple[int, ...], grid: Grid):
    for axis in range(grid.dimension):
        for sign in (1, -1):
            j = list(index)
            j[axis] += sign
            if grid.boundary == "periodic":
                j[axis] %= grid.shape[axis]
            elif not 0 <= j[axis] < grid.shape[axis]:
                continue
            yield tuple(j)


def _flood_fill(values: np.ndarray, mask: np.ndarray, root: Tuple[int, ...], grid: Grid,
                hbar: float, S: np.ndarray, visited: np.ndarray) -> None:
    S[root] = hbar * np.angle(values[root])
    visited[root] = True
    queue = deque([root])
    while queue:
        current = queue.popleft()
        for neighbour in _edges(current, grid):
            if visited[neighbour] or not mask[neighbour]:
                continue
            S[neighbour] = S[current] + hbar * np.angle(values[neighbour] * np.conj(values[current]))
            visited[neighbour] = True
            queue.append(neighbour)


def _branch_jumps(values: np.ndarray, S: np.ndarray, valid: np.ndarray, grid: Grid, hbar: float) -> List[BranchJump]:
    """Edges where continuing S across disagrees with the stored S"""
    jumps = []
    period = 2.0 * np.pi * hbar
    for axis in range(grid.dimension):
        ahead = lambda a: np.roll(a, -1, axis=axis)
        both = valid & ahead(valid)
        if grid.boundary != "periodic":
            edge = [slice(None)] * grid.dimension
            edge[axis] = -1
            both[tuple(edge)] = False
        wrapped = hbar * np.angle(ahead(values) * np.conj(values))
        raw = (S + wrapped - ahead(S)) / period
        multiple = np.rint(raw)
        for index in zip(*np.nonzero(both & (multiple != 0))):
            jumps.append(BranchJump(
                tuple(int(i) for i in index), axis, int(multiple[index]),
                float(abs(raw[index] - multiple[index])),
            ))
    return jumps


def phase_gradient(psi: WaveFunction, valid: np.ndarray) -> VectorField:
    """grad S = hbar Im(conj(psi) grad psi) / |psi|^2 on the valid set, zero elsewhere"""
    values = _scalar(psi)
    rho = np.abs(values) ** 2
    gradient = np.zeros((psi.grid.dimension,) + psi.grid.shape)
    for axis in range(psi.grid.dimension):
        flux = np.imag(np.conj(values) * derivative(values, psi.grid, axis))
        gradient[axis][valid] = psi.hbar * flux[valid] / rho[valid]
    return VectorField(psi.grid, gradient, valid)


def polar_decompose(
    psi: WaveFunction,
    anchor: Optional[Sequence[int]] = None,
    node_epsilon: float = DEFAULT_NODE_EPSILON,
) -> Tuple[ScalarField, PhaseField]:
    """
    Split psi into R = |psi| and an unwrapped phase S.

    Args:
        psi: Scalar wave function
        anchor: Lattice index where the fill starts (default: densest point);
            S(anchor) = hbar * arg psi(anchor)
        node_epsilon: S is undefined where density <= node_epsilon * max density

    Returns:
        (R, PhaseField); regions not connected to the anchor are filled from
        their own densest point

    Raises:
        DomainError: anchor lies in the masked set
    """
    values = _scalar(psi)
    grid = psi.grid
    rho = np.abs(values) ** 2
    mask = rho > node_epsilon * float(rho.max())
    if anchor is None:
        anchor = np.unravel_index(np.argmax(rho), grid.shape)
    anchor = tuple(int(i) for i in anchor)
    if not mask[anchor]:
        raise DomainError(f"anchor {anchor} lies in the masked region")

    S = np.zeros(grid.shape)
    visited = np.zeros(grid.shape, dtype=bool)
    _flood_fill(values, mask, anchor, grid, psi.hbar, S, visited)
    regions = 1
    while np.any(mask & ~visited):
        root = np.unravel_index(np.argmax(np.where(mask & ~visited, rho, -np.inf)), grid.shape)
        _flood_fill(values, mask, tuple(int(i) for i in root), grid, psi.hbar, S, visited)
        regions += 1
    if regions > 1:
        logger.debug("phase unwrapped over %d disconnected regions", regions)

    jumps = _branch_jumps(values, S, visited, grid, psi.hbar)
    off_lattice = [j for j in jumps if j.residue > JUMP_TOLERANCE]
    if off_lattice:
        logger.warning("%d branch jumps are not integer multiples of 2*pi*hbar", len(off_lattice))

    R = ScalarField(grid, np.abs(values))
    phase = PhaseField(grid, ScalarField(grid, S, visited), phase_gradient(psi, visited), jumps, psi.hbar)
    return R, phase


def recompose(R: ScalarField, phase: PhaseField) -> np.ndarray:
    """R exp(iS/hbar) on the valid set, zero elsewhere"""
    valid = phase.S.valid
    return np.where(valid, R.values * np.exp(1j * np.asarray(phase.S.values) / phase.hbar), 0.0)


def save_phase_field(path: Union[str, Path], phase: PhaseField) -> Path:
    """S as a grid dump whose sidecar carries the jump ledger; grad S alongside"""
    path = Path(path)
    save_vector_field(path.with_name(path.stem + "_gradient.bin"), phase.gradient, {"hbar": phase.hbar})
    return save_scalar_field(path, phase.S, {"hbar": phase.hbar, "branch_jumps": phase.ledger()})


# ---------------------------------------------------------------------------
# Winding
# ---------------------------------------------------------------------------

def axis_loop(grid: Grid, axis: int, through: Optional[Sequence[int]] = None) -> np.ndarray:
    """Lattice indices (L, D) of the closed cycle along a periodic axis"""
    if grid.boundary != "periodic":
        raise DomainError("grid cycles exist only on periodic grids")
    if not 0 <= axis < grid.dimension:
        raise DomainError(f"axis {axis} out of range for dimension {grid.dimension}")
    base = np.array(through if through is not None else [n // 2 for n in grid.shape], dtype=np.int64)
    loop = np.tile(base, (grid.shape[axis], 1))
    loop[:, axis] = np.arange(grid.shape[axis])
    return loop


def winding_number(phase: PhaseField, loop) -> WindingResult:
    """
    (1/2 pi hbar) * closed line integral of grad S along loop, rounded.

    The loop is a sequence of lattice indices; the last point connects back to
    the first. Segments use the trapezoid rule and minimal-image displacements.

    Raises:
        DomainError: the loop touches a masked cell
        InconsistentPhaseError: rounding residue above 0.05
    """
    grid = phase.grid
    loop = np.asarray(loop, dtype=np.int64)
    if loop.ndim != 2 or loop.shape[1] != grid.dimension or len(loop) < 2:
        raise DomainError("loop must be an (L, D) array of lattice indices with L >= 2")
    cells = tuple(loop.T)
    if not np.all(phase.gradient.valid[cells]):
        raise DomainError("loop passes through masked cells")

    gradient = np.stack([np.asarray(phase.gradient.values[a])[cells] for a in range(grid.dimension)], axis=1)
    following = np.roll(np.arange(len(loop)), -1)
    step = grid.minimal_image(grid.index_to_coordinate(loop[following]) - grid.index_to_coordinate(loop))
    integral = float(np.sum(0.5 * (gradient + gradient[following]) * step))
    turns = integral / (2.0 * np.pi * phase.hbar)
    number = int(round(turns))
    residue = abs(turns - number)
    if residue > WINDING_TOLERANCE:
        raise InconsistentPhaseError(f"loop integral gives {turns:.4f} turns (residue {residue:.3f})")
    return WindingResult(number, residue)


# ---------------------------------------------------------------------------
# Residuals of the real equations
# ---------------------------------------------------------------------------

def _hj_spatial(psi: WaveFunction, R: np.ndarray, grad_S: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """sum_a hbar^2/(2 m_a) d_a^2 R / R - (d_a S)^2 / (2 m_a) on the mask"""
    grid = psi.grid
    total = np.zeros(grid.shape)
    for axis in range(grid.dimension):
        m = psi.axis_masses[axis]
        curvature = derivative(R, grid, axis, order=2)
        term = psi.hbar ** 2 / (2.0 * m) * np.where(mask, curvature / np.where(mask, R, 1.0), 0.0)
        total += term - grad_S[axis] ** 2 / (2.0 * m)
    return total


def hamilton_jacobi_residuals(
    previous: WaveFunction,
    current: WaveFunction,
    potential: PotentialSpec,
    dt: float,
    node_epsilon: float = DEFAULT_NODE_EPSILON,
) -> PhaseResiduals:
    """
    L1 residuals of the continuity and Hamilton-Jacobi equations between two
    snapshots dt apart.

    Time derivatives are forward differences (dS/dt from the phase of
    psi_b conj(psi_a), so branch cuts never enter); spatial terms are averaged
    over both snapshots. Only points unmasked in both snapshots count.

    Raises:
        DegenerateInputError: the shared mask covers more than half the grid
    """
    if previous.grid != current.grid:
        raise DomainError("snapshots must share a grid")
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    a, b = _scalar(previous), _scalar(current)
    grid = current.grid
    rho_a, rho_b = density_values(previous.amplitudes), density_values(current.amplitudes)
    mask = (rho_a > node_epsilon * rho_a.max()) & (rho_b > node_epsilon * rho_b.max())
    masked_fraction = 1.0 - float(np.mean(mask))
    if masked_fraction > MAX_MASKED_FRACTION:
        raise DegenerateInputError(f"node mask covers {masked_fraction:.0%} of the grid")

    divergence = np.zeros(grid.shape)
    spatial = np.zeros(grid.shape)
    for psi, rho in ((previous, rho_a), (current, rho_b)):
        j = np.asarray(probability_current(psi).values)
        for axis in range(grid.dimension):
            divergence += 0.5 * derivative(j[axis], grid, axis)
        grad_S = np.asarray(phase_gradient(psi, mask).values)
        spatial += 0.5 * _hj_spatial(psi, np.sqrt(rho), grad_S, mask)

    continuity = (rho_b - rho_a) / dt + divergence
    S_rate = current.hbar * np.angle(b * np.conj(a)) / dt
    V = potential_values(potential, grid, current.masses)
    hj = S_rate - spatial + V

    volume = grid.cell_volume
    return PhaseResiduals(
        float(np.sum(np.abs(continuity[mask])) * volume),
        float(np.sum(np.abs(hj[mask])) * volume),
        masked_fraction,
    )
