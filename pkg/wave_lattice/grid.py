"""
Constructors and elementary operations on gridded wave functions.

Covers grid construction, standard initial data (Gaussian packets, plane
waves, ring states), scalar products, densities, potentials, and the
derivative/interpolation kernels that the guidance, quantum-potential and
polar modules share.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy import ndimage

from wave_lattice.errors import ConfigurationError, DomainError, accuracy_problem
from wave_lattice.models import Grid, PotentialSpec, ScalarField, WaveFunction

logger = logging.getLogger(__name__)

MAX_GRID_DIMENSION = 3
TAIL_MASS_LIMIT = 1e-8


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def make_grid(
    d: int,
    N: int,
    points: Sequence[int],
    extents: Sequence[float],
    boundary: str = "periodic",
    spectral: bool = True,
) -> Grid:
    """
    Build and validate a Grid.

    Args:
        d: Dimensions per particle
        N: Number of particles
        points: Lattice points per axis (length d*N)
        extents: Axis lengths (length d*N)
        boundary: "periodic" or "box"
        spectral: Require power-of-two axes (split-step stepping)

    Returns:
        Validated Grid

    Example:
        >>> make_grid(1, 1, [256], [40.0]).spacing
        array([0.15625])
    """
    if d * N > MAX_GRID_DIMENSION:
        raise ConfigurationError(
            f"configuration dimension {d * N} exceeds the gridded cap of {MAX_GRID_DIMENSION}"
        )
    grid = Grid(d, N, tuple(points), tuple(extents), boundary)
    if spectral and not all(_is_power_of_two(p) for p in grid.points_per_axis):
        raise ConfigurationError(
            f"spectral stepping needs power-of-two axes, got {grid.points_per_axis}"
        )
    logger.debug("grid %s extents %s (%s)", grid.shape, grid.axis_extent, boundary)
    return grid


# ---------------------------------------------------------------------------
# Scalar products and densities
# ---------------------------------------------------------------------------

def inner_product(phi: WaveFunction, psi: WaveFunction) -> complex:
    """<phi|psi>, conjugate-linear in the first argument, summed over components"""
    if phi.grid != psi.grid or phi.components != psi.components:
        raise DomainError("inner product needs wave functions on the same grid and components")
    return complex(np.vdot(phi.amplitudes, psi.amplitudes) * psi.grid.cell_volume)


def norm(psi: WaveFunction) -> float:
    return float(np.sqrt(np.sum(np.abs(psi.amplitudes) ** 2) * psi.grid.cell_volume))


def normalize(psi: WaveFunction) -> WaveFunction:
    """Rescale to unit norm; zero-norm input is a domain error"""
    value = norm(psi)
    if not value > 0:
        raise DomainError("cannot normalize a zero-norm wave function")
    return psi.with_amplitudes(psi.amplitudes / value)


def density_values(amplitudes: np.ndarray) -> np.ndarray:
    """psi^dagger psi summed over the leading component axis"""
    return np.sum(np.abs(amplitudes) ** 2, axis=0)


def density(psi: WaveFunction) -> ScalarField:
    return ScalarField(psi.grid, density_values(psi.amplitudes))


def density_moments(field: ScalarField) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and variance per axis of a (not necessarily normalized) density"""
    grid = field.grid
    weights = np.asarray(field.values, dtype=float)
    total = weights.sum()
    means, variances = [], []
    for axis, coords in enumerate(grid.coordinates()):
        mean = float(np.sum(weights * coords) / total)
        means.append(mean)
        variances.append(float(np.sum(weights * (coords - mean) ** 2) / total))
    return np.array(means), np.array(variances)


def field_l2_distance(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(np.sum(np.abs(np.asarray(a) - np.asarray(b)) ** 2) * grid.cell_volume))


def phase_aligned_distance(a: WaveFunction, b: WaveFunction) -> float:
    """min over theta of ||a e^{i theta} - b||"""
    overlap = abs(inner_product(a, b))
    value = norm(a) ** 2 + norm(b) ** 2 - 2.0 * overlap
    return float(np.sqrt(max(value, 0.0)))


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

def _default_masses(grid: Grid, masses: Optional[Sequence[float]]) -> Tuple[float, ...]:
    if masses is None:
        return (1.0,) * grid.particle_count
    return tuple(float(m) for m in masses)


def _spin_amplitudes(profile: np.ndarray, spin: Optional[Sequence[complex]]) -> np.ndarray:
    if spin is None:
        return profile[np.newaxis]
    spin = np.asarray(spin, dtype=np.complex128)
    return spin.reshape((-1,) + (1,) * profile.ndim) * profile[np.newaxis]


def _boundary_tail_mass(grid: Grid, rho: np.ndarray) -> float:
    """Probability mass inside the outer sixteenth of every axis"""
    mask = np.zeros(grid.shape, dtype=bool)
    for axis, n in enumerate(grid.shape):
        layer = max(1, n // 16)
        index = [slice(None)] * grid.dimension
        index[axis] = slice(0, layer)
        mask[tuple(index)] = True
        index[axis] = slice(n - layer, n)
        mask[tuple(index)] = True
    return float(np.sum(rho[mask]) * grid.cell_volume)


def gaussian_packet(
    grid: Grid,
    center: Sequence[float],
    width: Sequence[float],
    wavevector: Optional[Sequence[float]] = None,
    masses: Optional[Sequence[float]] = None,
    hbar: float = 1.0,
    spin: Optional[Sequence[complex]] = None,
    strict: Optional[bool] = None,
) -> WaveFunction:
    """
    Normalized Gaussian packet psi(q) ~ exp(-sum (q_i-c_i)^2 / 4 sigma_i^2) exp(i k.q).

    Args:
        grid: Target grid
        center: Packet center (length D)
        width: Position spread sigma per axis (length D, > 0)
        wavevector: Mean wavevector k (default zero)
        masses: Particle masses (default all 1)
        hbar: Reduced Planck constant
        spin: Optional spinor multiplying the spatial profile (length 2^N)
        strict: Raise instead of warn when the packet leaks to the boundary

    Returns:
        Normalized WaveFunction
    """
    D = grid.dimension
    center = np.broadcast_to(np.asarray(center, dtype=float), (D,))
    width = np.broadcast_to(np.asarray(width, dtype=float), (D,))
    k = np.zeros(D) if wavevector is None else np.broadcast_to(np.asarray(wavevector, dtype=float), (D,))
    if np.any(width <= 0):
        raise DomainError(f"packet widths must be positive, got {width}")

    exponent = np.zeros(grid.shape, dtype=np.complex128)
    for axis, coords in enumerate(grid.coordinates()):
        exponent += -((coords - center[axis]) ** 2) / (4.0 * width[axis] ** 2) + 1j * k[axis] * coords
    profile = np.exp(exponent)

    psi = normalize(WaveFunction(grid, _spin_amplitudes(profile, spin), _default_masses(grid, masses), hbar))
    tail = _boundary_tail_mass(grid, density_values(psi.amplitudes))
    if tail > TAIL_MASS_LIMIT:
        accuracy_problem(f"gaussian packet tail mass {tail:.3e} at the boundary exceeds {TAIL_MASS_LIMIT}", strict)
    return psi


def plane_wave(
    grid: Grid,
    wavevector: Sequence[float],
    masses: Optional[Sequence[float]] = None,
    hbar: float = 1.0,
) -> WaveFunction:
    """Normalized e^{i k.q}; on periodic grids k should be a multiple of 2*pi/L per axis"""
    k = np.broadcast_to(np.asarray(wavevector, dtype=float), (grid.dimension,))
    phase = np.zeros(grid.shape)
    for axis, coords in enumerate(grid.coordinates()):
        phase = phase + k[axis] * coords
    if grid.boundary == "periodic":
        commensurate = k * np.array(grid.axis_extent) / (2.0 * np.pi)
        if not np.allclose(commensurate, np.round(commensurate), atol=1e-9):
            logger.warning("plane wave k=%s is not commensurate with the periodic grid", k)
    return normalize(WaveFunction(grid, np.exp(1j * phase), _default_masses(grid, masses), hbar))


def ring_state(grid: Grid, winding: int, mass: float = 1.0, hbar: float = 1.0) -> WaveFunction:
    """
    Angular-momentum eigenstate e^{i m phi} on a 1-D periodic ring of circumference L.

    phi = 2*pi*(x + L/2)/L, so the phase grows by 2*pi*m around the ring.
    """
    if grid.dimension != 1 or grid.boundary != "periodic":
        raise DomainError("ring states live on a 1-D periodic grid")
    L = grid.axis_extent[0]
    phi = 2.0 * np.pi * (grid.axis_coordinates(0) + 0.5 * L) / L
    return normalize(WaveFunction(grid, np.exp(1j * int(winding) * phi), (mass,), hbar))


def superpose(
    states: Sequence[WaveFunction],
    coefficients: Sequence[complex],
    renormalize: bool = True,
) -> WaveFunction:
    """sum_a c_a psi_a, optionally renormalized"""
    if len(states) == 0 or len(states) != len(coefficients):
        raise DomainError("need one coefficient per state")
    amplitudes = sum(complex(c) * s.amplitudes for c, s in zip(coefficients, states))
    psi = states[0].with_amplitudes(amplitudes)
    return normalize(psi) if renormalize else psi


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

def potential_values(
    spec: PotentialSpec,
    grid: Grid,
    masses: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """
    Evaluate V on the lattice, including the confining wall of box grids.

    Args:
        spec: Potential description
        grid: Target grid
        masses: Particle masses (harmonic potential uses m*omega^2/2)

    Returns:
        Real array of shape grid.shape
    """
    D = grid.dimension
    coords = grid.coordinates()
    masses = np.repeat(np.array(_default_masses(grid, masses)), grid.dims_per_particle)
    V = np.zeros(grid.shape)

    if spec.kind == "harmonic":
        omega = np.broadcast_to(np.array(spec.omega or (1.0,)), (D,))
        for axis in range(D):
            V += 0.5 * masses[axis] * omega[axis] ** 2 * coords[axis] ** 2
    elif spec.kind == "linear_gradient":
        slope = np.broadcast_to(np.array(spec.slope or (0.0,)), (D,))
        for axis in range(D):
            V += slope[axis] * coords[axis]
    elif spec.kind == "softcoulomb":
        N = grid.particle_count
        if N < 2 or len(spec.charges) != N:
            raise DomainError("softcoulomb needs N >= 2 particles and one charge per particle")
        for j in range(N):
            for k in range(j + 1, N):
                r2 = sum(
                    (coords[a] - coords[b]) ** 2
                    for a, b in zip(grid.particle_axes(j), grid.particle_axes(k))
                )
                V += spec.charges[j] * spec.charges[k] / np.sqrt(r2 + spec.softening ** 2)
    elif spec.kind == "custom_table":
        table = spec.table
        if table.values.shape != grid.shape:
            raise DomainError(f"potential table shape {table.values.shape} does not match grid {grid.shape}")
        V += np.real(np.asarray(table.values, dtype=float))

    if grid.boundary == "box" and spec.wall_height > 0:
        wall = np.zeros(grid.shape, dtype=bool)
        for axis in range(D):
            thickness = spec.wall_width * grid.axis_extent[axis]
            wall |= (coords[axis] < grid.lower[axis] + thickness) | (coords[axis] > grid.upper[axis] - thickness)
        V[wall] += spec.wall_height
    return V


# ---------------------------------------------------------------------------
# Derivatives
# ---------------------------------------------------------------------------

def _array_axis(values: np.ndarray, grid: Grid, axis: int) -> int:
    return values.ndim - grid.dimension + axis


def finite_difference(values: np.ndarray, grid: Grid, axis: int, order: int = 1) -> np.ndarray:
    """
    Fourth-order centered difference along a grid axis.

    Periodic grids wrap; box grids treat values beyond the walls as zero.
    Trailing axes of values are the grid axes.
    """
    values = np.asarray(values)
    ax = _array_axis(values, grid, axis)
    h = grid.spacing[axis]
    if grid.boundary == "periodic":
        def shifted(s):
            return np.roll(values, -s, axis=ax)
    else:
        pad = [(0, 0)] * values.ndim
        pad[ax] = (2, 2)
        padded = np.pad(values, pad)
        n = values.shape[ax]

        def shifted(s):
            return np.take(padded, np.arange(2 + s, 2 + s + n), axis=ax)

    if order == 1:
        return (-shifted(2) + 8.0 * shifted(1) - 8.0 * shifted(-1) + shifted(-2)) / (12.0 * h)
    if order == 2:
        return (-shifted(2) + 16.0 * shifted(1) - 30.0 * values + 16.0 * shifted(-1) - shifted(-2)) / (12.0 * h * h)
    raise DomainError(f"unsupported derivative order {order}")


def derivative(values: np.ndarray, grid: Grid, axis: int, order: int = 1) -> np.ndarray:
    """
    Spectral derivative on periodic grids, 4th-order stencil on box grids.

    Real input gives real output. The Nyquist mode is dropped for odd orders.
    """
    if grid.boundary != "periodic":
        return finite_difference(values, grid, axis, order)
    values = np.asarray(values)
    ax = _array_axis(values, grid, axis)
    k = grid.wavenumbers(axis)
    n = grid.shape[axis]
    factor = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        factor[n // 2] = 0.0
    shape = [1] * values.ndim
    shape[ax] = n
    result = sp_fft.ifft(sp_fft.fft(values, axis=ax) * factor.reshape(shape), axis=ax)
    if np.isrealobj(values):
        return result.real
    return result


def laplacian(values: np.ndarray, grid: Grid, axis_weights: Optional[Sequence[float]] = None) -> np.ndarray:
    """sum_a w_a d^2/dq_a^2 (weights default to 1)"""
    weights = np.ones(grid.dimension) if axis_weights is None else np.asarray(axis_weights, dtype=float)
    total = np.zeros(np.shape(values), dtype=np.result_type(values, float))
    for axis in range(grid.dimension):
        total = total + weights[axis] * derivative(values, grid, axis, order=2)
    return total


# ---------------------------------------------------------------------------
# Interpolation
# ---------------------------------------------------------------------------

def fractional_index(grid: Grid, points: np.ndarray) -> np.ndarray:
    """Continuous lattice index of each point, shape (D, n)"""
    points = grid.wrap(np.atleast_2d(np.asarray(points, dtype=float)))
    return ((points - grid.lower) / grid.spacing).T


def _trilinear(values: np.ndarray, grid: Grid, coords: np.ndarray) -> np.ndarray:
    mode = "grid-wrap" if grid.boundary == "periodic" else "nearest"
    if np.iscomplexobj(values):
        return (
            ndimage.map_coordinates(values.real, coords, order=1, mode=mode)
            + 1j * ndimage.map_coordinates(values.imag, coords, order=1, mode=mode)
        )
    return ndimage.map_coordinates(values, coords, order=1, mode=mode)


def _spectral(values: np.ndarray, grid: Grid, points: np.ndarray, chunk: int = 256) -> np.ndarray:
    coefficients = sp_fft.fftn(values) / grid.total_points
    offsets = grid.wrap(points) - grid.lower
    letters = "abc"[: grid.dimension]
    spec = ",".join(f"p{letter}" for letter in letters)
    expression = f"{letters},{spec}->p"
    out = np.empty(len(points), dtype=np.complex128)
    for start in range(0, len(points), chunk):
        block = offsets[start:start + chunk]
        factors = [np.exp(1j * block[:, [a]] * grid.wavenumbers(a)[np.newaxis, :]) for a in range(grid.dimension)]
        out[start:start + chunk] = np.einsum(expression, coefficients, *factors)
    return out.real if np.isrealobj(values) else out


def interpolate(values: np.ndarray, grid: Grid, points, method: str = "trilinear") -> np.ndarray:
    """
    Evaluate a gridded field at arbitrary points.

    Args:
        values: Array whose trailing axes are the grid axes; leading axes are batched
        grid: Grid the values live on
        points: Coordinates, shape (n, D)
        method: "trilinear" (map_coordinates, order 1) or "spectral" (Fourier series)

    Returns:
        Array of shape (*leading, n)
    """
    values = np.asarray(values)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lead = values.shape[: values.ndim - grid.dimension]
    flat = values.reshape((-1,) + grid.shape)
    if method == "trilinear":
        coords = fractional_index(grid, points)
        out = [_trilinear(component, grid, coords) for component in flat]
    elif method == "spectral":
        if grid.boundary != "periodic":
            raise ConfigurationError("spectral interpolation needs a periodic grid")
        out = [_spectral(component, grid, points) for component in flat]
    else:
        raise ConfigurationError(f"unknown interpolation '{method}'")
    return np.stack(out).reshape(lead + (len(points),))
