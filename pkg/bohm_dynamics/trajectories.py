"""
Bohmian trajectories against an EvolutionRecord.

- Initial configurations are drawn from |psi0|^2 (inverse CDF per axis for
  product densities, thinned Metropolis chains otherwise).
- dQ/dt = v^{psi_t}(Q) is integrated with classical RK4, vectorized over the
  ensemble; psi_t between snapshots comes from RecordPlayback.
- Equivariance is measured as the total-variation distance between the
  ensemble histogram and |psi_t|^2 on at most 64 bins per axis.
"""

import logging
import math
from functools import reduce
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from bohm_dynamics.guidance import DEFAULT_NODE_EPSILON, build_probe, evaluate_velocity
from bohm_dynamics.models import Ensemble, EvolutionRecord, Interpolation, Trajectory, TrajectoryFlag, VelocityProbe
from bohm_dynamics.solver import RecordPlayback
from wave_lattice.errors import ConfigurationError, DomainError
from wave_lattice.grid import density_moments, density_values, interpolate
from wave_lattice.models import Grid, ScalarField, WaveFunction

logger = logging.getLogger(__name__)

METROPOLIS_STRIDE = 50
METROPOLIS_BURN_IN = 1000
METROPOLIS_CHAINS = 256
EQUIVARIANCE_BINS = 64


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _marginals(p: np.ndarray) -> List[np.ndarray]:
    D = p.ndim
    return [p.sum(axis=tuple(a for a in range(D) if a != axis)) for axis in range(D)]


def is_product_density(p: np.ndarray, tolerance: float = 1e-10) -> bool:
    """True when p equals the outer product of its marginals"""
    p = p / p.sum()
    if p.ndim == 1:
        return True
    outer = reduce(np.multiply.outer, _marginals(p))
    return bool(np.max(np.abs(p - outer)) <= tolerance * p.max())


def _inverse_cdf_indices(marginal: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(marginal)
    index = np.searchsorted(cdf, u * cdf[-1], side="right")
    return np.minimum(index, len(marginal) - 1)


def _jittered(grid: Grid, index: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    points = grid.index_to_coordinate(index) + (rng.random(index.shape) - 0.5) * grid.spacing
    return grid.wrap(points)


def _product_sample(grid: Grid, p: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random((n, grid.dimension))
    index = np.stack(
        [_inverse_cdf_indices(marginal, u[:, axis]) for axis, marginal in enumerate(_marginals(p))],
        axis=1,
    )
    return _jittered(grid, index, rng)


def metropolis_sample(
    psi0: WaveFunction,
    n: int,
    rng: np.random.Generator,
    stride: int = METROPOLIS_STRIDE,
    burn_in: int = METROPOLIS_BURN_IN,
    chains: int = METROPOLIS_CHAINS,
) -> np.ndarray:
    """
    Random-walk Metropolis on the trilinearly interpolated density.

    Chains start from the product of the marginals, run burn_in steps and then
    keep every stride-th state. Samples are interleaved chain by chain.
    """
    grid = psi0.grid
    rho = density_values(psi0.amplitudes)
    p = rho / rho.sum()
    chains = max(1, min(chains, n))
    per_chain = math.ceil(n / chains)

    _, variance = density_moments(ScalarField(grid, p))
    scale = 0.5 * np.sqrt(np.maximum(variance, grid.spacing ** 2))

    def log_target(points):
        value = interpolate(rho, grid, points, "trilinear")
        inside = grid.contains(points)
        return np.where(inside & (value > 0), np.log(np.maximum(value, 1e-300)), -np.inf)

    state = _product_sample(grid, p, chains, rng)
    current = log_target(state)
    kept = []
    for step in range(burn_in + stride * per_chain):
        proposal = grid.wrap(state + scale * rng.standard_normal(state.shape))
        candidate = log_target(proposal)
        accept = np.log(rng.random(chains)) < candidate - current
        state = np.where(accept[:, np.newaxis], proposal, state)
        current = np.where(accept, candidate, current)
        if step >= burn_in and (step - burn_in + 1) % stride == 0:
            kept.append(state.copy())
    samples = np.stack(kept)            # (per_chain, chains, D)
    return samples.reshape(-1, grid.dimension)[:n]


def sample_initial(psi0: WaveFunction, n: int, seed: int, method: str = "auto") -> np.ndarray:
    """
    Draw n configurations from |psi0|^2.

    Args:
        psi0: Normalized wave function
        n: Sample count (>= 1)
        seed: Seed for numpy's default_rng; equal seeds give identical output
        method: "auto", "inverse_cdf" or "metropolis"

    Returns:
        Array of shape (n, D)
    """
    if n < 1:
        raise DomainError(f"sample count must be >= 1, got {n}")
    grid = psi0.grid
    rng = np.random.default_rng(seed)
    rho = density_values(psi0.amplitudes)
    p = rho / rho.sum()
    if method == "auto":
        method = "inverse_cdf" if is_product_density(p) else "metropolis"
    logger.debug("sampling %d points with %s", n, method)
    if method == "inverse_cdf":
        if not is_product_density(p):
            raise DomainError("inverse-CDF sampling needs a product density")
        return _product_sample(grid, p, n, rng)
    if method == "metropolis":
        return metropolis_sample(psi0, n, rng)
    raise ConfigurationError(f"unknown sampling method '{method}'")


def uniform_sample(grid: Grid, n: int, seed: int) -> np.ndarray:
    """Uniform configurations over the lattice cells (mis-sampled control ensembles)"""
    rng = np.random.default_rng(seed)
    index = np.stack([rng.integers(0, size, n) for size in grid.shape], axis=1)
    return _jittered(grid, index, rng)


# ---------------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------------

class _VelocityClock:
    """Guidance probes along the record, built lazily and kept for the last few times"""

    def __init__(self, record: EvolutionRecord, interpolation: Interpolation, node_epsilon: float):
        self.playback = RecordPlayback(record)
        self.interpolation = interpolation
        self.node_epsilon = node_epsilon
        self._probes: Dict[float, VelocityProbe] = {}

    def probe(self, t: float) -> VelocityProbe:
        key = round(t, 12)
        if key not in self._probes:
            if len(self._probes) >= 4:
                self._probes.pop(next(iter(self._probes)))
            self._probes[key] = build_probe(self.playback.wave_at(t), self.interpolation, self.node_epsilon)
        return self._probes[key]

    def __call__(self, t: float, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return evaluate_velocity(self.probe(t), points)


def _schedule(times: np.ndarray, dt_traj: float) -> List[Tuple[float, float, int]]:
    """(start, step, substeps) for every snapshot interval"""
    gaps = np.diff(times)
    if dt_traj <= 0:
        raise ConfigurationError(f"dt_traj must be positive, got {dt_traj}")
    if dt_traj > gaps.min() * (1 + 1e-9):
        raise ConfigurationError(f"dt_traj={dt_traj} exceeds the snapshot interval {gaps.min()}")
    schedule = []
    for start, gap in zip(times[:-1], gaps):
        substeps = max(1, math.ceil(gap / dt_traj - 1e-9))
        schedule.append((float(start), float(gap / substeps), substeps))
    return schedule


def propagate_ensemble(
    record: EvolutionRecord,
    q0_list,
    dt_traj: float,
    interpolation: Interpolation = "trilinear",
    node_epsilon: float = DEFAULT_NODE_EPSILON,
    output: str = "snapshots",
    seed: Optional[int] = None,
    progress: bool = False,
) -> Ensemble:
    """
    Integrate dQ/dt = v^{psi_t}(Q) from every start point with RK4.

    Args:
        record: Eulerian solution the trajectories are guided by
        q0_list: Start points, shape (n, D)
        dt_traj: Largest RK4 step; each snapshot interval is split evenly
        interpolation: Guidance evaluation scheme
        node_epsilon: Node regularization threshold
        output: "snapshots" (record times only) or "steps" (every RK4 step)
        seed: Seed the start points were drawn with (kept for provenance)
        progress: Show a tqdm progress bar

    Returns:
        Ensemble in start-point order; positions are unwrapped on periodic grids,
        box-domain leavers are frozen and flagged left_domain.
    """
    grid = record.grid
    Q = np.array(np.atleast_2d(np.asarray(q0_list, dtype=float)))
    if Q.shape[1] != grid.dimension:
        raise DomainError(f"start points need dimension {grid.dimension}, got {Q.shape[1]}")
    n = Q.shape[0]
    times = np.asarray(record.times, dtype=float)

    status = np.zeros(n, dtype=np.int8)
    status[~grid.contains(Q)] = TrajectoryFlag.LEFT_DOMAIN
    out_times = [times[0]]
    out_points = [Q.copy()]
    out_flags = [status.copy()]
    if len(times) == 1:
        return Ensemble(np.array(out_times), np.stack(out_points, axis=1), np.stack(out_flags, axis=1), seed, record)

    velocity = _VelocityClock(record, interpolation, node_epsilon)
    schedule = _schedule(times, dt_traj)
    pending = np.zeros(n, dtype=bool)
    total = sum(s for _, _, s in schedule)

    with tqdm(total=total, desc="trajectories", disable=not progress) as bar:
        for interval, (start, h, substeps) in enumerate(schedule):
            for j in range(substeps):
                t = start + j * h
                active = status != TrajectoryFlag.LEFT_DOMAIN
                if np.any(active):
                    q = Q[active]
                    k1, f1 = velocity(t, q)
                    k2, f2 = velocity(t + 0.5 * h, q + 0.5 * h * k1)
                    k3, f3 = velocity(t + 0.5 * h, q + 0.5 * h * k2)
                    k4, f4 = velocity(t + h, q + h * k3)
                    moved = q + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                    inside = grid.contains(moved)
                    index = np.flatnonzero(active)
                    Q[index[inside]] = moved[inside]
                    status[index[~inside]] = TrajectoryFlag.LEFT_DOMAIN
                    pending[index] |= f1 | f2 | f3 | f4
                    if np.any(~inside):
                        logger.warning("%d trajectories left the box domain at t=%.6g", int(np.sum(~inside)), t + h)
                bar.update(1)

                last = j == substeps - 1
                if output == "steps" or last:
                    t_next = times[interval + 1] if last else start + (j + 1) * h
                    flags = status.copy()
                    flags[(status == TrajectoryFlag.OK) & pending] = TrajectoryFlag.NODE_REGULARIZED
                    pending[:] = False
                    out_times.append(t_next)
                    out_points.append(Q.copy())
                    out_flags.append(flags)

    return Ensemble(
        np.array(out_times),
        np.stack(out_points, axis=1),
        np.stack(out_flags, axis=1),
        seed,
        record,
    )


def integrate_trajectory(
    record: EvolutionRecord,
    q0,
    dt_traj: float,
    interpolation: Interpolation = "trilinear",
    node_epsilon: float = DEFAULT_NODE_EPSILON,
    output: str = "steps",
) -> Trajectory:
    """Single Bohmian trajectory; samples every RK4 step unless output='snapshots'"""
    q0 = np.asarray(q0, dtype=float).reshape(1, -1)
    return propagate_ensemble(record, q0, dt_traj, interpolation, node_epsilon, output)[0]


# ---------------------------------------------------------------------------
# Equivariance
# ---------------------------------------------------------------------------

def empirical_density(ensemble: Ensemble, t: float, grid: Optional[Grid] = None) -> ScalarField:
    """Normalized nearest-cell histogram of the ensemble at time t"""
    grid = grid or ensemble.source_record.grid
    points = ensemble.positions_at(t)
    keep = grid.contains(points)
    index = grid.coordinate_to_index(points[keep])
    flat = np.ravel_multi_index(tuple(index.T), grid.shape)
    counts = np.bincount(flat, minlength=grid.total_points).reshape(grid.shape).astype(float)
    total = max(int(keep.sum()), 1)
    return ScalarField(grid, counts / (total * grid.cell_volume))


def _axis_bins(grid: Grid, axis: int, bins: int) -> Tuple[np.ndarray, int]:
    n = grid.shape[axis]
    count = min(bins, n)
    return (np.arange(n) * count) // n, count


def equivariance_distance(
    ensemble: Ensemble,
    record: EvolutionRecord,
    t: float,
    bins: int = EQUIVARIANCE_BINS,
    playback: Optional[RecordPlayback] = None,
) -> float:
    """
    Total-variation distance between the ensemble and |psi_t|^2.

    Bins group whole lattice cells; for D >= 2 the largest distance over the
    axis marginals is returned.
    """
    grid = record.grid
    playback = playback or RecordPlayback(record)
    rho = density_values(playback.wave_at(t).amplitudes)
    points = ensemble.positions_at(t)
    index = grid.coordinate_to_index(points)
    distances = []
    for axis in range(grid.dimension):
        cell_bin, count = _axis_bins(grid, axis, bins)
        exact = rho.sum(axis=tuple(a for a in range(grid.dimension) if a != axis))
        expected = np.bincount(cell_bin, weights=exact, minlength=count)
        expected /= expected.sum()
        observed = np.bincount(cell_bin[index[:, axis]], minlength=count) / len(points)
        distances.append(0.5 * float(np.sum(np.abs(observed - expected))))
    return max(distances)


def equivariance_report(ensemble: Ensemble, record: EvolutionRecord, bins: int = EQUIVARIANCE_BINS) -> List[dict]:
    """[{t, tv_distance, n, bins}] for every ensemble time that is a record snapshot"""
    playback = RecordPlayback(record)
    report = []
    for t in ensemble.times:
        if record.snapshot_index(t) is None:
            continue
        report.append({
            "t": float(t),
            "tv_distance": equivariance_distance(ensemble, record, t, bins, playback),
            "n": len(ensemble),
            "bins": int(min(bins, min(record.grid.shape))),
        })
    return report


def equivariance_growth(report: List[dict]) -> float:
    """Largest increase of the TV distance over its value at the first reported time"""
    if not report:
        raise DomainError("equivariance report is empty")
    start = report[0]["tv_distance"]
    return float(max(row["tv_distance"] for row in report) - start)


def non_crossing_violations(ensemble: Ensemble) -> int:
    """Number of (time, neighbour pair) order inversions among ok trajectories in D = 1"""
    if ensemble.dimension != 1:
        raise DomainError("the non-crossing property is a one-dimensional statement")
    ok = ensemble.ok_mask()
    paths = ensemble.points[ok, :, 0]
    if paths.shape[0] < 2:
        return 0
    order = np.argsort(paths[:, 0], kind="stable")
    ordered = paths[order]
    return int(np.sum(np.diff(ordered, axis=0) <= 0))
