"""
Measurement as ordinary quantum dynamics of object plus apparatus.

The finite-dimensional layer evolves psi (x) phi with a dense matrix
exponential, reads pointer-sector probabilities and contracts the apparatus
indices into the POVM E_a = <phi| U^dagger (I (x) 1_{S_a}) U |phi>_y.

The grid layer (PointerExperiment, SternGerlachExperiment) runs a two-branch
Eulerian evolution, guides an ensemble through it and counts the pointer
sector every trajectory ends in.
"""

import copy
import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import schur

from bohm_dynamics.models import Ensemble, EvolutionRecord, Interpolation, MagneticSpec
from bohm_dynamics.solver import combine_records, evolve
from bohm_dynamics.trajectories import propagate_ensemble, sample_initial
from bohm_measurement.models import BornStatistics, MeasurementModel, Povm, ProjectiveResult
from wave_lattice.errors import DomainError, ScenarioError
from wave_lattice.grid import density_values, gaussian_packet, make_grid
from wave_lattice.models import Grid, PotentialSpec, ScalarField, WaveFunction, ZERO_POTENTIAL

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
OVERLAP_LIMIT = 1e-6


# ---------------------------------------------------------------------------
# Finite-dimensional models
# ---------------------------------------------------------------------------

def evolve_model(model: MeasurementModel, psi_object) -> np.ndarray:
    """Psi_{t1} = exp(-iH(t1-t0)/hbar) (psi (x) phi), indexed x * dim_apparatus + y"""
    psi = np.asarray(psi_object, dtype=np.complex128)
    if psi.shape != (model.dim_object,):
        raise DomainError(f"object state must have dimension {model.dim_object}, got {psi.shape}")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
        raise DomainError("object state must be normalized")
    return model.propagator @ np.kron(psi, model.ready_state)


def pointer_probability(state, sector: Sequence[int], dim_apparatus: int) -> float:
    """Mass of the state on apparatus indices in sector, summed over the object index"""
    state = np.asarray(state, dtype=np.complex128).reshape(-1, dim_apparatus)
    return float(np.sum(np.abs(state[:, list(sector)]) ** 2))


def extract_povm(model: MeasurementModel) -> Povm:
    """
    Effects of the model on the object space.

    K_y[x, x'] = sum_a U[(x, y), (x', a)] phi_a is the apparatus-resolved
    Kraus map; E_a = sum_{y in S_a} K_y^dagger K_y.
    """
    do, da = model.dim_object, model.dim_apparatus
    U = model.propagator.reshape(do, da, do, da)
    kraus = np.einsum("xyza,a->yxz", U, model.ready_state)
    elements = []
    for sector in model.pointer_sectors:
        K = kraus[list(sector)]
        E = np.einsum("yxz,yxw->zw", K.conj(), K)
        elements.append(0.5 * (E + E.conj().T))
    return Povm(tuple(elements), model.labels)


def projective_observable(povm: Povm, tolerance: float = 1e-10) -> ProjectiveResult:
    """A = sum r_a E_a if every E_a is a projection, otherwise a rejection with the worst |E^2 - E|"""
    error = max(float(np.max(np.abs(E @ E - E))) for E in povm.elements)
    if error > tolerance:
        logger.debug("POVM is not projective (max |E^2 - E| = %.3e)", error)
        return ProjectiveResult(False, error)
    observable = sum(r * E for r, E in zip(povm.labels, povm.elements))
    return ProjectiveResult(True, error, 0.5 * (observable + observable.conj().T))


def cross_sector_mass(model: MeasurementModel, alpha: int, psi_alpha=None) -> float:
    """Mass of the evolved eigenstate psi_alpha (default: basis state alpha) outside sector alpha"""
    if psi_alpha is None:
        psi_alpha = np.eye(model.dim_object)[alpha]
    state = evolve_model(model, psi_alpha)
    inside = pointer_probability(state, model.pointer_sectors[alpha], model.dim_apparatus)
    return max(0.0, float(np.sum(np.abs(state) ** 2)) - inside)


# ---------------------------------------------------------------------------
# Model builders
# ---------------------------------------------------------------------------

def model_from_unitary(
    unitary,
    dim_object: int,
    dim_apparatus: int,
    ready_state,
    pointer_sectors: Sequence[Sequence[int]],
    labels: Sequence[float],
    duration: float = 1.0,
    hbar: float = 1.0,
    name: str = "",
) -> MeasurementModel:
    """
    Model whose propagator over duration is the given unitary.

    H = Z diag(-hbar arg(lambda) / t) Z^dagger from the complex Schur form
    U = Z T Z^dagger (T is diagonal for a normal matrix).
    """
    U = np.asarray(unitary, dtype=np.complex128)
    if U.shape != (dim_object * dim_apparatus,) * 2:
        raise DomainError("unitary does not act on the product space")
    if np.max(np.abs(U.conj().T @ U - np.eye(len(U)))) > 1e-10:
        raise DomainError("coupling is not unitary")
    if not duration > 0:
        raise DomainError("a coupling unitary needs a positive duration")
    T, Z = schur(U, output="complex")
    energies = -hbar * np.angle(np.diag(T)) / duration
    H = Z @ np.diag(energies) @ Z.conj().T
    return MeasurementModel(
        dim_object, dim_apparatus, 0.5 * (H + H.conj().T), np.asarray(ready_state, dtype=np.complex128),
        tuple(tuple(s) for s in pointer_sectors), tuple(labels), duration, hbar, name,
    )


def cnot_model(duration: float = 1.0, hbar: float = 1.0, labels: Tuple[float, float] = (1.0, -1.0)) -> MeasurementModel:
    """H = (pi hbar / 2t) |1><1| (x) (I - X): the propagator flips the pointer iff the object is |1>"""
    projector = np.diag([0.0, 1.0])
    flip = np.eye(2) - np.array([[0.0, 1.0], [1.0, 0.0]])
    H = np.pi * hbar / (2.0 * duration) * np.kron(projector, flip)
    return MeasurementModel(2, 2, H, np.array([1.0, 0.0]), ((0,), (1,)), labels, duration, hbar, "cnot")


def controlled_shift_model(dim: int, duration: float = 1.0, hbar: float = 1.0) -> MeasurementModel:
    """Perfect measurement of any dimension: |x, y> -> |x, y + x mod dim>"""
    U = np.zeros((dim * dim, dim * dim))
    for x in range(dim):
        for y in range(dim):
            U[x * dim + (y + x) % dim, x * dim + y] = 1.0
    ready = np.eye(dim)[0]
    return model_from_unitary(
        U, dim, dim, ready, [(y,) for y in range(dim)], [float(y) for y in range(dim)],
        duration, hbar, f"shift{dim}",
    )


def weak_coupling_model(
    angles: Tuple[float, float] = (0.3, 0.2),
    duration: float = 1.0,
    hbar: float = 1.0,
) -> MeasurementModel:
    """
    Object state x rotates the pointer qubit by angles[x]; neither rotation
    reaches the other sector completely, so the effects are not projections.
    """
    sigma_y = np.array([[0.0, -1j], [1j, 0.0]])
    H = sum(
        theta * hbar / duration * np.kron(np.diag(np.eye(2)[x]), sigma_y)
        for x, theta in enumerate(angles)
    )
    return MeasurementModel(2, 2, H, np.array([1.0, 0.0]), ((0,), (1,)), (0.0, 1.0), duration, hbar, "weak")


def random_model(dim_object: int, dim_apparatus: int, seed: int, duration: float = 1.0) -> MeasurementModel:
    """Random Hermitian coupling and ready state; apparatus basis split into contiguous sectors"""
    rng = np.random.default_rng(seed)
    dim = dim_object * dim_apparatus
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    phi = rng.normal(size=dim_apparatus) + 1j * rng.normal(size=dim_apparatus)
    groups = np.array_split(np.arange(dim_apparatus), min(dim_object, dim_apparatus))
    return MeasurementModel(
        dim_object, dim_apparatus, 0.5 * (A + A.conj().T), phi / np.linalg.norm(phi),
        tuple(tuple(int(y) for y in g) for g in groups), tuple(float(i) for i in range(len(groups))),
        duration, 1.0, f"random{seed}",
    )


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------

def _pairs(values: np.ndarray) -> list:
    values = np.asarray(values, dtype=np.complex128)
    return np.stack([values.real, values.imag], axis=-1).tolist()


def _complex(pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=float)
    return pairs[..., 0] + 1j * pairs[..., 1]


def model_to_dict(model: MeasurementModel) -> dict:
    return {
        "name": model.name,
        "dims": [model.dim_object, model.dim_apparatus],
        "H": _pairs(model.hamiltonian),
        "phi": _pairs(model.ready_state),
        "sectors": [list(s) for s in model.pointer_sectors],
        "labels": list(model.labels),
        "t": model.duration,
        "hbar": model.hbar,
    }


def model_from_dict(data: dict) -> MeasurementModel:
    try:
        dim_object, dim_apparatus = data["dims"]
        return MeasurementModel(
            int(dim_object), int(dim_apparatus), _complex(data["H"]), _complex(data["phi"]),
            tuple(tuple(s) for s in data["sectors"]), tuple(data["labels"]),
            float(data.get("t", 1.0)), float(data.get("hbar", 1.0)), data.get("name", ""),
        )
    except (KeyError, TypeError) as e:
        raise DomainError(f"malformed measurement model: {e}") from e


def save_model(path: PathLike, model: MeasurementModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), indent=2), encoding="utf-8")
    return path


def load_model(path: PathLike) -> MeasurementModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def povm_to_dict(povm: Povm) -> dict:
    return {"labels": list(povm.labels), "elements": [_pairs(E) for E in povm.elements]}


def save_povm(path: PathLike, povm: Povm) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(povm_to_dict(povm), indent=2), encoding="utf-8")
    return path


def load_povm(path: PathLike) -> Povm:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return Povm(tuple(_complex(E) for E in data["elements"]), tuple(data["labels"]))


# ---------------------------------------------------------------------------
# Grid experiments
# ---------------------------------------------------------------------------

class GridMeasurement:
    """
    A measurement realized on a grid: one initial branch per outcome, a
    pointer coordinate and the sector each configuration belongs to.
    """
    sector_labels: Tuple[str, ...] = ()
    duration: float = 2.0
    dt: float = 0.01
    snapshot_stride: int = 10

    def __init__(self, coefficients: Sequence[complex]):
        c = np.asarray(coefficients, dtype=np.complex128)
        if len(c) != len(self.sector_labels) or not np.linalg.norm(c) > 0:
            raise DomainError(f"need {len(self.sector_labels)} coefficients, not all zero")
        self.coefficients = c / np.linalg.norm(c)
        self._evolved: Optional[Tuple[List[EvolutionRecord], float]] = None

    @property
    def born(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2

    def grid(self) -> Grid:
        raise NotImplementedError

    def potential(self, grid: Grid) -> PotentialSpec:
        return ZERO_POTENTIAL

    def magnetic(self) -> Optional[MagneticSpec]:
        return None

    def branches(self, grid: Grid) -> List[WaveFunction]:
        raise NotImplementedError

    def sector_index(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sector_map(self, grid: Grid) -> np.ndarray:
        points = np.stack([c.ravel() for c in grid.coordinates()], axis=1)
        return self.sector_index(points).reshape(grid.shape)

    def with_coefficients(self, coefficients: Sequence[complex]) -> "GridMeasurement":
        """Same apparatus with another object state; evolved branches are shared"""
        other = copy.copy(self)
        GridMeasurement.__init__(other, coefficients)
        other._evolved = self._evolved
        return other

    def evolve_branches(self, progress: bool = False) -> Tuple[EvolutionRecord, float]:
        """
        Evolve every branch, check that each ends inside its own sector and
        superpose them with the coefficients.

        Returns:
            (combined record, largest branch mass outside its own sector)
        """
        if self._evolved is None:
            self._evolved = self._evolve_each(progress)
        records, overlap = self._evolved
        return combine_records(records, self.coefficients), overlap

    def _evolve_each(self, progress: bool) -> Tuple[List[EvolutionRecord], float]:
        grid = self.grid()
        potential = self.potential(grid)
        sectors = self.sector_map(grid)
        records = []
        overlap = 0.0
        for alpha, branch in enumerate(self.branches(grid)):
            record = evolve(
                branch, potential, self.duration, self.dt, self.snapshot_stride,
                magnetic=self.magnetic(), progress=progress,
            )
            rho = density_values(record.final.amplitudes)
            outside = float(np.sum(rho[sectors != alpha]) * grid.cell_volume)
            logger.debug("branch %d ends with mass %.3e outside its sector", alpha, outside)
            overlap = max(overlap, outside)
            records.append(record)
        if overlap > OVERLAP_LIMIT:
            raise ScenarioError(f"pointer sectors overlap: branch mass {overlap:.3e} outside its sector")
        return records, overlap


class PointerExperiment(GridMeasurement):
    """
    Object coordinate x (heavy) coupled to a pointer coordinate y through
    V = -coupling * tanh(x / width) * y. A packet at x = -separation pushes
    the pointer to y < 0 (sector 0), one at +separation to y > 0 (sector 1).
    """
    sector_labels = ("y<0", "y>0")

    def __init__(
        self,
        coefficients: Sequence[complex] = (2 ** -0.5, 2 ** -0.5),
        coupling: float = 4.0,
        width: float = 0.5,
        separation: float = 3.0,
        object_sigma: float = 0.5,
        pointer_sigma: float = 1.0,
        masses: Tuple[float, float] = (10.0, 1.0),
        points: Tuple[int, int] = (128, 256),
        extents: Tuple[float, float] = (20.0, 40.0),
    ):
        super().__init__(coefficients)
        self.coupling = coupling
        self.width = width
        self.separation = separation
        self.object_sigma = object_sigma
        self.pointer_sigma = pointer_sigma
        self.masses = masses
        self.points = points
        self.extents = extents

    def grid(self) -> Grid:
        return make_grid(1, 2, self.points, self.extents)

    def potential(self, grid: Grid) -> PotentialSpec:
        x, y = grid.coordinates()
        table = -self.coupling * np.tanh(x / self.width) * y
        return PotentialSpec("custom_table", table=ScalarField(grid, table), label="pointer coupling")

    def branches(self, grid: Grid) -> List[WaveFunction]:
        return [
            gaussian_packet(grid, (x, 0.0), (self.object_sigma, self.pointer_sigma), masses=self.masses)
            for x in (-self.separation, self.separation)
        ]

    def sector_index(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points)[:, 1] >= 0.0).astype(int)


class SternGerlachExperiment(GridMeasurement):
    """
    Spin-1/2 particle in B = (0, 0, gradient * z); the spin-up component is
    pushed towards sign(-moment * gradient) z (sector 0), spin-down the other way.
    """
    sector_labels = ("up", "down")

    def __init__(
        self,
        coefficients: Sequence[complex] = (2 ** -0.5, 2 ** -0.5),
        moment: float = 1.0,
        gradient: float = 4.0,
        sigma: float = 1.0,
        points: int = 256,
        extent: float = 48.0,
    ):
        super().__init__(coefficients)
        if moment * gradient == 0:
            raise DomainError("Stern-Gerlach splitting needs a nonzero moment and gradient")
        self.moment = moment
        self.gradient = gradient
        self.sigma = sigma
        self.points = points
        self.extent = extent

    def grid(self) -> Grid:
        return make_grid(1, 1, (self.points,), (self.extent,))

    def magnetic(self) -> MagneticSpec:
        gradient = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, self.gradient))
        return MagneticSpec(moments=(self.moment,), field_gradient=gradient)

    def branches(self, grid: Grid) -> List[WaveFunction]:
        return [gaussian_packet(grid, 0.0, self.sigma, spin=spin) for spin in ((1.0, 0.0), (0.0, 1.0))]

    def sector_index(self, points: np.ndarray) -> np.ndarray:
        side = np.sign(-self.moment * self.gradient)
        return np.where(side * np.asarray(points)[:, 0] > 0.0, 0, 1)


def born_from_trajectories(
    experiment: GridMeasurement,
    n: int,
    seed: int,
    dt_traj: Optional[float] = None,
    interpolation: Interpolation = "trilinear",
    progress: bool = False,
) -> Tuple[BornStatistics, Ensemble]:
    """
    Count the pointer sector of every guided trajectory at the final time.

    Args:
        experiment: Grid measurement with its branches and sectors
        n: Number of trajectories
        seed: Sampling seed
        dt_traj: RK4 step (default: half the snapshot interval)
        interpolation: Guidance evaluation scheme
        progress: Show progress bars

    Returns:
        (BornStatistics, Ensemble); frequencies use ok-flagged trajectories only

    Raises:
        ScenarioError: a branch leaves more than 1e-6 of its mass outside its sector
    """
    record, overlap = experiment.evolve_branches(progress)
    q0 = sample_initial(record.initial, n, seed)
    step = dt_traj or 0.5 * experiment.snapshot_stride * experiment.dt
    ensemble = propagate_ensemble(record, q0, step, interpolation, seed=seed, progress=progress)

    ok = ensemble.ok_mask()
    sectors = experiment.sector_index(ensemble.points[:, -1])[ok]
    n_ok = int(ok.sum())
    if n_ok == 0:
        raise ScenarioError("no trajectory stayed ok-flagged")
    counts = np.bincount(sectors, minlength=len(experiment.sector_labels))
    born = experiment.born
    statistics = BornStatistics(
        labels=list(experiment.sector_labels),
        born=[float(p) for p in born],
        counts=[int(c) for c in counts],
        frequencies=[float(c / n_ok) for c in counts],
        half_widths=[float(3.0 * np.sqrt(p * (1.0 - p) / n_ok)) for p in born],
        ok=n_ok,
        total=int(n),
        overlap_mass=overlap,
    )
    logger.info("born run: frequencies %s vs %s", statistics.frequencies, statistics.born)
    return statistics, ensemble
