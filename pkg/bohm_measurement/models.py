"""
Records of the measurement and identical-particle modules.

Defines:
- MeasurementModel: object x apparatus system with pointer sectors
- Povm: effects on the object space with their labels
- ProjectiveResult: projective observable or the reason it was rejected
- BornStatistics: sector frequencies of a trajectory run
- ExchangeReport: exchange-symmetry violations of a (anti)symmetric state
"""

from dataclasses import dataclass
from functools import cached_property
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.linalg import expm

from wave_lattice.errors import ConfigurationError, DomainError

MAX_PRODUCT_DIMENSION = 2 ** 12


@dataclass(frozen=True)
class MeasurementModel:
    """
    Finite-dimensional object (index x) coupled to an apparatus (index y).

    States of the product space are vectors indexed x * dim_apparatus + y.
    """
    dim_object: int
    dim_apparatus: int
    hamiltonian: np.ndarray                     # (dim, dim), energy units
    ready_state: np.ndarray                     # (dim_apparatus,), unit norm
    pointer_sectors: Tuple[Tuple[int, ...], ...]
    labels: Tuple[float, ...]
    duration: float = 1.0
    hbar: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.dim_object < 2 or self.dim_apparatus < 2:
            raise DomainError("object and apparatus need dimension >= 2")
        if self.dimension > MAX_PRODUCT_DIMENSION:
            raise ConfigurationError(f"product dimension {self.dimension} exceeds {MAX_PRODUCT_DIMENSION}")
        H = np.array(self.hamiltonian, dtype=np.complex128)
        if H.shape != (self.dimension, self.dimension):
            raise DomainError(f"hamiltonian must be {self.dimension}x{self.dimension}, got {H.shape}")
        if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-12:
            raise DomainError("hamiltonian is not Hermitian")
        phi = np.array(self.ready_state, dtype=np.complex128)
        if phi.shape != (self.dim_apparatus,) or abs(np.linalg.norm(phi) - 1.0) > 1e-12:
            raise DomainError("ready state must be a unit vector of the apparatus space")
        sectors = tuple(tuple(int(y) for y in s) for s in self.pointer_sectors)
        members = [y for s in sectors for y in s]
        if len(members) != len(set(members)):
            raise DomainError("pointer sectors must be pairwise disjoint")
        if any(not 0 <= y < self.dim_apparatus for y in members):
            raise DomainError("pointer sector index outside the apparatus basis")
        labels = tuple(float(r) for r in self.labels)
        if len(labels) != len(sectors) or len(set(labels)) != len(labels):
            raise DomainError("need one distinct label per pointer sector")
        if self.duration < 0 or not self.hbar > 0:
            raise DomainError("duration must be >= 0 and hbar positive")
        H.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "ready_state", phi)
        object.__setattr__(self, "pointer_sectors", sectors)
        object.__setattr__(self, "labels", labels)

    @property
    def dimension(self) -> int:
        return self.dim_object * self.dim_apparatus

    @property
    def exhaustive(self) -> bool:
        return sum(len(s) for s in self.pointer_sectors) == self.dim_apparatus

    @cached_property
    def propagator(self) -> np.ndarray:
        """exp(-i H (t1 - t0) / hbar), scaling and squaring with Pade approximants"""
        return expm(-1j * self.hamiltonian * self.duration / self.hbar)


@dataclass(frozen=True)
class Povm:
    """Effects E_a on the object space, labelled r_a"""
    elements: Tuple[np.ndarray, ...]
    labels: Tuple[float, ...]

    def __post_init__(self):
        elements = tuple(np.array(E, dtype=np.complex128) for E in self.elements)
        if not elements or len(elements) != len(self.labels):
            raise DomainError("need one label per POVM element")
        for E in elements:
            if np.max(np.abs(E - E.conj().T)) > 1e-10:
                raise DomainError("POVM element is not Hermitian")
            if np.linalg.eigvalsh(E).min() < -1e-10:
                raise DomainError("POVM element is not positive semidefinite")
            E.setflags(write=False)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "labels", tuple(float(r) for r in self.labels))

    @property
    def dimension(self) -> int:
        return self.elements[0].shape[0]

    def completeness_error(self) -> float:
        """max |sum_a E_a - I|"""
        return float(np.max(np.abs(sum(self.elements) - np.eye(self.dimension))))

    def probabilities(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=np.complex128)
        return np.array([float(np.real(np.vdot(psi, E @ psi))) for E in self.elements])


@dataclass(frozen=True)
class ProjectiveResult:
    """A = sum r_a E_a when every effect is a projection; otherwise observable is None"""
    projective: bool
    max_idempotence_error: float
    observable: Optional[np.ndarray] = None


class BornStatistics(BaseModel):
    """Sector counts of trajectory endpoints against the Born weights"""
    labels: List[str]
    born: List[float]                   # |c_a|^2
    counts: List[int]
    frequencies: List[float]            # counts / ok
    half_widths: List[float]            # 3 sigma binomial half-width around the Born value
    ok: int                             # trajectories with every sample flagged ok
    total: int
    overlap_mass: float                 # largest branch mass outside its own sector

    @property
    def within_confidence(self) -> bool:
        return all(
            abs(f - p) <= w + 1e-12
            for f, p, w in zip(self.frequencies, self.born, self.half_widths)
        )


class ExchangeReport(BaseModel):
    """Largest exchange-symmetry violations found"""
    symmetry: Literal["bosonic", "fermionic"]
    max_wave_violation: float
    max_velocity_violation: float
    max_flow_violation: float = 0.0
