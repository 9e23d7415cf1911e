"""
Tests for exchange symmetry, permutation equivariance and unordered
configurations.
"""

import itertools

import numpy as np
import pytest

from bohm_dynamics.models import Ensemble
from bohm_dynamics.solver import evolve
from bohm_measurement.identical import (
    exchange_report,
    flow_equivariance_check,
    minimum_separation,
    permute_particles,
    swap_particles,
    swap_points,
    symmetrize,
    unordered_flow_deviation,
    unordered_view,
    velocity_exchange_check,
)
from wave_lattice.errors import DegenerateInputError, DomainError
from wave_lattice.grid import gaussian_packet, make_grid
from wave_lattice.models import PotentialSpec

TRAP = PotentialSpec("harmonic", omega=(1.0, 1.0))


def moving_pair(grid):
    return gaussian_packet(grid, (-1.5, 1.5), (0.7, 0.7), (0.5, -0.3))


@pytest.mark.parametrize("sign,symmetry", [(1, "bosonic"), (-1, "fermionic")])
def test_symmetrized_pairs_have_exact_exchange_symmetry(pair_grid, sign, symmetry):
    psi = symmetrize(moving_pair(pair_grid), sign)
    np.testing.assert_allclose(swap_particles(psi).amplitudes, sign * psi.amplitudes, atol=1e-14)
    report = velocity_exchange_check(psi)
    assert report.symmetry == symmetry
    assert report.max_wave_violation < 1e-12
    assert report.max_velocity_violation < 1e-9


def test_antisymmetrizing_a_symmetric_state_fails(pair_grid):
    with pytest.raises(DegenerateInputError):
        symmetrize(gaussian_packet(pair_grid, (0.0, 0.0), (1.0, 1.0)), -1)


def test_exchange_needs_identical_particles(pair_grid, line_grid):
    with pytest.raises(DomainError):
        symmetrize(gaussian_packet(pair_grid, (-1.0, 1.0), (0.8, 0.8), masses=(1.0, 2.0)), 1)
    with pytest.raises(DomainError):
        symmetrize(gaussian_packet(line_grid, (0.0,), (1.0,)), 1)
    with pytest.raises(DomainError):
        symmetrize(moving_pair(pair_grid), 0)
    with pytest.raises(DomainError):
        permute_particles(moving_pair(pair_grid), [0, 0])


def test_three_particle_antisymmetrization():
    grid = make_grid(1, 3, [32, 32, 32], [16.0, 16.0, 16.0])
    psi = symmetrize(gaussian_packet(grid, (-2.0, 0.0, 2.0), (0.8, 0.8, 0.8)), -1, pair=None)
    for permutation in itertools.permutations(range(3)):
        inversions = sum(1 for a, b in itertools.combinations(permutation, 2) if a > b)
        sign = -1 if inversions % 2 else 1
        np.testing.assert_allclose(permute_particles(psi, permutation).amplitudes, sign * psi.amplitudes, atol=1e-13)


def test_swap_points_exchanges_blocks(pair_grid):
    np.testing.assert_array_equal(swap_points(np.array([[1.0, 2.0], [0.5, -3.0]]), pair_grid), [[2.0, 1.0], [-3.0, 0.5]])


def test_minimum_separation(pair_grid):
    points = np.array([[[-1.0, 1.0], [-0.2, 0.3]]])
    ensemble = Ensemble(np.array([0.0, 1.0]), points, np.zeros((1, 2)))
    assert minimum_separation(ensemble, pair_grid) == pytest.approx(0.5)


def test_unordered_view_is_a_canonical_representative():
    q = np.array([3.0, 0.0, 1.0, 2.0, 1.0, 1.0])
    canonical, coincident = unordered_view(q, 2)
    np.testing.assert_array_equal(canonical, [1.0, 1.0, 1.0, 2.0, 3.0, 0.0])
    assert not coincident
    blocks = q.reshape(3, 2)
    for permutation in itertools.permutations(range(3)):
        again, _ = unordered_view(blocks[list(permutation)].ravel(), 2)
        np.testing.assert_array_equal(again, canonical)
        np.testing.assert_array_equal(unordered_view(again, 2)[0], again)
    assert unordered_view([1.0, 1.0, 1.0, 1.0], 2)[1]
    with pytest.raises(DomainError):
        unordered_view([1.0, 2.0, 3.0], 2)


def test_guided_flow_commutes_with_exchange(pair_grid):
    psi = symmetrize(moving_pair(pair_grid), 1)
    record = evolve(psi, TRAP, 0.2, 0.01, 5)
    starts = np.array([[-1.2, 1.4], [1.0, -1.7], [-1.8, 1.1]])
    assert flow_equivariance_check(record, starts, dt_traj=0.01) < 1e-7
    assert unordered_flow_deviation(record, starts[0], dt_traj=0.01) < 1e-6
    report = exchange_report(record, starts, dt_traj=0.01)
    assert report.symmetry == "bosonic"
    assert report.max_flow_violation < 1e-7
