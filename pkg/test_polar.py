"""
Tests for the polar decomposition, winding numbers and the residuals of the
real continuity and Hamilton-Jacobi equations.
"""

import json
import math

import numpy as np
import pytest

from bohm_dynamics.models import PhaseField
from bohm_dynamics.polar import (
    axis_loop,
    hamilton_jacobi_residuals,
    polar_decompose,
    recompose,
    save_phase_field,
    winding_number,
)
from bohm_dynamics.solver import make_solver, stationary_state, step_split_spectral
from wave_lattice.errors import DegenerateInputError, DomainError, InconsistentPhaseError
from wave_lattice.grid import gaussian_packet, make_grid, ring_state
from wave_lattice.models import PotentialSpec, ScalarField, VectorField, ZERO_POTENTIAL


@pytest.fixture
def ring_grid():
    return make_grid(1, 1, [64], [2 * np.pi])


@pytest.mark.parametrize("m", [-1, 1, 2])
def test_ring_state_winding(ring_grid, m):
    psi = ring_state(ring_grid, m)
    R, phase = polar_decompose(psi)
    np.testing.assert_allclose(R.values, R.values[0])
    np.testing.assert_allclose(phase.gradient.values[0], m, atol=1e-10)
    assert sum(j.multiple for j in phase.branch_jumps) == m
    assert all(j.residue < 1e-6 for j in phase.branch_jumps)
    winding = winding_number(phase, axis_loop(ring_grid, 0))
    assert winding.number == m and winding.residue < 1e-6


def test_recompose_gives_back_the_wave_function(line_grid):
    psi = gaussian_packet(line_grid, (0.5,), (1.0,), (3.0,))
    R, phase = polar_decompose(psi)
    valid = phase.S.valid
    np.testing.assert_allclose(recompose(R, phase)[valid], psi.amplitudes[0][valid], atol=1e-12)
    assert not phase.branch_jumps or all(j.residue < 1e-6 for j in phase.branch_jumps)


def test_polar_decompose_rejects_bad_input(packet, line_grid):
    with pytest.raises(DomainError):
        polar_decompose(packet, anchor=(0,))
    spinor = gaussian_packet(line_grid, (0.0,), (1.0,), spin=(1.0, 0.0))
    with pytest.raises(DomainError):
        polar_decompose(spinor)


def test_winding_loops(packet, ring_grid):
    with pytest.raises(DomainError):
        axis_loop(make_grid(1, 1, [64], [10.0], boundary="box"), 0)
    _, phase = polar_decompose(packet)
    with pytest.raises(DomainError):
        winding_number(phase, axis_loop(packet.grid, 0))

    half_turn = PhaseField(
        ring_grid,
        ScalarField(ring_grid, np.zeros(64)),
        VectorField(ring_grid, np.full((1, 64), 0.5)),
        [],
    )
    with pytest.raises(InconsistentPhaseError):
        winding_number(half_turn, axis_loop(ring_grid, 0))


def test_ring_state_satisfies_the_real_equations(ring_grid):
    psi = ring_state(ring_grid, 2)
    residuals = hamilton_jacobi_residuals(psi, step_split_spectral(psi, ZERO_POTENTIAL, 1e-3), ZERO_POTENTIAL, 1e-3)
    assert residuals.continuity < 1e-8
    assert residuals.hamilton_jacobi < 1e-6
    assert residuals.masked_fraction == 0.0


def test_harmonic_ground_state_satisfies_the_real_equations():
    grid = make_grid(1, 1, [128], [12.0 * math.sqrt(0.5)])
    potential = PotentialSpec("harmonic", omega=(1.0,))
    solver = make_solver("split_spectral", grid, potential, 1e-4, (1.0,))
    ground, energy = stationary_state(solver, gaussian_packet(grid, (0.0,), (math.sqrt(0.5),)))
    residuals = hamilton_jacobi_residuals(ground, solver.step(ground), potential, 1e-4)
    assert energy == pytest.approx(0.5, abs=1e-6)
    assert residuals.continuity < 1e-6
    assert residuals.hamilton_jacobi < 1e-6


def test_residuals_need_enough_unmasked_points(line_grid):
    narrow = gaussian_packet(line_grid, (0.0,), (0.3,))
    with pytest.raises(DegenerateInputError):
        hamilton_jacobi_residuals(narrow, narrow, ZERO_POTENTIAL, 0.01)


def test_phase_dump_carries_the_jump_ledger(tmp_path, ring_grid):
    _, phase = polar_decompose(ring_state(ring_grid, 1))
    save_phase_field(tmp_path / "phase.bin", phase)
    sidecar = json.loads((tmp_path / "phase.json").read_text())
    assert sidecar["branch_jumps"] == phase.ledger()
    assert (tmp_path / "phase_gradient.bin").exists()
