"""
Tests for the Eulerian solvers: closed-form packets, splitting order, norm
conservation, Pauli stepping, playback and record persistence.
"""

import math

import numpy as np
import pytest

from bohm_dynamics.models import MagneticSpec
from bohm_dynamics.solver import (
    RecordPlayback,
    combine_records,
    evolve,
    load_record,
    make_solver,
    save_record,
    stationary_state,
    step_pauli,
    time_reversal_error,
)
from wave_lattice.errors import ConfigurationError, DomainError, NumericalInstabilityError
from wave_lattice.grid import density, density_moments, gaussian_packet, make_grid, norm, phase_aligned_distance, superpose
from wave_lattice.models import PotentialSpec, ScalarField, ZERO_POTENTIAL

HARMONIC = PotentialSpec("harmonic", omega=(1.0,))


def coherent_state(grid, x0, t):
    sigma = math.sqrt(0.5)
    return gaussian_packet(grid, (x0 * math.cos(t),), (sigma,), (-x0 * math.sin(t),))


def test_free_gaussian_width_law(packet):
    record = evolve(packet, ZERO_POTENTIAL, 1.0, 0.01, 100)
    _, variances = density_moments(density(record.final))
    expected = 1.0 + (1.0 / 2.0) ** 2
    assert abs(variances[0] - expected) / expected < 1e-3
    assert record.times == pytest.approx([0.0, 1.0])


def test_split_step_conserves_the_norm(packet):
    record = evolve(packet, HARMONIC, 10.0, 0.001, 10_000)
    assert abs(norm(record.final) ** 2 - 1.0) < 1e-10


def test_crank_nicolson_conserves_the_norm_and_tracks_the_spectral_solver(packet):
    spectral = evolve(packet, HARMONIC, 0.5, 0.005, 100).final
    implicit = evolve(packet, HARMONIC, 0.5, 0.005, 100, method="crank_nicolson").final
    assert abs(norm(implicit) ** 2 - 1.0) < 1e-10
    assert phase_aligned_distance(spectral, implicit) < 2e-2


def test_halving_dt_divides_the_splitting_error_by_four(line_grid):
    psi0 = coherent_state(line_grid, 2.0, 0.0)
    exact = coherent_state(line_grid, 2.0, 1.0)
    errors = [
        phase_aligned_distance(evolve(psi0, HARMONIC, 1.0, dt, int(round(1.0 / dt))).final, exact)
        for dt in (0.02, 0.01)
    ]
    assert 3.5 <= errors[0] / errors[1] <= 4.5


def test_conjugated_evolution_retraces_its_path(line_grid):
    psi0 = gaussian_packet(line_grid, (1.0,), (1.0,), (2.0,))
    for method in ("split_spectral", "crank_nicolson"):
        assert time_reversal_error(psi0, HARMONIC, 1.0, 0.01, method) < 1e-8
    spinor = gaussian_packet(line_grid, (0.0,), (1.0,), spin=(2 ** -0.5, 2 ** -0.5))
    with pytest.raises(DomainError):
        time_reversal_error(spinor, HARMONIC, 1.0, 0.01)


def test_evolve_rejects_inconsistent_steps(packet):
    with pytest.raises(ConfigurationError):
        evolve(packet, ZERO_POTENTIAL, 1.0, 0.3)
    with pytest.raises(ConfigurationError):
        evolve(packet, ZERO_POTENTIAL, 1.0, 0.1, snapshot_stride=3)
    with pytest.raises(DomainError):
        evolve(packet, ZERO_POTENTIAL, -1.0, 0.1)


def test_zero_time_returns_the_initial_state(packet):
    record = evolve(packet, ZERO_POTENTIAL, 0.0, 0.1)
    assert len(record.snapshots) == 1 and record.final is packet


def test_norm_drift_names_module_and_step(packet):
    with pytest.raises(NumericalInstabilityError) as info:
        evolve(packet, ZERO_POTENTIAL, 0.1, 0.01, 5, norm_tolerance=-1.0)
    assert info.value.module == "eulerian-solver"
    assert info.value.step == 5


def test_split_step_on_a_box_needs_a_wall():
    grid = make_grid(1, 1, [128], [20.0], boundary="box")
    with pytest.raises(ConfigurationError):
        make_solver("split_spectral", grid, ZERO_POTENTIAL, 0.01, (1.0,))
    make_solver("split_spectral", grid, PotentialSpec(wall_height=1e3), 0.01, (1.0,))
    make_solver("crank_nicolson", grid, ZERO_POTENTIAL, 0.01, (1.0,))


def test_stern_gerlach_field_splits_the_spinor():
    grid = make_grid(1, 1, [256], [48.0])
    magnetic = MagneticSpec(moments=(1.0,), field_gradient=((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 4.0)))
    psi = gaussian_packet(grid, (0.0,), (1.0,), spin=(2 ** -0.5, 2 ** -0.5))
    final = evolve(psi, ZERO_POTENTIAL, 1.0, 0.01, 100, magnetic=magnetic).final
    up = ScalarField(grid, np.abs(final.amplitudes[0]) ** 2)
    down = ScalarField(grid, np.abs(final.amplitudes[1]) ** 2)
    # force -mu b on the up component, +mu b on the down component
    assert density_moments(up)[0][0] == pytest.approx(-2.0, abs=1e-3)
    assert density_moments(down)[0][0] == pytest.approx(2.0, abs=1e-3)
    assert up.integral() == pytest.approx(0.5, abs=1e-10)


def test_pauli_step_needs_a_spinor(packet):
    magnetic = MagneticSpec(moments=(1.0,), field_uniform=(0.0, 0.0, 1.0))
    with pytest.raises(DomainError):
        step_pauli(packet, ZERO_POTENTIAL, magnetic, 0.01)
    with pytest.raises(ConfigurationError):
        make_solver("crank_nicolson", packet.grid, ZERO_POTENTIAL, 0.01, (1.0,), magnetic=magnetic)


def test_playback_matches_direct_stepping(packet):
    record = evolve(packet, HARMONIC, 0.2, 0.01, 10)
    playback = RecordPlayback(record)
    direct = evolve(packet, HARMONIC, 0.05, 0.01, 5).final
    np.testing.assert_allclose(playback.wave_at(0.05).amplitudes, direct.amplitudes, atol=1e-10)
    assert playback.wave_at(0.1) is record.snapshots[1]
    with pytest.raises(DomainError):
        playback.wave_at(0.3)


def test_combined_records_evolve_the_superposition(line_grid):
    a = gaussian_packet(line_grid, (-2.0,), (0.7,), (1.0,))
    b = gaussian_packet(line_grid, (2.0,), (0.7,), (-1.0,))
    coefficients = (0.6, 0.8j)
    records = [evolve(psi, HARMONIC, 0.5, 0.01, 10) for psi in (a, b)]
    combined = combine_records(records, coefficients)
    direct = evolve(superpose([a, b], coefficients, renormalize=False), HARMONIC, 0.5, 0.01, 10)
    for mixed, expected in zip(combined.snapshots, direct.snapshots):
        np.testing.assert_allclose(mixed.amplitudes, expected.amplitudes, atol=1e-10)


def test_stationary_state_is_a_fixed_point_of_the_step():
    grid = make_grid(1, 1, [128], [8.5])
    guess = gaussian_packet(grid, (0.0,), (math.sqrt(0.5),))
    solver = make_solver("split_spectral", grid, HARMONIC, 0.01, (1.0,))
    ground, energy = stationary_state(solver, guess)
    assert energy == pytest.approx(0.5, abs=1e-3)
    assert norm(ground) == pytest.approx(1.0, abs=1e-10)
    assert phase_aligned_distance(solver.step(ground), ground) < 1e-6
    assert phase_aligned_distance(ground, guess) < 1e-3


def test_stationary_state_size_cap(packet):
    solver = make_solver("split_spectral", packet.grid, HARMONIC, 0.01, (1.0,))
    with pytest.raises(ConfigurationError):
        stationary_state(solver, packet, max_size=100)


def test_record_directory_keeps_snapshots_and_dynamics(tmp_path, packet):
    record = evolve(packet, HARMONIC, 0.1, 0.01, 5)
    load = load_record(save_record(record, tmp_path / "record"))
    assert load.times == pytest.approx(record.times)
    assert load.method == "split_spectral" and load.dt == 0.01
    assert load.potential == HARMONIC
    np.testing.assert_allclose(load.final.amplitudes, record.final.amplitudes, atol=1e-6)
