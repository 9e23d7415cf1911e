"""
Tests for the Lagrangian quantum trajectory method: density estimation,
ensemble stepping and wave-function reconstruction.
"""

import numpy as np
import pytest

from bohm_dynamics.models import QtmSettings, QtmState
from bohm_dynamics.qtm import (
    aligned_error,
    bandwidth_rule,
    ensemble_forces,
    estimate_density,
    guidance_endpoint_error,
    modulus_error,
    qtm_init,
    qtm_run,
    reconstruct_wavefunction,
    refinement_is_monotone,
    scatter_velocities,
)
from bohm_dynamics.solver import evolve
from bohm_dynamics.trajectories import sample_initial
from wave_lattice.errors import AccuracyError, AccuracyWarning, ConfigurationError, DomainError, NumericalInstabilityError
from wave_lattice.grid import density_moments, gaussian_packet
from wave_lattice.models import PotentialSpec, ZERO_POTENTIAL


def moving_state(psi, n, seed, velocity):
    points = sample_initial(psi, n, seed)
    return QtmState(psi.grid, points, np.full_like(points, velocity), 0.0, bandwidth_rule(points), psi.masses)


def test_bandwidth_rule(rng):
    points = rng.standard_normal((10_000, 1))
    assert bandwidth_rule(points) == pytest.approx(10_000 ** -0.2, rel=0.02)
    assert bandwidth_rule(points, 2.0) == pytest.approx(2.0 * bandwidth_rule(points))


def test_density_estimate_is_normalized_and_keeps_the_variance(line_grid, rng):
    points = rng.standard_normal((10_000, 1))
    h = bandwidth_rule(points)
    corrected = estimate_density(points, h, line_grid, variance_correction=True)
    plain = estimate_density(points, h, line_grid)
    assert corrected.integral() == pytest.approx(1.0)
    assert np.all(corrected.values > 0)
    assert abs(density_moments(corrected)[1][0] - points.var()) < 5e-3
    assert density_moments(plain)[1][0] - points.var() > 0.02
    with pytest.raises(DomainError):
        estimate_density(points, 0.0, line_grid)


def test_state_validation(line_grid, rng):
    points = rng.standard_normal((200, 1))
    with pytest.raises(DomainError):
        QtmState(line_grid, points, np.zeros_like(points), 0.0, 0.001, (1.0,))
    with pytest.raises(DomainError):
        QtmState(line_grid, points[:50], np.zeros((50, 1)), 0.0, 0.5, (1.0,))
    with pytest.raises(DomainError):
        qtm_init(gaussian_packet(line_grid, (0.0,), (1.0,)), 99, seed=1)


def test_reconstruction_of_a_moving_packet(line_grid):
    psi = gaussian_packet(line_grid, (0.0,), (1.0,), (1.0,))
    state = moving_state(psi, 20_000, 5, 1.0)
    wave = reconstruct_wavefunction(state)
    assert modulus_error(wave, psi) < 0.05
    assert aligned_error(wave, psi) < 0.05
    assert wave.component_anchors == [wave.gauge_anchor]
    assert wave.norm() == pytest.approx(1.0, abs=1e-3)


def test_moving_the_gauge_anchor_shifts_the_phase_by_a_constant(line_grid):
    psi = gaussian_packet(line_grid, (0.0,), (1.0,), (1.0,))
    state = moving_state(psi, 5000, 6, 1.0)
    first = reconstruct_wavefunction(state, gauge_anchor=(128,))
    second = reconstruct_wavefunction(state, gauge_anchor=(140,))
    visited = first.phase.valid
    difference = first.phase.values[visited] - second.phase.values[visited]
    np.testing.assert_allclose(difference, difference[0], atol=1e-10)
    with pytest.raises(DomainError):
        reconstruct_wavefunction(state, gauge_anchor=(0,))


def separated_state(grid):
    left = gaussian_packet(grid, (-5.0,), (0.4,))
    right = gaussian_packet(grid, (5.0,), (0.4,))
    points = np.concatenate([sample_initial(left, 2000, 1), sample_initial(right, 2000, 2)])
    return QtmState(grid, points, np.zeros_like(points), 0.0, 0.2, (1.0,))


def test_separated_packets_get_their_own_anchors(line_grid, monkeypatch):
    monkeypatch.setenv("PILOTWAVE_STRICT", "0")
    with pytest.warns(AccuracyWarning, match="split into 2 components"):
        wave = reconstruct_wavefunction(separated_state(line_grid))
    assert len(wave.component_anchors) == 2


def test_split_reconstruction_fails_in_strict_mode(line_grid, monkeypatch):
    monkeypatch.setenv("PILOTWAVE_STRICT", "1")
    state = separated_state(line_grid)
    with pytest.raises(AccuracyError):
        reconstruct_wavefunction(state)
    with pytest.warns(AccuracyWarning):
        reconstruct_wavefunction(state, strict=False)


def test_scattered_velocities_keep_a_uniform_flow(line_grid):
    psi = gaussian_packet(line_grid, (0.0,), (1.0,))
    state = moving_state(psi, 500, 3, -0.7)
    np.testing.assert_allclose(scatter_velocities(state, line_grid), -0.7)


def test_force_cap_aborts_the_run(line_grid):
    psi = gaussian_packet(line_grid, (0.0,), (1.0,))
    settings = QtmSettings(force_cap=1e-6)
    state = qtm_init(psi, 500, 4, settings)
    with pytest.raises(NumericalInstabilityError) as info:
        ensemble_forces(state, PotentialSpec("harmonic", omega=(1.0,)), settings, step=3)
    assert info.value.module == "lagrangian-qtm"


def test_short_run_tracks_the_guidance_trajectories(packet):
    states, waves = qtm_run(packet, ZERO_POTENTIAL, 2000, 0.1, 0.01, seed=9)
    assert len(states) == len(waves) == 2
    assert states[-1].time == pytest.approx(0.1)
    record = evolve(packet, ZERO_POTENTIAL, 0.1, 0.01, 10)
    assert guidance_endpoint_error(states[0], states[-1], record, 0.01) < 0.05
    with pytest.raises(ConfigurationError):
        qtm_run(packet, ZERO_POTENTIAL, 200, 0.1, 0.03, seed=9)


def test_refinement_monotonicity():
    rows = [
        {"n": 1000, "dt": 0.01, "error": 0.04},
        {"n": 1000, "dt": 0.005, "error": 0.041},
        {"n": 4000, "dt": 0.01, "error": 0.02},
        {"n": 4000, "dt": 0.005, "error": 0.019},
    ]
    assert refinement_is_monotone(rows)
    rows[2]["error"] = 0.05
    assert not refinement_is_monotone(rows)


def test_boosted_packet_starts_with_the_group_velocity(line_grid):
    psi = gaussian_packet(line_grid, (0.0,), (1.0,), (1.5,), masses=(2.0,))
    state = qtm_init(psi, 1000, seed=4)
    np.testing.assert_allclose(state.velocities, 0.75, atol=1e-6)
    assert state.velocities.mean() == pytest.approx(0.75, abs=1e-6)


def test_scaling_mass_and_time_together_keeps_the_paths(line_grid):
    light = gaussian_packet(line_grid, (0.0,), (1.0,))
    heavy = gaussian_packet(line_grid, (0.0,), (1.0,), masses=(2.0,))
    light_states, _ = qtm_run(light, ZERO_POTENTIAL, 500, 0.1, 0.01, seed=8)
    heavy_states, _ = qtm_run(heavy, ZERO_POTENTIAL, 500, 0.2, 0.02, seed=8)
    assert heavy_states[-1].time == pytest.approx(2.0 * light_states[-1].time)
    np.testing.assert_allclose(heavy_states[-1].points, light_states[-1].points, atol=1e-9)
    np.testing.assert_allclose(2.0 * heavy_states[-1].velocities, light_states[-1].velocities, atol=1e-9)


def test_modulus_error_follows_the_monte_carlo_rate(packet):
    def mean_error(n):
        return np.mean([modulus_error(reconstruct_wavefunction(qtm_init(packet, n, seed)), packet) for seed in range(8)])

    # the bandwidth shrinks with n, so the rate sits a little below n^(-1/2)
    coarse, fine = mean_error(1000), mean_error(4000)
    assert fine < 0.05
    assert 1.3 < coarse / fine < 2.8
