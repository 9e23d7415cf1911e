"""
Tests for the guidance law and its point evaluation.
"""

import numpy as np
import pytest

from bohm_dynamics.guidance import build_probe, continuity_residual, probability_current, velocity_at, velocity_field
from bohm_dynamics.solver import evolve, step_split_spectral
from wave_lattice.errors import DomainError
from wave_lattice.grid import gaussian_packet, make_grid, plane_wave, ring_state
from wave_lattice.models import WaveFunction, ZERO_POTENTIAL


def test_plane_wave_moves_with_hbar_k_over_m():
    grid = make_grid(1, 1, [64], [2 * np.pi])
    psi = plane_wave(grid, (3.0,), masses=(2.0,))
    field = velocity_field(psi)
    np.testing.assert_allclose(field.values[0], 1.5, atol=1e-10)
    assert field.valid.all()


def test_real_wave_function_carries_no_current(packet):
    np.testing.assert_allclose(probability_current(packet).values, 0.0, atol=1e-12)


def test_standing_wave_nodes_are_masked():
    grid = make_grid(1, 1, [64], [2 * np.pi])
    x = grid.axis_coordinates(0)
    psi = WaveFunction(grid, np.cos(x).astype(complex), (1.0,))
    field = velocity_field(psi)
    # x = -pi/2 is the 16th lattice point
    assert not field.valid[16]
    assert field.valid[0]
    assert np.all(np.isfinite(field.values))


def test_spreading_packet_velocity_is_linear_in_position(packet):
    # free Gaussian, sigma 1: v(x, t) = x t / (4 + t^2)
    final = evolve(packet, ZERO_POTENTIAL, 1.0, 0.01, 100).final
    points = np.array([[-1.3], [0.4], [2.2]])
    for scheme in ("trilinear", "spectral"):
        velocity = velocity_at(build_probe(final, scheme), points)
        np.testing.assert_allclose(velocity[:, 0], 0.2 * points[:, 0], atol=1e-6)


def test_single_point_evaluation_returns_a_vector(line_grid):
    psi = gaussian_packet(line_grid, (0.0,), (1.0,), (2.0,))
    v = velocity_at(build_probe(psi), [0.5])
    assert v.shape == (1,)
    assert v[0] == pytest.approx(2.0, abs=1e-9)


def test_velocity_at_rejects_bad_points():
    grid = make_grid(1, 1, [64], [10.0], boundary="box")
    probe = build_probe(gaussian_packet(grid, (0.0,), (0.5,)))
    with pytest.raises(DomainError):
        velocity_at(probe, [6.0])
    with pytest.raises(DomainError):
        velocity_at(probe, [[0.0, 1.0]])


def test_node_epsilon_range(packet):
    with pytest.raises(DomainError):
        build_probe(packet, node_epsilon=0.1)


def test_continuity_holds_between_steps(packet):
    ring = ring_state(make_grid(1, 1, [64], [2 * np.pi]), 2)
    assert continuity_residual(ring, step_split_spectral(ring, ZERO_POTENTIAL, 1e-3), 1e-3) < 1e-10

    moving = gaussian_packet(packet.grid, (0.0,), (1.0,), (1.0,))
    assert continuity_residual(moving, step_split_spectral(moving, ZERO_POTENTIAL, 1e-3), 1e-3) < 1e-4


def test_continuity_needs_a_shared_grid(packet):
    other = gaussian_packet(make_grid(1, 1, [128], [20.0]), (0.0,), (1.0,))
    with pytest.raises(DomainError):
        continuity_residual(packet, other, 0.1)
