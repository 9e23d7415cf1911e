"""
Tests for sampling, trajectory integration and equivariance.
"""

import numpy as np
import pytest

from bohm_dynamics.models import TrajectoryFlag
from bohm_dynamics.solver import evolve
from bohm_dynamics.trajectories import (
    empirical_density,
    equivariance_growth,
    equivariance_report,
    integrate_trajectory,
    is_product_density,
    non_crossing_violations,
    propagate_ensemble,
    sample_initial,
    uniform_sample,
)
from wave_lattice.errors import ConfigurationError, DomainError
from wave_lattice.grid import density_values, gaussian_packet, make_grid, ring_state
from wave_lattice.models import PotentialSpec, ZERO_POTENTIAL


@pytest.fixture
def free_record(packet):
    return evolve(packet, ZERO_POTENTIAL, 1.0, 0.01, 10)


def antisymmetric_pair(grid):
    a = gaussian_packet(grid, (-1.5, 1.5), (0.7, 0.7))
    b = gaussian_packet(grid, (1.5, -1.5), (0.7, 0.7))
    return a.with_amplitudes(a.amplitudes - b.amplitudes)


def test_sampling_is_reproducible(line_grid):
    psi = gaussian_packet(line_grid, (1.5,), (0.8,))
    first = sample_initial(psi, 500, seed=7)
    np.testing.assert_array_equal(first, sample_initial(psi, 500, seed=7))
    assert not np.array_equal(first, sample_initial(psi, 500, seed=8))


def test_inverse_cdf_sample_matches_the_packet(line_grid):
    psi = gaussian_packet(line_grid, (1.5,), (0.8,))
    q = sample_initial(psi, 20_000, seed=1)
    assert q.shape == (20_000, 1)
    assert q.mean() == pytest.approx(1.5, abs=0.03)
    assert q.var() == pytest.approx(0.64, abs=0.05)


def test_product_detection(pair_grid):
    product = gaussian_packet(pair_grid, (-1.0, 1.0), (0.8, 0.8))
    assert is_product_density(density_values(product.amplitudes))
    assert not is_product_density(density_values(antisymmetric_pair(pair_grid).amplitudes))


def test_metropolis_sampling_avoids_the_node_line(pair_grid):
    psi = antisymmetric_pair(pair_grid)
    with pytest.raises(DomainError):
        sample_initial(psi, 100, seed=3, method="inverse_cdf")
    q = sample_initial(psi, 1000, seed=3)
    assert q.shape == (1000, 2)
    assert np.all(pair_grid.contains(q))
    # the pair sits near (-1.5, 1.5) and (1.5, -1.5)
    assert np.mean(np.abs(q[:, 0] - q[:, 1])) > 1.5
    np.testing.assert_array_equal(q, sample_initial(psi, 1000, seed=3))


def test_sampling_rejects_bad_arguments(packet):
    with pytest.raises(DomainError):
        sample_initial(packet, 0, seed=1)
    with pytest.raises(ConfigurationError):
        sample_initial(packet, 10, seed=1, method="rejection")


def test_uniform_sample_covers_the_grid(line_grid):
    q = uniform_sample(line_grid, 5000, seed=2)
    assert np.all(line_grid.contains(q))
    assert q.min() < -9.0 and q.max() > 9.0


def test_trajectory_follows_the_spreading_packet(line_grid):
    # Q(t) = k t + Q0 sqrt(1 + t^2 / 4) for sigma 1 centered at 0
    psi = gaussian_packet(line_grid, (0.0,), (1.0,), (1.0,))
    record = evolve(psi, ZERO_POTENTIAL, 1.0, 0.01, 10)
    trajectory = integrate_trajectory(record, [1.0], 0.01)
    assert len(trajectory.times) == 101
    assert trajectory.points[-1, 0] == pytest.approx(1.0 + np.sqrt(1.25), abs=1e-4)
    assert trajectory.ok


def test_ring_trajectories_are_unwrapped():
    grid = make_grid(1, 1, [64], [2 * np.pi])
    record = evolve(ring_state(grid, 2), ZERO_POTENTIAL, 1.0, 0.01, 10)
    trajectory = integrate_trajectory(record, [3.0], 0.01, output="snapshots")
    assert trajectory.points[-1, 0] == pytest.approx(5.0, abs=1e-8)


def test_ensemble_stays_equivariant(packet, free_record):
    q0 = sample_initial(packet, 20_000, seed=11)
    ensemble = propagate_ensemble(free_record, q0, 0.05, seed=11)
    assert ensemble.seed == 11
    np.testing.assert_allclose(ensemble.times, free_record.times)
    report = equivariance_report(ensemble, free_record)
    assert len(report) == len(free_record.times)
    assert max(entry["tv_distance"] for entry in report) < 0.05
    assert non_crossing_violations(ensemble) == 0
    assert empirical_density(ensemble, 1.0).integral() == pytest.approx(1.0)
    assert equivariance_growth(report) <= 0.02


def test_equivariance_growth_is_measured_from_the_first_snapshot():
    rows = [{"t": 0.0, "tv_distance": 0.01}, {"t": 0.5, "tv_distance": 0.04}, {"t": 1.0, "tv_distance": 0.02}]
    assert equivariance_growth(rows) == pytest.approx(0.03)
    assert equivariance_growth(rows[:1]) == 0.0
    with pytest.raises(DomainError):
        equivariance_growth([])


def test_start_points_outside_the_box_are_frozen():
    grid = make_grid(1, 1, [128], [20.0], boundary="box")
    psi = gaussian_packet(grid, (0.0,), (1.0,))
    record = evolve(psi, PotentialSpec(wall_height=1e3), 0.1, 0.01, 5)
    ensemble = propagate_ensemble(record, [[0.5], [11.0]], 0.01)
    assert np.all(ensemble.flags[1] == TrajectoryFlag.LEFT_DOMAIN)
    np.testing.assert_allclose(ensemble.points[1, :, 0], 11.0)
    assert ensemble.flag_summary()["left_domain"] == 1


def test_trajectory_step_cannot_exceed_the_snapshot_interval(free_record):
    with pytest.raises(ConfigurationError):
        propagate_ensemble(free_record, [[0.0]], 0.2)
    with pytest.raises(DomainError):
        propagate_ensemble(free_record, [[0.0, 1.0]], 0.01)


def test_non_crossing_is_one_dimensional(pair_grid):
    psi = gaussian_packet(pair_grid, (0.0, 0.0), (1.0, 1.0))
    record = evolve(psi, ZERO_POTENTIAL, 0.1, 0.05, 1)
    ensemble = propagate_ensemble(record, [[0.0, 0.0], [1.0, -1.0]], 0.05)
    with pytest.raises(DomainError):
        non_crossing_violations(ensemble)
