"""
Tests for the lattice layer: grids, initial data, derivatives, interpolation
and the binary dump format.
"""

import json

import numpy as np
import pytest

from wave_lattice.dump import load_scalar_field, load_wavefunction, read_grid_dump, save_scalar_field, save_wavefunction
from wave_lattice.errors import AccuracyError, AccuracyWarning, ConfigurationError, DomainError
from wave_lattice.grid import (
    density,
    density_moments,
    derivative,
    gaussian_packet,
    inner_product,
    interpolate,
    make_grid,
    norm,
    phase_aligned_distance,
    plane_wave,
    potential_values,
    ring_state,
    superpose,
)
from wave_lattice.models import Grid, PotentialSpec, ScalarField, WaveFunction


def test_make_grid_spacing():
    assert make_grid(1, 1, [256], [40.0]).spacing[0] == pytest.approx(0.15625)


def test_spectral_grid_needs_power_of_two():
    with pytest.raises(ConfigurationError):
        make_grid(1, 1, [100], [10.0])
    grid = make_grid(1, 1, [100], [10.0], spectral=False)
    assert grid.shape == (100,)


def test_dimension_cap():
    with pytest.raises(ConfigurationError):
        make_grid(2, 2, [8] * 4, [1.0] * 4)


def test_grid_rejects_tiny_axes_and_bad_extents():
    with pytest.raises(DomainError):
        Grid(1, 1, (2,), (1.0,))
    with pytest.raises(DomainError):
        Grid(1, 1, (8,), (0.0,))
    with pytest.raises(DomainError):
        Grid(1, 2, (8,), (1.0,))


def test_coordinates_and_index_maps():
    grid = make_grid(1, 1, [8], [8.0])
    np.testing.assert_allclose(grid.axis_coordinates(0), np.arange(-4.0, 4.0))
    # periodic index wraps, box index clips
    assert grid.coordinate_to_index([[4.2]])[0, 0] == 0
    box = make_grid(1, 1, [8], [8.0], boundary="box")
    assert box.coordinate_to_index([[4.2]])[0, 0] == 7
    assert not box.contains([[3.5]])[0]
    assert grid.minimal_image([7.0])[0] == pytest.approx(-1.0)


def test_gaussian_packet_is_normalized_with_expected_moments(line_grid):
    psi = gaussian_packet(line_grid, (1.5,), (0.8,))
    assert norm(psi) == pytest.approx(1.0, abs=1e-12)
    means, variances = density_moments(density(psi))
    assert means[0] == pytest.approx(1.5, abs=1e-10)
    assert variances[0] == pytest.approx(0.64, abs=1e-10)


def test_packet_leaking_to_the_boundary_warns_or_raises():
    grid = make_grid(1, 1, [64], [4.0])
    with pytest.warns(AccuracyWarning):
        gaussian_packet(grid, (0.0,), (1.0,))
    with pytest.raises(AccuracyError):
        gaussian_packet(grid, (0.0,), (1.0,), strict=True)


def test_wavefunction_validation(line_grid):
    with pytest.raises(DomainError):
        WaveFunction(line_grid, np.ones((3,) + line_grid.shape), (1.0,))
    with pytest.raises(DomainError):
        WaveFunction(line_grid, np.ones(line_grid.shape), (1.0, 1.0))
    values = np.ones(line_grid.shape)
    values[3] = np.nan
    with pytest.raises(DomainError):
        WaveFunction(line_grid, values, (1.0,))


def test_phase_aligned_distance_ignores_global_phase(packet):
    rotated = packet.with_amplitudes(packet.amplitudes * np.exp(0.7j))
    assert phase_aligned_distance(packet, rotated) < 1e-6
    assert abs(inner_product(packet, rotated)) == pytest.approx(1.0, abs=1e-12)


def test_superpose_renormalizes(line_grid):
    a = gaussian_packet(line_grid, (-3.0,), (0.5,))
    b = gaussian_packet(line_grid, (3.0,), (0.5,))
    psi = superpose([a, b], [1.0, 1j])
    assert norm(psi) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        superpose([a, b], [1.0])


def test_plane_wave_and_ring_state_have_uniform_density():
    grid = make_grid(1, 1, [64], [2 * np.pi])
    for psi in (plane_wave(grid, (3.0,)), ring_state(grid, 2)):
        rho = density(psi).values
        np.testing.assert_allclose(rho, rho[0], rtol=1e-12)
    with pytest.raises(DomainError):
        ring_state(make_grid(1, 1, [64], [2 * np.pi], boundary="box"), 1)


def test_spectral_derivative_of_a_sine():
    grid = make_grid(1, 1, [64], [2 * np.pi])
    x = grid.axis_coordinates(0)
    np.testing.assert_allclose(derivative(np.sin(3 * x), grid, 0), 3 * np.cos(3 * x), atol=1e-10)
    np.testing.assert_allclose(derivative(np.sin(3 * x), grid, 0, order=2), -9 * np.sin(3 * x), atol=1e-9)


def test_box_derivative_is_exact_for_quadratics_away_from_walls():
    grid = make_grid(1, 1, [40], [4.0], boundary="box", spectral=False)
    x = grid.axis_coordinates(0)
    interior = slice(2, -2)
    np.testing.assert_allclose(derivative(x ** 2, grid, 0)[interior], 2 * x[interior], atol=1e-10)
    np.testing.assert_allclose(derivative(x ** 2, grid, 0, order=2)[interior], 2.0, atol=1e-9)


def test_trilinear_interpolation_reproduces_linear_fields():
    grid = make_grid(1, 2, [16, 16], [8.0, 8.0], boundary="box")
    x, y = grid.coordinates()
    values = 2.0 * x - 0.5 * y + 1.0
    points = np.array([[0.3, -1.1], [2.25, 1.7], [-3.0, 0.0]])
    expected = 2.0 * points[:, 0] - 0.5 * points[:, 1] + 1.0
    np.testing.assert_allclose(interpolate(values, grid, points), expected, atol=1e-12)


def test_spectral_interpolation_of_a_band_limited_field():
    grid = make_grid(1, 1, [32], [2 * np.pi])
    x = grid.axis_coordinates(0)
    points = np.array([[0.123], [1.7], [-2.9]])
    result = interpolate(np.cos(2 * x), grid, points, "spectral")
    np.testing.assert_allclose(result, np.cos(2 * points[:, 0]), atol=1e-12)


def test_harmonic_and_wall_potentials():
    grid = make_grid(1, 1, [64], [16.0], boundary="box")
    x = grid.axis_coordinates(0)
    V = potential_values(PotentialSpec("harmonic", omega=(2.0,)), grid, (3.0,))
    np.testing.assert_allclose(V, 0.5 * 3.0 * 4.0 * x ** 2)
    walled = potential_values(PotentialSpec(wall_height=50.0, wall_width=0.1), grid)
    assert walled[0] == 50.0 and walled[32] == 0.0


def test_potential_spec_validation():
    with pytest.raises(DomainError):
        PotentialSpec("quartic")
    with pytest.raises(DomainError):
        PotentialSpec("custom_table")


def test_wavefunction_dump_keeps_grid_and_metadata(tmp_path, pair_grid):
    psi = gaussian_packet(pair_grid, (-1.0, 1.0), (0.8, 0.8), (0.5, 0.0), masses=(2.0, 3.0))
    path = save_wavefunction(tmp_path / "psi.bin", psi, {"t": 0.25})
    assert path.read_bytes()[:4] == b"BOHM"
    sidecar = json.loads((tmp_path / "psi.json").read_text())
    assert sidecar["t"] == 0.25 and sidecar["masses"] == [2.0, 3.0]

    loaded = load_wavefunction(path)
    assert loaded.grid == pair_grid
    assert loaded.masses == (2.0, 3.0)
    np.testing.assert_allclose(loaded.amplitudes, psi.amplitudes, atol=1e-6)


def test_scalar_dump_carries_its_mask(tmp_path, line_grid):
    mask = np.arange(256) % 3 != 0
    field = ScalarField(line_grid, np.linspace(0.0, 1.0, 256), mask)
    save_scalar_field(tmp_path / "field.bin", field)
    loaded = load_scalar_field(tmp_path / "field.bin")
    np.testing.assert_array_equal(loaded.valid, mask)
    grid, values, _ = read_grid_dump(tmp_path / "field.bin")
    assert grid == line_grid and values.shape == (1, 256)
