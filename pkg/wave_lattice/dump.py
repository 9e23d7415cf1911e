"""
Binary grid dumps.

Layout (little-endian):
    magic   4 bytes  b"BOHM"
    version u32
    D       u32
    C       u32
    points  u32 * D
    extents f64 * D
    data    complex64 * C * prod(points), component-major, row-major per component

Each dump has a JSON sidecar (same stem, .json) with masses, hbar, boundary
and anything else the writer wants to keep.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from wave_lattice.errors import DomainError
from wave_lattice.models import Grid, ScalarField, VectorField, WaveFunction

logger = logging.getLogger(__name__)

MAGIC = b"BOHM"
VERSION = 1

PathLike = Union[str, Path]


def sidecar_path(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def write_grid_dump(
    path: PathLike,
    grid: Grid,
    values: np.ndarray,
    metadata: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Write values of shape (C, *grid.shape) plus the JSON sidecar.

    Args:
        path: Destination file (parents are created)
        grid: Grid the values live on
        values: Component-first array; real values are stored with zero imaginary part
        metadata: Extra sidecar entries

    Returns:
        Path of the binary dump
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values)
    if values.shape == grid.shape:
        values = values[np.newaxis]
    if values.shape[1:] != grid.shape:
        raise DomainError(f"dump values {values.shape} do not match grid {grid.shape}")

    header = (
        MAGIC
        + np.array([VERSION, grid.dimension, values.shape[0]], dtype="<u4").tobytes()
        + np.array(grid.points_per_axis, dtype="<u4").tobytes()
        + np.array(grid.axis_extent, dtype="<f8").tobytes()
    )
    payload = np.ascontiguousarray(values, dtype="<c8").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)

    sidecar = {
        "dims_per_particle": grid.dims_per_particle,
        "particle_count": grid.particle_count,
        "boundary": grid.boundary,
        "components": int(values.shape[0]),
    }
    sidecar.update(metadata or {})
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    logger.debug("wrote dump %s (%d components)", path, values.shape[0])
    return path


def read_grid_dump(path: PathLike) -> Tuple[Grid, np.ndarray, Dict[str, Any]]:
    """Read a dump written by write_grid_dump; returns (grid, complex128 values, sidecar)"""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise DomainError(f"{path} is not a grid dump")
    version, D, C = np.frombuffer(raw, dtype="<u4", count=3, offset=4)
    if version != VERSION:
        raise DomainError(f"unsupported dump version {version}")
    offset = 16
    points = np.frombuffer(raw, dtype="<u4", count=D, offset=offset)
    offset += 4 * int(D)
    extents = np.frombuffer(raw, dtype="<f8", count=D, offset=offset)
    offset += 8 * int(D)
    shape = (int(C),) + tuple(int(p) for p in points)
    values = np.frombuffer(raw, dtype="<c8", offset=offset).reshape(shape).astype(np.complex128)

    with open(sidecar_path(path), encoding="utf-8") as f:
        sidecar = json.load(f)
    grid = Grid(
        sidecar["dims_per_particle"],
        sidecar["particle_count"],
        tuple(int(p) for p in points),
        tuple(float(e) for e in extents),
        sidecar["boundary"],
    )
    return grid, values, sidecar


def save_wavefunction(path: PathLike, psi: WaveFunction, metadata: Optional[Dict[str, Any]] = None) -> Path:
    meta = {"kind": "wavefunction", "masses": list(psi.masses), "hbar": psi.hbar}
    meta.update(metadata or {})
    return write_grid_dump(path, psi.grid, psi.amplitudes, meta)


def load_wavefunction(path: PathLike) -> WaveFunction:
    grid, values, sidecar = read_grid_dump(path)
    return WaveFunction(grid, values, tuple(sidecar["masses"]), sidecar["hbar"])


def save_scalar_field(path: PathLike, field: ScalarField, metadata: Optional[Dict[str, Any]] = None) -> Path:
    meta = {"kind": "scalar"}
    meta.update(metadata or {})
    path = write_grid_dump(path, field.grid, field.values, meta)
    if field.mask is not None:
        write_grid_dump(Path(path).with_name(Path(path).stem + "_mask.bin"), field.grid,
                        field.mask.astype(float), {"kind": "mask"})
    return path


def save_vector_field(path: PathLike, field: VectorField, metadata: Optional[Dict[str, Any]] = None) -> Path:
    meta = {"kind": "vector"}
    meta.update(metadata or {})
    path = write_grid_dump(path, field.grid, field.values, meta)
    if field.mask is not None:
        write_grid_dump(Path(path).with_name(Path(path).stem + "_mask.bin"), field.grid,
                        field.mask.astype(float), {"kind": "mask"})
    return path


def load_scalar_field(path: PathLike) -> ScalarField:
    grid, values, _ = read_grid_dump(path)
    mask_path = Path(path).with_name(Path(path).stem + "_mask.bin")
    mask = None
    if mask_path.exists():
        mask = read_grid_dump(mask_path)[1][0].real > 0.5
    return ScalarField(grid, values[0].real, mask)
