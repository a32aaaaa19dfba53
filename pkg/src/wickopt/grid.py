"""Voxel grids, seeded random streams and file IO.

Arrays are indexed ``data[x, y, z]``; on disk the payload is written with x
varying fastest (Fortran order of the ``(nx, ny, nz)`` array).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

VOXEL_MAGIC = "wickopt-voxel"
VOXEL_VERSION = 1
RNG_ALGORITHM = "numpy.Philox(SeedSequence(master_seed, spawn_key=(stream_id,)))"

_KIND_DTYPES = {"binary": np.dtype("u1"), "scalar": np.dtype("<f8"), "sdf": np.dtype("<f8")}


class VoxelFormatError(ValueError):
    """Raised for malformed voxel files."""


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """A 3-D voxel field with a physical voxel size in micrometres.

    ``kind`` is ``"binary"`` (0 = void, 1 = solid), ``"scalar"`` or ``"sdf"``.
    """

    data: np.ndarray
    voxel_size: float = 1.0
    kind: str = "binary"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KIND_DTYPES:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"grid data must be a non-empty 3-D array, got shape {arr.shape}")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        if self.kind == "binary":
            if arr.dtype != np.uint8:
                if not np.isin(arr, (0, 1)).all():
                    raise ValueError("binary grid must contain only 0 and 1")
                arr = arr.astype(np.uint8)
            elif arr.max(initial=0) > 1:
                raise ValueError("binary grid must contain only 0 and 1")
        else:
            arr = arr.astype(np.float64, copy=False)
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def solid(self) -> np.ndarray:
        return self.data.astype(bool)

    def volume_fraction(self) -> float:
        return float(self.data.mean())

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.voxel_size == other.voxel_size
            and self.data.shape == other.data.shape
            and self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


def unit_cell(data, side_um: float = 50.0, kind: str = "binary", **provenance) -> VoxelGrid:
    """Wrap an ``N**3`` array as a unit cell of side ``side_um``."""
    arr = np.asarray(data)
    if len(set(arr.shape)) != 1:
        raise ValueError(f"unit cell must be cubic, got {arr.shape}")
    return VoxelGrid(arr, side_um / arr.shape[0], kind, dict(provenance))


def require_simulation_size(grid: VoxelGrid, minimum: int = 8) -> None:
    if min(grid.dims) < minimum:
        raise ValueError(f"simulation grids need every dimension >= {minimum}, got {grid.dims}")


class SeededRng:
    """Replayable random stream keyed by ``(master_seed, stream_id)``.

    Built on numpy's counter-based Philox bit generator, whose output for a
    given key is identical across platforms.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def provenance(self) -> dict:
        return {"algorithm": self.algorithm, "master_seed": self.master_seed, "stream_id": self.stream_id}

    def standard_normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def __repr__(self):
        return f"SeededRng(master_seed={self.master_seed}, stream_id={self.stream_id})"


def derive_seed(master_seed: int, *path: int) -> int:
    """Deterministic 63-bit child seed for a position in a seed tree."""
    seq = np.random.SeedSequence(int(master_seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(p) for p in path))
    return int(seq.generate_state(1, np.uint64)[0] >> np.uint64(1))


# -- voxel files -------------------------------------------------------------

def write_voxel_file(grid: VoxelGrid, path) -> Path:
    path = Path(path)
    dtype = _KIND_DTYPES[grid.kind]
    nx, ny, nz = grid.dims
    header = {
        "format": VOXEL_MAGIC,
        "version": VOXEL_VERSION,
        "dims": [nx, ny, nz],
        "voxel_size_um": grid.voxel_size,
        "kind": grid.kind,
        "dtype": dtype.str,
        "order": "x-fastest",
        "provenance": grid.provenance,
    }
    payload = np.asarray(grid.data, dtype=dtype).ravel(order="F").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)
    return path


def read_voxel_file(path) -> VoxelGrid:
    with open(path, "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise VoxelFormatError("missing header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise VoxelFormatError(f"malformed header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != VOXEL_MAGIC:
        raise VoxelFormatError("not a wickopt voxel file")
    try:
        nx, ny, nz = (int(n) for n in header["dims"])
        kind = header["kind"]
        voxel_size = float(header["voxel_size_um"])
        dtype = np.dtype(header["dtype"])
    except (KeyError, TypeError, ValueError) as exc:
        raise VoxelFormatError(f"malformed header: {exc}") from None
    if kind not in _KIND_DTYPES or dtype != _KIND_DTYPES[kind]:
        raise VoxelFormatError(f"unsupported kind/dtype {kind!r}/{dtype}")
    if min(nx, ny, nz) < 1:
        raise VoxelFormatError(f"invalid dims {(nx, ny, nz)}")
    payload = raw[newline + 1:]
    expected = nx * ny * nz * dtype.itemsize
    if len(payload) != expected:
        raise VoxelFormatError(f"payload has {len(payload)} bytes, expected {expected} for dims {(nx, ny, nz)}")
    data = np.frombuffer(payload, dtype=dtype).reshape((nx, ny, nz), order="F")
    if kind == "binary" and data.max(initial=0) > 1:
        bad = int(data[data > 1][0])
        raise VoxelFormatError(f"unknown phase value {bad}")
    return VoxelGrid(data, voxel_size, kind, header.get("provenance") or {})


def export_vtk(grid_or_field, path, name: str = "phase", voxel_size: float | None = None) -> Path:
    """Write a legacy ASCII VTK STRUCTURED_POINTS file with one scalar array."""
    path = Path(path)
    if isinstance(grid_or_field, VoxelGrid):
        arr = grid_or_field.data
        spacing = grid_or_field.voxel_size if voxel_size is None else voxel_size
    else:
        arr = np.asarray(grid_or_field)
        spacing = 1.0 if voxel_size is None else voxel_size
    if arr.ndim != 3:
        raise ValueError("VTK export needs a 3-D array")
    nx, ny, nz = arr.shape
    integral = arr.dtype.kind in "biu"
    values = arr.ravel(order="F")
    lines = [
        "# vtk DataFile Version 3.0",
        f"wickopt {name}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} {nz}",
        "ORIGIN 0 0 0",
        f"SPACING {spacing:.9g} {spacing:.9g} {spacing:.9g}",
        f"POINT_DATA {values.size}",
        f"SCALARS {name} {'int' if integral else 'double'} 1",
        "LOOKUP_TABLE default",
    ]
    fmt = "%d" if integral else "%.9g"
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        np.savetxt(fh, values.reshape(-1, 1) if values.size < 9 else values.reshape(-1, _row_width(values.size)), fmt=fmt)
    return path


def _row_width(n: int) -> int:
    for w in (9, 8, 6, 5, 4, 3, 2):
        if n % w == 0:
            return w
    return 1


def read_vtk_scalars(path) -> tuple[tuple[int, int, int], float, np.ndarray]:
    """Parse a file written by :func:`export_vtk` (dims, spacing, flat values)."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    dims = tuple(int(t) for t in lines[4].split()[1:4])
    spacing = float(lines[6].split()[1])
    values = np.array(" ".join(lines[10:]).split(), dtype=float)
    return dims, spacing, values


# -- line-delimited records --------------------------------------------------

def append_records(path, records) -> None:
    """Append JSON records, one per line, through a single writer."""
    path = Path(path)
    with open(path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, default=_json_default))
            fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_records(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")
