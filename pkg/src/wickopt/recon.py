"""FFT reconstruction of binary microstructures from a target SDF."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import SeededRng, VoxelGrid
from .sdfgen import DegenerateSdfError, SdfParams, build_sdf

DEFAULT_SIDE_UM = 50.0


@dataclass(frozen=True, eq=False)
class Microstructure:
    """Binary unit cell plus the design point and seed that produced it."""

    grid: VoxelGrid
    params: SdfParams | None = None
    seed: int | None = None
    v_real: float = 0.0

    @property
    def solid(self) -> np.ndarray:
        return self.grid.solid

    @property
    def n(self) -> int:
        return self.grid.dims[0]

    def with_solid(self, solid: np.ndarray) -> "Microstructure":
        grid = VoxelGrid(solid.astype(np.uint8), self.grid.voxel_size, "binary", self.grid.provenance)
        return Microstructure(grid, self.params, self.seed, float(solid.mean()))


def white_noise(n: int, seed: int, stream_id: int = 0) -> tuple[np.ndarray, dict]:
    rng = SeededRng(seed, stream_id)
    return rng.standard_normal((n, n, n)), rng.provenance()


def reconstruct_field(sdf: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Filter white noise by ``sqrt(sdf)`` in Fourier space.

    The filtered field is real up to rounding because the SDF is
    point-symmetric. It is returned shifted by its minimum, so it is
    nonnegative. Taking ``abs`` of a zero-mean field would fold negative
    lobes and double the spatial frequencies. A constant shift leaves the
    level cut and the non-DC spectrum untouched.
    """
    sdf = np.asarray(sdf, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if sdf.shape != noise.shape:
        raise ValueError(f"SDF shape {sdf.shape} does not match noise shape {noise.shape}")
    if not np.any(sdf > 0):
        raise DegenerateSdfError("all-zero SDF")
    transfer = np.sqrt(np.fft.ifftshift(sdf))
    field = np.fft.ifftn(transfer * np.fft.fftn(noise)).real
    return field - field.min()


def level_cut(field: np.ndarray, v: float) -> np.ndarray:
    """Mark the ``round(v * size)`` largest values as solid.

    Ties go to the lower linear (x-fastest) index.
    """
    if not 0.0 < v < 1.0:
        raise ValueError("volume fraction must lie in (0, 1)")
    field = np.asarray(field, dtype=float)
    flat = field.ravel(order="F")
    count = int(round(v * flat.size))
    # stable sort on -value keeps ascending index order within ties
    order = np.argsort(-flat, kind="stable")
    solid = np.zeros(flat.size, dtype=np.uint8)
    solid[order[:count]] = 1
    return solid.reshape(field.shape, order="F")


def realize(params: SdfParams, n: int, seed: int, side_um: float = DEFAULT_SIDE_UM,
            sdf: np.ndarray | None = None) -> Microstructure:
    """Deterministic realization of ``params`` on an ``n**3`` cell of side ``side_um``."""
    if sdf is None:
        sdf = build_sdf(params, n)
    noise, prov = white_noise(n, seed)
    field = reconstruct_field(sdf, noise)
    solid = level_cut(field, params.v)
    grid = VoxelGrid(solid, side_um / n, "binary",
                     {"seed": int(seed), "rng": prov, "params": params.to_dict()})
    return Microstructure(grid, params, int(seed), float(solid.mean()))


def radial_power_fraction(field: np.ndarray, lo: float, hi: float, cylindrical: bool = False) -> float:
    """Fraction of non-DC spectral power of ``field`` at frequency radius in ``[lo, hi]``.

    With ``cylindrical`` the radius is measured from the z frequency axis.
    """
    n = field.shape[0]
    power = np.abs(np.fft.fftshift(np.fft.fftn(field))) ** 2
    d = np.arange(n) - n // 2
    dx, dy, dz = np.meshgrid(d, d, d, indexing="ij")
    rad = np.sqrt(dx * dx + dy * dy + (0 if cylindrical else dz * dz))
    power[n // 2, n // 2, n // 2] = 0.0
    band = (rad >= lo) & (rad <= hi)
    return float(power[band].sum() / power.sum())
