"""Parameterized spectral density functions (sphere- and cylinder-patch types)."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

#: Design ranges used for DOE sampling and GA bounds.
DESIGN_RANGES = {
    "r": (3.0, 10.0),
    "sigma": (0.06, 3.0),
    "theta": (0.15, math.pi / 2),
    "phi": (0.15, math.pi / 2),
    "v": (0.15, 0.7),
}


#: Radial weights further than this many sigma from ``r`` are cut to zero.
TRUNCATION_SIGMAS = 4.0


class SdfType(str, Enum):
    SPH = "Sph"
    CYL = "Cyl"

    @property
    def code(self) -> int:
        return 0 if self is SdfType.SPH else 1

    @classmethod
    def from_code(cls, code) -> "SdfType":
        return cls.SPH if int(round(float(code))) == 0 else cls.CYL


class DegenerateSdfError(ValueError):
    """The SDF patch falls entirely between lattice points."""


@dataclass(frozen=True)
class SdfParams:
    r: float
    sigma: float
    theta: float
    phi: float
    v: float
    sdf_type: SdfType = SdfType.SPH

    def __post_init__(self):
        object.__setattr__(self, "sdf_type", SdfType(self.sdf_type))
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.r < 0 or self.theta < 0 or self.phi < 0:
            raise ValueError("r, theta and phi must be non-negative")
        if not 0.0 < self.v < 1.0:
            raise ValueError("volume fraction must lie in (0, 1)")

    @property
    def h(self) -> float:
        """Cylinder half-height, unified with phi as ``r * tan(phi / 2)``."""
        return self.r * math.tan(self.phi / 2.0)

    def in_design_ranges(self) -> bool:
        return all(lo <= getattr(self, k) <= hi for k, (lo, hi) in DESIGN_RANGES.items())

    def replace(self, **changes) -> "SdfParams":
        d = asdict(self)
        d.update(changes)
        return SdfParams(**d)

    def to_dict(self) -> dict:
        return {"r": self.r, "sigma": self.sigma, "theta": self.theta, "phi": self.phi,
                "v": self.v, "sdf_type": self.sdf_type.value}

    @classmethod
    def from_dict(cls, d) -> "SdfParams":
        return cls(float(d["r"]), float(d["sigma"]), float(d["theta"]), float(d["phi"]),
                   float(d["v"]), SdfType(d.get("sdf_type", "Sph")))

    def quantitative(self) -> list[float]:
        return [self.r, self.sigma, self.theta, self.phi, self.v, float(self.sdf_type.code)]


def radial_spectrum(dist, params: SdfParams):
    """Gaussian 1-D power spectrum centred on ``params.r`` with spread ``params.sigma``."""
    sigma = params.sigma
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < 0):
        raise ValueError("frequency distance must be non-negative")
    out = np.exp(-0.5 * ((dist - params.r) / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
    return float(out) if out.ndim == 0 else out


def center_offsets(n: int) -> np.ndarray:
    """Integer offsets from the zero-frequency bin along one axis (bin n//2 is 0)."""
    return np.arange(n) - n // 2


def build_sdf(params: SdfParams, n: int) -> np.ndarray:
    """Return the centred ``(n, n, n)`` SDF array indexed ``[x, y, z]``.

    Membership uses folded (absolute) angles so the patch is reflected and
    point-symmetric about the origin (modulo ``n`` on the Nyquist planes of
    even grids); the DC bin is zero. The Gaussian radial weight is truncated
    at ``TRUNCATION_SIGMAS`` standard deviations.
    """
    if n < 8:
        raise ValueError("SDF size must be at least 8")
    d = center_offsets(n).astype(float)
    dx, dy, dz = np.meshgrid(d, d, d, indexing="ij")
    ax, ay, az = np.abs(dx), np.abs(dy), np.abs(dz)
    if params.sdf_type is SdfType.SPH:
        rad = np.sqrt(dx * dx + dy * dy + dz * dz)
        with np.errstate(invalid="ignore", divide="ignore"):
            elev = np.arcsin(np.clip(ay / np.where(rad > 0, rad, 1.0), 0.0, 1.0))
        azim = np.arctan2(az, ax)
        member = (elev <= params.theta) & (azim <= params.phi)
    else:
        rad = np.sqrt(dx * dx + dy * dy)
        member = (np.arctan2(ay, ax) <= params.theta) & (az <= params.h)
    member &= np.abs(rad - params.r) <= TRUNCATION_SIGMAS * params.sigma
    member[n // 2, n // 2, n // 2] = False
    sdf = np.where(member, radial_spectrum(rad, params), 0.0)
    if not np.any(sdf > 0):
        raise DegenerateSdfError(f"SDF for {params} has no nonzero voxels at n={n}")
    return sdf


def support(sdf: np.ndarray) -> np.ndarray:
    return sdf > 0
