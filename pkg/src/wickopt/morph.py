"""Solid connectivity, floating-cluster handling and pore-radius estimation."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .grid import derive_seed
from .recon import Microstructure, realize
from .sdfgen import DegenerateSdfError, SdfParams, build_sdf

_STRUCTURES = {
    6: ndimage.generate_binary_structure(3, 1),
    26: ndimage.generate_binary_structure(3, 3),
}


@dataclass(frozen=True)
class ClusterReport:
    n_clusters: int
    n_floating: int
    floating_volume_fraction: float
    base_connected: bool

    def to_dict(self) -> dict:
        return asdict(self)


def boundary_contacts(labels: np.ndarray, n_labels: int) -> np.ndarray:
    """``(n_labels + 1, 6)`` boolean table: label touches face (x-, x+, y-, y+, z-, z+)."""
    touch = np.zeros((n_labels + 1, 6), dtype=bool)
    faces = (labels[0], labels[-1], labels[:, 0], labels[:, -1], labels[:, :, 0], labels[:, :, -1])
    for j, face in enumerate(faces):
        touch[np.unique(face), j] = True
    touch[0] = False
    return touch


def label_clusters(m, connectivity: int = 6) -> tuple[np.ndarray, ClusterReport]:
    """Label solid clusters (non-periodic) and summarize boundary contact.

    ``m`` may be a :class:`Microstructure` or a binary array. Floating
    clusters touch no face of the cell; ``base_connected`` requires every
    cluster to touch the bottom (z = 0) face.
    """
    solid = m.solid if isinstance(m, Microstructure) else np.asarray(m).astype(bool)
    if connectivity not in _STRUCTURES:
        raise ValueError("connectivity must be 6 or 26")
    labels, k = ndimage.label(solid, structure=_STRUCTURES[connectivity])
    touch = boundary_contacts(labels, k)
    floating = ~touch[1:].any(axis=1)
    sizes = np.bincount(labels.ravel(), minlength=k + 1)[1:]
    report = ClusterReport(
        n_clusters=int(k),
        n_floating=int(floating.sum()),
        floating_volume_fraction=float(sizes[floating].sum() / solid.size),
        base_connected=bool(touch[1:, 4].all()),
    )
    return labels, report


def remove_floating(m: Microstructure, connectivity: int = 6) -> tuple[Microstructure, float]:
    """Set every floating solid cluster to void; return the cleaned cell and the removed fraction."""
    labels, report = label_clusters(m, connectivity)
    if report.n_floating == 0:
        return m, 0.0
    touch = boundary_contacts(labels, report.n_clusters)
    keep = touch.any(axis=1)
    solid = keep[labels] & (labels > 0)
    return m.with_solid(solid), report.floating_volume_fraction


def estimate_f3(params: SdfParams, n: int, n_realizations: int = 50, seed: int = 0,
                connectivity: int = 6) -> dict:
    """Mean floating-cluster count over independent realizations.

    Realization ``i`` uses seed ``derive_seed(seed, i)``. Returns a dict with
    ``f3`` (the mean), its standard error, the per-realization counts and the
    number of degenerate-SDF failures.
    """
    try:
        sdf = build_sdf(params, n)
    except DegenerateSdfError:
        return {"f3": math.nan, "se": math.nan, "counts": [], "n_degenerate": n_realizations}
    counts = []
    for i in range(n_realizations):
        m = realize(params, n, derive_seed(seed, i), sdf=sdf)
        counts.append(label_clusters(m, connectivity)[1].n_floating)
    arr = np.asarray(counts, dtype=float)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return {"f3": float(arr.mean()), "se": se, "counts": counts, "n_degenerate": 0}


def void_edt(solid: np.ndarray) -> np.ndarray:
    """Euclidean distance (voxels) from each void voxel to the nearest solid, cell boundary counted as solid."""
    void = np.pad(~np.asarray(solid, dtype=bool), 1, constant_values=False)
    return ndimage.distance_transform_edt(void)[1:-1, 1:-1, 1:-1]


def mean_pore_radius(m) -> float:
    """Mean void EDT value at its 26-neighbourhood local maxima, in micrometres.

    Arrays without a voxel size are measured in voxels.
    """
    if isinstance(m, Microstructure):
        solid, voxel = m.solid, m.grid.voxel_size
    else:
        solid, voxel = np.asarray(m).astype(bool), 1.0
    if solid.all():
        raise ValueError("no void phase")
    edt = void_edt(solid)
    peak = (edt > 0) & (edt == ndimage.maximum_filter(edt, size=3, mode="constant", cval=0.0))
    if not peak.any():
        raise ValueError("void EDT has no local maxima")
    return float(edt[peak].mean() * voxel)


def percolates(void: np.ndarray, axis: int) -> bool:
    """True if a 6-connected void path joins the two faces normal to ``axis``."""
    return bool(spanning_component(void, axis).any())


def spanning_component(phase: np.ndarray, axis: int) -> np.ndarray:
    """Mask of the 6-connected parts of ``phase`` touching both faces normal to ``axis``."""
    phase = np.asarray(phase, dtype=bool)
    labels, k = ndimage.label(phase, structure=_STRUCTURES[6])
    if k == 0:
        return np.zeros_like(phase)
    lo = np.unique(np.take(labels, 0, axis=axis))
    hi = np.unique(np.take(labels, -1, axis=axis))
    both = np.intersect1d(lo, hi)
    both = both[both > 0]
    return np.isin(labels, both)
