"""Effective directional conductivity of the solid phase (voxel finite volumes).

Each solid voxel is a control volume. Faces shared by two solid voxels
conduct ``k_solid * dx``; voxels on a Dirichlet face connect to the
reservoir through a half cell (``2 * k_solid * dx``). Void conducts nothing
and the lateral faces are insulated.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import LinearOperator, cg

from .recon import Microstructure

_SIX = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class HeatConfig:
    k_solid: float = 400.0
    delta_T: float = 50.0
    cg_tol: float = 1e-8
    max_cg_iters: int = 20_000

    def __post_init__(self):
        if self.k_solid <= 0 or self.delta_T <= 0:
            raise ValueError("k_solid and delta_T must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AxisConduction:
    k_eff: float
    conductance: float  # in units of k_solid * dx
    percolates: bool
    converged: bool = True
    cg_iterations: int = 0
    flux_hot: float = 0.0
    flux_cold: float = 0.0
    temperature: np.ndarray | None = field(default=None, repr=False)

    def record(self) -> dict:
        return {"k_eff": self.k_eff, "percolates": self.percolates, "converged": self.converged,
                "cg_iterations": self.cg_iterations, "flux_hot": self.flux_hot, "flux_cold": self.flux_cold}


@dataclass
class ThermalResult:
    k_eff: tuple[float, float, float]
    axes: list[AxisConduction]
    config: HeatConfig

    @property
    def percolation(self) -> tuple[bool, bool, bool]:
        return tuple(a.percolates for a in self.axes)

    def record(self) -> dict:
        return {"k_eff": list(self.k_eff), "axes": [a.record() for a in self.axes], "heat": self.config.to_dict()}


def _solid_of(m) -> np.ndarray:
    if isinstance(m, Microstructure):
        return m.solid
    return np.asarray(m).astype(bool)


def laplacian_system(solid: np.ndarray, axis: int):
    """Assemble ``A T = b`` (hot face at index 0 held at 1, cold face at 0).

    Only solid clusters touching a Dirichlet face take part. Returns
    ``(A, b, index, hot, cold)`` where ``index`` maps voxels to unknowns
    (-1 elsewhere) and ``hot``/``cold`` are the unknown ids on each face.
    """
    labels, k = ndimage.label(solid, structure=_SIX)
    ends = np.union1d(np.take(labels, 0, axis=axis).ravel(), np.take(labels, -1, axis=axis).ravel())
    ends = ends[ends > 0]
    active = np.isin(labels, ends)
    index = np.full(solid.shape, -1, dtype=np.int64)
    n = int(active.sum())
    index[active] = np.arange(n)
    rows, cols = [], []
    diag = np.zeros(n)
    for ax in range(3):
        a = np.take(index, np.arange(solid.shape[ax] - 1), axis=ax)
        b = np.take(index, np.arange(1, solid.shape[ax]), axis=ax)
        pair = (a >= 0) & (b >= 0)
        i, j = a[pair], b[pair]
        rows += [i, j]
        cols += [j, i]
        np.add.at(diag, i, 1.0)
        np.add.at(diag, j, 1.0)
    hot = np.take(index, 0, axis=axis)
    hot = hot[hot >= 0]
    cold = np.take(index, -1, axis=axis)
    cold = cold[cold >= 0]
    np.add.at(diag, hot, 2.0)
    np.add.at(diag, cold, 2.0)
    b = np.zeros(n)
    np.add.at(b, hot, 2.0)
    off_r = np.concatenate(rows) if rows else np.empty(0, np.int64)
    off_c = np.concatenate(cols) if cols else np.empty(0, np.int64)
    A = sp.coo_matrix(
        (np.concatenate([-np.ones(off_r.size), diag]), (np.concatenate([off_r, np.arange(n)]),
                                                         np.concatenate([off_c, np.arange(n)]))),
        shape=(n, n)).tocsr()
    return A, b, index, hot, cold


def conductivity_axis(m, axis: int, cfg: HeatConfig | None = None, keep_temperature: bool = False) -> AxisConduction:
    """Effective conductivity (W/mK) along ``axis``; zero without a spanning solid path."""
    cfg = cfg or HeatConfig()
    solid = _solid_of(m)
    from .morph import spanning_component

    if not spanning_component(solid, axis).any():
        temp = np.zeros(solid.shape) if keep_temperature else None
        return AxisConduction(0.0, 0.0, False, temperature=temp)
    A, b, index, hot, cold = laplacian_system(solid, axis)
    dinv = 1.0 / A.diagonal()
    precond = LinearOperator(A.shape, matvec=lambda v: dinv * v, dtype=float)
    iters = [0]

    def count(_):
        iters[0] += 1

    theta, info = cg(A, b, rtol=cfg.cg_tol, atol=0.0, maxiter=cfg.max_cg_iters, M=precond, callback=count)
    flux_hot = float(2.0 * (1.0 - theta[hot]).sum())
    flux_cold = float(2.0 * theta[cold].sum())
    n_axis = solid.shape[axis]
    area = solid.size / n_axis
    k_eff = cfg.k_solid * flux_hot * n_axis / area
    temp = None
    if keep_temperature:
        temp = np.zeros(solid.shape)
        temp[index >= 0] = cfg.delta_T * theta[index[index >= 0]]
    return AxisConduction(k_eff, flux_hot, True, info == 0, iters[0],
                          flux_hot * cfg.k_solid, flux_cold * cfg.k_solid, temp)


def conductivity_tensor(m, cfg: HeatConfig | None = None, keep_temperature: bool = False) -> ThermalResult:
    """Three axis solves; asserts the Voigt bound ``k_eff <= v * k_solid``."""
    cfg = cfg or HeatConfig()
    solid = _solid_of(m)
    axes = [conductivity_axis(solid, a, cfg, keep_temperature) for a in range(3)]
    k = tuple(a.k_eff for a in axes)
    bound = solid.mean() * cfg.k_solid
    for a, ka in enumerate(k):
        if ka > bound * (1.0 + 10 * cfg.cg_tol) + 1e-12:
            raise AssertionError(f"k_eff[{a}] = {ka} exceeds the Voigt bound {bound}")
    return ThermalResult(k, axes, cfg)
