"""Directional permeability of the void phase by D3Q19 BGK lattice Boltzmann."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..morph import spanning_component
from ..recon import Microstructure
from ._fallback import C, W


class LbmDivergenceError(RuntimeError):
    """NaN or super-sonic velocities appeared during the simulation."""


@dataclass(frozen=True)
class LbmConfig:
    tau: float = 1.0
    delta_rho: float = 1e-3
    max_iters: int = 200_000
    window: int = 10_000
    k_tol_um2: float = 5e-4
    rel_tol: float = 1e-4
    check_every: int = 100
    min_size: int = 8

    def __post_init__(self):
        if not 0.5 < self.tau <= 2.0:
            raise ValueError("tau must lie in (0.5, 2]")
        if self.delta_rho <= 0:
            raise ValueError("delta_rho must be positive")
        if self.window < 1 or self.check_every < 1:
            raise ValueError("window and check_every must be >= 1")

    @property
    def viscosity(self) -> float:
        return (self.tau - 0.5) / 3.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Fluid:
    """Liquid properties; defaults are water on copper at 25 C."""

    rho: float = 997.0
    mu: float = 8.9e-4
    surface_tension: float = 0.072
    contact_angle: float = math.radians(30.0)

    def to_dict(self) -> dict:
        return asdict(self)


def capillary_pressure(fluid: Fluid, radius_um: float) -> float:
    """Young-Laplace pressure (Pa) for mean pore radius ``radius_um``."""
    if radius_um <= 0:
        raise ValueError("pore radius must be positive")
    if abs(fluid.contact_angle) > math.pi / 2:
        raise ValueError("contact angle must lie in [-pi/2, pi/2]")
    return 2.0 * fluid.surface_tension * math.cos(fluid.contact_angle) / (radius_um * 1e-6)


@dataclass
class AxisFlow:
    k_lattice: float
    k_um2: float
    iterations: int
    converged: bool
    mass_flux_in: float = 0.0
    mass_flux_out: float = 0.0
    max_speed: float = 0.0
    velocity: np.ndarray | None = field(default=None, repr=False)
    history: list = field(default_factory=list, repr=False)

    def record(self) -> dict:
        return {"k_lattice": self.k_lattice, "k_um2": self.k_um2, "iterations": self.iterations,
                "converged": self.converged, "mass_flux_in": self.mass_flux_in,
                "mass_flux_out": self.mass_flux_out, "max_speed": self.max_speed}


@dataclass
class FlowResult:
    k: tuple[float, float, float]
    axes: list[AxisFlow]
    reverse: list[AxisFlow] | None = None
    voxel_size: float = 1.0
    config: LbmConfig = field(default_factory=LbmConfig)
    seconds: float = 0.0

    @property
    def converged(self) -> bool:
        runs = self.axes + (self.reverse or [])
        return all(a.converged for a in runs)

    @property
    def iterations(self) -> list[int]:
        return [a.iterations for a in self.axes]

    def speed_field(self, axis: int) -> np.ndarray | None:
        v = self.axes[axis].velocity
        return None if v is None else np.sqrt((v ** 2).sum(axis=0))

    def reverse_mismatch(self) -> list[float] | None:
        if self.reverse is None:
            return None
        return [abs(f.k_um2 - r.k_um2) / f.k_um2 if f.k_um2 > 0 else 0.0
                for f, r in zip(self.axes, self.reverse)]

    def record(self) -> dict:
        out = {"k_um2": list(self.k), "axes": [a.record() for a in self.axes],
               "voxel_size_um": self.voxel_size, "lbm": self.config.to_dict(),
               "seconds": self.seconds}
        if self.reverse is not None:
            out["reverse"] = [a.record() for a in self.reverse]
        return out


def _to_flow_frame(solid: np.ndarray, axis: int) -> np.ndarray:
    """Reorder ``solid[x, y, z]`` so the flow axis is last and the others keep their order."""
    rest = [a for a in range(3) if a != axis]
    return np.ascontiguousarray(np.transpose(solid, rest + [axis]))


def _from_flow_frame(arr: np.ndarray, axis: int) -> np.ndarray:
    rest = [a for a in range(3) if a != axis]
    order = rest + [axis]
    inverse = np.argsort(order)
    return np.transpose(arr, inverse)


PLANE_PAD = 136  # doubles; keeps the 19 population planes off a power-of-two stride


def population_array(shape: tuple[int, int, int]) -> np.ndarray:
    """Zeroed ``(19,) + shape`` array whose q planes are padded apart in memory."""
    plane = int(np.prod(shape))
    buf = np.zeros(19 * (plane + PLANE_PAD))
    return buf.reshape(19, plane + PLANE_PAD)[:, :plane].reshape((19,) + tuple(shape))


def equilibrium(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    usq = (u ** 2).sum(axis=0)
    out = np.empty((19,) + rho.shape)
    for q in range(19):
        cu = C[q, 0] * u[0] + C[q, 1] * u[1] + C[q, 2] * u[2]
        out[q] = W[q] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq)
    return out


def run_axis(solid_frame: np.ndarray, cfg: LbmConfig, voxel_size: float = 1.0,
             step_fn=None, keep_velocity: bool = False) -> AxisFlow:
    """Simulate pressure-driven flow along the last axis of ``solid_frame`` (indexed [z, y, x]).

    The frame must already have dead-end and isolated void filled.
    """
    if step_fn is None:
        from . import step as step_fn
    solid = np.ascontiguousarray(solid_frame, dtype=np.uint8)
    nz, ny, nx = solid.shape
    if nx < 2:
        raise ValueError("flow axis needs at least two layers")
    fluid = solid == 0
    n_total = solid.size
    rho_in = 1.0 + 0.5 * cfg.delta_rho
    rho_out = 1.0 - 0.5 * cfg.delta_rho
    length = nx - 1
    dp = cfg.delta_rho / 3.0
    nu = cfg.viscosity

    rho0 = np.broadcast_to(np.linspace(rho_in, rho_out, nx), solid.shape)
    f = population_array(solid.shape)
    f[...] = equilibrium(rho0, np.zeros((3,) + solid.shape))
    f[:, ~fluid] = 0.0
    g = population_array(solid.shape)

    check = min(cfg.check_every, cfg.window)
    window = max(check, (cfg.window // check) * check)
    k_tol = cfg.k_tol_um2 / voxel_size ** 2
    history: dict[int, float] = {}
    k_lat = 0.0
    converged = False
    it = 0
    umax2 = 0.0
    while it < cfg.max_iters:
        jx_sum, umax2 = step_fn(f, g, solid, cfg.tau, rho_in, rho_out)
        f, g = g, f
        it += 1
        if it % check:
            continue
        if not math.isfinite(jx_sum) or not math.isfinite(umax2) or umax2 > 0.01:
            raise LbmDivergenceError(f"LBM diverged at iteration {it} (max |u|^2 = {umax2:.3g})")
        k_lat = (jx_sum / n_total) * nu * length / dp
        history[it] = k_lat
        prev = history.get(it - window)
        if prev is not None:
            change = abs(k_lat - prev)
            if change < k_tol or change <= cfg.rel_tol * abs(k_lat):
                converged = True
                break

    rho = f.sum(axis=0)
    j = np.tensordot(C.T.astype(float), f, axes=1)
    flux_in = float(j[0, :, :, 0].sum())
    flux_out = float(j[0, :, :, -1].sum())
    velocity = None
    if keep_velocity:
        velocity = np.where(fluid, j / np.where(fluid, rho, 1.0), 0.0)
    return AxisFlow(k_lattice=k_lat, k_um2=k_lat * voxel_size ** 2, iterations=it, converged=converged,
                    mass_flux_in=flux_in, mass_flux_out=flux_out, max_speed=math.sqrt(umax2),
                    velocity=velocity, history=sorted(history.items()))


def _grid_of(m):
    if isinstance(m, Microstructure):
        return m.solid, m.grid.voxel_size
    return np.asarray(m).astype(bool), 1.0


def permeability_axis(m, axis: int, cfg: LbmConfig | None = None, reverse: bool = False,
                      keep_velocity: bool = False, step_fn=None, voxel_size: float | None = None) -> AxisFlow:
    """Permeability (um^2) along ``axis`` (0 = x, 1 = y, 2 = z).

    Void not connected to both the inlet and outlet faces is filled as
    solid first; if nothing percolates the result is zero without simulating.
    ``reverse`` swaps the inlet and outlet faces.
    """
    cfg = cfg or LbmConfig()
    solid, vs = _grid_of(m)
    if voxel_size is not None:
        vs = voxel_size
    if min(solid.shape) < cfg.min_size:
        raise ValueError(f"simulation grids need every dimension >= {cfg.min_size}, got {solid.shape}")
    path = spanning_component(~solid, axis)
    if not path.any():
        vel = np.zeros((3,) + solid.shape) if keep_velocity else None
        return AxisFlow(0.0, 0.0, 0, True, velocity=vel)
    frame = _to_flow_frame(~path, axis)
    if reverse:
        frame = np.ascontiguousarray(frame[:, :, ::-1])
    flow = run_axis(frame, cfg, vs, step_fn=step_fn, keep_velocity=keep_velocity)
    if flow.velocity is not None:
        vel = flow.velocity
        if reverse:
            vel = vel[:, :, :, ::-1] * np.array([-1.0, 1.0, 1.0])[:, None, None, None]
        # frame components are (x_flow, y_int, z_int) -> (flow axis, rest[1], rest[0])
        rest = [a for a in range(3) if a != axis]
        comp = np.empty_like(vel)
        comp[axis] = vel[0]
        comp[rest[1]] = vel[1]
        comp[rest[0]] = vel[2]
        flow.velocity = np.stack([_from_flow_frame(comp[c], axis) for c in range(3)])
    return flow


def permeability_tensor(m, cfg: LbmConfig | None = None, validate_reverse: bool = False,
                        keep_velocity: bool = False, step_fn=None) -> FlowResult:
    """Run the three axis simulations (six with ``validate_reverse``)."""
    cfg = cfg or LbmConfig()
    t0 = time.perf_counter()
    _, vs = _grid_of(m)
    axes = [permeability_axis(m, a, cfg, keep_velocity=keep_velocity, step_fn=step_fn) for a in range(3)]
    rev = None
    if validate_reverse:
        rev = [permeability_axis(m, a, cfg, reverse=True, step_fn=step_fn) for a in range(3)]
    return FlowResult(tuple(a.k_um2 for a in axes), axes, rev, vs, cfg, time.perf_counter() - t0)
