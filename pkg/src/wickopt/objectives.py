"""Design objectives of a wick unit cell and the dataset record they populate.

Units: permeabilities in um^2, conductivities in W/mK, lengths in um unless
a name says otherwise. ``f1`` is a mass flow rate (kg/s) and ``f2`` a
thermal conductance (W/K).
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Iterator

import numpy as np

from .grid import derive_seed
from .heat import HeatConfig, conductivity_tensor
from .lbm import Fluid, LbmConfig, LbmDivergenceError, capillary_pressure, permeability_tensor
from .morph import estimate_f3, label_clusters, mean_pore_radius, remove_floating
from .recon import DEFAULT_SIDE_UM, Microstructure, realize
from .sdfgen import DegenerateSdfError, SdfParams, build_sdf

MAX_FLOATING_LOSS = 0.05


class Orientation(str, Enum):
    """Which microstructure axis becomes the system's vertical (z') axis."""

    O1 = "O1"  # z -> z'
    O2 = "O2"  # y -> z'
    O3 = "O3"  # x -> z'

    @property
    def vertical_axis(self) -> int:
        return {"O1": 2, "O2": 1, "O3": 0}[self.value]

    @property
    def lateral_axes(self) -> tuple[int, int]:
        return tuple(a for a in range(3) if a != self.vertical_axis)


ORIENTATIONS = (Orientation.O1, Orientation.O2, Orientation.O3)


@dataclass(frozen=True)
class SystemConfig:
    """Evaporator geometry and materials."""

    a_um: float = DEFAULT_SIDE_UM
    d_wick_um: float = 1000.0
    fluid: Fluid = field(default_factory=Fluid)
    k_solid: float = 400.0

    def __post_init__(self):
        if self.a_um <= 0:
            raise ValueError("unit-cell side must be positive")
        if self.d_wick_um < self.a_um:
            raise ValueError("wick length must be at least one unit cell")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fluid"] = self.fluid.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        d = dict(d)
        fluid = Fluid(**d.pop("fluid", {}))
        return cls(fluid=fluid, **d)


def orient(k: tuple, p: tuple, o: Orientation | str) -> tuple[float, float, float]:
    """Map microstructure-frame properties to ``(p_x', p_y', k_z')``.

    ``k`` are conductivities and ``p`` permeabilities, both ordered (x, y, z).
    """
    o = Orientation(o)
    i, j = o.lateral_axes
    return float(p[i]), float(p[j]), float(k[o.vertical_axis])


def delta_p_uc(sys: SystemConfig, radius_um: float) -> float:
    """Pressure drop (Pa) across one unit cell when the capillary pressure spans the wick."""
    return capillary_pressure(sys.fluid, radius_um) * sys.a_um / sys.d_wick_um


def f1(p_x: float, p_y: float, sys: SystemConfig, dp_uc: float) -> float:
    """Liquid supply rate (kg/s) drawn through the lateral faces of a unit cell.

    Permeabilities are in um^2, ``dp_uc`` in Pa.
    """
    if p_x < 0 or p_y < 0:
        raise ValueError("permeabilities must be non-negative")
    a = sys.a_um * 1e-6
    return 4.0 * sys.fluid.rho * (p_x + p_y) * 1e-12 * dp_uc * a / sys.fluid.mu


def f1_dimensionless(value: float, sys: SystemConfig) -> float:
    """``f1 / (rho * nu * a)`` with kinematic viscosity ``nu = mu / rho``."""
    return value / (sys.fluid.mu * sys.a_um * 1e-6)


def f2(k_z: float, sys: SystemConfig) -> float:
    """Vertical thermal conductance (W/K) of a unit cell, ``k_z' * a``."""
    if k_z < 0:
        raise ValueError("conductivity must be non-negative")
    return k_z * sys.a_um * 1e-6


@dataclass(frozen=True)
class ObjectiveVector:
    f1: float
    f2: float
    f3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.f1, self.f2, self.f3])


@dataclass
class Selection:
    """Outcome of the realization scan for one design point."""

    accepted: bool
    structure: Microstructure | None
    seed: int | None
    dv: float
    n_scanned: int
    reason: str = ""
    base_connected: bool = False
    n_floating_removed: int = 0


def select_structure(candidates: Iterable[Microstructure], max_loss: float = MAX_FLOATING_LOSS) -> Selection:
    """Pick the first candidate without floating clusters, else the least-floating one.

    Floating clusters are then removed; the design is rejected when the
    removed solid fraction reaches ``max_loss``.
    """
    best = None
    best_report = None
    n = 0
    for m in candidates:
        n += 1
        _, report = label_clusters(m)
        if best_report is None or report.floating_volume_fraction < best_report.floating_volume_fraction:
            best, best_report = m, report
        if report.n_floating == 0:
            break
    if best is None:
        return Selection(False, None, None, math.nan, 0, "no realizations")
    cleaned, dv = remove_floating(best)
    base = label_clusters(cleaned)[1].base_connected
    if dv >= max_loss:
        return Selection(False, None, best.seed, dv, n, f"floating loss {dv:.4f} >= {max_loss}",
                         base, best_report.n_floating)
    return Selection(True, cleaned, best.seed, dv, n, "", base, best_report.n_floating)


def realizations(params: SdfParams, n: int, seed: int, count: int = 50,
                 side_um: float = DEFAULT_SIDE_UM) -> Iterator[Microstructure]:
    """Lazily yield ``count`` realizations with seeds ``derive_seed(seed, i)``."""
    sdf = build_sdf(params, n)
    for i in range(count):
        yield realize(params, n, derive_seed(seed, i), side_um=side_um, sdf=sdf)


@dataclass(frozen=True)
class EvalConfig:
    """Solver and sampling settings for :func:`evaluate_design`."""

    lbm: LbmConfig = field(default_factory=LbmConfig)
    heat: HeatConfig = field(default_factory=HeatConfig)
    max_realizations: int = 50
    f3_resolution: int = 150
    f3_realizations: int = 50
    max_loss: float = MAX_FLOATING_LOSS


@dataclass
class DesignEvaluation:
    params: SdfParams
    n: int
    selection: Selection
    k_um2: tuple | None = None
    k_eff: tuple | None = None
    radius_um: float | None = None
    f3: dict | None = None
    flow: object = None
    thermal: object = None
    timings: dict = field(default_factory=dict)
    error: str = ""

    @property
    def valid(self) -> bool:
        return self.selection.accepted and not self.error

    def objectives(self, o: Orientation | str, sys: SystemConfig) -> ObjectiveVector:
        p_x, p_y, k_z = orient(self.k_eff, self.k_um2, o)
        dp = delta_p_uc(sys, self.radius_um)
        return ObjectiveVector(f1(p_x, p_y, sys, dp), f2(k_z, sys), self.f3["f3"])

    def records(self, sys: SystemConfig, orientations=ORIENTATIONS, **extra) -> list[dict]:
        """One dataset row per orientation (empty if the design was discarded or failed)."""
        if not self.valid:
            return []
        rows = []
        dp = delta_p_uc(sys, self.radius_um)
        flow_ok = bool(self.flow.converged) if self.flow is not None else True
        heat_ok = all(a.converged for a in self.thermal.axes) if self.thermal is not None else True
        for o in orientations:
            o = Orientation(o)
            obj = self.objectives(o, sys)
            rows.append({
                **extra,
                "params": self.params.to_dict(),
                "N": self.n,
                "orientation": o.value,
                "seeds": {"structure": self.selection.seed, "f3": self.f3.get("seed")},
                "v_real": float(self.selection.structure.v_real),
                "dv": float(self.selection.dv),
                "p_x": self.k_um2[0], "p_y": self.k_um2[1], "p_z": self.k_um2[2],
                "k_x": self.k_eff[0], "k_y": self.k_eff[1], "k_z": self.k_eff[2],
                "R": self.radius_um,
                "dP_uc": dp,
                "f1": obj.f1,
                "f1_dimless": f1_dimensionless(obj.f1, sys),
                "f2": obj.f2,
                "f3": obj.f3,
                "f3_se": self.f3["se"],
                "flags": {"lbm_converged": flow_ok, "cg_converged": heat_ok,
                          "base_connected": self.selection.base_connected,
                          "n_floating_removed": self.selection.n_floating_removed,
                          "realizations_scanned": self.selection.n_scanned,
                          "system": sys.to_dict()},
                "timings": dict(self.timings),
            })
        return rows


def evaluate_design(params: SdfParams, n: int, sys: SystemConfig | None = None, seed: int = 0,
                    cfg: EvalConfig | None = None, f3: dict | None = None,
                    keep_fields: bool = False) -> DesignEvaluation:
    """Realize, clean, simulate and score one design point at resolution ``n``.

    One flow and one conduction solve per axis serve all three orientations;
    use :meth:`DesignEvaluation.objectives` or :meth:`DesignEvaluation.records`
    to read them out. ``f3`` may be supplied to reuse an estimate across
    resolutions; otherwise it is computed with seed ``derive_seed(seed, 1)``.
    """
    sys = sys or SystemConfig()
    cfg = cfg or EvalConfig()
    t0 = time.perf_counter()
    try:
        cands = realizations(params, n, derive_seed(seed, 0), cfg.max_realizations, sys.a_um)
        sel = select_structure(cands, cfg.max_loss)
    except DegenerateSdfError as exc:
        sel = Selection(False, None, None, math.nan, 0, f"degenerate SDF: {exc}")
    out = DesignEvaluation(params, n, sel)
    out.timings["select_s"] = time.perf_counter() - t0
    if not sel.accepted:
        return out
    m = sel.structure
    try:
        t1 = time.perf_counter()
        out.flow = permeability_tensor(m, cfg.lbm, keep_velocity=keep_fields)
        out.k_um2 = tuple(float(k) for k in out.flow.k)
        t2 = time.perf_counter()
        out.thermal = conductivity_tensor(m, HeatConfig(**{**cfg.heat.to_dict(), "k_solid": sys.k_solid}),
                                          keep_temperature=keep_fields)
        out.k_eff = tuple(float(k) for k in out.thermal.k_eff)
        t3 = time.perf_counter()
        out.radius_um = mean_pore_radius(m)
        if f3 is None:
            f3_seed = derive_seed(seed, 1)
            f3 = estimate_f3(params, cfg.f3_resolution, cfg.f3_realizations, f3_seed)
            f3["seed"] = f3_seed
        out.f3 = f3
        out.timings.update(lbm_s=t2 - t1, heat_s=t3 - t2, total_s=time.perf_counter() - t0)
    except (LbmDivergenceError, ValueError) as exc:
        out.error = f"{type(exc).__name__}: {exc}"
    return out


_NUM = {"type": "number"}
_NONNEG = {"type": "number", "minimum": 0}

PROPERTY_RECORD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["params", "N", "orientation", "seeds", "v_real", "dv", "p_x", "p_y", "p_z",
                 "k_x", "k_y", "k_z", "R", "dP_uc", "f1", "f1_dimless", "f2", "f3", "flags", "timings"],
    "properties": {
        "design_id": {"type": "integer", "minimum": 0},
        "fidelity": {"enum": ["high", "mid", "low"]},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "required": ["r", "sigma", "theta", "phi", "v", "sdf_type"],
            "properties": {"r": _NUM, "sigma": _NUM, "theta": _NUM, "phi": _NUM, "v": _NUM,
                           "sdf_type": {"enum": ["Sph", "Cyl"]}},
        },
        "N": {"type": "integer", "minimum": 8},
        "orientation": {"enum": ["O1", "O2", "O3"]},
        "seeds": {"type": "object"},
        "v_real": _NONNEG, "dv": _NONNEG,
        "p_x": _NONNEG, "p_y": _NONNEG, "p_z": _NONNEG,
        "k_x": _NONNEG, "k_y": _NONNEG, "k_z": _NONNEG,
        "R": _NONNEG, "dP_uc": _NONNEG,
        "f1": _NONNEG, "f1_dimless": _NONNEG, "f2": _NONNEG, "f3": _NONNEG, "f3_se": _NONNEG,
        "flags": {"type": "object"},
        "timings": {"type": "object"},
    },
}
