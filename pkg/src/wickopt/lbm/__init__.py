"""D3Q19 BGK lattice-Boltzmann permeability solver.

The time step runs in a compiled Cython kernel when it is importable and
falls back to a numpy implementation otherwise (or when the environment
variable ``WICKOPT_PURE_PYTHON`` is set).
"""
import os

from . import _fallback

if os.environ.get("WICKOPT_PURE_PYTHON"):
    step = _fallback.step
    BACKEND = "numpy"
else:
    try:
        from ._kernel import step
        BACKEND = "cython"
    except ImportError:  # extension not built
        step = _fallback.step
        BACKEND = "numpy"

from .solver import (  # noqa: E402
    AxisFlow,
    Fluid,
    FlowResult,
    LbmConfig,
    LbmDivergenceError,
    capillary_pressure,
    permeability_axis,
    permeability_tensor,
    run_axis,
)

__all__ = [
    "AxisFlow", "BACKEND", "Fluid", "FlowResult", "LbmConfig", "LbmDivergenceError", "capillary_pressure",
    "permeability_axis", "permeability_tensor", "run_axis", "step",
]
