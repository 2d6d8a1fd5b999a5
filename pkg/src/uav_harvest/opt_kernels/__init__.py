"""Optimisation kernels: water-filling, ellipsoid method, simplex LP and the SCA barrier solver."""

from .ellipsoid import Cut, EllipsoidResult, EllipsoidState, ellipsoid_minimize, volume_ratio
from .lp import LpProblem, LpResult, lp_solve
from .sca import ScaResult, ScaSubproblem, sca_solve
from .waterfill import UnboundedWaterLevel, water_fill, water_fill_budget

__all__ = [
    "Cut", "EllipsoidResult", "EllipsoidState", "ellipsoid_minimize", "volume_ratio",
    "LpProblem", "LpResult", "lp_solve",
    "ScaResult", "ScaSubproblem", "sca_solve",
    "UnboundedWaterLevel", "water_fill", "water_fill_budget",
]
