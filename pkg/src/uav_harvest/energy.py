"""Rotary-wing propulsion energy and the SN-power versus UAV-energy trade-off.

Communication energy is not counted. The speed in slot ``n`` is the forward
difference ``||q[n+1] - q[n]|| / delta``; the final slot has no successor
and is charged at hover power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InfeasibleError
from .scenario import Scenario


@dataclass(frozen=True)
class PropulsionParams:
    P0: float = 79.8563      # blade profile power in hover, W
    Pi: float = 88.6279      # induced power in hover, W
    U_tip: float = 120.0     # rotor tip speed, m/s
    v0: float = 4.03         # mean induced velocity in hover, m/s
    d1: float = 0.6          # fuselage drag ratio
    s: float = 0.05          # rotor solidity
    rho: float = 1.225       # air density, kg/m^3
    A: float = 0.503         # rotor disc area, m^2

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ValueError(f"PropulsionParams.{name} must be positive, got {v!r}")


def propulsion_power(v, params: PropulsionParams = PropulsionParams()):
    """Propulsion power in W at horizontal speed ``v`` (scalar or array, m/s)."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("speed must be non-negative")
    p = params
    v2 = v * v
    blade = p.P0 * (1.0 + 3.0 * v2 / p.U_tip ** 2)
    induced = p.Pi * np.sqrt(np.sqrt(1.0 + v2 * v2 / (4.0 * p.v0 ** 4)) - v2 / (2.0 * p.v0 ** 2))
    parasite = 0.5 * p.d1 * p.rho * p.s * p.A * v2 * v
    out = blade + induced + parasite
    return float(out) if out.ndim == 0 else out


def best_endurance_speed(params: PropulsionParams = PropulsionParams(), v_max: float = 60.0) -> float:
    """Speed minimising propulsion power."""
    res = minimize_scalar(lambda v: propulsion_power(v, params), bounds=(0.0, v_max),
                          method="bounded", options={"xatol": 1e-8})
    return float(res.x)


def slot_speeds(q, delta: float) -> np.ndarray:
    """Per-slot speeds, m/s; the last slot is a hover slot."""
    q = np.asarray(q, dtype=float)
    v = np.linalg.norm(np.diff(q, axis=0), axis=1) / delta
    return np.append(v, 0.0)


def mission_energy(trajectory, delta: float, params: PropulsionParams = PropulsionParams()) -> float:
    """UAV propulsion energy in J; ``trajectory`` is a Trajectory or an (N, 2) array."""
    q = getattr(trajectory, "q", trajectory)
    if not delta > 0:
        raise ValueError("delta must be positive")
    return float(delta * np.sum(propulsion_power(slot_speeds(q, delta), params)))


@dataclass
class TradeoffPoint:
    pbar_w: float
    t_min_s: float
    energy_j: float
    feasible: bool
    r_bpshz: float = math.nan

    def row(self) -> tuple:
        return (self.pbar_w, self.t_min_s, self.energy_j, int(self.feasible))


def power_energy_tradeoff(scenario: Scenario, pbars, throughput_bits: float, mode: str = "proposed", *,
                          params: PropulsionParams = PropulsionParams(), T_max: float = 3600.0,
                          p1_options: dict | None = None) -> list[TradeoffPoint]:
    """Minimum mission time and UAV energy to collect ``throughput_bits`` per SN at each ``pbar``.

    Sweep points that cannot reach the throughput within ``T_max`` come back
    with ``feasible=False`` and NaN time and energy.
    """
    from .trajectory_solver import min_time_for_throughput

    pbars = [float(p) for p in pbars]
    if not pbars or any(not p > 0 for p in pbars):
        raise ValueError("pbar sweep values must be positive")
    out = []
    for pbar in pbars:
        sc = scenario.with_radio(pbar=pbar)
        try:
            t_min, plan = min_time_for_throughput(sc, throughput_bits, mode, T_max=T_max,
                                                  p1_options=p1_options)
        except InfeasibleError:
            out.append(TradeoffPoint(pbar, math.nan, math.nan, False))
            continue
        out.append(TradeoffPoint(pbar, t_min, mission_energy(plan.trajectory, sc.delta, params),
                                 True, plan.r))
    return out
