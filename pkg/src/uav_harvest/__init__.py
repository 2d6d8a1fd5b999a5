"""Max-min rate data harvesting with a multi-antenna UAV."""

from .energy import PropulsionParams, mission_energy, power_energy_tradeoff, propulsion_power
from .errors import ConvergenceError, HarvestError, InfeasibleError, ScenarioError
from .hover_solver import HoverPlan, solve_p2
from .scenario import RadioParams, Scenario, generate_scenario, load_scenario, save_scenario
from .schedule_solver import SchedulePower, solve_p3
from .trajectory_solver import MissionPlan, Trajectory, min_time_for_throughput, solve_p1

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "HarvestError", "HoverPlan", "InfeasibleError", "MissionPlan",
    "PropulsionParams", "RadioParams", "Scenario", "ScenarioError", "SchedulePower", "Trajectory",
    "generate_scenario", "load_scenario", "min_time_for_throughput", "mission_energy",
    "power_energy_tradeoff", "propulsion_power", "save_scenario", "solve_p1", "solve_p2",
    "solve_p3",
]
