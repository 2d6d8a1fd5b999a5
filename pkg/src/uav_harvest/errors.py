"""Exception hierarchy shared by all solvers.

The CLI maps these onto exit codes, so each class carries its own.
"""


class HarvestError(Exception):
    exit_code = 1


class ScenarioError(HarvestError, ValueError):
    """Malformed scenario file or violated parameter invariant."""

    exit_code = 2


class InfeasibleError(HarvestError):
    """No feasible plan exists (e.g. T too short to connect q_I and q_F)."""

    exit_code = 4


class ConvergenceError(HarvestError):
    """An iterative solver failed to reach its tolerance."""

    exit_code = 3


class LpInfeasible(InfeasibleError):
    pass


class LpUnbounded(HarvestError):
    exit_code = 3
