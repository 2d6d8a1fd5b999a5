"""Joint trajectory, scheduling and power design.

The hover plan fixes where the UAV would like to be; a shortest open path
through its locations gives the initial trajectory (with the spare time
spent hovering in proportion to the planned durations, or, when the path is
too long for the mission, a path that only touches disks around the
locations). Block coordinate descent then alternates the optimal schedule
for the current trajectory with one convex trajectory update.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import distance_power
from .errors import InfeasibleError
from .hover_solver import HoverPlan, solve_p2
from .opt_kernels.sca import ScaResult, ScaSubproblem, sca_solve
from .scenario import Scenario
from .schedule_solver import SchedulePower, refit_powers, solve_p3
from .tsp import TourPlan, tsp_order, two_opt

log = logging.getLogger(__name__)

SPEED_SLACK = 1e-9
TSPN_ROUNDS = 8


@dataclass
class Trajectory:
    q: np.ndarray          # (N, 2) m
    altitude: float

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)

    @property
    def N(self) -> int:
        return self.q.shape[0]

    def steps(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.q, axis=0), axis=1)

    def check(self, scenario: Scenario) -> None:
        """Raise ValueError unless slot count, speed cap and endpoints hold."""
        if self.q.shape != (scenario.N, 2):
            raise ValueError(f"trajectory has shape {self.q.shape}, expected ({scenario.N}, 2)")
        over = self.steps().max(initial=0.0) - scenario.V_h
        if over > SPEED_SLACK:
            raise ValueError(f"speed cap exceeded by {over:.3g} m per slot")
        if not (np.array_equal(self.q[0], scenario.q_I) and np.array_equal(self.q[-1], scenario.q_F)):
            raise ValueError("trajectory endpoints differ from q_I / q_F")

    def to_rows(self):
        return [(n, float(x), float(y)) for n, (x, y) in enumerate(self.q)]


@dataclass
class MissionPlan:
    trajectory: Trajectory
    schedule: SchedulePower
    r: float
    trace: list
    r_upper: float
    hover: HoverPlan
    tour: TourPlan
    mode: str
    iterations: int
    converged: bool
    tspn_radius: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def avg_rates(self) -> np.ndarray:
        return self.schedule.avg_rates

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "r_bpshz": self.r,
            "r_upper_bpshz": self.r_upper,
            "avg_rate_bpshz": [float(v) for v in self.avg_rates],
            "iterations": self.iterations,
            "converged": self.converged,
            "trace_bpshz": [float(v) for v in self.trace],
            "tsp_time_s": self.tour.T_tsp,
            "tspn_radius_m": self.tspn_radius,
            "tour": [[float(x), float(y)] for x, y in self.tour.points],
            "trajectory_m": [[float(x), float(y)] for x, y in self.trajectory.q],
            "schedule": self.schedule.to_dict(),
        }


def _discretise(waypoints, weights, N: int, V: float) -> np.ndarray | None:
    """Slot positions flying each leg at full speed and hovering with the spare slots.

    Leg ``i`` gets ``ceil(length / V)`` equal steps; spare slots go to the
    interior waypoints by largest remainder on ``weights``. Returns None if
    the legs alone need more than ``N - 1`` steps.
    """
    W = np.asarray(waypoints, dtype=float)
    legs = np.linalg.norm(np.diff(W, axis=0), axis=1)
    m = np.ceil(legs / V - 1e-9).astype(int)
    spare = N - 1 - int(m.sum())
    if spare < 0:
        return None
    w = np.asarray(weights, dtype=float)
    dwell = _apportion(w, spare) if w.size else np.zeros(0, dtype=int)
    q = [W[0]]
    for i in range(len(legs)):
        if m[i]:
            s = np.arange(1, m[i] + 1)[:, None] / m[i]
            q.extend(W[i] + s * (W[i + 1] - W[i]))
        if i < len(dwell):
            q.extend([W[i + 1]] * int(dwell[i]))
    if w.size == 0:
        q.extend([W[-1]] * spare)
    out = np.array(q)
    out[-1] = W[-1]
    return out


def _apportion(weights, total: int) -> np.ndarray:
    """Largest-remainder split of ``total`` slots; all to the first entry if weights vanish."""
    w = np.asarray(weights, dtype=float)
    out = np.zeros(w.size, dtype=int)
    if total <= 0:
        return out
    if w.sum() <= 0:
        out[0] = total
        return out
    x = total * w / w.sum()
    out[:] = np.floor(x + 1e-12).astype(int)
    for i in np.argsort(-(x - out), kind="stable")[:total - out.sum()]:
        out[i] += 1
    return out


def _touch_points(centres, start, end, R: float, rounds: int = TSPN_ROUNDS):
    """Waypoints within distance ``R`` of each centre, pulled toward the path.

    Each round moves every waypoint, in visiting order, to the point of its
    disk closest to the segment joining its neighbours, then re-orders the
    visits by 2-opt on the current waypoints.
    """
    C = np.asarray(centres, dtype=float).copy()
    P = C.copy()
    for _ in range(rounds):
        for i in range(len(P)):
            a = start if i == 0 else P[i - 1]
            b = end if i == len(P) - 1 else P[i + 1]
            ab = b - a
            L2 = float(ab @ ab)
            t = 0.0 if L2 == 0 else min(max(float((C[i] - a) @ ab) / L2, 0.0), 1.0)
            proj = a + t * ab
            d = np.linalg.norm(proj - C[i])
            P[i] = proj if d <= R else C[i] + R * (proj - C[i]) / d
        order = two_opt(start, P, end, list(range(len(P))))
        C, P = C[order], P[order]
    return C, P


def initial_trajectory(scenario: Scenario, hover: HoverPlan, tour: TourPlan | None = None):
    """Initial slot positions from the hover plan.

    Returns ``(trajectory, tour, radius)``; ``radius`` is None when the full
    path fits, else the smallest disk radius (found by bisection) for which
    the touch-point path fits.
    """
    pts, tau = hover.locations()
    if tour is None:
        tour = tsp_order(pts, scenario.q_I, scenario.q_F, scenario.v_h)
    N, V = scenario.N, scenario.V_h
    tour = tour.with_dwell(tau, scenario.T)
    start, end = np.asarray(scenario.q_I, float), np.asarray(scenario.q_F, float)
    q = _discretise(tour.waypoints(), tour.dwell, N, V)
    if q is not None:
        return Trajectory(q, scenario.H_min), tour, None

    if _discretise([start, end], [], N, V) is None:
        raise InfeasibleError(
            f"T = {scenario.T:g} s is too short to fly from q_I to q_F at {scenario.v_h:g} m/s")
    centres = tour.points
    wts = dict(zip(map(tuple, centres), tour.dwell))

    def attempt(R):
        C, P = _touch_points(centres, start, end, R)
        return _discretise(np.vstack([start, P, end]), [wts[tuple(c)] for c in C], N, V), P

    allp = np.vstack([start, end, centres])
    hi = float(np.max(np.linalg.norm(allp[:, None] - allp[None], axis=-1)))
    q_hi, _ = attempt(hi)
    if q_hi is None:
        log.info("touch-point path infeasible at R=%.1f m; using the straight line", hi)
        return Trajectory(_discretise([start, end], [], N, V), scenario.H_min), tour, math.inf
    lo = 0.0
    while hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        q_mid, _ = attempt(mid)
        if q_mid is None:
            lo = mid
        else:
            hi, q_hi = mid, q_mid
    return Trajectory(q_hi, scenario.H_min), tour, hi


def sca_step(scenario: Scenario, trajectory: Trajectory, schedule: SchedulePower,
             tol: float = 1e-7) -> tuple[Trajectory, ScaResult]:
    """One convex trajectory update for a fixed schedule and powers."""
    radio = scenario.radio
    eps = np.where(schedule.a & (schedule.p > 0),
                   schedule.kappa[:, None] * schedule.p * radio.gamma0, 0.0)
    sub = ScaSubproblem(trajectory.q, eps, scenario.sn_xy, scenario.H_min, radio.alpha,
                        scenario.V_h)
    res = sca_solve(sub, tol=tol)
    q = res.q.copy()
    q[0], q[-1] = scenario.q_I, scenario.q_F
    return Trajectory(q, scenario.H_min), res


def _min_rate(scenario, q, sp: SchedulePower) -> float:
    return _as_schedule(scenario, q, sp).r


def solve_p1(scenario: Scenario, mode: str = "proposed", *, tol: float = 1e-3,
             max_iters: int = 30, hover: HoverPlan | None = None,
             p3_options: dict | None = None) -> MissionPlan:
    """Block coordinate descent from the hover-plan initial trajectory.

    ``hover`` may be a plan from another mission length; it is rescaled.
    Each iteration updates the trajectory for the current schedule, then
    re-solves the schedule; the new schedule is kept only if it beats the
    old one on the new trajectory, so the trace never decreases. Inner
    schedule solves use the fast tie recovery; the final trajectory gets a
    full one.
    """
    p3_options = dict(p3_options or {})
    fast = dict(p3_options, recovery="fast")
    if hover is None:
        hover = solve_p2(scenario, mode)
    elif hover.mode != mode:
        raise ValueError(f"hover plan is for mode {hover.mode!r}, not {mode!r}")
    hover = hover.with_duration(scenario.T, scenario.N)
    traj, tour, radius = initial_trajectory(scenario, hover)
    traj.check(scenario)
    sp = solve_p3(scenario, traj.q, mode, **fast)
    trace = [sp.r]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        new_traj, _ = sca_step(scenario, traj, sp)
        r_mid = _min_rate(scenario, new_traj.q, sp)
        if r_mid < trace[-1]:
            # numerical noise in the trajectory step: keep the old iterate
            log.debug("trajectory step lost %.3g; kept previous", trace[-1] - r_mid)
            new_traj, r_mid = traj, trace[-1]
        cand = solve_p3(scenario, new_traj.q, mode, warm_start=sp.x, **fast)
        if cand.r < r_mid:
            cand = refit_powers(scenario, new_traj.q, sp.a, mode, like=sp)
            if cand.r < r_mid:
                cand = _as_schedule(scenario, new_traj.q, sp)
        traj, sp = new_traj, cand
        trace.append(max(sp.r, trace[-1]))
        if trace[-1] - trace[-2] <= tol:
            converged = True
            break
    if p3_options.get("recovery", "full") == "full":
        final = solve_p3(scenario, traj.q, mode, warm_start=sp.x, **p3_options)
        if final.r > sp.r:
            sp = final
            trace.append(sp.r)
    if not converged:
        log.warning("BCD stopped after %d iterations without meeting tol=%g", max_iters, tol)
    traj.check(scenario)
    return MissionPlan(traj, sp, sp.r, trace, hover.r, hover, tour, mode, it, converged,
                       tspn_radius=radius)


def _as_schedule(scenario, q, sp: SchedulePower) -> SchedulePower:
    """``sp`` with rates re-evaluated on trajectory ``q`` (powers unchanged)."""
    dp = distance_power(q, scenario.sn_xy, scenario.H_min, scenario.radio.alpha)
    r = np.where(sp.a, np.log2(1.0 + sp.kappa[:, None] * sp.p * scenario.radio.gamma0 / dp), 0.0)
    return SchedulePower(a=sp.a, p=sp.p, kappa=sp.kappa, rates=r, r=float(r.mean(axis=0).min()),
                         nu=sp.nu, phi=sp.phi, dual_value=sp.dual_value, iterations=0,
                         converged=sp.converged, x=sp.x)


def min_time_for_throughput(scenario: Scenario, bits: float, mode: str = "proposed", *,
                            T_max: float = 3600.0, hover: HoverPlan | None = None,
                            p1_options: dict | None = None):
    """Smallest slot-quantised T at which every SN can deliver ``bits``.

    Feasibility at T means the BCD design reaches ``r B T >= bits``. The
    lower bracket uses the hover-plan bound ``r <= r_P2`` and the flight
    time from q_I to q_F; the upper bracket doubles until feasible.
    Returns ``(T_min, MissionPlan)``.
    """
    if bits <= 0:
        raise ValueError("throughput must be positive")
    p1_options = dict(p1_options or {})
    if hover is None:
        hover = solve_p2(scenario, mode)
    B, d = scenario.radio.bandwidth_hz, scenario.delta
    dist = float(np.linalg.norm(np.subtract(scenario.q_F, scenario.q_I)))
    n_connect = int(math.ceil(dist / scenario.V_h - 1e-9)) + 1
    n_bound = int(math.ceil(bits / (B * hover.r * d) - 1e-9)) if hover.r > 0 else n_connect
    n_lo = max(n_connect, n_bound, 2)
    n_max = int(math.floor(T_max / d + 1e-9))
    cache = {}

    def feasible(n):
        if n not in cache:
            sc = scenario.with_duration(n * d)
            plan = solve_p1(sc, mode, hover=hover, **p1_options)
            cache[n] = (plan.r * B * sc.T >= bits * (1 - 1e-12), plan)
        return cache[n][0]

    if n_lo > n_max:
        raise InfeasibleError(f"throughput needs more than T_max = {T_max:g} s")
    if feasible(n_lo):
        return n_lo * d, cache[n_lo][1]
    lo, hi = n_lo, n_lo
    while not feasible(hi):
        lo = hi
        if hi >= n_max:
            raise InfeasibleError(f"throughput not reached within T_max = {T_max:g} s")
        hi = min(2 * hi, n_max)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi * d, cache[hi][1]
