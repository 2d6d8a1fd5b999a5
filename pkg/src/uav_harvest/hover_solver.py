"""Speed-unconstrained max-min rate: hover points with time sharing.

Without a speed limit the UAV may split the mission among finitely many hover
locations. The problem is solved in the dual: for fixed rate weights and
power prices the per-slot problem decouples into a search over candidate
sites and schedules, the dual is minimised by the ellipsoid method, and a
small LP over the near-optimal inner solutions recovers the time shares.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from . import dual
from .channel import distance_power
from .dual import C_FLOOR, LN2
from .errors import HarvestError, LpInfeasible
from .opt_kernels.ellipsoid import Cut, ellipsoid_minimize
from .opt_kernels.lp import LpProblem, lp_solve
from .opt_kernels.waterfill import water_fill_budget
from .scenario import BoxRegion, Scenario

log = logging.getLogger(__name__)

TIE_REL = 1e-6
DROP_FRAC = 1e-6


def candidate_sites(scenario: Scenario, box: BoxRegion | None = None,
                    include_sns: bool = True) -> np.ndarray:
    """Grid points of the SN bounding box, plus the SN positions themselves.

    Sorted lexicographically by (x, y); this order is the tie-break rule.
    """
    box = scenario.box() if box is None else box
    pts = box.grid()
    if include_sns:
        pts = np.vstack([pts, scenario.sn_xy])
    pts = np.unique(np.round(pts, 9), axis=0)   # unique() sorts rows lexicographically
    return pts


@dataclass
class InnerSolution:
    q: np.ndarray
    active_set: tuple[int, ...]
    kappa: int
    powers: np.ndarray   # W, zero off the active set
    rates: np.ndarray    # bps/Hz
    objective: float
    lam: np.ndarray
    mu: np.ndarray
    N: int

    def objective_from_fields(self) -> float:
        a = np.zeros(self.rates.size, dtype=bool)
        a[list(self.active_set)] = True
        f = self.lam * self.rates - self.N * self.mu * self.powers
        return float(np.sum(f[a]))


@dataclass
class DualOracleReport:
    d_lam: np.ndarray     # average rate of each SN at the inner maximiser
    d_mu: np.ndarray      # N pbar - N p_k
    value: float          # dual function g1
    inner: InnerSolution


@dataclass
class HoverPlan:
    points: np.ndarray          # (Omega, 2)
    tau: np.ndarray             # s
    schedules: list             # tuple of active SNs per point
    kappas: np.ndarray
    powers: np.ndarray          # (Omega, K) W
    rates: np.ndarray           # (Omega, K) bps/Hz
    r: float
    lam: np.ndarray
    mu: np.ndarray
    dual_value: float
    T: float
    mode: str = "proposed"
    iterations: int = 0
    converged: bool = True
    floor_hits: int = 0
    candidates: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def omega(self) -> int:
        """Number of distinct hover locations with positive duration."""
        return len(self.locations()[0])

    def locations(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct hover locations and their total durations (schedules pooled)."""
        pos = self.tau > 0
        if not pos.any():
            return np.zeros((0, 2)), np.zeros(0)
        pts, inv = np.unique(self.points[pos], axis=0, return_inverse=True)
        return pts, np.bincount(inv.ravel(), weights=self.tau[pos], minlength=len(pts))

    @property
    def gap(self) -> float:
        return self.dual_value - self.r

    def avg_rates(self) -> np.ndarray:
        return (self.tau @ self.rates) / self.T

    def with_duration(self, T: float, N: int | None = None) -> "HoverPlan":
        """Same plan for mission length ``T``; time shares and r do not depend on T."""
        mu = self.mu
        if N is not None and self.diagnostics.get("N"):
            mu = self.mu * self.diagnostics["N"] / N
        diag = dict(self.diagnostics, N=N or self.diagnostics.get("N"))
        return replace(self, tau=self.tau * (T / self.T), T=float(T), mu=mu, diagnostics=diag)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "r_bpshz": self.r,
            "dual_value": self.dual_value,
            "omega": self.omega,
            "T_s": self.T,
            "points": [
                {"x_m": float(q[0]), "y_m": float(q[1]), "tau_s": float(t),
                 "active": [int(k) for k in s], "kappa": int(kap),
                 "power_w": [float(v) for v in p], "rate_bpshz": [float(v) for v in rr]}
                for q, t, s, kap, p, rr in zip(self.points, self.tau, self.schedules,
                                               self.kappas, self.powers, self.rates)
            ],
            "lambda": [float(v) for v in self.lam],
            "mu": [float(v) for v in self.mu],
            "iterations": self.iterations,
            "converged": self.converged,
            "floor_hits": self.floor_hits,
            "candidates": self.candidates,
        }


class _SiteProblem:
    """Precomputed site geometry for one scenario and mode."""

    def __init__(self, scenario: Scenario, mode: str, box=None, sites=None, include_sns=True):
        self.scenario = scenario
        self.mode = mode
        self.sites = candidate_sites(scenario, box, include_sns) if sites is None \
            else np.asarray(sites, float)
        self.K = scenario.K
        radio = scenario.radio
        self.dp = distance_power(self.sites, scenario.sn_xy, scenario.H_min, radio.alpha)
        self.menu = dual.kappa_menu(scenario.M, self.K, mode)
        self.gp = radio.gamma0 * radio.pbar
        self.tables = dual.MenuTables(self.dp, self.menu, self.gp)
        self.floor_hits = 0

    def best(self, lam, c):
        V = self.tables.values(lam, c)
        idx = int(np.argmax(V))
        s, e = divmod(idx, V.shape[1])
        return V, s, e, float(V[s, e])

    def inner(self, lam, c):
        """Maximiser of the inner problem: (value, site, kappa, active, p~, r)."""
        V, s, e, vmax = self.best(lam, c)
        K = self.K
        p = np.zeros(K)
        r = np.zeros(K)
        if vmax <= 0.0:
            return 0.0, s, 0, (), p, r
        act, kap, pp, rr, _ = dual.choose_at_site(self.dp[s], lam, c, self.menu, e, self.gp)
        p[act] = pp[act]
        r[act] = rr[act]
        return vmax, s, kap, tuple(int(k) for k in act), p, r

    def oracle(self, x):
        K = self.K
        cut = dual.feasibility_cut(x, K)
        if cut is not None:
            return cut
        lam, c = dual.split(x, K)
        if np.any(c < C_FLOOR):
            self.floor_hits += 1
            c = np.maximum(c, C_FLOOR)
        v, s, kap, act, p, r = self.inner(lam, c)
        g = np.concatenate([r[:K - 1] - r[K - 1], (1.0 - p) / LN2])
        return Cut(True, g, v + float(c.sum()) / LN2, payload=(s, kap, act))


def inner_search(scenario: Scenario, lam, mu, mode: str = "proposed",
                 box: BoxRegion | None = None, sites=None) -> InnerSolution:
    """Best site, schedule and powers for dual weights ``lam`` and power prices ``mu``."""
    lam = np.asarray(lam, float)
    mu = np.asarray(mu, float)
    if np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-9:
        raise ValueError("lam must be non-negative and sum to one")
    prob = _SiteProblem(scenario, mode, box, sites)
    N, pbar = scenario.N, scenario.radio.pbar
    c = np.maximum(dual.to_normalised(mu, N, pbar), C_FLOOR)
    v, s, kap, act, p, r = prob.inner(lam, c)
    return InnerSolution(q=prob.sites[s].copy(), active_set=act, kappa=kap,
                         powers=p * pbar, rates=r, objective=v, lam=lam,
                         mu=dual.from_normalised(c, N, pbar), N=N)


def dual_oracle_report(scenario: Scenario, lam, mu, mode: str = "proposed",
                       box: BoxRegion | None = None, sites=None) -> DualOracleReport:
    inner = inner_search(scenario, lam, mu, mode, box, sites)
    N, pbar = scenario.N, scenario.radio.pbar
    value = inner.objective + N * pbar * float(np.sum(inner.mu))
    return DualOracleReport(d_lam=inner.rates.copy(), d_mu=N * pbar - N * inner.powers,
                            value=value, inner=inner)


def _time_share_lp(R, P):
    """max r s.t. t^T R_k >= r, t^T P_k <= 1 (P in units of pbar), sum t = 1."""
    Om, K = R.shape
    c = np.zeros(Om + 1)
    c[-1] = -1.0
    rows = [np.append(-R[:, k], 1.0) for k in range(K)]
    b = [0.0] * K
    use_power = P is not None
    if use_power:
        for k in range(K):
            if np.any(P[:, k] > 0):
                rows.append(np.append(P[:, k], 0.0))
                b.append(1.0)
    lb = np.append(np.zeros(Om), -np.inf)
    A_eq = np.append(np.ones(Om), 0.0)[None, :]
    res = lp_solve(LpProblem(c, np.array(rows), np.array(b), A_eq, np.array([1.0]), lb))
    return res.x[:Om], res


def time_share(floors: np.ndarray, p0: np.ndarray, rounds: int = 4, cut_rounds: int = 60,
               tol: float = 1e-9):
    """Time shares and powers for fixed candidate schedules.

    ``floors`` (Omega, K) holds ``d^alpha / (kappa gamma0 pbar)`` for
    scheduled pairs and ``inf`` elsewhere; ``p0`` initial powers in units of
    pbar. Alternates the time-sharing LP with exact per-SN water-filling,
    then refines the shares by cutting planes: each SN's water-filled rate
    is concave in ``t``, and the tangents at the current water levels give
    LP rows ``r <= sum_i t_i h_ik(L_k) + 1 / (L_k ln2)``.
    """
    member = np.isfinite(floors)
    P = np.where(member, p0, 0.0)
    t = None
    for _ in range(rounds):
        R = np.where(member, np.log2(1.0 + P / np.where(member, floors, 1.0)), 0.0)
        try:
            t, _ = _time_share_lp(R, P)
        except LpInfeasible:
            t, _ = _time_share_lp(R, None)
        t = np.maximum(t, 0.0)
        t /= t.sum()
        P, _ = _refill(floors, member, t)
    if cut_rounds:
        t = _refine_shares(floors, member, t, cut_rounds, tol)
        P, _ = _refill(floors, member, t)
    return t, P


def _min_rate(floors, member, t):
    P, lev = _refill(floors, member, t)
    R = np.where(member, np.log2(1.0 + P / np.where(member, floors, 1.0)), 0.0)
    return float(np.min(t @ R)), lev


def _refine_shares(floors, member, t, rounds, tol):
    Om, K = floors.shape
    best, lev = _min_rate(floors, member, t)
    best_t = t
    rows, b = [], []
    c = np.append(np.zeros(Om), -1.0)
    lb = np.append(np.zeros(Om), -np.inf)
    A_eq = np.append(np.ones(Om), 0.0)[None, :]
    fmin = np.where(member, floors, np.inf).min(axis=0)
    for _ in range(rounds):
        # an SN without time gets a cut at twice its best floor; any level is valid
        lev = np.where(np.isfinite(lev) & (lev > 0), lev, 2.0 * fmin)
        for k in range(K):
            if np.isfinite(lev[k]):
                rows.append(np.append(-dual.tangent_gain(floors[:, k], lev[k]), 1.0))
                b.append(1.0 / (lev[k] * LN2))
            else:
                rows.append(np.append(np.zeros(Om), 1.0))
                b.append(0.0)
        res = linprog(c, np.array(rows), np.array(b), A_eq, np.array([1.0]),
                      bounds=list(zip(lb, [None] * (Om + 1))), method="highs")
        if res.status != 0:
            log.info("share refinement LP stopped: %s", res.message)
            break
        t = np.maximum(res.x[:Om], 0.0)
        t /= t.sum()
        val, lev = _min_rate(floors, member, t)
        if val > best:
            best, best_t = val, t
        if -res.fun - best <= tol:
            break
    return best_t


def _refill(floors, member, t):
    """Per-SN water-filling with unit budget; returns powers and water levels."""
    P = np.zeros(floors.shape)
    lev = np.full(floors.shape[1], np.inf)
    for k in range(floors.shape[1]):
        w = np.where(member[:, k], t, 0.0)
        if np.any(w > 0):
            P[:, k], lev[k] = water_fill_budget(np.where(member[:, k], floors[:, k], 1.0), w, 1.0)
    return P, lev


def _collect(prob: _SiteProblem, lam, c, recent, eta_loose):
    V, _, _, vmax = prob.best(lam, c)
    eta = TIE_REL * (1.0 + abs(vmax))
    found = {}

    def add(s, kap, act, val):
        key = (int(s), int(kap), tuple(act))
        if key not in found or found[key] < val:
            found[key] = val

    for s, e in np.argwhere(V >= vmax - eta):
        j, kap = int(prob.menu[e, 0]), int(prob.menu[e, 1])
        _, _, f = dual.utilities(prob.dp[s], lam, c, kap, prob.gp)
        for act in dual.tied_sets(f, j, eta):
            add(s, kap, act, float(np.sum(f[list(act)])))
    for s, kap, act in recent:
        if not act:
            continue
        _, _, f = dual.utilities(prob.dp[s], lam, c, kap, prob.gp)
        val = float(np.sum(f[list(act)]))
        if val >= vmax - eta_loose:
            add(s, kap, act, val)
    return found, vmax


def _share(prob: _SiteProblem, cands, lam, c):
    """Time shares over ``cands``; returns (r, t, P, R, cands) with tiny shares dropped."""
    K = prob.K
    floors = np.full((len(cands), K), np.inf)
    p0 = np.zeros((len(cands), K))
    for i, (s, kap, act) in enumerate(cands):
        idx = list(act)
        floors[i, idx] = prob.dp[s, idx] / (kap * prob.gp)
        pp, _, _ = dual.utilities(prob.dp[s], lam, c, kap, prob.gp)
        p0[i, idx] = pp[idx]
    t, _ = time_share(floors, p0)
    keep = t >= DROP_FRAC
    t = t[keep] / t[keep].sum()
    cands = [cd for cd, k in zip(cands, keep) if k]
    floors = floors[keep]
    member = np.isfinite(floors)
    P, _ = _refill(floors, member, t)
    R = np.where(member, np.log2(1.0 + P / np.where(member, floors, 1.0)), 0.0)
    return float(np.min(t @ R)), t, P, R, cands


def _prune(prob: _SiteProblem, plan, lam, c, slack: float):
    """Greedily drop whole hover locations while r stays within ``slack``.

    Time sharing between neighbouring grid points is what attains the grid
    optimum, so candidates are never merged up front; locations are removed
    afterwards only when the LP can do without them.
    """
    r_ref = plan[0]
    while True:
        r, t, P, R, cands = plan
        sites = sorted({cd[0] for cd in cands},
                       key=lambda s: (sum(ti for ti, cd in zip(t, cands) if cd[0] == s), s))
        for s in sites:
            rest = [cd for cd in cands if cd[0] != s]
            if not rest:
                continue
            trial = _share(prob, rest, lam, c)
            if trial[0] >= r_ref - slack:
                plan = trial
                break
        else:
            return plan


def solve_p2(scenario: Scenario, mode: str = "proposed", box: BoxRegion | None = None, *,
             tol: float = 1e-7, max_iter: int = 40000, gap_tol: float = 1e-4,
             include_sns: bool = True, sites=None, prune_slack: float = 1e-4) -> HoverPlan:
    """Optimal hover plan for the speed-unconstrained problem on the site grid."""
    prob = _SiteProblem(scenario, mode, box, sites, include_sns)
    K, T = scenario.K, scenario.T
    radio = scenario.radio
    x0, radius = dual.initial_ball(K)
    window = 40 * x0.size + 100
    recent = deque(maxlen=window)

    def on_cut(state, cut):
        recent.append(cut.payload)

    res = ellipsoid_minimize(prob.oracle, x0, radius, tol=tol, max_iter=max_iter, on_cut=on_cut)
    lam, c = dual.split(res.x, K)
    c = np.maximum(c, C_FLOOR)
    g_star = res.value

    best = None
    eta_loose = 1e-4
    while True:
        found, vmax = _collect(prob, lam, c, set(recent), eta_loose)
        cands = [k for k, _ in sorted(found.items(), key=lambda kv: (-kv[1], kv[0]))]
        plan = _share(prob, cands, lam, c)
        if best is None or plan[0] > best[0][0]:
            best = (plan, len(found))
        if g_star - best[0][0] <= gap_tol or eta_loose >= 1e-2:
            break
        eta_loose *= 10.0
    plan, ncand = best
    if prune_slack > 0:
        plan = _prune(prob, plan, lam, c, prune_slack)
    r, t, P, R, cands = plan
    if g_star - r > gap_tol + prune_slack:
        log.warning("hover plan duality gap %.3g exceeds %.3g", g_star - r, gap_tol)

    order = sorted(range(len(cands)), key=lambda i: tuple(prob.sites[cands[i][0]]))
    N = scenario.N
    plan = HoverPlan(
        points=np.array([prob.sites[cands[i][0]] for i in order]),
        tau=np.array([t[i] for i in order]) * T,
        schedules=[cands[i][2] for i in order],
        kappas=np.array([cands[i][1] for i in order], dtype=int),
        powers=P[order] * radio.pbar,
        rates=R[order],
        r=r, lam=lam, mu=dual.from_normalised(c, N, radio.pbar),
        dual_value=g_star, T=T, mode=mode, iterations=res.iterations,
        converged=res.converged, floor_hits=prob.floor_hits, candidates=ncand,
        diagnostics={"N": N, "lower_bound": res.lower_bound, "resets": res.resets,
                     "eta_loose": eta_loose},
    )
    if not math.isfinite(plan.r):
        raise HarvestError("hover plan construction failed")
    return plan


def solve_p2_benchmark(scenario: Scenario, mode: str, **kw) -> HoverPlan:
    """Hover plan with the schedule restricted to a benchmark receiver."""
    mode = "single" if mode == "single_antenna" else mode
    return solve_p2(scenario, mode=mode, **kw)
