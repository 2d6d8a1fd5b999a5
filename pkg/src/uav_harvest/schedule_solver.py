"""Optimal scheduling and power allocation along a fixed trajectory.

Same dual structure as the hover problem, except that every slot has its own
position: the dual function averages the per-slot inner maxima instead of
taking the best site. Primal recovery reads the per-slot maximisers at the
dual optimum; slots whose inner problem is tied are resolved by a small LP
over the tied options followed by integer rounding, and powers are finally
re-optimised by exact water-filling for the fixed schedule.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from . import dual
from .channel import distance_power, slot_kappas
from .dual import C_FLOOR, LN2
from .errors import ConvergenceError, LpInfeasible
from .opt_kernels.ellipsoid import Cut, ellipsoid_minimize
from .opt_kernels.lp import LpProblem, lp_solve
from .opt_kernels.waterfill import water_fill_budget
from .scenario import Scenario

log = logging.getLogger(__name__)

TIE_REL = 1e-6
WARM_RADIUS = 0.05
POLISH_FULL = 4000     # use every admissible slot option when N * options stays below this
FAST_EFFORT = 0.1      # share of the slot-count MILP budget used by fast recovery


@dataclass
class SchedulePower:
    a: np.ndarray            # (N, K) bool
    p: np.ndarray            # (N, K) W
    kappa: np.ndarray        # (N,)
    rates: np.ndarray        # (N, K) per-slot bps/Hz
    r: float
    nu: np.ndarray
    phi: np.ndarray
    dual_value: float
    iterations: int = 0
    converged: bool = True
    floor_hits: int = 0
    ties: list = field(default_factory=list)
    x: np.ndarray | None = None      # normalised dual point, reusable as a warm start

    @property
    def avg_rates(self) -> np.ndarray:
        return self.rates.mean(axis=0)

    @property
    def gap(self) -> float:
        return self.dual_value - self.r

    def to_dict(self) -> dict:
        return {
            "r_bpshz": self.r,
            "dual_value": self.dual_value,
            "avg_rate_bpshz": [float(v) for v in self.avg_rates],
            "nu": [float(v) for v in self.nu],
            "phi": [float(v) for v in self.phi],
            "iterations": self.iterations,
            "converged": self.converged,
            "floor_hits": self.floor_hits,
            "ties": [{"slot": int(n), "options": [list(o) for o in opts]} for n, opts in self.ties],
            "slots": [
                {"active": [int(k) for k in np.flatnonzero(row)], "kappa": int(kap),
                 "power_w": [float(v) for v in pw[row]]}
                for row, kap, pw in zip(self.a, self.kappa, self.p)
            ],
        }


class _SlotProblem:
    def __init__(self, scenario: Scenario, trajectory, mode: str):
        q = np.asarray(trajectory, dtype=float)
        if q.shape != (scenario.N, 2):
            raise ValueError(f"trajectory has shape {q.shape}, expected ({scenario.N}, 2)")
        self.scenario = scenario
        self.mode = mode
        self.K = scenario.K
        self.N = scenario.N
        radio = scenario.radio
        self.dp = distance_power(q, scenario.sn_xy, scenario.H_min, radio.alpha)
        self.menu = dual.kappa_menu(scenario.M, self.K, mode)
        self.gp = radio.gamma0 * radio.pbar
        self.tables = dual.MenuTables(self.dp, self.menu, self.gp)
        self.floor_hits = 0
        self._ar = np.arange(self.N)
        self._bits = (1 << np.arange(self.K)).astype(np.int64)
        self.last_keys = None

    def keys(self, e, act) -> np.ndarray:
        """Integer code of each slot's choice: menu entry and active bitmask."""
        return e.astype(np.int64) * (1 << self.K) + act.astype(np.int64) @ self._bits

    def evaluate(self, lam, c):
        """Per-slot maximisers: values (N,), entry (N,), active mask, p~ and r (N, K)."""
        f = self.tables.utilities(lam, c)
        V = _values_from(self.tables, f.copy())
        e = np.argmax(V, axis=1)
        vmax = V[self._ar, e]
        on = vmax > 0
        fsel = f[self._ar, e]
        act = _top_mask(fsel, self.menu[e, 0]) & on[:, None]
        floor = self.tables.floor[self._ar, e]
        p, r = _wf(lam, c, floor, act)
        return np.maximum(vmax, 0.0), e, act, p, r

    def oracle(self, x):
        K = self.K
        cut = dual.feasibility_cut(x, K)
        if cut is not None:
            return cut
        lam, c = dual.split(x, K)
        if np.any(c < C_FLOOR):
            self.floor_hits += 1
            c = np.maximum(c, C_FLOOR)
        v, e, act, p, r = self.evaluate(lam, c)
        self.last_keys = self.keys(e, act)
        rbar = r.mean(axis=0)
        pbar = p.mean(axis=0)
        g = np.concatenate([rbar[:K - 1] - rbar[K - 1], (1.0 - pbar) / LN2])
        return Cut(True, g, float(v.mean()) + float(c.sum()) / LN2)


def _values_from(tables: dual.MenuTables, f):
    jmax = tables.jmax
    if jmax == 1:
        return f.max(axis=-1)
    np.negative(f, out=f)
    f.sort(axis=-1)
    out = np.empty(f.shape[:2])
    run = np.zeros(f.shape[:2])
    for j in range(jmax):
        run += f[..., j]
        sel = tables.menu[:, 0] == j + 1
        out[:, sel] = run[:, sel]
    return -out


def _top_mask(f, j):
    """Row-wise mask of the ``j[n]`` largest entries (stable: lower index first)."""
    order = np.argsort(-f, axis=1, kind="stable")
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(f.shape[1])[None, :].repeat(f.shape[0], 0), axis=1)
    return rank < np.asarray(j)[:, None]


def _wf(lam, c, floor, act):
    with np.errstate(divide="ignore", invalid="ignore"):
        level = np.where(lam > 0, lam / c, 0.0)
    on = act & (level > floor)
    p = np.where(on, level - floor, 0.0)
    r = np.where(on, np.log2(np.where(on, level, 1.0) / floor), 0.0)
    return p, r


def per_slot_inner(dist_pow, nu, phi, radio, N: int, mode: str = "proposed"):
    """Single-slot inner problem for SN distances ``dist_pow`` (K,).

    Returns ``(active, kappa, p, r, value)`` with ``p`` in W; the empty schedule
    is chosen when no SN has positive utility.
    """
    dp = np.atleast_2d(np.asarray(dist_pow, dtype=float))
    K = dp.shape[1]
    menu = dual.kappa_menu(radio.M, K, mode)
    gp = radio.gamma0 * radio.pbar
    lam = np.asarray(nu, dtype=float)
    c = np.maximum(dual.to_normalised(phi, N, radio.pbar), C_FLOOR)
    tables = dual.MenuTables(dp, menu, gp)
    V = tables.values(lam, c)[0]
    e = int(np.argmax(V))
    if V[e] <= 0:
        return (), 0, np.zeros(K), np.zeros(K), 0.0
    act, kap, p, r, _ = dual.choose_at_site(dp[0], lam, c, menu, e, gp)
    mask = np.zeros(K, dtype=bool)
    mask[act] = True
    return (tuple(int(k) for k in act), kap, np.where(mask, p, 0.0) * radio.pbar,
            np.where(mask, r, 0.0), float(V[e]))


def _slot_options(prob: _SlotProblem, lam, c, eta_rel: float, recent=None,
                  eta_loose: float = 0.0):
    """Near-optimal (kappa, active) options per slot at the dual point.

    Returns ``(opts, tied)``: ``opts[n]`` lists options best first and
    ``tied[n]`` flags slots with several options within ``eta_rel``
    (relative) of the optimum. With ``eta_loose > 0`` the lists also hold
    options within ``eta_loose`` of the optimum: choices made at recent
    ellipsoid centres (``recent``, an array of slot keys) and, per menu
    entry, the top set and its single swaps. These give the integer
    recovery room to balance rates across slots.
    """
    f = prob.tables.utilities(lam, c)
    V = _values_from(prob.tables, f.copy())
    vmax = np.maximum(V.max(axis=1), 0.0)
    eta = eta_rel * (1.0 + np.abs(vmax))
    loose = max(eta_loose, eta_rel) * (1.0 + np.abs(vmax))
    K = prob.K
    uniq = None
    if recent is not None and len(recent) and eta_loose > 0:
        S = np.sort(np.asarray(recent), axis=0)
        uniq = [np.unique(S[:, n]) for n in range(prob.N)]
    opts, tied = [], []
    for n in range(prob.N):
        found = {}

        def add(kap, act, val, lim):
            if val >= vmax[n] - lim:
                key = (kap, act) if act else (0, ())
                found[key] = max(found.get(key, -np.inf), val)

        add(0, (), 0.0, eta[n])
        for e in np.flatnonzero(V[n] >= vmax[n] - eta[n]):
            if V[n, e] > 0:
                j, kap = int(prob.menu[e, 0]), int(prob.menu[e, 1])
                for act in dual.tied_sets(f[n, e], j, eta[n], limit=256):
                    add(kap, act, float(np.sum(f[n, e, list(act)])), eta[n])
        tied.append(len(found) > 1)
        if eta_loose > 0:
            add(0, (), 0.0, loose[n])
            for e in np.flatnonzero(V[n] >= vmax[n] - loose[n]):
                j, kap = int(prob.menu[e, 0]), int(prob.menu[e, 1])
                top = dual.top_set(f[n, e], j).tolist()
                rest = [k for k in range(K) if k not in top]
                add(kap, tuple(top), float(np.sum(f[n, e, top])), loose[n])
                for i, k_out in enumerate(top):
                    for k_in in rest:
                        act = tuple(sorted(top[:i] + top[i + 1:] + [k_in]))
                        add(kap, act, float(np.sum(f[n, e, list(act)])), loose[n])
        if uniq is not None:
            for key in uniq[n]:
                e, bits = divmod(int(key), 1 << K)
                act = tuple(k for k in range(K) if bits >> k & 1)
                add(int(prob.menu[e, 1]), act,
                    float(np.sum(f[n, e, list(act)])) if act else 0.0, loose[n])
        opts.append(sorted(found, key=lambda o: (-found[o], o)))
    return opts, tied


def _fix_powers(prob: _SlotProblem, a: np.ndarray):
    """Exact per-SN water-filling for a fixed schedule, dropping zero-power members.

    Returns (a, kappa, p~, r) with p~ in units of pbar.
    """
    sc = prob.scenario
    N, K = prob.N, prob.K
    for _ in range(K + 1):
        kappa = slot_kappas(a, sc.M, prob.mode)
        floor = prob.dp / (np.maximum(kappa, 1)[:, None] * prob.gp)
        p = np.zeros((N, K))
        for k in range(K):
            w = a[:, k].astype(float)
            if w.any():
                p[:, k], _ = water_fill_budget(np.where(a[:, k], floor[:, k], 1.0), w, float(N))
        idle = a & (p <= 0)
        if not idle.any():
            break
        a = a & ~idle
    r = np.where(a, np.log2(1.0 + p / floor), 0.0)
    return a, kappa, p, r


def _schedule_from_options(prob: _SlotProblem, opts, level0, max_columns: int | None = None,
                           effort: float = 1.0):
    """Slot mask from per-slot options; slots with a choice share time.

    Slots with a single option are fixed. The rest are grouped by geometry and
    option list and their integer slot counts maximise the exact min-rate
    (with per-SN water-filling) by outer approximation, see ``_TimeShare``.
    Returns None when that needs more than ``max_columns`` count variables.
    """
    N, K = prob.N, prob.K
    a = np.zeros((N, K), dtype=bool)
    groups = {}
    for n, o in enumerate(opts):
        if len(o) == 1:
            a[n, list(o[0][1])] = True
        else:
            groups.setdefault((tuple(o), tuple(np.round(prob.dp[n], 6))), []).append(n)
    if not groups:
        return a
    keys = list(groups)
    reps = [groups[k][0] for k in keys]
    sizes = np.array([len(groups[k]) for k in keys], dtype=float)
    cols = [(g, o) for g, k in enumerate(keys) for o in k[0]]
    if max_columns is not None and len(cols) > max_columns:
        return None
    Fcol = np.full((len(cols), K), np.inf)     # floors of scheduled pairs, inf elsewhere
    for i, (g, (kap, act)) in enumerate(cols):
        if act:
            Fcol[i, list(act)] = prob.dp[reps[g], list(act)] / (kap * prob.gp)
    kfix = slot_kappas(a, prob.scenario.M, prob.mode)
    Ffix = np.where(a, prob.dp / (np.maximum(kfix, 1)[:, None] * prob.gp), np.inf)
    G = np.zeros((len(keys), len(cols)))
    for i, (g, _) in enumerate(cols):
        G[g, i] = 1.0
    nodes = int((500 if len(cols) <= 100 else 300) * effort)
    x = _TimeShare(Fcol, Ffix, G, sizes, N).solve(level0, node_limit=max(nodes, 20),
                                                  mip_gap=1e-4 / effort)
    for g, key in enumerate(keys):
        slots = groups[key]
        pos = 0
        for i in np.flatnonzero(G[g]):
            cnt = int(x[i])
            for n in slots[pos:pos + cnt]:
                a[n, list(cols[i][1][1])] = True
            pos += cnt
    return a


def _all_options(prob: _SlotProblem) -> list:
    out = [(0, ())]
    for j, kap in prob.menu:
        out += [(int(kap), S) for S in itertools.combinations(range(prob.K), int(j))]
    return out


def _sn_rate_sum(floors: np.ndarray, N: int) -> float:
    f = floors[np.isfinite(floors)]
    if f.size == 0:
        return 0.0
    p, _ = water_fill_budget(f, np.ones(f.size), float(N))
    return float(np.sum(np.log2(1.0 + p / f)))


def _polish(prob: _SlotProblem, a: np.ndarray, pool, max_passes: int = 6,
            pair_budget: int = 200_000) -> np.ndarray:
    """Slot moves over ``pool[n]`` options while the sorted rate vector improves.

    Comparing sorted rates (leximin) lets the search leave plateaus where
    several SNs share the minimum and no single move raises all of them.
    Moves change one slot; when the pair count fits ``pair_budget``, a pass
    without single improvements also tries changing two slots at once.
    """
    N, K = prob.N, prob.K
    kap = slot_kappas(a, prob.scenario.M, prob.mode)
    F = np.where(a, prob.dp / (np.maximum(kap, 1)[:, None] * prob.gp), np.inf)
    tot = np.array([_sn_rate_sum(F[:, k], N) for k in range(K)])
    cur = [(int(kap[n]), tuple(np.flatnonzero(a[n]).tolist())) if a[n].any() else (0, ())
           for n in range(N)]

    def row_of(n, opt):
        kp, S = opt
        row = np.full(K, np.inf)
        if S:
            row[list(S)] = prob.dp[n, list(S)] / (kp * prob.gp)
        return row

    def better(key, ref):
        diff = np.flatnonzero(np.abs(key - ref) > 1e-12)
        return diff.size > 0 and key[diff[0]] > ref[diff[0]]

    def trial(changes):
        touched = sorted(set().union(*(set(cur[n][1]) | set(o[1]) for n, o in changes)))
        t = tot.copy()
        col = F[:, touched].copy()
        for n, o in changes:
            col[n] = row_of(n, o)[touched]
        for i, k in enumerate(touched):
            t[k] = _sn_rate_sum(col[:, i], N)
        return t

    moves = sum(len(p) for p in pool)
    for _ in range(max_passes):
        moved = False
        for n in range(N):
            ref, pick = np.sort(tot), None
            for opt in pool[n]:
                if opt != cur[n]:
                    t = trial([(n, opt)])
                    if better(np.sort(t), ref):
                        ref, pick = np.sort(t), (opt, t)
            if pick is not None:
                cur[n], tot = pick
                F[n] = row_of(n, cur[n])
                moved = True
        if not moved and moves * moves <= pair_budget:
            ref, pick = np.sort(tot), None
            for n1 in range(N):
                for n2 in range(n1 + 1, N):
                    for o1 in pool[n1]:
                        for o2 in pool[n2]:
                            if o1 != cur[n1] and o2 != cur[n2]:
                                t = trial([(n1, o1), (n2, o2)])
                                if better(np.sort(t), ref):
                                    ref, pick = np.sort(t), ((n1, o1), (n2, o2), t)
            if pick is not None:
                for n, o in pick[:2]:
                    cur[n] = o
                    F[n] = row_of(n, o)
                tot = pick[2]
                moved = True
        if not moved:
            break
    out = np.zeros((N, K), dtype=bool)
    for n, (_, S) in enumerate(cur):
        out[n, list(S)] = True
    return out


def _rates(P, F):
    fin = np.isfinite(F)
    return np.where(fin, np.log2(1.0 + P / np.where(fin, F, 1.0)), 0.0)


class _TimeShare:
    """Integer slot counts per option column, maximising the exact min-rate.

    For counts ``x`` the best rate sum of SN k (powers water-filled with
    budget N, in p~ units) is concave in ``x`` and, for every level ``L``,
    bounded by ``sum_i x_i h_ik(L) + fixed_k(L) + N / (L ln2)`` with
    equality at the optimal level. Cutting planes at the levels of each
    iterate turn the problem into a sequence of small MILPs whose bound and
    incumbent meet at the integer optimum.
    """

    def __init__(self, Fcol, Ffix, G, sizes, N):
        self.Fcol, self.Ffix, self.G, self.sizes, self.N = Fcol, Ffix, G, sizes, N
        self.nc, self.K = Fcol.shape

    def refill(self, x):
        """Exact rate sums and water levels per SN for counts ``x``."""
        Fc, Ff = self.Fcol, self.Ffix
        tot, lev = np.zeros(self.K), np.full(self.K, np.inf)
        for k in range(self.K):
            mc, mf = np.isfinite(Fc[:, k]), np.isfinite(Ff[:, k])
            floors = np.concatenate([Fc[mc, k], Ff[mf, k]])
            w = np.concatenate([x[mc], np.ones(mf.sum())])
            if np.any(w > 0):
                pk, lev[k] = water_fill_budget(floors, w, float(self.N))
                tot[k] = float(np.sum(w * np.log2(1.0 + pk / floors)))
        return tot, lev

    def cuts(self, lev):
        """Rows ``N r - sum_i x_i h_ik <= fixed_k + N/(L_k ln2)`` for finite levels."""
        rows, ub = [], []
        for k in np.flatnonzero(np.isfinite(lev) & (lev > 0)):
            L = lev[k]
            rows.append(np.append(-dual.tangent_gain(self.Fcol[:, k], L), self.N))
            ub.append(float(dual.tangent_gain(self.Ffix[:, k], L).sum()) + self.N / (L * LN2))
        return rows, ub

    def solve(self, level0, max_rounds: int = 12, tol: float = 1e-7, mip_gap: float = 1e-4,
              node_limit: int = 500):
        nc, N = self.nc, self.N
        # any positive level gives a valid cut; SNs without a dual level use a floor
        lev0 = np.asarray(level0, dtype=float).copy()
        F = np.vstack([self.Fcol, self.Ffix])
        for k in np.flatnonzero(~(lev0 > 0)):
            fin = F[np.isfinite(F[:, k]), k]
            lev0[k] = 2.0 * fin.min() if fin.size else np.inf
        rows, ub = self.cuts(lev0)
        eq = LinearConstraint(np.hstack([self.G, np.zeros((self.G.shape[0], 1))]),
                              self.sizes, self.sizes)
        bounds = Bounds(np.append(np.zeros(nc), -np.inf), np.append(np.full(nc, np.inf), np.inf))
        cvec = np.append(np.zeros(nc), -1.0)
        best, best_x = -np.inf, None
        stall = 0
        for _ in range(max_rounds):
            res = milp(cvec, constraints=[LinearConstraint(np.array(rows), -np.inf, np.array(ub)), eq],
                       integrality=np.append(np.ones(nc), 0), bounds=bounds,
                       options={"mip_rel_gap": mip_gap, "node_limit": node_limit})
            if res.x is None:
                log.info("slot-count MILP gave no solution (%s)", res.message)
                break
            x = np.round(res.x[:nc])
            tot, lev = self.refill(x)
            val = float(tot.min()) / N
            if val > best + tol:
                best, best_x, stall = val, x, 0
            else:
                stall += 1
            bound = getattr(res, "mip_dual_bound", None)
            bound = -bound if bound is not None else -res.fun
            if bound - best <= max(tol, mip_gap * abs(bound)) or stall >= 2:
                break
            r2, u2 = self.cuts(lev)
            rows += r2
            ub += u2
        if best_x is None:
            best_x = np.concatenate([_largest_remainder(np.ones(int(self.G[g].sum())), int(self.sizes[g]))
                                     for g in range(self.G.shape[0])])
        return best_x


def _largest_remainder(x, total: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.size, dtype=int)
    if x.sum() <= 0:
        out[0] = total
        return out
    x = x * (total / x.sum())
    out[:] = np.floor(x + 1e-9).astype(int)
    rem = x - out
    for i in np.argsort(-rem, kind="stable")[:total - out.sum()]:
        out[i] += 1
    return out


def solve_p3(scenario: Scenario, trajectory, mode: str = "proposed", *, tol: float = 1e-7,
             max_iter: int = 40000, warm_start=None, gap_tol: float = 1e-3,
             tie_strategy: str = "lp", seed: int = 0, max_columns: int = 400,
             recovery: str = "full") -> SchedulePower:
    """Schedule and powers maximising the minimum average rate along ``trajectory``.

    ``warm_start`` is a previous normalised dual point; the search then starts
    in a small ball around it and falls back to the full ball if the optimum
    lands on its boundary. ``tie_strategy="jitter"`` breaks per-slot ties by a
    seeded 1e-9 perturbation of the power prices instead of the LP.
    ``recovery="fast"`` stops the option ladder after the 1e-4 rung and
    gives the slot-count MILP a tenth of its node budget.
    """
    if recovery not in ("full", "fast"):
        raise ValueError(f"unknown recovery {recovery!r}")
    prob = _SlotProblem(scenario, trajectory, mode)
    K, N = prob.K, prob.N
    radio = scenario.radio
    x0, radius = dual.initial_ball(K)
    recent = deque(maxlen=40 * x0.size + 100)

    def on_cut(state, cut):
        recent.append(prob.last_keys)

    res = None
    iters = 0
    if warm_start is not None:
        xw = np.asarray(warm_start, dtype=float)
        res = ellipsoid_minimize(prob.oracle, xw, WARM_RADIUS, tol=tol, max_iter=max_iter,
                                 on_cut=on_cut)
        iters += res.iterations
        if np.linalg.norm(res.x - xw) > 0.8 * WARM_RADIUS or not res.converged:
            res = None
    if res is None:
        recent.clear()
        res = ellipsoid_minimize(prob.oracle, x0, radius, tol=tol, max_iter=max_iter,
                                 on_cut=on_cut)
        iters += res.iterations
    lam, c = dual.split(res.x, K)
    c = np.maximum(c, C_FLOOR)
    g_star = res.value

    strict, tied = _slot_options(prob, lam, c, TIE_REL)
    ties = [(n, [o[1] for o in strict[n]]) for n in np.flatnonzero(tied)]
    if tie_strategy == "jitter":
        rng = np.random.default_rng(seed)
        cj = c * (1.0 + 1e-9 * rng.standard_normal(c.size))
        jopts, _ = _slot_options(prob, lam, cj, 0.0)
        ladder = [[o[:1] for o in jopts]]
    elif tie_strategy == "lp":
        keys = np.array(recent)
        ladder = [strict] + [_slot_options(prob, lam, c, TIE_REL, keys, el)[0]
                             for el in ((1e-4,) if recovery == "fast" else (1e-4, 1e-3, 1e-2))]
    else:
        raise ValueError(f"unknown tie_strategy {tie_strategy!r}")
    best = None
    level0 = np.where(lam > 0, lam / c, 0.0)
    for i, opts in enumerate(ladder):
        mask = _schedule_from_options(prob, opts, level0, None if i == 0 else max_columns,
                                      effort=1.0 if recovery == "full" else FAST_EFFORT)
        if mask is None:
            log.info("skipping tie recovery with %d options: above max_columns", sum(map(len, opts)))
            continue
        a, kappa, p, r = _fix_powers(prob, mask)
        rmin = float(r.mean(axis=0).min())
        if best is None or rmin > best[0]:
            best = (rmin, a, kappa, p, r)
        if g_star - best[0] <= gap_tol:
            break
    if g_star - best[0] > gap_tol and recovery == "full":
        menu_opts = _all_options(prob)
        pool = [menu_opts] * N if N * len(menu_opts) <= POLISH_FULL else \
            [sorted(set().union(*(rung[n] for rung in ladder))) for n in range(N)]
        a, kappa, p, r = _fix_powers(prob, _polish(prob, best[1], pool))
        rmin = float(r.mean(axis=0).min())
        if rmin > best[0]:
            best = (rmin, a, kappa, p, r)
    rmin, a, kappa, p, r = best
    if ties:
        log.info("%d slots tied at the dual optimum; resolved by time sharing", len(ties))
    if not res.converged:
        log.warning("schedule dual did not converge in %d iterations", max_iter)
    if p.mean(axis=0).max() > 1.0 + 1e-9:
        raise ConvergenceError("power budget violated after recovery")
    return SchedulePower(
        a=a, p=p * radio.pbar, kappa=kappa, rates=r, r=rmin,
        nu=lam, phi=dual.from_normalised(c, N, radio.pbar), dual_value=g_star,
        iterations=iters, converged=res.converged, floor_hits=prob.floor_hits,
        ties=[(int(n), o) for n, o in ties], x=res.x.copy(),
    )


def refit_powers(scenario: Scenario, trajectory, schedule, mode: str = "proposed",
                 like: SchedulePower | None = None) -> SchedulePower:
    """Exact water-filled powers for a fixed schedule along ``trajectory``.

    Dual fields are copied from ``like`` when given (they then describe the
    schedule's origin, not this trajectory).
    """
    prob = _SlotProblem(scenario, trajectory, mode)
    a, kappa, p, r = _fix_powers(prob, np.asarray(schedule, dtype=bool).copy())
    K = scenario.K
    return SchedulePower(
        a=a, p=p * scenario.radio.pbar, kappa=kappa, rates=r, r=float(r.mean(axis=0).min()),
        nu=like.nu if like else np.full(K, np.nan), phi=like.phi if like else np.full(K, np.nan),
        dual_value=like.dual_value if like else float("nan"), iterations=0,
        converged=like.converged if like else True, x=like.x if like else None,
    )
