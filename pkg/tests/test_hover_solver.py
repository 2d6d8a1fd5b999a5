import math

import numpy as np
import pytest

from oracles import enumerate_inner, exact_p2, grid_sites
from uav_harvest import dual
from uav_harvest.channel import Link, distance_power, rate_closed_form
from uav_harvest.hover_solver import (candidate_sites, dual_oracle_report, inner_search, solve_p2,
                                      solve_p2_benchmark)
from uav_harvest.opt_kernels import water_fill_budget
from uav_harvest.scenario import RadioParams, Scenario


def _tiny(rng, K, M):
    sn = tuple((float(x), float(y)) for x, y in rng.uniform(0, 300, size=(K, 2)).round(1))
    return Scenario(sn_positions=sn, radio=RadioParams(M=M))


# ---------------------------------------------------------------- dual helpers

def test_kappa_menu_four_antennas_eight_sns():
    menu = dual.kappa_menu(4, 8)
    assert menu[:, 1].tolist() == [4, 2, 1]
    assert menu[:, 0].tolist() == [1, 2, 3]


def test_kappa_menu_degenerate_and_benchmarks():
    assert dual.kappa_menu(2, 1).tolist() == [[1, 2]]
    assert dual.kappa_menu(12, 8, "mrc").tolist() == [[1, 12]]
    assert dual.kappa_menu(12, 8, "single").tolist() == [[1, 1]]
    assert dual.kappa_menu(12, 8)[:, 0].max() == 8
    with pytest.raises(ValueError):
        dual.kappa_menu(4, 2, "zf")


def test_split_join_round_trip():
    lam, c = np.array([0.2, 0.3, 0.5]), np.array([0.1, 0.2, 0.3])
    x = dual.join(lam, c)
    assert x.size == 5
    l2, c2 = dual.split(x, 3)
    assert np.allclose(l2, lam) and np.allclose(c2, c)
    assert dual.from_normalised(dual.to_normalised(c, 200, 0.01), 200, 0.01) == pytest.approx(c)


def test_feasibility_cut_on_eliminated_weight():
    assert dual.feasibility_cut(dual.join([0.5, 0.5], [0.1, 0.1]), 2) is None
    cut = dual.feasibility_cut(np.array([1.3, 0.1, 0.1]), 2)
    assert cut is not None and not cut.feasible


def test_tangent_gain_bounds_water_filled_rate():
    rng = np.random.default_rng(3)
    for _ in range(200):
        F = rng.uniform(0.01, 2.0, size=4)
        t = rng.dirichlet(np.ones(4))
        p, level = water_fill_budget(F, t, 1.0)
        rate = float(t @ np.log2(1 + p / F))
        for L in (level * 0.5, level, level * 2.0):
            if L <= F.min():
                continue
            bound = float(t @ dual.tangent_gain(F, L)) + 1.0 / (L * math.log(2))
            assert bound >= rate - 1e-12
        tight = float(t @ dual.tangent_gain(F, level)) + 1.0 / (level * math.log(2))
        assert tight == pytest.approx(rate, abs=1e-12)


# ---------------------------------------------------------------- inner problem

def test_inner_single_sn_two_antennas():
    sc = Scenario(sn_positions=((50.0, 50.0),), radio=RadioParams(M=2))
    sol = inner_search(sc, [1.0], [1e-3])
    assert sol.kappa == 2 and sol.active_set == (0,)
    assert np.allclose(sol.q, [50.0, 50.0])
    # an expensive power price silences the SN entirely
    assert inner_search(sc, [1.0], [1e9]).active_set == ()


def test_inner_objective_consistent_with_fields(baseline):
    sol = inner_search(baseline, np.full(8, 1 / 8), np.full(8, 0.05))
    assert sol.objective == pytest.approx(sol.objective_from_fields(), abs=1e-10)
    rep = dual_oracle_report(baseline, np.full(8, 1 / 8), np.full(8, 0.05))
    assert rep.d_mu == pytest.approx(baseline.N * baseline.radio.pbar - baseline.N * rep.inner.powers,
                                     abs=1e-10)
    assert rep.d_lam == pytest.approx(rep.inner.rates, abs=1e-10)


@pytest.mark.parametrize("mode", ["proposed", "mrc", "single"])
def test_inner_matches_subset_enumeration(mode):
    rng = np.random.default_rng(17)
    for trial in range(15):
        K, M = int(rng.integers(2, 6)), int(rng.integers(2, 8))
        sc = _tiny(rng, K, M)
        sites = grid_sites(-20, 320, -20, 320, 5)
        lam = rng.dirichlet(np.ones(K))
        mu = rng.uniform(0.1, 3.0, K) * lam / (sc.N * sc.radio.pbar * math.log(2))
        sol = inner_search(sc, lam, mu, mode, sites=sites)
        dp = distance_power(sites, sc.sn_xy, sc.H_min, sc.radio.alpha)
        best = max((enumerate_inner(row, lam, sol.mu, sc.N, M, sc.radio.gamma0, mode) for row in dp),
                   key=lambda b: b[0])
        assert sol.objective == pytest.approx(best[0], abs=1e-10)
        if best[0] > 0:
            assert len(sol.active_set) == len(best[1])


def test_inner_symmetric_pair_picks_lexicographic_site():
    sc = Scenario(sn_positions=((0.0, 0.0), (200.0, 0.0)), radio=RadioParams(M=4))
    sites = grid_sites(0, 200, -100, 100, 5)
    lam = np.array([0.5, 0.5])
    mu = np.full(2, 0.25 / (sc.N * sc.radio.pbar * math.log(2)))
    sol = inner_search(sc, lam, mu, sites=sites)
    dp = distance_power(sites, sc.sn_xy, sc.H_min, sc.radio.alpha)
    vals = [enumerate_inner(row, lam, sol.mu, sc.N, 4, sc.radio.gamma0)[0] for row in dp]
    top = max(vals)
    first = next(i for i, v in enumerate(vals) if v >= top - 1e-9 * (1 + top))
    assert np.allclose(sol.q, sites[first])


def test_candidate_sites_sorted_and_include_sns():
    sc = Scenario(sn_positions=((3.0, 7.0), (95.0, 41.0)), grid_step=20.0)
    s = candidate_sites(sc)
    assert any(np.allclose(p, [3.0, 7.0]) for p in s)
    assert all(tuple(s[i]) < tuple(s[i + 1]) for i in range(len(s) - 1))


# ---------------------------------------------------------------- solve_p2

def test_single_sn_hovers_overhead_at_full_power():
    sc = Scenario(sn_positions=((123.0, 45.0),), radio=RadioParams(M=12))
    plan = solve_p2(sc)
    assert plan.omega == 1
    assert np.allclose(plan.points[plan.tau > 0][0], [123.0, 45.0])
    assert plan.tau.sum() == pytest.approx(sc.T, abs=1e-9)
    full = rate_closed_form(Link((123.0, 45.0), sc.H_min, (123.0, 45.0)), sc.radio.pbar, 12, sc.radio)
    assert plan.r == pytest.approx(full, rel=1e-6)


def test_single_antenna_equals_one_antenna_proposed():
    sc = Scenario(sn_positions=((10.0, 20.0),), radio=RadioParams(M=12))
    a = solve_p2_benchmark(sc, "single_antenna")
    b = solve_p2(sc.with_radio(M=1))
    assert a.r == pytest.approx(b.r, abs=1e-9)


def test_far_apart_pair_single_antenna_equal_split():
    sc = Scenario(sn_positions=((0.0, 0.0), (600.0, 0.0)), radio=RadioParams(M=4))
    plan = solve_p2(sc, "single")
    assert plan.omega == 2
    pts, dur = plan.locations()
    assert dur == pytest.approx([sc.T / 2, sc.T / 2], rel=1e-4)
    assert plan.avg_rates() == pytest.approx([plan.r, plan.r], abs=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_solve_p2_matches_exact_convex_program(seed):
    rng = np.random.default_rng(100 + seed)
    K, M = int(rng.integers(1, 3)), int(rng.integers(2, 5))
    sc = _tiny(rng, K, M)
    sites = grid_sites(-40, 340, -40, 340, 5)
    for mode in ("proposed", "mrc", "single"):
        plan = solve_p2(sc, mode, sites=sites)
        assert plan.r == pytest.approx(exact_p2(sc, sites, mode), abs=1e-3)


def test_plan_invariants_and_strong_duality():
    rng = np.random.default_rng(5)
    sc = _tiny(rng, 3, 6)
    plan = solve_p2(sc)
    assert plan.tau.sum() == pytest.approx(sc.T, abs=1e-9)
    assert np.all(plan.tau > 0)
    assert plan.r == pytest.approx(plan.avg_rates().min(), abs=1e-9)
    assert plan.dual_value - plan.r <= 1e-3
    assert plan.dual_value >= plan.r - 1e-9
    # average power within budget
    assert np.all((plan.tau @ plan.powers) / sc.T <= sc.radio.pbar * (1 + 1e-9))
    # positive weights sit on binding rate constraints
    rates = plan.avg_rates()
    assert np.all(np.abs(rates[plan.lam > 1e-3] - plan.r) <= 1e-4)


def test_mode_ordering_and_mrc_singletons():
    rng = np.random.default_rng(8)
    sc = _tiny(rng, 4, 6)
    p = solve_p2(sc, "proposed")
    m = solve_p2(sc, "mrc")
    s = solve_p2_benchmark(sc, "single_antenna")
    assert p.r >= m.r - 1e-6
    assert m.r >= s.r - 1e-6
    assert all(len(sch) <= 1 for sch in m.schedules)
    assert all(k == 1 for k in s.kappas)


def test_with_duration_scales_shares():
    rng = np.random.default_rng(2)
    plan = solve_p2(_tiny(rng, 2, 4))
    longer = plan.with_duration(2 * plan.T)
    assert longer.tau == pytest.approx(2 * plan.tau)
    assert longer.r == plan.r
