import itertools

import numpy as np
import pytest

from uav_harvest.tsp import path_length, tsp_order, two_opt


def _brute(start, pts, end):
    return min(path_length(start, pts[list(p)], end) for p in itertools.permutations(range(len(pts))))


def test_single_point():
    plan = tsp_order([[3.0, 4.0]], (0.0, 0.0), (6.0, 0.0), v_h=5.0)
    assert plan.length == pytest.approx(10.0)
    assert plan.T_tsp == pytest.approx(2.0)
    assert plan.order.tolist() == [0]


def test_collinear_points_follow_the_line():
    pts = np.array([[70.0, 0.0], [10.0, 0.0], [40.0, 0.0]])
    plan = tsp_order(pts, (0.0, 0.0), (100.0, 0.0), v_h=10.0)
    assert plan.order.tolist() == [1, 2, 0]
    assert plan.length == pytest.approx(100.0)


@pytest.mark.parametrize("seed", range(8))
def test_held_karp_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1000, size=(7, 2))
    s, e = rng.uniform(0, 1000, 2), rng.uniform(0, 1000, 2)
    plan = tsp_order(pts, s, e, v_h=20.0, method="exact")
    assert plan.length == pytest.approx(_brute(s, pts, e), rel=1e-12)
    assert sorted(plan.order.tolist()) == list(range(7))


@pytest.mark.parametrize("seed", range(20))
def test_local_search_close_to_exact(seed):
    rng = np.random.default_rng(50 + seed)
    pts = rng.uniform(0, 1000, size=(8, 2))
    s, e = (400.0, 0.0), (1000.0, 500.0)
    exact = tsp_order(pts, s, e, 20.0, method="exact").length
    heur = tsp_order(pts, s, e, 20.0, method="2opt").length
    assert exact <= heur + 1e-9
    assert heur <= 1.05 * exact


def test_two_opt_never_lengthens():
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 100, size=(15, 2))
    order = list(rng.permutation(15))
    before = path_length((0, 0), pts[order], (100, 100))
    after = path_length((0, 0), pts[two_opt((0, 0), pts, (100, 100), order)], (100, 100))
    assert after <= before + 1e-12


def test_large_instance_uses_heuristic_and_visits_all():
    rng = np.random.default_rng(9)
    pts = rng.uniform(0, 1000, size=(30, 2))
    plan = tsp_order(pts, (0, 0), (0, 0), 20.0)
    assert sorted(plan.order.tolist()) == list(range(30))
    assert plan.legs.size == 31


def test_dwell_and_waypoints():
    plan = tsp_order([[0.0, 100.0], [0.0, 200.0]], (0.0, 0.0), (0.0, 300.0), v_h=10.0)
    assert plan.T_tsp == pytest.approx(30.0)
    w = plan.waypoints()
    assert w.shape == (4, 2)
    d = plan.with_dwell([1.0, 3.0], T=70.0)
    assert d.dwell == pytest.approx([10.0, 30.0])


def test_bad_input():
    with pytest.raises(ValueError):
        tsp_order(np.zeros((0, 2)), (0, 0), (1, 1), 1.0)
    with pytest.raises(ValueError):
        tsp_order([[0.0, 0.0]], (0, 0), (1, 1), 1.0, method="greedy")
