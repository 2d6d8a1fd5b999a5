import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from uav_harvest.errors import InfeasibleError, LpInfeasible, LpUnbounded
from uav_harvest.opt_kernels import (Cut, EllipsoidState, LpProblem, ScaSubproblem, UnboundedWaterLevel,
                                     ellipsoid_minimize, lp_solve, sca_solve, volume_ratio, water_fill,
                                     water_fill_budget)
from uav_harvest.opt_kernels.ellipsoid import ellipsoid_step

LN2 = math.log(2.0)
G0 = 2.512e7


# ---------------------------------------------------------------- water filling

def test_water_fill_hand_example():
    N, kappa = 37, 3
    p, r = water_fill(1.0, 1.0 / (N * LN2), 0.5 * kappa * G0, kappa, G0, N)
    assert p == pytest.approx(0.5, rel=1e-12)
    assert r == pytest.approx(1.0, rel=1e-12)


def test_water_fill_trivial_cases():
    assert water_fill(0.0, 1.0, 1e4, 12, G0, 10) == (0.0, 0.0)
    # level exactly at the floor
    N, kappa, d = 5, 2, 1e4
    mu = 1.0 / (N * LN2 * d / (kappa * G0))
    p, r = water_fill(1.0, mu, d, kappa, G0, N)
    assert p == 0.0 and r == 0.0
    with pytest.raises(UnboundedWaterLevel):
        water_fill(0.5, 0.0, d, kappa, G0, N)


@given(lam=st.floats(0.0, 1.0), mu=st.floats(1e-6, 1e3), d=st.floats(1e4, 1e7),
       kappa=st.integers(1, 20), N=st.integers(1, 400))
def test_water_fill_kkt(lam, mu, d, kappa, N):
    p, r = water_fill(lam, mu, d, kappa, G0, N)
    p, r = float(p), float(r)
    assert p >= 0 and r >= 0
    snr0 = kappa * G0 / d
    # d/dp of lam*log2(1 + snr0 p)/N - mu*p
    slope = lam * snr0 / (N * LN2 * (1.0 + snr0 * p)) - mu
    if p > 0:
        assert abs(slope) <= 1e-10 * max(1.0, mu)
        assert r == pytest.approx(math.log2(1.0 + snr0 * p), rel=1e-10, abs=1e-12)
    else:
        assert slope <= 1e-10 * max(1.0, mu)
        assert r == 0.0


def test_water_fill_budget_meets_budget_and_level():
    f = np.array([0.1, 0.4, 2.0, 0.2])
    w = np.array([1.0, 2.0, 1.0, 0.0])
    p, level = water_fill_budget(f, w, 1.0)
    assert np.dot(w, p) == pytest.approx(1.0, rel=1e-12)
    assert p[3] == 0.0 and p[2] == 0.0
    assert np.allclose(p[:2], level - f[:2])
    # water-filling is the maximiser: compare with cvxpy
    x = cp.Variable(3, nonneg=True)
    obj = cp.Maximize(cp.sum(cp.multiply(w[:3], cp.log(1 + cp.multiply(x, 1 / f[:3])))))
    cp.Problem(obj, [w[:3] @ x <= 1.0]).solve()
    assert np.allclose(p[:3], x.value, atol=1e-5)


def test_water_fill_budget_degenerate():
    p, level = water_fill_budget([1.0, 2.0], [1.0, 1.0], 0.0)
    assert level == 0.0 and not p.any()


# ---------------------------------------------------------------- ellipsoid

def _smooth(center):
    def oracle(x):
        return Cut(True, 2 * (x - center), float(np.sum((x - center) ** 2)))
    return oracle


def test_ellipsoid_quadratic():
    res = ellipsoid_minimize(_smooth(np.array([1.0, -2.0])), [0.0, 0.0], radius=5.0, tol=1e-13)
    assert res.converged
    assert np.linalg.norm(res.x - [1.0, -2.0]) <= 1e-6


def test_ellipsoid_nonsmooth_abs():
    def oracle(x):
        return Cut(True, np.sign(x), float(abs(x[0])))
    res = ellipsoid_minimize(oracle, [0.3], radius=1.0, tol=1e-8)
    assert abs(res.x[0]) <= 1e-6


def test_ellipsoid_feasibility_cuts():
    # minimise -x - y over x + y <= 1, inside the ball of radius 3
    def oracle(x):
        if x.sum() > 1.0:
            return Cut(False, np.ones(2))
        return Cut(True, -np.ones(2), float(-x.sum()))
    res = ellipsoid_minimize(oracle, [0.0, 0.0], radius=3.0, tol=1e-7)
    assert res.value == pytest.approx(-1.0, abs=1e-6)


def test_ellipsoid_max_iter_returns_best():
    res = ellipsoid_minimize(_smooth(np.array([0.5, 0.5, 0.5])), np.zeros(3), radius=2.0,
                             tol=1e-14, max_iter=5)
    assert not res.converged
    assert res.iterations == 5
    assert res.value <= 0.75


@pytest.mark.parametrize("n", [1, 2, 3, 9])
def test_ellipsoid_volume_ratio(n):
    rng = np.random.default_rng(n)
    st_ = EllipsoidState(center=np.zeros(n), A=np.eye(n) * 4.0)
    for _ in range(20):
        before = st_.log_volume()
        assert ellipsoid_step(st_, rng.normal(size=n))
        assert st_.log_volume() - before == pytest.approx(math.log(volume_ratio(n)), abs=1e-9)


def test_ellipsoid_dual_of_toy_hover_problem():
    # two SNs, two candidate sites with known rates: g(lam) = max_site sum lam_k rate_k
    R = np.array([[2.0, 0.4], [0.3, 1.5]])

    def g(l):
        lam = np.array([l, 1.0 - l])
        return float(np.max(R @ lam)), R[int(np.argmax(R @ lam))]

    def oracle(x):
        l = x[0]
        if l < 0:
            return Cut(False, np.array([-1.0]))
        if l > 1:
            return Cut(False, np.array([1.0]))
        v, row = g(l)
        return Cut(True, np.array([row[0] - row[1]]), v)
    res = ellipsoid_minimize(oracle, [0.5], radius=1.0, tol=1e-9)
    grid = min(g(l)[0] for l in np.linspace(0, 1, 100001))
    assert res.value == pytest.approx(grid, abs=1e-3)


# ---------------------------------------------------------------- LP

def test_lp_single_hover_point():
    # variables (tau, r); max r s.t. r*T <= tau*rbar, tau = T
    T, rbar = 100.0, 3.7
    prob = LpProblem(c=[0.0, -1.0], A_ub=[[-rbar, T]], b_ub=[0.0], A_eq=[[1.0, 0.0]], b_eq=[T])
    res = lp_solve(prob)
    assert res.x == pytest.approx([T, rbar])


def test_lp_symmetric_split():
    T = 100.0
    prob = LpProblem(c=[0, 0, -1.0], A_ub=[[-2.0, 0, T], [0, -2.0, T]], b_ub=[0, 0],
                     A_eq=[[1.0, 1.0, 0]], b_eq=[T])
    res = lp_solve(prob)
    assert res.x == pytest.approx([50.0, 50.0, 1.0])
    assert res.value == pytest.approx(-1.0)


def test_lp_infeasible_and_unbounded():
    with pytest.raises(LpInfeasible):
        lp_solve(LpProblem(c=[1.0, 1.0], A_ub=[[1.0, 1.0]], b_ub=[10.0],
                           A_eq=[[1.0, 0.0]], b_eq=[20.0]))
    with pytest.raises(LpUnbounded):
        lp_solve(LpProblem(c=[-1.0, 0.0], A_ub=[[0.0, 1.0]], b_ub=[1.0]))


def test_lp_shape_checks():
    with pytest.raises(ValueError):
        LpProblem(c=[1.0, 2.0], A_ub=[[1.0]], b_ub=[1.0])


def _random_lp(rng):
    n = int(rng.integers(2, 9))
    m = int(rng.integers(1, 8))
    A = rng.uniform(-1, 2, size=(m, n))
    x_feas = rng.uniform(0, 2, size=n)
    b = A @ x_feas + rng.uniform(0, 1, size=m)
    me = int(rng.integers(0, 3))
    Ae = rng.normal(size=(me, n))
    be = Ae @ x_feas
    c = rng.normal(size=n)
    # box rows keep the problem bounded
    A = np.vstack([A, np.eye(n)])
    b = np.concatenate([b, np.full(n, 5.0)])
    lb = np.where(rng.random(n) < 0.2, -np.inf, 0.0)
    if np.isinf(lb).any():
        A = np.vstack([A, -np.eye(n)[np.isinf(lb)]])
        b = np.concatenate([b, np.full(int(np.isinf(lb).sum()), 5.0)])
    return LpProblem(c=c, A_ub=A, b_ub=b, A_eq=Ae if me else None, b_eq=be if me else None, lb=lb)


def test_lp_matches_scipy_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(300):
        prob = _random_lp(rng)
        ref = linprog(prob.c, A_ub=prob.A_ub, b_ub=prob.b_ub,
                      A_eq=prob.A_eq if prob.b_eq.size else None,
                      b_eq=prob.b_eq if prob.b_eq.size else None,
                      bounds=[(None if np.isinf(l) else l, None) for l in prob.lb], method="highs")
        assert ref.status == 0
        res = lp_solve(prob)
        assert res.residual(prob) <= 1e-9
        assert res.value == pytest.approx(ref.fun, rel=1e-8, abs=1e-8)
        # dual certificate: with shifted lower bounds the dual objective is b'y + c.lb (lb finite)
        lbf = np.where(np.isinf(prob.lb), 0.0, prob.lb)
        dual = (prob.b_ub - prob.A_ub @ lbf) @ res.y_ub + (prob.b_eq - prob.A_eq @ lbf) @ res.y_eq \
            + prob.c @ lbf
        assert dual == pytest.approx(res.value, rel=1e-8, abs=1e-8)
        assert np.all(res.y_ub <= 1e-9)
        # vertex: at least n tight constraints (rows plus active lower bounds)
        tight = (np.sum(np.abs(prob.A_ub @ res.x - prob.b_ub) <= 1e-8) + prob.b_eq.size
                 + np.sum(np.abs(res.x - prob.lb) <= 1e-8))
        assert tight >= prob.n


# ---------------------------------------------------------------- SCA

def _sub(q_ref, eps, sn, V, z=130.0, alpha=2.0):
    return ScaSubproblem(q_ref=q_ref, eps=eps, sn_xy=sn, altitude=z, alpha=alpha, V=V)


def test_sca_no_active_sns_returns_reference():
    q = np.array([[0.0, 0.0], [10.0, 0.0], [20.0, 0.0]])
    sub = _sub(q, np.zeros((3, 1)), np.array([[5.0, 5.0]]), V=30.0)
    res = sca_solve(sub)
    assert np.array_equal(res.q, q)
    assert res.r == pytest.approx(0.0)


def test_sca_surrogate_tight_at_reference():
    rng = np.random.default_rng(1)
    q = rng.uniform(-200, 200, size=(30, 2))
    eps = rng.uniform(0, 1e6, size=(30, 4)) * (rng.random((30, 4)) < 0.5)
    sub = _sub(q, eps, rng.uniform(-200, 200, size=(4, 2)), V=1e3)
    assert np.max(np.abs(sub.surrogate_rates(q) - sub.true_rates(q))) <= 1e-12


@pytest.mark.parametrize("alpha", [2.0, 2.6])
def test_sca_lower_bound_validity(alpha):
    rng = np.random.default_rng(7)
    for _ in range(100):
        q_ref = rng.uniform(-500, 500, size=(10, 2))
        eps = rng.uniform(0, 5e6, size=(10, 3))
        sub = _sub(q_ref, eps, rng.uniform(-300, 300, size=(3, 2)), V=1e4, alpha=alpha)
        q = rng.uniform(-500, 500, size=(10, 2))
        assert np.all(sub.surrogate_rates(q) <= sub.true_rates(q) + 1e-9)


def test_sca_three_slots_single_sn_calculus():
    # the interior slot maximises a concave quadratic centred on the SN
    sn = np.array([[30.0, 20.0]])
    q_ref = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 0.0]])
    eps = np.full((3, 1), 12 * 0.01 * G0)
    res = sca_solve(_sub(q_ref, eps, sn, V=200.0), tol=1e-10)
    assert res.q[1] == pytest.approx(sn[0], abs=1e-4)
    assert np.array_equal(res.q[[0, 2]], q_ref[[0, 2]])


def _cvx_sca(sub):
    # positions in units of 100 m keep the conic solver well scaled
    N, u = sub.N, 100.0
    q = cp.Variable((N, 2))
    r = cp.Variable()
    cons = [q[0] == sub.q_ref[0] / u, q[-1] == sub.q_ref[-1] / u]
    cons += [cp.norm(q[n + 1] - q[n]) <= sub.V / u for n in range(N - 1)]
    x_ref = sub.sq_dist(sub.q_ref)
    for k in range(sub.K):
        sq = cp.sum(cp.square(q - np.tile(sub.sn_xy[k] / u, (N, 1))), axis=1)
        c = sub.rate_ref[:, k] - sub.theta[:, k] * (sub.altitude ** 2 - x_ref[:, k])
        lb = c - cp.multiply(sub.theta[:, k] * u ** 2, sq)
        cons.append(cp.sum(lb) / N >= r)
    cp.Problem(cp.Maximize(r), cons).solve(solver=cp.CLARABEL)
    return r.value


def test_sca_matches_cvxpy():
    rng = np.random.default_rng(11)
    for _ in range(5):
        N, K = 12, 3
        sn = rng.uniform(-300, 300, size=(K, 2))
        q_ref = np.linspace([-250.0, -50.0], [250.0, 80.0], N)
        V = 1.6 * np.linalg.norm(q_ref[1] - q_ref[0])
        eps = rng.uniform(1e5, 5e6, size=(N, K)) * (rng.random((N, K)) < 0.6)
        sub = _sub(q_ref, eps, sn, V=V)
        res = sca_solve(sub, tol=1e-9)
        assert res.r >= res.r_ref - 1e-9
        assert res.r == pytest.approx(_cvx_sca(sub), abs=1e-6)
        assert sub.max_step(res.q) <= V + 1e-9


def test_sca_rejects_infeasible_reference():
    q = np.array([[0.0, 0.0], [100.0, 0.0], [0.0, 0.0]])
    with pytest.raises(InfeasibleError):
        sca_solve(_sub(q, np.ones((3, 1)), np.zeros((1, 2)), V=10.0))
