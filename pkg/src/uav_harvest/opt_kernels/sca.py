"""Convex trajectory subproblem solved by a log-barrier Newton method.

With schedule and powers fixed, each rate term ``log2(1 + eps / x^(alpha/2))``
is convex in ``x = z^2 + ||q - d||^2``, so its tangent at the reference
trajectory is a global lower bound that is concave in ``q``. The subproblem
maximises the minimum averaged surrogate rate subject to the per-slot speed
cap and fixed endpoints.

The Newton system has a banded part (speed constraints couple neighbouring
slots, rate constraints add 2x2 diagonal blocks) plus one rank-one term per
SN, solved by a banded Cholesky and a K x K Schur complement (the
Woodbury identity written with unscaled constraint gradients).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky_banded, cho_solve_banded

from ..errors import ConvergenceError, InfeasibleError

log = logging.getLogger(__name__)

LOG2E = 1.0 / math.log(2.0)


@dataclass
class ScaSubproblem:
    q_ref: np.ndarray     # (N, 2)
    eps: np.ndarray       # (N, K) kappa_n p_k[n] gamma0, zero when unscheduled
    sn_xy: np.ndarray     # (K, 2)
    altitude: float
    alpha: float
    V: float              # max displacement per slot

    def __post_init__(self):
        self.q_ref = np.asarray(self.q_ref, dtype=float)
        self.eps = np.asarray(self.eps, dtype=float)
        self.sn_xy = np.asarray(self.sn_xy, dtype=float)
        if np.any(self.eps < 0):
            raise ValueError("eps must be non-negative")
        x = self.sq_dist(self.q_ref)
        xa = x ** (self.alpha / 2.0)
        self.rate_ref = np.log2(1.0 + self.eps / xa)
        self.theta = LOG2E * self.eps * (self.alpha / 2.0) / (x * (xa + self.eps))

    @property
    def N(self) -> int:
        return self.q_ref.shape[0]

    @property
    def K(self) -> int:
        return self.sn_xy.shape[0]

    def sq_dist(self, q) -> np.ndarray:
        """``z^2 + ||q[n] - d_k||^2`` with shape (N, K)."""
        diff = np.asarray(q, dtype=float)[:, None, :] - self.sn_xy[None, :, :]
        return self.altitude ** 2 + np.sum(diff ** 2, axis=-1)

    def surrogate_rates(self, q) -> np.ndarray:
        """Per-slot lower bounds r_lb_k[n]; equal to the true rates at ``q_ref``."""
        return self.rate_ref - self.theta * (self.sq_dist(q) - self.sq_dist(self.q_ref))

    def true_rates(self, q) -> np.ndarray:
        return np.log2(1.0 + self.eps / self.sq_dist(q) ** (self.alpha / 2.0))

    def surrogate_min_rate(self, q) -> float:
        return float(self.surrogate_rates(q).mean(axis=0).min())

    def max_step(self, q) -> float:
        return float(np.max(np.linalg.norm(np.diff(q, axis=0), axis=1), initial=0.0))


@dataclass
class ScaResult:
    q: np.ndarray
    r: float          # surrogate min-rate at q
    r_ref: float      # surrogate (= true) min-rate at the reference
    newton_steps: int
    barrier_rounds: int


class _Barrier:
    """Barrier for max r over interior slots; variables are q[1:N-1] and r."""

    def __init__(self, sub: ScaSubproblem):
        self.sub = sub
        N = sub.N
        self.q0 = sub.q_ref[0]
        self.qN = sub.q_ref[-1]
        self.Ni = N - 2
        self.w = sub.theta / N                        # (N, K)
        self.const = (sub.rate_ref.sum(axis=0)
                      + np.sum(sub.theta * sub.sq_dist(sub.q_ref), axis=0)) / N
        self.V2 = sub.V ** 2
        self.m = sub.K + N - 1

    def full(self, qi):
        return np.vstack([self.q0, qi, self.qN])

    def slacks(self, qi, r):
        q = self.full(qi)
        c = self.const - np.sum(self.w * self.sub.sq_dist(q), axis=0) - r
        e = np.diff(q, axis=0)
        s = self.V2 - np.sum(e * e, axis=1)
        return c, s, e

    def newton_direction(self, qi, r, t):
        sub = self.sub
        Ni, K = self.Ni, sub.K
        c, s, e = self.slacks(qi, r)
        wi = self.w[1:-1]                               # (Ni, K)
        diff = qi[:, None, :] - sub.sn_xy[None, :, :]   # (Ni, K, 2)
        # G[:, k] = grad_q c_k; the barrier Hessian holds G_k G_k^T / c_k^2
        G = (-2.0 * wi[:, :, None] * diff).transpose(0, 2, 1).reshape(2 * Ni, K)

        # gradient of  -t r - sum log c - sum log s
        gq = -(G / c[None, :]).sum(axis=1)
        ge = 2.0 * e / s[:, None]                       # d(-log s_e)/d q_{n+1}
        gq_blocks = gq.reshape(Ni, 2) + ge[:-1] - ge[1:]
        gq = gq_blocks.ravel()
        gr = -t + np.sum(1.0 / c)

        # banded part: diagonal rate curvature + speed-constraint Laplacian
        ab = np.zeros((4, 2 * Ni))
        dscal = 2.0 * np.sum(wi / c[None, :], axis=1)   # (Ni,)
        Me = 4.0 / s[:, None, None] ** 2 * e[:, :, None] * e[:, None, :] \
            + (2.0 / s)[:, None, None] * np.eye(2)
        D = dscal[:, None, None] * np.eye(2) + Me[:-1] + Me[1:]
        ab[0, 0::2] = D[:, 0, 0]
        ab[0, 1::2] = D[:, 1, 1]
        ab[1, 0::2] = D[:, 1, 0]
        off = Me[1:-1]                                  # couples interior n and n+1
        ab[2, 0:-2:2] = -off[:, 0, 0]
        ab[1, 1:-2:2] = -off[:, 0, 1]
        ab[3, 0:-2:2] = -off[:, 1, 0]
        ab[2, 1:-2:2] = -off[:, 1, 1]
        cb = cholesky_banded(ab, lower=True)

        # Eliminate in K-space with the unscaled gradients so nothing cancels
        # as slacks shrink: Chat = diag(c^2) + G^T B^-1 G.
        BinvG = cho_solve_banded((cb, True), G)
        Binvg = cho_solve_banded((cb, True), gq)
        chat = G.T @ BinvG + np.diag(c * c)
        ahat = G.T @ Binvg
        ones = np.ones(K)
        try:
            cf = cho_factor(chat)
            sol = cho_solve(cf, np.column_stack([ahat, ones]))
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(chat, np.column_stack([ahat, ones]), rcond=None)[0]
        dr = (-gr - ones @ sol[:, 0]) / (ones @ sol[:, 1])
        y = -sol[:, 0] - dr * sol[:, 1]
        dq = -Binvg - BinvG @ y
        decrement = -(gq @ dq + gr * dr)
        return dq.reshape(Ni, 2), dr, decrement, gq, gr

    def step(self, qi, r, t, dq, dr, slope):
        c0, s0, _ = self.slacks(qi, r)
        a = 1.0
        for _ in range(60):
            qn, rn = qi + a * dq, r + a * dr
            c1, s1, _ = self.slacks(qn, rn)
            if np.all(c1 > 0) and np.all(s1 > 0):
                delta = (-t * a * dr - np.sum(np.log(c1 / c0)) - np.sum(np.log(s1 / s0)))
                if delta <= 0.25 * a * slope:
                    return qn, rn, True
            a *= 0.5
        return qi, r, False


def sca_solve(sub: ScaSubproblem, tol: float = 1e-7, *, t0: float = 1.0, mu: float = 10.0,
              max_newton: int = 200, blend: float = 1e-3) -> ScaResult:
    """Maximise the minimum averaged surrogate rate over the trajectory.

    The reference must satisfy the speed cap (to 1e-9) and its first and last
    points are kept fixed. Returns the new trajectory and its surrogate
    min-rate, which is never below the reference value minus ``tol``.
    """
    q_ref = sub.q_ref
    N = sub.N
    steps = np.linalg.norm(np.diff(q_ref, axis=0), axis=1)
    if np.any(steps > sub.V + 1e-9):
        raise InfeasibleError(f"reference trajectory violates the speed cap by "
                              f"{steps.max() - sub.V:.3g} m")
    r_ref = sub.surrogate_min_rate(q_ref)
    if N <= 2 or not np.any(sub.theta[1:-1] > 0):
        return ScaResult(q_ref.copy(), r_ref, r_ref, 0, 0)

    line = np.linspace(q_ref[0], q_ref[-1], N)
    v_line = float(np.linalg.norm(q_ref[-1] - q_ref[0])) / (N - 1)
    if v_line >= sub.V * (1.0 - 1e-12):
        return ScaResult(q_ref.copy(), r_ref, r_ref, 0, 0)

    bar = _Barrier(sub)
    qi = ((1.0 - blend) * q_ref + blend * line)[1:-1].copy()
    c, _, _ = bar.slacks(qi, 0.0)
    r = float(c.min()) - max(1e-3, 1e-2 * abs(float(c.min())))
    t = t0
    newton = rounds = 0
    while True:
        rounds += 1
        for _ in range(max_newton):
            dq, dr, dec, gq, gr = bar.newton_direction(qi, r, t)
            if dec / 2.0 <= 1e-9:
                break
            qi, r, ok = bar.step(qi, r, t, dq, dr, -dec)
            newton += 1
            if not ok:
                break
        else:
            log.warning("barrier centring hit %d Newton steps at t=%.3g", max_newton, t)
        if bar.m / t <= tol:
            break
        t *= mu
    q = bar.full(qi)
    r_new = sub.surrogate_min_rate(q)
    if r_new < r_ref - tol:
        raise ConvergenceError(f"SCA step decreased the surrogate min-rate "
                               f"({r_new:.9g} < {r_ref:.9g})")
    return ScaResult(q, r_new, r_ref, newton, rounds)
