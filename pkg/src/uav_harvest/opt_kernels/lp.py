"""Dense two-phase primal simplex for the small time-sharing LPs.

Problems are stated as ``min c^T x`` subject to ``A_ub x <= b_ub``,
``A_eq x = b_eq`` and ``x >= lb`` (``lb`` entries may be ``-inf`` for free
variables). Pivoting uses Dantzig's rule and switches to Bland's rule after a
run of degenerate pivots, which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LpInfeasible, LpUnbounded

_EPS = 1e-11
_PIVOT_TOL = 1e-9     # smallest admissible pivot element


@dataclass
class LpProblem:
    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub, self.b_ub = _rows(self.A_ub, self.b_ub, n, "ub")
        self.A_eq, self.b_eq = _rows(self.A_eq, self.b_eq, n, "eq")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        if self.lb.shape != (n,):
            raise ValueError(f"lb has shape {self.lb.shape}, expected ({n},)")

    @property
    def n(self) -> int:
        return self.c.size


def _rows(A, b, n, name):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape != (b.size, n):
        raise ValueError(f"A_{name} has shape {A.shape}, expected ({b.size}, {n})")
    return A, b


@dataclass
class LpResult:
    x: np.ndarray
    value: float
    y_ub: np.ndarray   # multipliers of A_ub rows, <= 0 (min convention)
    y_eq: np.ndarray
    iterations: int
    basis: np.ndarray

    def residual(self, prob: LpProblem) -> float:
        r = [np.max(prob.lb - self.x, initial=0.0)]
        if prob.b_ub.size:
            r.append(np.max(prob.A_ub @ self.x - prob.b_ub, initial=0.0))
        if prob.b_eq.size:
            r.append(np.max(np.abs(prob.A_eq @ self.x - prob.b_eq), initial=0.0))
        return float(max(r))


class _Tableau:
    REINVERT_EVERY = 50

    def __init__(self, A, b, basis):
        m, n = A.shape
        self.A0, self.b0 = A.copy(), b.copy()
        self.T = np.zeros((m + 1, n + 1))
        self.T[:m, :n] = A
        self.T[:m, n] = b
        self.basis = np.array(basis, dtype=int)
        self.iterations = 0
        self.c = np.zeros(n)

    def set_objective(self, c):
        n = self.T.shape[1] - 1
        self.c = np.asarray(c, dtype=float).copy()
        self.T[-1, :n] = c
        self.T[-1, n] = 0.0
        for i, j in enumerate(self.basis):
            if self.T[-1, j] != 0.0:
                self.T[-1] -= self.T[-1, j] * self.T[i]

    def keep_rows(self, keep):
        self.T = self.T[np.append(np.flatnonzero(keep), self.T.shape[0] - 1)]
        self.basis = self.basis[keep]
        self.A0, self.b0 = self.A0[keep], self.b0[keep]

    def reinvert(self) -> bool:
        """Rebuild the tableau from the original rows and the current basis."""
        m, n = self.A0.shape
        try:
            X = np.linalg.solve(self.A0[:, self.basis], np.column_stack([self.A0, self.b0]))
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(X)):
            return False
        self.T[:m] = X
        self.T[:m, self.basis] = np.eye(m)
        self.set_objective(self.c)
        return True

    def pivot(self, i, j):
        T = self.T
        T[i] /= T[i, j]
        col = T[:, j].copy()
        col[i] = 0.0
        T -= np.outer(col, T[i])
        self.basis[i] = j
        self.iterations += 1

    def run(self, allowed: np.ndarray, max_iter: int):
        T = self.T
        m = T.shape[0] - 1
        degenerate_run = 0
        scale = max(1.0, np.abs(T[-1, :-1]).max(initial=0.0))
        fresh = True
        while True:
            if self.iterations >= max_iter:
                raise LpUnbounded(f"simplex iteration limit {max_iter} reached")
            if self.iterations % self.REINVERT_EVERY == 0 and not fresh:
                fresh = self.reinvert()
            red = np.where(allowed, T[-1, :-1], 0.0)
            cand = np.flatnonzero(red < -_EPS * scale)
            if cand.size == 0:
                if fresh or not self.reinvert():
                    return
                fresh = True
                continue
            bland = degenerate_run >= 10
            j = int(cand[0]) if bland else int(cand[np.argmin(red[cand])])
            colj = T[:m, j]
            pos = colj > _PIVOT_TOL
            if not pos.any():
                # drift in a long run of pivots can fake a ray; check on a clean tableau
                if not fresh and self.reinvert():
                    fresh = True
                    continue
                raise LpUnbounded("objective unbounded below")
            fresh = False
            ratios = np.full(m, np.inf)
            ratios[pos] = T[:m, -1][pos] / colj[pos]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + _EPS * max(1.0, abs(best)))
            # Bland: smallest basic index among tied rows; otherwise the largest pivot
            i = int(ties[np.argmin(self.basis[ties])]) if bland else int(ties[np.argmax(colj[ties])])
            degenerate_run = degenerate_run + 1 if best <= _EPS else 0
            self.pivot(i, j)


def lp_solve(prob: LpProblem, max_iter: int = 10000) -> LpResult:
    """Solve ``prob``; raises LpInfeasible or LpUnbounded."""
    n = prob.n
    lb = prob.lb
    free = ~np.isfinite(lb)
    if np.any(np.isposinf(lb)) or np.any(np.isnan(lb)):
        raise ValueError("lower bounds must be finite or -inf")
    shift = np.where(free, 0.0, lb)
    # x = shift + P z with z >= 0; free variables get a negative copy
    P = np.hstack([np.eye(n), -np.eye(n)[:, free]])
    nz = P.shape[1]
    A_ub = prob.A_ub @ P
    b_ub = prob.b_ub - prob.A_ub @ shift
    A_eq = prob.A_eq @ P
    b_eq = prob.b_eq - prob.A_eq @ shift
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    # columns: z | slacks | artificials
    A = np.zeros((m, nz + m_ub + m))
    A[:m_ub, :nz] = A_ub
    A[:m_ub, nz:nz + m_ub] = np.eye(m_ub)
    A[m_ub:, :nz] = A_eq
    b = np.concatenate([b_ub, b_eq])
    sign = np.where(b < 0, -1.0, 1.0)
    A[:, :nz + m_ub] *= sign[:, None]
    b = b * sign
    art0 = nz + m_ub
    A[:, art0:] = np.eye(m)
    tab = _Tableau(A, b, np.arange(art0, art0 + m))
    ncol = A.shape[1]

    c1 = np.zeros(ncol)
    c1[art0:] = 1.0
    tab.set_objective(c1)
    tab.run(np.ones(ncol, dtype=bool), max_iter)
    infeas = -tab.T[-1, -1]
    if infeas > 1e-9 * max(1.0, np.abs(b).max(initial=0.0)):
        raise LpInfeasible(f"LP infeasible (phase-one residual {infeas:.3g})")

    # drive artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if tab.basis[i] >= art0:
            row = tab.T[i, :art0]
            if np.abs(row).max(initial=0.0) > 1e-9:
                tab.pivot(i, int(np.argmax(np.abs(row))))
            else:
                keep[i] = False
    if not keep.all():
        tab.keep_rows(keep)

    c2 = np.zeros(ncol)
    c2[:nz] = P.T @ prob.c
    tab.set_objective(c2)
    allowed = np.zeros(ncol, dtype=bool)
    allowed[:art0] = True
    tab.run(allowed, max_iter)

    zfull = np.zeros(ncol)
    zfull[tab.basis] = tab.T[:-1, -1]
    x = shift + P @ zfull[:nz]
    value = float(prob.c @ x)

    # duals from the final basis on the sign-normalised rows
    B = A[keep][:, tab.basis]
    y_kept = np.linalg.solve(B.T, c2[tab.basis])
    y = np.zeros(m)
    y[keep] = y_kept
    y *= sign
    return LpResult(x=x, value=value, y_ub=y[:m_ub], y_eq=y[m_ub:],
                    iterations=tab.iterations, basis=tab.basis.copy())
