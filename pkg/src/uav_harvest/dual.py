"""Dual machinery shared by the hover and schedule solvers.

Both problems relax the rate constraints with weights ``lam`` (summing to
one) and the average-power constraints with prices ``mu``. Internally the
prices are carried in the normalised form ``c_k = N mu_k pbar ln2``, in
which the water level of SN k is ``lam_k / c_k`` (in units of pbar) and the
optimal ``c`` never exceeds ``lam``. The ellipsoid then works on
``x = (lam_1 .. lam_{K-1}, c_1 .. c_K)`` with ``lam_K = 1 - sum(lam_<K)``.

Per-site utility of SN k under multiplexing coefficient kappa:
``f_k = lam_k r_k - c_k p_k / ln2`` with ``p_k`` in units of pbar and
``r_k``, ``p_k`` the water-filling solution.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .opt_kernels.ellipsoid import Cut

LN2 = math.log(2.0)
C_FLOOR = 1e-12
MODES = ("proposed", "mrc", "single")


def kappa_menu(M: int, K: int, mode: str = "proposed") -> np.ndarray:
    """Rows ``(n_active, kappa)`` of admissible slot schedules (the empty one excluded)."""
    if mode == "proposed":
        rows = [(1, M)] + [(j, M - j) for j in range(2, min(M - 1, K) + 1)]
    elif mode == "mrc":
        rows = [(1, M)]
    elif mode in ("single", "single_antenna"):
        rows = [(1, 1)]
    else:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return np.array(rows, dtype=int)


def to_normalised(mu, N: int, pbar: float) -> np.ndarray:
    return np.asarray(mu, dtype=float) * N * pbar * LN2


def from_normalised(c, N: int, pbar: float) -> np.ndarray:
    return np.asarray(c, dtype=float) / (N * pbar * LN2)


def split(x: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    lam = np.append(x[:K - 1], 1.0 - np.sum(x[:K - 1]))
    return lam, x[K - 1:]


def join(lam, c) -> np.ndarray:
    return np.concatenate([np.asarray(lam, float)[:-1], np.asarray(c, float)])


def feasibility_cut(x: np.ndarray, K: int) -> Cut | None:
    """Most violated of lam_<K >= 0, lam_K >= 0, c >= 0 as a cut, else None."""
    lam, c = split(x, K)
    viol = np.concatenate([-lam, -c])
    i = int(np.argmax(viol))
    if viol[i] <= 0:
        return None
    g = np.zeros_like(x)
    if i < K - 1:
        g[i] = -1.0
    elif i == K - 1:
        g[:K - 1] = 1.0
    else:
        g[i - 1] = -1.0
    return Cut(False, g)


def initial_ball(K: int) -> tuple[np.ndarray, float]:
    """Centre lam = c = 1/K; radius covering the box [0, 1]^(2K-1)."""
    x0 = np.full(2 * K - 1, 1.0 / K)
    return x0, math.sqrt(2 * K - 1)


def utilities(dist_pow, lam, c, kappa, gp: float):
    """Water-filling power (units of pbar), rate and utility f.

    ``dist_pow`` has shape (..., K) and ``kappa`` broadcasts against its
    leading axes; ``gp = gamma0 * pbar``.
    """
    floor = np.asarray(dist_pow, float) / (np.asarray(kappa, float) * gp)
    with np.errstate(divide="ignore", invalid="ignore"):
        level = np.where(lam > 0, lam / c, 0.0)
    on = level > floor
    p = np.where(on, level - floor, 0.0)
    r = np.where(on, np.log2(np.where(on, level, 1.0) / floor), 0.0)
    f = np.where(on, lam * r - c * p / LN2, 0.0)
    return p, r, f


class MenuTables:
    """Per-site floors ``d^alpha / (kappa gamma0 pbar)`` for every menu entry.

    The floors do not depend on the dual point, so they are computed once and
    each oracle call only evaluates the utilities against new water levels.
    """

    def __init__(self, dist_pow, menu: np.ndarray, gp: float):
        dp = np.asarray(dist_pow, float)
        self.menu = menu
        self.gp = gp
        self.floor = dp[:, None, :] / (menu[:, 1].astype(float)[None, :, None] * gp)  # (S, E, K)
        self.log_floor = np.log2(self.floor)
        self.jmax = int(menu[:, 0].max())

    def utilities(self, lam, c) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            level = np.where(lam > 0, lam / c, 0.0)
            a = np.where(level > 0, lam * np.log2(np.where(level > 0, level, 1.0)) - c * level / LN2, 0.0)
        f = a - lam * self.log_floor + (c / LN2) * self.floor
        return np.where(self.floor < level, f, 0.0)

    def values(self, lam, c) -> np.ndarray:
        """Best inner objective per site and menu entry, shape (S, E)."""
        f = self.utilities(lam, c)
        if self.jmax == 1:
            return f.max(axis=-1)
        np.negative(f, out=f)
        f.sort(axis=-1)
        out = np.empty(f.shape[:2])
        run = np.zeros(f.shape[:2])
        for j in range(self.jmax):
            run += f[..., j]
            sel = self.menu[:, 0] == j + 1
            out[:, sel] = run[:, sel]
        return -out


def tangent_gain(F, L):
    """``max_p log2(1 + p/F) - p / (L ln2)`` per entry (0 where ``F`` is inf).

    For a fixed water level ``L`` this is the rate a site contributes net of
    its power cost, so ``sum_i t_i tangent_gain(F_i, L) + budget / (L ln2)``
    bounds the water-filled rate sum from above, tightly at the optimal ``L``.
    """
    fin = np.isfinite(F)
    Fs = np.where(fin, F, 1.0)
    on = fin & (L > Fs)
    return np.where(on, np.log2(np.where(on, L / Fs, 1.0)) - (L - Fs) / (L * LN2), 0.0)


def menu_values(dist_pow, lam, c, menu: np.ndarray, gp: float) -> np.ndarray:
    return MenuTables(dist_pow, menu, gp).values(lam, c)


def top_set(f_row: np.ndarray, j: int) -> np.ndarray:
    """Indices of the ``j`` largest entries; ties go to the lower SN index."""
    order = np.argsort(-f_row, kind="stable")
    return np.sort(order[:j])


def tied_sets(f_row: np.ndarray, j: int, eta: float, limit: int = 16) -> list[tuple[int, ...]]:
    """All top-``j`` sets consistent with ties (within ``eta``) at the cut-off."""
    order = np.argsort(-f_row, kind="stable")
    if j >= f_row.size:
        return [tuple(sorted(order.tolist()))]
    cutoff = f_row[order[j - 1]]
    sure = [int(i) for i in order if f_row[i] > cutoff + eta]
    group = [int(i) for i in order if abs(f_row[i] - cutoff) <= eta]
    need = j - len(sure)
    out = []
    for combo in itertools.islice(itertools.combinations(group, need), limit):
        out.append(tuple(sorted(sure + list(combo))))
    return out


@dataclass
class SiteChoice:
    site: int
    entry: int
    active: tuple[int, ...]
    kappa: int


def choose_at_site(dp_row, lam, c, menu, entry: int, gp: float):
    j, kap = int(menu[entry, 0]), int(menu[entry, 1])
    p, r, f = utilities(dp_row, lam, c, kap, gp)
    act = top_set(f, j)
    return act, kap, p, r, f
