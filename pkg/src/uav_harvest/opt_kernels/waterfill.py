"""Water-filling primitives.

``water_fill`` is the dual-price form used inside the Lagrangian oracles;
``water_fill_budget`` is the primal form (fixed energy budget) used when a
schedule is fixed and powers must meet the average-power limit exactly.
"""

from __future__ import annotations

import numpy as np

LN2 = np.log(2.0)


class UnboundedWaterLevel(ArithmeticError):
    """mu == 0 with lambda > 0: the per-slot power maximiser is unbounded."""


def water_fill(lam, mu, dist_pow, kappa, gamma0: float, N: int):
    """Optimal power and rate of ``lam * r / N - mu * p`` per slot.

    Returns ``(p, r)`` broadcast over the inputs, with
    ``p = [lam / (N mu ln2) - d^alpha / (kappa gamma0)]^+`` and
    ``r = [log2(lam kappa gamma0 / (N mu ln2 d^alpha))]^+``.
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.any((mu <= 0) & (lam > 0)):
        raise UnboundedWaterLevel("mu must be positive wherever lambda > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        level = np.where(lam > 0, lam / (N * mu * LN2), 0.0)
        floor = np.asarray(dist_pow, dtype=float) / (np.asarray(kappa, dtype=float) * gamma0)
        on = level > floor
        p = np.where(on, level - floor, 0.0)
        r = np.where(on, np.log2(np.where(on, level / floor, 1.0)), 0.0)
    return p, r


def water_fill_budget(inv_gain, weights, budget: float):
    """Maximise ``sum w_i log2(1 + p_i / inv_gain_i)`` s.t. ``sum w_i p_i <= budget``.

    ``inv_gain`` holds the noise-to-gain floors ``d^alpha / (kappa gamma0)``.
    Entries with zero weight get zero power. Returns ``(p, level)``.
    """
    inv_gain = np.asarray(inv_gain, dtype=float)
    w = np.asarray(weights, dtype=float)
    p = np.zeros_like(inv_gain)
    use = w > 0
    if budget <= 0 or not use.any():
        return p, 0.0
    f = inv_gain[use]
    ww = w[use]
    order = np.argsort(f, kind="stable")
    fs, ws = f[order], ww[order]
    cw = np.cumsum(ws)
    cwf = np.cumsum(ws * fs)
    # level with the first j floors active: (budget + cwf_j) / cw_j; valid while below the next floor
    levels = (budget + cwf) / cw
    nxt = np.append(fs[1:], np.inf)
    j = int(np.argmax(levels <= nxt))
    level = levels[j]
    p_use = np.maximum(level - f, 0.0)
    p[use] = p_use
    return p, float(level)
