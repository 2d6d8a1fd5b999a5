"""Rate models: the closed-form approximation used by every solver and a
Monte Carlo simulator of Rician fading with ZF/MRC receive combining that
validates it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, HarvestError
from .scenario import RadioParams, Scenario

ANTENNAS_PER_ROW = 4
ELEMENT_SPACING_WL = 0.5  # half wavelength
LOS_LIMIT_G = 1e9


def kappa_for(n_active: int, M: int) -> int:
    """Multiplexing coefficient for a slot with ``n_active`` transmitting SNs."""
    if n_active <= 0:
        return 0
    if n_active == 1:
        return M
    return M - n_active


def distance_power(uav_xy, sn_xy, altitude: float, alpha: float) -> np.ndarray:
    """``(z^2 + ||q - d_k||^2)^(alpha/2)`` broadcast over leading UAV axes.

    ``uav_xy`` has shape (..., 2) and ``sn_xy`` (K, 2); the result has shape (..., K).
    """
    q = np.asarray(uav_xy, dtype=float)[..., None, :]
    d = np.asarray(sn_xy, dtype=float)
    sq = altitude ** 2 + np.sum((q - d) ** 2, axis=-1)
    return sq if alpha == 2 else sq ** (alpha / 2.0)


def closed_form_rate(dist_pow, p, kappa, gamma0: float) -> np.ndarray:
    return np.log2(1.0 + np.asarray(kappa) * np.asarray(p) * gamma0 / np.asarray(dist_pow))


@dataclass(frozen=True)
class Link:
    uav_xy: tuple[float, float]
    altitude: float
    sn_xy: tuple[float, float]

    @property
    def distance(self) -> float:
        dx = self.uav_xy[0] - self.sn_xy[0]
        dy = self.uav_xy[1] - self.sn_xy[1]
        return math.sqrt(self.altitude ** 2 + dx * dx + dy * dy)


@dataclass(frozen=True)
class SlotSchedule:
    active_set: tuple[int, ...]
    M: int

    def __post_init__(self):
        if len(set(self.active_set)) != len(self.active_set):
            raise ValueError("active_set has duplicates")
        n = len(self.active_set)
        if n > self.M or (n >= 2 and self.M - n < 1):
            raise ValueError(f"{n} active SNs infeasible with M={self.M}")

    @property
    def kappa(self) -> int:
        return kappa_for(len(self.active_set), self.M)


def rate_closed_form(link: Link, p: float, kappa: float, radio: RadioParams) -> float:
    """Approximate per-slot rate in bps/Hz; zero when ``p == 0``."""
    if p < 0 or kappa < 1:
        raise ValueError("need p >= 0 and kappa >= 1")
    dp = link.distance ** radio.alpha
    return float(np.log2(1.0 + kappa * p * radio.gamma0 / dp))


def ura_positions(M: int, per_row: int = ANTENNAS_PER_ROW,
                  spacing: float = ELEMENT_SPACING_WL) -> np.ndarray:
    """Element coordinates (in wavelengths) of a horizontal URA, shape (M, 2)."""
    idx = np.arange(M)
    return spacing * np.column_stack([idx % per_row, idx // per_row]).astype(float)


def los_phases(uav_xy, altitude: float, sn_xy, M: int) -> np.ndarray:
    """Far-field LoS phases theta[m, k] for each array element and SN."""
    sn = np.atleast_2d(np.asarray(sn_xy, dtype=float))
    diff = sn - np.asarray(uav_xy, dtype=float)
    dist = np.sqrt(altitude ** 2 + np.sum(diff ** 2, axis=1))
    u = diff / dist[:, None]  # horizontal direction cosines
    return 2.0 * np.pi * ura_positions(M) @ u.T


@dataclass
class ChannelDraw:
    H: np.ndarray       # (draws, M, K_n) complex, column k scaled by sqrt(beta_k)
    g_los: np.ndarray   # (draws, M, K_n) unit-modulus
    g_scatter: np.ndarray  # (draws, M, K_n)
    beta: np.ndarray    # (K_n,)

    @property
    def g(self) -> np.ndarray:
        return self.H / np.sqrt(self.beta)


def draw_channel(uav_xy, altitude: float, sn_xy, radio: RadioParams, rng,
                 n_draws: int = 1, los_model: str = "independent") -> ChannelDraw:
    """Sample ``n_draws`` Rician channel matrices toward the given SNs.

    ``los_model="independent"`` draws every LoS phase theta[k, m] uniformly
    and independently per draw, so LoS components are independent across
    SNs. ``"geometric"`` uses fixed far-field phases of a horizontal
    half-wavelength URA; closely spaced bearings then correlate the LoS
    components and ZF loses gain relative to the closed form.
    """
    sn = np.atleast_2d(np.asarray(sn_xy, dtype=float))
    if sn.shape[0] < 1:
        raise ValueError("need at least one active SN")
    M, G = radio.M, radio.rician_G
    shape = (n_draws, M, sn.shape[0])
    if los_model == "geometric":
        g_los = np.broadcast_to(np.exp(1j * los_phases(uav_xy, altitude, sn, M)), shape)
    elif los_model == "independent":
        g_los = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, shape))
    else:
        raise ValueError(f"unknown los_model {los_model!r}")
    g_sc = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    g = math.sqrt(G / (G + 1.0)) * g_los + math.sqrt(1.0 / (G + 1.0)) * g_sc
    beta = radio.beta0 / distance_power(uav_xy, sn, altitude, radio.alpha)
    return ChannelDraw(H=g * np.sqrt(beta), g_los=g_los, g_scatter=g_sc, beta=beta)


def zf_combiners(H: np.ndarray) -> np.ndarray:
    """Unit-norm ZF receive vectors, columns of H (H^H H)^-1 normalised."""
    gram = np.conj(np.swapaxes(H, -1, -2)) @ H
    Wbar = H @ np.linalg.inv(gram)
    return Wbar / np.linalg.norm(Wbar, axis=-2, keepdims=True)


def _zf_inverse_diag(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal of (H^H H)^-1 via Cholesky; second value flags failed draws."""
    gram = np.conj(np.swapaxes(H, -1, -2)) @ H
    try:
        L = np.linalg.cholesky(gram)
        bad = np.zeros(H.shape[0], dtype=bool)
    except np.linalg.LinAlgError:
        L = np.empty_like(gram)
        bad = np.zeros(H.shape[0], dtype=bool)
        for i in range(H.shape[0]):
            try:
                L[i] = np.linalg.cholesky(gram[i])
            except np.linalg.LinAlgError:
                bad[i] = True
                L[i] = np.eye(gram.shape[-1])
    Linv = np.linalg.inv(L)
    diag = np.sum(np.abs(Linv) ** 2, axis=-2).real
    bad |= ~np.isfinite(diag).all(axis=-1)
    return diag, bad


@dataclass
class RateReport:
    sn_ids: tuple[int, ...]
    closed_form: np.ndarray
    mc_mean: np.ndarray
    mc_se: np.ndarray
    n_draws: int
    redraws: int = 0

    @property
    def relative_gap(self) -> np.ndarray:
        return np.abs(self.closed_form - self.mc_mean) / self.mc_mean


def _mc_chunk(uav_xy, altitude, sn, powers, radio, n, seed, chunk_idx, los_model,
              max_redraws=5):
    rng = np.random.default_rng([seed, chunk_idx])
    n_act = sn.shape[0]
    draw = draw_channel(uav_xy, altitude, sn, radio, rng, n, los_model)
    if n_act == 1:
        gain = np.sum(np.abs(draw.H[:, :, 0]) ** 2, axis=1)[:, None]
        return np.log2(1.0 + powers * gain / radio.sigma2), 0
    H = draw.H.copy()
    diag, bad = _zf_inverse_diag(H)
    redraws = 0
    while bad.any():
        redraws += int(bad.sum())
        if redraws > max_redraws:
            raise ConvergenceError("persistently singular ZF Gram matrix; check SN geometry")
        fresh = draw_channel(uav_xy, altitude, sn, radio, rng, int(bad.sum()), los_model)
        H[bad] = fresh.H
        diag[bad], bad_new = _zf_inverse_diag(fresh.H)
        bad[bad] = bad_new
    return np.log2(1.0 + powers / (diag * radio.sigma2)), redraws


def rate_monte_carlo(uav_xy, altitude: float, sn_xy, powers, radio: RadioParams,
                     n_draws: int = 1000, seed: int = 0, chunk: int = 250,
                     threads: int = 1, sn_ids=None,
                     los_model: str = "independent") -> RateReport:
    """Sample-mean ergodic rate of each active SN under ZF (K_n >= 2) or MRC (K_n = 1).

    Draws are split into fixed chunks; chunk ``c`` owns the stream
    ``default_rng([seed, c])`` so the result does not depend on ``threads``.
    """
    sn = np.atleast_2d(np.asarray(sn_xy, dtype=float))
    n_act = sn.shape[0]
    if n_act < 1:
        raise ValueError("need at least one active SN")
    if n_act >= 2 and radio.M <= n_act:
        raise HarvestError(f"ZF infeasible: M={radio.M} with {n_act} active SNs")
    powers = np.broadcast_to(np.asarray(powers, dtype=float), (n_act,))
    sizes = [min(chunk, n_draws - s) for s in range(0, n_draws, chunk)]

    def work(c):
        return _mc_chunk(uav_xy, altitude, sn, powers, radio, sizes[c], seed, c, los_model)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(c) for c in range(len(sizes))]
    rates = np.concatenate([p[0] for p in parts], axis=0)
    kappa = kappa_for(n_act, radio.M)
    dp = distance_power(uav_xy, sn, altitude, radio.alpha)
    cf = closed_form_rate(dp, powers, kappa, radio.gamma0)
    ids = tuple(range(n_act)) if sn_ids is None else tuple(sn_ids)
    return RateReport(
        sn_ids=ids,
        closed_form=cf,
        mc_mean=rates.mean(axis=0),
        mc_se=rates.std(axis=0, ddof=1) / math.sqrt(n_draws) if n_draws > 1 else np.zeros(n_act),
        n_draws=n_draws,
        redraws=sum(p[1] for p in parts),
    )


def slot_kappas(schedule: np.ndarray, M: int, mode: str = "proposed") -> np.ndarray:
    """Multiplexing coefficient per slot; 0 for idle slots."""
    counts = np.asarray(schedule, dtype=bool).sum(axis=1)
    solo = 1 if mode in ("single", "single_antenna") else M
    return np.where(counts >= 2, M - counts, np.where(counts == 1, solo, 0))


def mission_rates(scenario: Scenario, trajectory, schedule, powers, mode: str = "proposed") -> np.ndarray:
    """Per-SN average closed-form rate over the N slots.

    ``trajectory`` is (N, 2); ``schedule`` and ``powers`` are (N, K).
    """
    q = np.asarray(trajectory, dtype=float)
    a = np.asarray(schedule, dtype=bool)
    p = np.asarray(powers, dtype=float)
    N, K = scenario.N, scenario.K
    if q.shape != (N, 2) or a.shape != (N, K) or p.shape != (N, K):
        raise ValueError(f"dimension mismatch: trajectory {q.shape}, schedule {a.shape}, "
                         f"powers {p.shape}; expected N={N}, K={K}")
    if np.any(p < 0) or np.any((p > 0) & ~a):
        raise ValueError("powers must be >= 0 and positive only on scheduled slots")
    kappa = slot_kappas(a, scenario.M, mode)
    if np.any(a.sum(axis=1) > scenario.M) or np.any((a.sum(axis=1) >= 2) & (kappa < 1)):
        raise ValueError("slot schedules violate the antenna limit")
    dp = distance_power(q, scenario.sn_xy, scenario.H_min, scenario.radio.alpha)
    r = np.where(a, np.log2(1.0 + kappa[:, None] * p * scenario.radio.gamma0 / dp), 0.0)
    return r.sum(axis=0) / N
