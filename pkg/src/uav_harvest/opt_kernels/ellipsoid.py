"""Central-cut ellipsoid method for nonsmooth convex minimisation.

The oracle is queried at the current centre and must return a :class:`Cut`:
an objective cut (subgradient and value) at feasible points, or a
feasibility cut (gradient of a violated constraint) otherwise. The ellipsoid
is ``{x : (x - c)^T A^{-1} (x - c) <= 1}``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class Cut:
    feasible: bool
    g: np.ndarray
    value: float = math.nan
    payload: object = None


@dataclass
class EllipsoidState:
    center: np.ndarray
    A: np.ndarray
    iteration: int = 0
    best_value: float = math.inf
    best_point: np.ndarray | None = None
    best_payload: object = None
    lower_bound: float = -math.inf
    resets: int = 0

    @property
    def dim(self) -> int:
        return self.center.size

    def log_volume(self) -> float:
        """Log of the ellipsoid volume up to the unit-ball constant."""
        sign, logdet = np.linalg.slogdet(self.A)
        return 0.5 * logdet if sign > 0 else -math.inf


@dataclass
class EllipsoidResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    lower_bound: float
    resets: int
    payload: object = None
    history: list = field(default_factory=list)


def volume_ratio(n: int) -> float:
    """Per-iteration volume contraction of a central cut in dimension ``n``."""
    if n == 1:
        return 0.5
    return (n / (n + 1.0)) * (n * n / (n * n - 1.0)) ** ((n - 1) / 2.0)


def ellipsoid_step(state: EllipsoidState, g: np.ndarray) -> bool:
    """Apply one central cut with normal ``g``; returns False if ``g^T A g <= 0``."""
    n = state.dim
    Ag = state.A @ g
    gAg = float(g @ Ag)
    if not gAg > 0 or not math.isfinite(gAg):
        return False
    b = Ag / math.sqrt(gAg)
    if n == 1:
        state.center = state.center - 0.5 * b
        state.A = state.A / 4.0
    else:
        state.center = state.center - b / (n + 1.0)
        A = (n * n / (n * n - 1.0)) * (state.A - (2.0 / (n + 1.0)) * np.outer(b, b))
        state.A = 0.5 * (A + A.T)
    state.iteration += 1
    return True


def _reset(state: EllipsoidState) -> None:
    scale = max(np.trace(state.A) / state.dim, 1e-300)
    state.A = scale * np.eye(state.dim)
    state.resets += 1
    log.warning("ellipsoid shape matrix lost definiteness; reset at iteration %d", state.iteration)


def ellipsoid_minimize(oracle: Callable[[np.ndarray], Cut], x0, radius=1.0, *,
                       tol: float = 1e-6, max_iter: int = 20000,
                       shape: np.ndarray | None = None,
                       on_cut: Callable[[EllipsoidState, Cut], None] | None = None,
                       check_every: int = 50) -> EllipsoidResult:
    """Minimise a convex function over the initial ball ``||x - x0|| <= radius``.

    Stops once the best objective value is certified within ``tol`` of the
    minimum over the initial ellipsoid (``f(x_k) - sqrt(g^T A g)`` lower
    bounds). On ``max_iter`` the best point so far is returned with
    ``converged=False``.
    """
    x0 = np.asarray(x0, dtype=float).copy()
    n = x0.size
    A0 = np.asarray(shape, dtype=float) if shape is not None else (radius ** 2) * np.eye(n)
    state = EllipsoidState(center=x0, A=A0.copy())
    history = []
    converged = False
    while state.iteration < max_iter:
        cut = oracle(state.center)
        g = np.asarray(cut.g, dtype=float)
        if cut.feasible:
            width = math.sqrt(max(float(g @ state.A @ g), 0.0))
            state.lower_bound = max(state.lower_bound, cut.value - width)
            if cut.value < state.best_value:
                state.best_value = cut.value
                state.best_point = state.center.copy()
                state.best_payload = cut.payload
            history.append(state.best_value)
            if on_cut is not None:
                on_cut(state, cut)
            if state.best_value - state.lower_bound <= tol or width == 0.0:
                converged = True
                break
        if not ellipsoid_step(state, g):
            if not np.any(g):
                # zero subgradient at a feasible centre: it is optimal
                converged = cut.feasible
                break
            _reset(state)
            continue
        if state.iteration % check_every == 0:
            try:
                np.linalg.cholesky(state.A)
            except np.linalg.LinAlgError:
                _reset(state)
    if not converged:
        log.warning("ellipsoid method hit max_iter=%d (gap %.3g)", max_iter,
                    state.best_value - state.lower_bound)
    x = state.best_point if state.best_point is not None else state.center
    return EllipsoidResult(x=x, value=state.best_value, iterations=state.iteration,
                           converged=converged, lower_bound=state.lower_bound,
                           resets=state.resets, payload=state.best_payload, history=history)
