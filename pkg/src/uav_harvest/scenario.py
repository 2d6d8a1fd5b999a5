"""Problem description shared by every solver.

Scenarios are stored as TOML with four sections::

    [sns]
    positions = [[x1, y1], [x2, y2], ...]      # metres

    [uav]
    H_min = 130.0       # altitude, m
    v_h = 20.0          # max horizontal speed, m/s
    delta = 0.5         # slot length, s
    T = 100.0           # mission duration, s
    q_I = [400.0, 0.0]
    q_F = [1000.0, 500.0]
    M = 12              # antennas

    [radio]
    beta0_db = -60.0
    alpha = 2.0
    rician_G = 0.94
    bandwidth_hz = 1e5
    noise_psd_dbm_hz = -154.0
    pbar_w = 0.01

    [grid]
    delta_g = 20.0

Logarithmic inputs are converted to linear units on load; only linear
quantities circulate inside the package.
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli_w

from .errors import ScenarioError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class RadioParams:
    beta0: float = 1e-6
    alpha: float = 2.0
    rician_G: float = 0.94
    bandwidth_hz: float = 1e5
    noise_psd_dbm_hz: float = -154.0
    pbar: float = 0.01
    M: int = 12

    def __post_init__(self):
        _check(self.beta0 > 0 and math.isfinite(self.beta0), "beta0")
        _check(self.alpha >= 2 and math.isfinite(self.alpha), "alpha")
        _check(self.rician_G >= 0, "rician_G")
        _check(self.bandwidth_hz > 0, "bandwidth_hz")
        _check(math.isfinite(self.noise_psd_dbm_hz), "noise_psd_dbm_hz")
        _check(self.pbar > 0 and math.isfinite(self.pbar), "pbar")
        _check(int(self.M) == self.M and self.M >= 1, "M")
        object.__setattr__(self, "M", int(self.M))
        _check(self.sigma2 > 0, "sigma2")

    @property
    def sigma2(self) -> float:
        """Noise power in watts (bandwidth times PSD)."""
        return self.bandwidth_hz * dbm_to_watts(self.noise_psd_dbm_hz)

    @property
    def gamma0(self) -> float:
        """Reference SNR beta0 / sigma2."""
        return self.beta0 / self.sigma2

    @property
    def beta0_db(self) -> float:
        return 10.0 * math.log10(self.beta0)


def _check(ok: bool, name: str) -> None:
    if not ok:
        raise ScenarioError(f"invariant violation: {name}")


def _pair(v, name: str) -> tuple[float, float]:
    try:
        x, y = (float(c) for c in v)
    except (TypeError, ValueError):
        raise ScenarioError(f"invariant violation: {name} must be an (x, y) pair") from None
    _check(math.isfinite(x) and math.isfinite(y), name)
    return (x, y)


@dataclass(frozen=True)
class Scenario:
    sn_positions: tuple[tuple[float, float], ...]
    H_min: float = 130.0
    q_I: tuple[float, float] = (400.0, 0.0)
    q_F: tuple[float, float] = (1000.0, 500.0)
    v_h: float = 20.0
    delta: float = 0.5
    T: float = 100.0
    radio: RadioParams = field(default_factory=RadioParams)
    grid_step: float = 20.0

    def __post_init__(self):
        pts = tuple(_pair(p, "sn_positions") for p in self.sn_positions)
        object.__setattr__(self, "sn_positions", pts)
        object.__setattr__(self, "q_I", _pair(self.q_I, "q_I"))
        object.__setattr__(self, "q_F", _pair(self.q_F, "q_F"))
        _check(len(pts) >= 1, "K")
        _check(len(set(pts)) == len(pts), "sn_positions (coincident SNs)")
        _check(self.H_min > 0, "H_min")
        _check(self.v_h > 0, "v_h")
        _check(self.delta > 0, "delta")
        _check(self.T > 0 and round(self.T / self.delta) >= 1, "T")
        _check(abs(self.N * self.delta - self.T) <= self.delta / 2, "T")
        _check(self.grid_step > 0, "delta_g")
        _check(isinstance(self.radio, RadioParams), "radio")

    @property
    def K(self) -> int:
        return len(self.sn_positions)

    @property
    def N(self) -> int:
        return int(round(self.T / self.delta))

    @property
    def M(self) -> int:
        return self.radio.M

    @property
    def V_h(self) -> float:
        """Maximum displacement per slot."""
        return self.v_h * self.delta

    @property
    def sn_xy(self) -> np.ndarray:
        return np.array(self.sn_positions, dtype=float)

    def with_radio(self, **changes) -> "Scenario":
        return replace(self, radio=replace(self.radio, **changes))

    def with_duration(self, T: float) -> "Scenario":
        return replace(self, T=float(T))

    def box(self, grid_step: float | None = None) -> "BoxRegion":
        return BoxRegion.around(self.sn_xy, self.grid_step if grid_step is None else grid_step)

    def to_dict(self) -> dict:
        r = self.radio
        return {
            "sns": {"positions": [list(p) for p in self.sn_positions]},
            "uav": {
                "H_min": self.H_min,
                "v_h": self.v_h,
                "delta": self.delta,
                "T": self.T,
                "q_I": list(self.q_I),
                "q_F": list(self.q_F),
                "M": r.M,
            },
            "radio": {
                "beta0_db": r.beta0_db,
                "alpha": r.alpha,
                "rician_G": r.rician_G,
                "bandwidth_hz": r.bandwidth_hz,
                "noise_psd_dbm_hz": r.noise_psd_dbm_hz,
                "pbar_w": r.pbar,
            },
            "grid": {"delta_g": self.grid_step},
        }

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.to_toml().encode()).hexdigest()


@dataclass(frozen=True)
class BoxRegion:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    grid_step: float

    def __post_init__(self):
        _check(self.grid_step > 0, "delta_g")
        _check(self.x_lo <= self.x_hi and self.y_lo <= self.y_hi, "box bounds")

    @classmethod
    def around(cls, points: np.ndarray, grid_step: float) -> "BoxRegion":
        pts = np.asarray(points, dtype=float)
        return cls(float(pts[:, 0].min()), float(pts[:, 0].max()),
                   float(pts[:, 1].min()), float(pts[:, 1].max()), float(grid_step))

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        def axis(lo, hi):
            n = max(1, math.ceil((hi - lo) / self.grid_step - 1e-9))
            return np.linspace(lo, hi, n + 1) if hi > lo else np.array([lo])
        return axis(self.x_lo, self.x_hi), axis(self.y_lo, self.y_hi)

    def grid(self) -> np.ndarray:
        """Grid points sorted lexicographically by (x, y); shape (G, 2)."""
        xs, ys = self.axes()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])


def baseline_scenario(sn_positions=None, **overrides) -> Scenario:
    """Default parameter set; SN layout defaults to ``generate_scenario(7)``."""
    if sn_positions is None:
        return generate_scenario(7, **overrides)
    return Scenario(sn_positions=tuple(map(tuple, sn_positions)), **overrides)


def generate_scenario(seed: int, K: int = 8, side_m: float = 1000.0,
                      template: Scenario | RadioParams | None = None, **overrides) -> Scenario:
    """Seeded scenario with K SNs i.i.d. uniform over ``[0, side_m]^2``."""
    if K < 1:
        raise ScenarioError("invariant violation: K")
    if not side_m > 0:
        raise ScenarioError("invariant violation: side_m")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, side_m, size=(K, 2))
    positions = tuple((float(x), float(y)) for x, y in pts)
    if isinstance(template, Scenario):
        return replace(template, sn_positions=positions, **overrides)
    if isinstance(template, RadioParams):
        overrides.setdefault("radio", template)
    return Scenario(sn_positions=positions, **overrides)


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        sns = doc["sns"]
        uav = doc["uav"]
        radio = doc["radio"]
        grid = doc.get("grid", {})
        rp = RadioParams(
            beta0=db_to_linear(float(radio["beta0_db"])),
            alpha=float(radio["alpha"]),
            rician_G=float(radio["rician_G"]),
            bandwidth_hz=float(radio["bandwidth_hz"]),
            noise_psd_dbm_hz=float(radio["noise_psd_dbm_hz"]),
            pbar=float(radio["pbar_w"]),
            M=uav["M"],
        )
        return Scenario(
            sn_positions=tuple(tuple(p) for p in sns["positions"]),
            H_min=float(uav["H_min"]),
            q_I=tuple(uav["q_I"]),
            q_F=tuple(uav["q_F"]),
            v_h=float(uav["v_h"]),
            delta=float(uav["delta"]),
            T=float(uav["T"]),
            radio=rp,
            grid_step=float(grid.get("delta_g", 20.0)),
        )
    except KeyError as exc:
        raise ScenarioError(f"parse failure: missing key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"parse failure: {exc}") from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"parse failure: {exc}") from None
    return scenario_from_dict(doc)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(scenario.to_toml())
