"""Command-line driver.

Exit codes: 0 ok, 2 bad input, 3 solver non-convergence, 4 infeasible.
Files written by a failing command are removed before it exits.
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .channel import distance_power, rate_monte_carlo
from .energy import PropulsionParams, mission_energy, power_energy_tradeoff
from .errors import HarvestError
from .hover_solver import solve_p2
from .io import OutputSet, TRAJECTORY_HEADER, read_trajectory_csv, trajectory_rows
from .scenario import Scenario, generate_scenario, load_scenario
from .schedule_solver import solve_p3
from .trajectory_solver import Trajectory, min_time_for_throughput, solve_p1

log = logging.getLogger("uav_harvest")

MODES = ("proposed", "mrc", "single")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _configs(text: str) -> list[tuple[str, int]]:
    """``mode:M`` pairs, e.g. ``proposed:20,mrc:12``."""
    out = []
    for item in text.split(","):
        mode, _, m = item.strip().partition(":")
        if mode not in MODES or not m.isdigit():
            raise argparse.ArgumentTypeError(f"expected mode:M items, got {item!r}")
        out.append((mode, int(m)))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uav-harvest", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker cap for parallel sections (default: all cores)")
    p.add_argument("--manifest", type=Path, help="write a JSON run manifest here")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="seeded random SN layout")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--K", type=int, default=8)
    g.add_argument("--side", type=float, default=1000.0, help="square side, m")
    g.add_argument("--M", type=int, default=12)
    g.add_argument("--T", type=float, default=100.0, help="mission time, s")
    g.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve-p2", help="hover-point plan (speed-unconstrained bound)")
    s.add_argument("--scenario", type=Path, required=True)
    s.add_argument("--mode", choices=MODES, default="proposed")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve-p3", help="schedule and powers for a given trajectory")
    s.add_argument("--scenario", type=Path, required=True)
    s.add_argument("--trajectory", type=Path, required=True)
    s.add_argument("--mode", choices=MODES, default="proposed")
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve-p1", help="joint trajectory, schedule and power design")
    s.add_argument("--scenario", type=Path, required=True)
    s.add_argument("--mode", choices=MODES, default="proposed")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--trace", type=Path, help="CSV of the min-rate per BCD iteration")
    s.add_argument("--trajectory-out", type=Path, help="CSV of slot positions")
    s.add_argument("--tol", type=float, default=1e-3)
    s.add_argument("--max-iters", type=int, default=30)

    s = sub.add_parser("simulate-rate", help="closed-form rate against Monte Carlo")
    s.add_argument("--scenario", type=Path, required=True)
    s.add_argument("--uav-xy", type=_floats, required=True, help="X,Y in m")
    s.add_argument("--active", type=_ints, required=True, help="0-based SN indices")
    s.add_argument("--power-w", type=float, help="transmit power per SN (default: pbar)")
    s.add_argument("--draws", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("energy-tradeoff", help="UAV energy versus SN power budget")
    s.add_argument("--scenario", type=Path, required=True)
    s.add_argument("--pbar", type=_floats, default=[0.002, 0.005, 0.01, 0.02], help="W")
    s.add_argument("--throughput-mbits", type=float, default=4.0)
    s.add_argument("--mode", choices=MODES, default="proposed")
    s.add_argument("--T-max", type=float, default=3600.0)
    s.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("reproduce", help="full experiment pipeline on a seeded layout")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--K", type=int, default=8)
    s.add_argument("--out-dir", type=Path, required=True)
    s.add_argument("--draws", type=int, default=1000)
    s.add_argument("--T-list", type=_floats, default=[50.0, 100.0, 200.0, 400.0])
    s.add_argument("--configs", type=_configs,
                   default=_configs("proposed:20,proposed:12,mrc:12,single:12"))
    s.add_argument("--throughput-mbits", type=_floats, default=[2.0, 4.0])
    s.add_argument("--pbar", type=_floats, default=[0.002, 0.005, 0.01, 0.02])
    s.add_argument("--energy-configs", type=_configs, default=_configs("proposed:12,mrc:12"))
    return p


# --- subcommands -----------------------------------------------------------

def cmd_generate(a, out: OutputSet, info: dict):
    sc = generate_scenario(a.seed, K=a.K, side_m=a.side, T=a.T)
    sc = sc.with_radio(M=a.M)
    out.write_text(a.out, sc.to_toml())
    info.update(seeds=[a.seed], scenario_digest=sc.digest())


def cmd_solve_p2(a, out: OutputSet, info: dict):
    sc = _scenario(a, info)
    plan = solve_p2(sc, a.mode)
    out.write_json(a.out, plan.to_dict())
    info["tolerances"] = {"ellipsoid_tol": 1e-7, "gap_tol": 1e-4}


def cmd_solve_p3(a, out: OutputSet, info: dict):
    sc = _scenario(a, info)
    q = read_trajectory_csv(a.trajectory)
    Trajectory(q, sc.H_min).check(sc)
    sp = solve_p3(sc, q, a.mode)
    out.write_json(a.out, sp.to_dict())
    info["tolerances"] = {"ellipsoid_tol": 1e-7, "gap_tol": 1e-3}


def cmd_solve_p1(a, out: OutputSet, info: dict):
    sc = _scenario(a, info)
    plan = solve_p1(sc, a.mode, tol=a.tol, max_iters=a.max_iters)
    out.write_json(a.out, plan.to_dict())
    if a.trace:
        out.write_csv(a.trace, ("iteration", "r_bpshz"), enumerate(plan.trace))
    if a.trajectory_out:
        out.write_csv(a.trajectory_out, TRAJECTORY_HEADER, trajectory_rows(plan.trajectory.q))
    info["tolerances"] = {"bcd_tol": a.tol, "max_iters": a.max_iters}


def _rate_rows(sc: Scenario, xy, active, power, draws, seed, threads, prefix=()):
    if len(xy) != 2:
        raise UsageError("--uav-xy needs exactly two numbers")
    if not active or len(set(active)) != len(active) or min(active) < 0 or max(active) >= sc.K:
        raise UsageError(f"--active must list distinct SN indices in 0..{sc.K - 1}")
    rep = rate_monte_carlo(np.asarray(xy, float), sc.H_min, sc.sn_xy[active], power, sc.radio,
                           n_draws=draws, seed=seed, threads=threads, sn_ids=active)
    return [prefix + (k, cf, m, se)
            for k, cf, m, se in zip(rep.sn_ids, rep.closed_form, rep.mc_mean, rep.mc_se)]


RATE_HEADER = ("sn_id", "closed_form_bpshz", "mc_mean_bpshz", "mc_se_bpshz")


def cmd_simulate_rate(a, out: OutputSet, info: dict):
    sc = _scenario(a, info)
    if a.draws < 2:
        raise UsageError("--draws must be at least 2")
    power = sc.radio.pbar if a.power_w is None else a.power_w
    rows = _rate_rows(sc, a.uav_xy, a.active, power, a.draws, a.seed, a.threads)
    out.write_csv(a.out, RATE_HEADER, rows)
    info["seeds"] = [a.seed]


TRADEOFF_HEADER = ("pbar_w", "t_min_s", "energy_j", "feasible")


def cmd_energy_tradeoff(a, out: OutputSet, info: dict):
    sc = _scenario(a, info)
    if a.throughput_mbits <= 0:
        raise UsageError("--throughput-mbits must be positive")
    curve = power_energy_tradeoff(sc, a.pbar, a.throughput_mbits * 1e6, a.mode, T_max=a.T_max)
    out.write_csv(a.out, TRADEOFF_HEADER, [pt.row() for pt in curve])


def cmd_reproduce(a, out: OutputSet, info: dict):
    base = generate_scenario(a.seed, K=a.K)
    info.update(seeds=[a.seed], scenario_digest=base.digest())
    d = a.out_dir
    save = out.write_text(d / "scenario.toml", base.to_toml())
    log.info("scenario written to %s", save)

    # closed-form rate against Monte Carlo on a 5 x 5 grid of UAV positions
    lo, hi = base.sn_xy.min(axis=0), base.sn_xy.max(axis=0)
    xs, ys = np.linspace(lo[0], hi[0], 5), np.linspace(lo[1], hi[1], 5)
    rows = []
    for M in (12, 20):
        sc = base.with_radio(M=M)
        for x in xs:
            for y in ys:
                order = np.argsort(distance_power(np.array([x, y]), sc.sn_xy, sc.H_min, 2.0),
                                   kind="stable")
                for kn in (1, 2, 3):
                    act = sorted(int(k) for k in order[:kn])
                    rows += _rate_rows(sc, (x, y), act, sc.radio.pbar, a.draws, a.seed,
                                       a.threads, prefix=(M, kn, float(x), float(y)))
    out.write_csv(d / "rate_fidelity.csv", ("M", "n_active", "uav_x_m", "uav_y_m") + RATE_HEADER, rows)

    # hover plans, then min-rate against mission time
    hover, hover_rows = {}, []
    configs = list(dict.fromkeys(list(a.configs) + list(a.energy_configs)))
    for mode, M in configs:
        hp = solve_p2(base.with_radio(M=M), mode)
        hover[mode, M] = hp
        hover_rows.append((mode, M, hp.r, hp.dual_value, hp.omega))
    out.write_csv(d / "hover_plans.csv", ("mode", "M", "r_bpshz", "dual_bpshz", "hover_points"),
                  hover_rows)

    rt_rows, at_T = [], {}
    for T in a.T_list:
        for mode, M in a.configs:
            sc = base.with_radio(M=M).with_duration(T)
            plan = solve_p1(sc, mode, hover=hover[mode, M])
            rt_rows.append((T, mode, M, plan.r, hover[mode, M].r, plan.iterations,
                            mission_energy(plan.trajectory, sc.delta)))
            at_T[T, mode, M] = plan.r
    out.write_csv(d / "rate_vs_time.csv",
                  ("T_s", "mode", "M", "r_bpshz", "r_hover_bound_bpshz", "bcd_iterations",
                   "energy_j"), rt_rows)

    tm_rows = []
    for mbits in a.throughput_mbits:
        for mode, M in a.configs:
            t_min, plan = min_time_for_throughput(base.with_radio(M=M), mbits * 1e6, mode,
                                                  hover=hover[mode, M])
            tm_rows.append((mbits, mode, M, t_min, plan.r))
    out.write_csv(d / "min_time.csv", ("throughput_mbits", "mode", "M", "t_min_s", "r_bpshz"),
                  tm_rows)

    en_rows = []
    mbits = a.throughput_mbits[-1]
    for mode, M in a.energy_configs:
        for pt in power_energy_tradeoff(base.with_radio(M=M), a.pbar, mbits * 1e6, mode):
            en_rows.append((mode, M) + pt.row())
    out.write_csv(d / "energy_tradeoff.csv", ("mode", "M") + TRADEOFF_HEADER, en_rows)

    # headline ordering at the default mission time
    T0 = base.T if base.T in a.T_list else a.T_list[len(a.T_list) // 2]
    rates = {f"{mode}_M{M}": at_T[T0, mode, M] for mode, M in a.configs}
    vals = [at_T[T0, mode, M] for mode, M in a.configs]
    summary = {
        "seed": a.seed,
        "T_s": T0,
        "r_bpshz": rates,
        "configs_in_decreasing_rate": all(x >= y for x, y in zip(vals, vals[1:])),
        "t_min_s": {f"{mode}_M{M}_{mb:g}Mbit": t for mb, mode, M, t, _ in tm_rows},
        "hover_points": {f"{mode}_M{M}": n for mode, M, _, _, n in hover_rows},
    }
    out.write_json(d / "summary.json", summary)
    out.write_csv(d / "summary.csv", ("config", "r_bpshz"), list(rates.items()))


def _scenario(a, info: dict) -> Scenario:
    sc = load_scenario(a.scenario)
    info["scenario_digest"] = sc.digest()
    return sc


COMMANDS = {
    "generate": cmd_generate,
    "solve-p2": cmd_solve_p2,
    "solve-p3": cmd_solve_p3,
    "solve-p1": cmd_solve_p1,
    "simulate-rate": cmd_simulate_rate,
    "energy-tradeoff": cmd_energy_tradeoff,
    "reproduce": cmd_reproduce,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=a.log_level.upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    out = OutputSet()
    info: dict = {"subcommand": a.command, "argv": list(sys.argv[1:] if argv is None else argv)}
    t0 = time.perf_counter()
    try:
        COMMANDS[a.command](a, out, info)
    except (UsageError, argparse.ArgumentTypeError) as exc:
        return _fail(out, "bad_input", exc, 2)
    except HarvestError as exc:
        return _fail(out, type(exc).__name__, exc, exc.exit_code)
    except (ValueError, OSError) as exc:
        return _fail(out, "bad_input", exc, 2)
    if a.manifest:
        out.write_json(a.manifest, {
            **info,
            "versions": {"uav_harvest": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "threads": a.threads,
            "propulsion": PropulsionParams().__dict__,
            "outputs": [str(p) for p in out.paths],
            "wall_clock_s": time.perf_counter() - t0,
        })
    return 0


def _fail(out: OutputSet, kind: str, exc: Exception, code: int) -> int:
    out.remove_all()
    print(f"error [{kind}]: {exc}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
