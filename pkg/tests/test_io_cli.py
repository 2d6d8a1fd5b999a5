import json
import math

import numpy as np
import pytest

from uav_harvest.cli import run
from uav_harvest.io import OutputSet, dumps_csv, dumps_json, read_trajectory_csv, trajectory_rows
from uav_harvest.scenario import RadioParams, Scenario, save_scenario


@pytest.fixture
def small_scenario(tmp_path):
    sc = Scenario(sn_positions=((100.0, 50.0), (300.0, 250.0), (500.0, 40.0)), q_I=(0.0, 0.0),
                  q_F=(600.0, 0.0), T=40.0, radio=RadioParams(M=6))
    path = tmp_path / "sc.toml"
    save_scenario(sc, path)
    return path


# ---------------------------------------------------------------- io helpers

def test_json_nan_becomes_null_and_numpy_is_plain():
    text = dumps_json({"a": math.nan, "b": np.float64(1.5), "c": np.arange(2), "d": np.bool_(True)})
    assert json.loads(text) == {"a": None, "b": 1.5, "c": [0, 1], "d": True}


def test_csv_formatting():
    text = dumps_csv(("x", "ok"), [(0.1, True), (math.nan, False)])
    assert text == "x,ok\n0.1,1\nnan,0\n"


def test_trajectory_csv_round_trip(tmp_path):
    q = np.array([[0.0, 1.5], [2.25, -3.0]])
    p = tmp_path / "t.csv"
    OutputSet().write_csv(p, ("slot", "x_m", "y_m"), trajectory_rows(q))
    assert np.array_equal(read_trajectory_csv(p), q)
    p.write_text("slot,x_m,y_m\n1,0,0\n0,1,1\n")
    with pytest.raises(ValueError, match="slots"):
        read_trajectory_csv(p)
    p.write_text("slot,x_m,y_m\n0,abc,0\n")
    with pytest.raises(ValueError):
        read_trajectory_csv(p)
    with pytest.raises(ValueError):
        read_trajectory_csv(tmp_path / "absent.csv")


def test_output_set_removes_written_files(tmp_path):
    out = OutputSet()
    a = out.write_text(tmp_path / "sub" / "a.txt", "x")
    assert a.exists() and not (tmp_path / "sub" / "a.txt.part").exists()
    out.remove_all()
    assert not a.exists()


# ---------------------------------------------------------------- CLI

def _bytes(*paths):
    return [p.read_bytes() for p in paths]


def test_generate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.toml", tmp_path / "b.toml"
    assert run(["generate", "--seed", "3", "--K", "5", "--out", str(a)]) == 0
    assert run(["generate", "--seed", "3", "--K", "5", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_solve_commands_are_deterministic(tmp_path, small_scenario):
    outs = []
    for i in range(2):
        d = tmp_path / f"run{i}"
        p2, p1, tr, traj, p3 = (d / "p2.json", d / "p1.json", d / "trace.csv", d / "traj.csv",
                                d / "p3.json")
        assert run(["solve-p2", "--scenario", str(small_scenario), "--out", str(p2)]) == 0
        assert run(["solve-p1", "--scenario", str(small_scenario), "--mode", "mrc", "--out", str(p1),
                    "--trace", str(tr), "--trajectory-out", str(traj)]) == 0
        assert run(["solve-p3", "--scenario", str(small_scenario), "--trajectory", str(traj),
                    "--mode", "mrc", "--out", str(p3)]) == 0
        outs.append(_bytes(p2, p1, tr, traj, p3))
    assert outs[0] == outs[1]
    plan = json.loads((tmp_path / "run0" / "p1.json").read_text())
    assert plan["r_bpshz"] <= plan["r_upper_bpshz"] + 1e-6
    assert (tmp_path / "run0" / "trace.csv").read_text().startswith("iteration,r_bpshz\n")


def test_simulate_rate_deterministic_across_threads(tmp_path, small_scenario):
    args = ["simulate-rate", "--scenario", str(small_scenario), "--uav-xy", "200,100",
            "--active", "0,2", "--draws", "300", "--seed", "5"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["--threads", "1"] + args + ["--out", str(a)]) == 0
    assert run(["--threads", "2"] + args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "sn_id,closed_form_bpshz,mc_mean_bpshz,mc_se_bpshz"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "2"]


def test_manifest_records_digest(tmp_path, small_scenario):
    m = tmp_path / "manifest.json"
    assert run(["--manifest", str(m), "solve-p2", "--scenario", str(small_scenario),
                "--mode", "single", "--out", str(tmp_path / "p2.json")]) == 0
    doc = json.loads(m.read_text())
    assert doc["subcommand"] == "solve-p2"
    assert len(doc["scenario_digest"]) == 64
    assert doc["propulsion"]["P0"] == 79.8563


def test_usage_errors_exit_2(tmp_path, small_scenario, capsys):
    assert run(["solve-p2"]) == 2
    assert run(["simulate-rate", "--scenario", str(small_scenario), "--uav-xy", "1,2",
                "--active", "7", "--out", str(tmp_path / "x.csv")]) == 2
    assert "error [bad_input]" in capsys.readouterr().err
    assert run(["solve-p2", "--scenario", str(tmp_path / "missing.toml"),
                "--out", str(tmp_path / "x.json")]) == 2
    assert not (tmp_path / "x.json").exists()
    assert run(["--threads", "0", "generate", "--seed", "1", "--out", str(tmp_path / "g.toml")]) == 2


def test_bad_trajectory_rejected(tmp_path, small_scenario):
    traj = tmp_path / "t.csv"
    traj.write_text("slot,x_m,y_m\n0,0,0\n1,500,0\n")
    assert run(["solve-p3", "--scenario", str(small_scenario), "--trajectory", str(traj),
                "--out", str(tmp_path / "p3.json")]) == 2


def test_failed_run_removes_partial_outputs(tmp_path, capsys):
    d = tmp_path / "rep"
    # a 1 s mission cannot connect q_I and q_F, which fails after several files exist
    code = run(["reproduce", "--K", "2", "--out-dir", str(d), "--draws", "10", "--T-list", "1",
                "--configs", "mrc:4", "--energy-configs", "mrc:4"])
    assert code == 4
    assert "error [InfeasibleError]" in capsys.readouterr().err
    assert not any(d.rglob("*"))


def test_energy_tradeoff_cli(tmp_path, small_scenario):
    out = tmp_path / "e.csv"
    assert run(["energy-tradeoff", "--scenario", str(small_scenario), "--pbar", "0.005,0.02",
                "--throughput-mbits", "20", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "pbar_w,t_min_s,energy_j,feasible"
    e = [float(ln.split(",")[2]) for ln in lines[1:]]
    assert e[0] >= e[1]
