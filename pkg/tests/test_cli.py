import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from irsuav.cli import main
from irsuav.config import RunConfig, SolverConfig, save_config
from irsuav.scenario import desk_scenario


def _write(tmp_path, name="tiny.toml", **kw):
    opts = dict(n_f=8, n_slots=4, m=8, r_min=0.2)
    opts.update(kw)
    path = tmp_path / name
    save_config(RunConfig(desk_scenario(**opts), SolverConfig(iter_max=3, mc_runs=5)), path)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_solve_writes_outputs(tmp_path):
    cfg = _write(tmp_path)
    out = tmp_path / "run"
    assert main(["solve", "--scenario", str(cfg), "--out", str(out)]) == 0
    traj = _rows(out / "trajectory.csv")
    assert traj[0] == ["n", "x", "y", "z"] and len(traj) == 5
    assert _rows(out / "allocation.csv")[0] == ["n", "i", "k", "k_irs", "p_w"]
    users = _rows(out / "user_rates.csv")
    assert users[0] == ["k", "rate", "r_min"]
    assert all(float(r[1]) >= float(r[2]) - 1e-9 for r in users[1:])
    assert _rows(out / "rates.csv")[0] == ["iteration", "stage", "lb", "lb_aggregate"]
    meta = json.loads((out / "metadata.json").read_text())
    for key in ("command", "scenario", "seed", "alpha", "git_describe", "wall_time_s",
                "exit_code", "lb_sum_rate"):
        assert key in meta
    assert meta["exit_code"] == 0 and meta["alpha"] == 0.14


def test_allocation_powers_respect_budget(tmp_path):
    cfg = _write(tmp_path)
    out = tmp_path / "run"
    main(["solve", "--scenario", str(cfg), "--out", str(out)])
    rows = _rows(out / "allocation.csv")[1:]
    per_slot = {}
    for n, i, k, kp, p in rows:
        per_slot[n] = per_slot.get(n, 0.0) + float(p)
    p_max = desk_scenario().ofdm.p_max
    assert max(per_slot.values()) <= p_max * (1 + 1e-6)
    # every subcarrier of every slot has exactly one owner
    assert len(rows) == 8 * 4
    assert len({(n, i) for n, i, *_ in rows}) == 8 * 4


def test_reruns_are_byte_identical(tmp_path):
    cfg = _write(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    main(["solve", "--scenario", str(cfg), "--out", str(a), "--seed", "3"])
    main(["solve", "--scenario", str(cfg), "--out", str(b), "--seed", "3"])
    for name in ("trajectory.csv", "allocation.csv", "user_rates.csv", "rates.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_channel_probe_without_irs_is_flat(tmp_path):
    cfg = tmp_path / "flat.toml"
    sc = desk_scenario(n_f=16, n_slots=3, m=4).without_irs()
    save_config(RunConfig(sc), cfg)
    out = tmp_path / "probe"
    assert main(["channel-probe", "--scenario", str(cfg), "--out", str(out)]) == 0
    rows = _rows(out / "channel.csv")
    assert rows[0] == ["n", "i", "k", "k_irs", "gain"]
    gains = {}
    for n, i, k, kp, g in rows[1:]:
        gains.setdefault((n, k, kp), []).append(float(g))
    assert len(rows) - 1 == 3 * 3 * 3 * 16
    for values in gains.values():
        assert np.ptp(values) <= 1e-12 * max(values)
    assert _rows(out / "periods.csv")[0] == ["n", "k", "period_subcarriers"]


def test_missing_field_exits_1(tmp_path, capsys):
    cfg = _write(tmp_path)
    text = cfg.read_text().replace("v_max = 20.0\n", "")
    cfg.write_text(text)
    assert main(["solve", "--scenario", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "uav.v_max" in capsys.readouterr().err


def test_bad_alpha_exits_1(tmp_path, capsys):
    cfg = _write(tmp_path)
    assert main(["solve", "--scenario", str(cfg), "--alpha", "0.3",
                 "--out", str(tmp_path / "o")]) == 1
    assert "--alpha" in capsys.readouterr().err


def test_infeasible_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, r_min=60.0)
    out = tmp_path / "o"
    assert main(["solve", "--scenario", str(cfg), "--out", str(out)]) == 2
    assert "infeasible" in capsys.readouterr().err
    assert json.loads((out / "metadata.json").read_text())["exit_code"] == 2


def test_outage_subcommand(tmp_path):
    cfg = _write(tmp_path, r_min=0.1)
    out = tmp_path / "o"
    assert main(["outage", "--scenario", str(cfg), "--out", str(out), "--mc-runs", "4"]) == 0
    rows = _rows(out / "outage.csv")
    assert rows[0] == ["run", "k", "outage_rate", "los_rate", "r_min"]
    assert len(rows) == 1 + 4 * 3
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["mc_runs"] == 4 and meta["eta"] == 0.8


def test_baselines_subcommand(tmp_path):
    cfg = _write(tmp_path, r_min=0.05)
    out = tmp_path / "o"
    assert main(["baselines", "--scenario", str(cfg), "--out", str(out),
                 "--baseline", "2"]) == 0
    rows = _rows(out / "rates.csv")
    assert rows[0] == ["scheme", "lb", "lb_aggregate", "feasible"]
    assert [r[0] for r in rows[1:]] == ["proposed", "baseline_2"]
    assert (out / "trajectory_proposed.csv").exists()


def test_sweep_alpha_subcommand(tmp_path):
    cfg = _write(tmp_path, r_min=0.05)
    out = tmp_path / "o"
    assert main(["sweep-alpha", "--scenario", str(cfg), "--out", str(out),
                 "--grid", "0.08", "0.14"]) == 0
    rows = _rows(out / "rates.csv")
    assert rows[0] == ["alpha", "lb", "ub", "lb_aggregate", "ub_aggregate"]
    assert len(rows) == 3
    assert all(float(r[2]) >= float(r[1]) for r in rows[1:])


def test_place_irs_subcommand(tmp_path):
    cfg = _write(tmp_path, n_slots=3, r_min=0.0)
    out = tmp_path / "o"
    assert main(["place-irs", "--scenario", str(cfg), "--out", str(out),
                 "--spacing", "250"]) == 0
    rows = _rows(out / "placement.csv")
    assert rows[0] == ["x", "y", "lb", "lb_aggregate"]
    assert len(json.loads((out / "metadata.json").read_text())["best_location"]) >= 2


@pytest.mark.parametrize("launcher", [["irsuav"], [sys.executable, "-m", "irsuav"]])
def test_entry_points(launcher, tmp_path):
    res = subprocess.run(launcher + ["--help"], capture_output=True, text=True, timeout=60)
    assert res.returncode == 0
    assert "channel-probe" in res.stdout
