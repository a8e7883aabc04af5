import csv
import json

import numpy as np
import pytest

from greencell.cli import main, parse_grid


def _read(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# schema: greencell.")
    return lines[0], list(csv.DictReader(lines[1:]))


def test_parse_grid():
    assert parse_grid("1,2.5") == [1.0, 2.5]
    assert parse_grid("0:600:300") == [0.0, 300.0, 600.0]
    g = parse_grid("log:10:1000:3")
    np.testing.assert_allclose(g, [10, 100, 1000])


def test_blocking_interior_minimum(tmp_path):
    assert main(["blocking", "--scenario", "single_cell", "--rho", "5", "--p-in", "1000", "--out", str(tmp_path)]) == 0
    schema, rows = _read(tmp_path / "blocking.csv")
    assert schema == "# schema: greencell.blocking/1"
    n = np.array([int(r["n"]) for r in rows])
    p = np.array([float(r["p_blk"]) for r in rows])
    phi = np.array([float(r["phi"]) for r in rows])
    i = int(np.argmin(p))
    assert 0 < n[i] < 600
    assert [r["is_min"] for r in rows].count("1") == 1
    assert (phi[:i] == 0).all() and (phi[i + 1 :] > 0).all()


def test_optimize_three_sector(tmp_path):
    args = ["optimize", "--scenario", "three_sector", "--solver", "first_stage", "--beta", "3000", "--out", str(tmp_path)]
    assert main(args) == 0
    schema, rows = _read(tmp_path / "schedule_first_stage.csv")
    assert schema == "# schema: greencell.schedule/1"
    assert len(rows) == 24
    man = json.loads((tmp_path / "schedule_first_stage_manifest.json").read_text())
    assert man["summary"]["solver"] == "first_stage"
    assert "config_hash" in man


def test_optimize_beta_zero_draws_no_grid(tmp_path):
    assert main(["optimize", "--scenario", "single_cell", "--solver", "optimal", "--beta", "0", "--out", str(tmp_path)]) == 0
    man = json.loads((tmp_path / "schedule_optimal_manifest.json").read_text())
    assert man["summary"]["avg_grid_power_W"] == 0.0


def test_optimize_heuristic(tmp_path):
    args = ["optimize", "--scenario", "three_sector", "--solver", "threshold+traffic_energy_aware", "--budget", "500"]
    assert main(args + ["--out", str(tmp_path)]) == 0
    _, rows = _read(tmp_path / "schedule_threshold+traffic_energy_aware.csv")
    assert len(rows) == 24


def test_simulate_deterministic(tmp_path):
    assert main(["optimize", "--scenario", "single_cell", "--solver", "optimal", "--beta", "2000",
                 "--n-levels", "0:600:150", "--out", str(tmp_path)]) == 0
    sched = tmp_path / "schedule_optimal.csv"
    out = []
    for k in range(2):
        d = tmp_path / f"sim{k}"
        assert main(["simulate", "--scenario", "single_cell", "--schedule", str(sched), "--seed", "3",
                     "--arrivals", "40000", "--out", str(d)]) == 0
        schema, rows = _read(d / "empirical.csv")
        assert schema == "# schema: greencell.empirical/1"
        out.append(rows)
    assert out[0] == out[1]


def test_sweep_writes_pareto_frontier(tmp_path):
    args = ["sweep", "--scenario", "single_cell", "--solver", "first_stage", "--beta-grid", "0,1000,1e5", "--out", str(tmp_path)]
    assert main(args) == 0
    _, rows = _read(tmp_path / "frontier_first_stage.csv")
    blk = [float(r["weighted_blocking"]) for r in rows]
    pw = [float(r["avg_grid_power_W"]) for r in rows]
    assert blk == sorted(blk)
    assert all(b <= a + 1e-9 for a, b in zip(pw, pw[1:]))


@pytest.mark.parametrize(
    "argv, code",
    [
        (["optimize"], 2),
        (["frobnicate", "--scenario", "single_cell"], 2),
        (["optimize", "--scenario", "single_cell", "--n-levels", "a:b"], 2),
        (["optimize", "--scenario", "/no/such/file.scn"], 3),
        (["optimize", "--scenario", "single_cell", "--beta", "-1"], 3),
        (["optimize", "--scenario", "single_cell", "--phi-levels", "1.5"], 3),
        (["optimize", "--scenario", "three_sector", "--solver", "optimal", "--state-cap", "1"], 4),
    ],
)
def test_exit_codes(tmp_path, argv, code):
    assert main(argv + ["--out", str(tmp_path)]) == code
