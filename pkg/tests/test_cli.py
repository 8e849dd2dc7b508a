import csv
import os
import subprocess
import sys
from dataclasses import replace

import pytest

from arqopt import kernels
from arqopt.cli import main
from arqopt.scenario import Axis, dump_scenario, load_scenario


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_solve(tmp_path):
    assert main(["solve", "--config", "fig1", "--out", str(tmp_path), "--at", "0.3"]) == 0
    for name in ("occupancy.csv", "policy.csv", "summary.csv"):
        assert (tmp_path / name).stat().st_size > 0
    summary = {r["metric"]: r for r in _rows(tmp_path / "summary.csv")}
    assert float(summary["objective"]["value"]) == pytest.approx(1.25, abs=1e-8)
    assert all(r["satisfied"] in ("1", "") for r in summary.values())
    occ = _rows(tmp_path / "occupancy.csv")
    assert sum(float(r["omega"]) for r in occ) == pytest.approx(1.0, abs=1e-12)


def test_solve_dump_tableau(tmp_path):
    path = tmp_path / "piv.txt"
    assert main(["solve", "--config", "fig2", "--out", str(tmp_path),
                 "--dump-tableau", str(path)]) == 0
    assert path.read_text().strip()


def test_solve_infeasible_exit_code(tmp_path):
    assert main(["solve", "--config", "fig1", "--out", str(tmp_path), "--at", "0.9"]) == 2


def test_bad_point(tmp_path, capsys):
    assert main(["solve", "--config", "fig1", "--out", str(tmp_path), "--at", "0.1,0.2"]) == 2
    assert "axis" in capsys.readouterr().err


def test_missing_config(tmp_path, capsys):
    assert main(["solve", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
    assert "no such file" in capsys.readouterr().err


def test_sweep_no_sim(tmp_path):
    assert main(["sweep", "--config", "fig1", "--out", str(tmp_path), "--no-sim"]) == 0
    rows = _rows(tmp_path / "results.csv")
    assert len(rows) == 11
    assert [float(r["bound_throughput_2"]) for r in rows][:2] == [0.1, 0.15]
    assert rows[0]["sim_objective"] == ""
    assert not (tmp_path / "objective_map.csv").exists()


def test_sweep_2d_writes_map(tmp_path):
    s = load_scenario("fig4")
    small = replace(s, axes=(Axis("throughput_1", (0.2, 0.5)), Axis("throughput_2", (0.2,))))
    dump_scenario(small, tmp_path / "small.json")
    assert main(["sweep", "--config", str(tmp_path / "small.json"), "--out", str(tmp_path)]) == 0
    with open(tmp_path / "objective_map.csv") as fh:
        grid = list(csv.reader(fh))
    assert len(grid) == 3 and len(grid[0]) == 2


def test_sweep_with_sim(tmp_path):
    assert main(["sweep", "--config", "fig2", "--out", str(tmp_path), "--slots", "40000",
                 "--seed", "5"]) == 0
    [row] = _rows(tmp_path / "results.csv")
    assert float(row["sim_objective_se"]) > 0


def test_simulate(tmp_path):
    assert main(["simulate", "--config", "fig1", "--out", str(tmp_path), "--at", "0.3",
                 "--slots", "50000", "--trace", "--backend", "python"]) == 0
    summ = _rows(tmp_path / "sim_summary.csv")
    assert summ[0]["metric"] == "objective"
    assert all(abs(float(r["z"])) < 6 for r in summ if r["z"] not in ("", "nan"))
    assert len(_rows(tmp_path / "trace.csv")) == 50000 - 5000
    assert _rows(tmp_path / "accumulator.csv")


@pytest.mark.skipif(kernels.compiled_kernels is None, reason="compiled kernels not built")
def test_simulate_backends_agree(tmp_path):
    for b in ("compiled", "python"):
        assert main(["simulate", "--config", "fig2", "--out", str(tmp_path / b),
                     "--slots", "20000", "--backend", b]) == 0
    assert ((tmp_path / "compiled" / "sim_summary.csv").read_text()
            == (tmp_path / "python" / "sim_summary.csv").read_text())


def test_policy_map(tmp_path):
    assert main(["policy-map", "--config", "fig2", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "policy_map.csv")
    assert len(rows) == 36
    assert set(rows[0]) >= {"x1", "x2", "p_tx1", "p_tx2", "p_both"}


def test_validate(capsys):
    assert main(["validate", "--config", "fig1", "--no-sim", "--at", "0.3"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_validate_with_sim(capsys):
    assert main(["validate", "--config", "fig2", "--slots", "400000"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "arqopt", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for verb in ("solve", "sweep", "simulate", "policy-map", "validate"):
        assert verb in r.stdout


def test_pure_python_fallback_solves_identically(tmp_path):
    """Forcing the fallback kernels must not change the optimum bit for bit."""
    code = ("from arqopt import kernels; from arqopt.sweep import solve_point; "
            "from arqopt.scenario import load_scenario; "
            "r = solve_point(load_scenario('fig1'), (0.5,)).result; "
            "print(kernels.BACKEND, r.objective.hex(), r.omega.values.tobytes().hex()[:4000])")
    env = {"ARQOPT_PURE_PYTHON": "1"}
    outs = [subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                           env={**os.environ, **e}, check=True).stdout.split()
            for e in ({}, env)]
    assert outs[1][0] == "python"
    assert outs[0][1:] == outs[1][1:]
