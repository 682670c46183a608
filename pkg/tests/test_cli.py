"""Command-line interface: exit codes, artifacts, and determinism."""

import json

import pytest
from click.testing import CliRunner

from chernoff_kit.cli import main

FAST_CONVERGE = {
    "scenario": "dissipative",
    "dim": 6,
    "seed": 3,
    "suite": "converge",
    "n_grid": [16, 32, 64, 128],
    "t_grid": [0.5, 1.0],
}


@pytest.fixture
def cli():
    return CliRunner()


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_scenarios_lists_builtins(cli):
    res = cli.invoke(main, ["scenarios"])
    assert res.exit_code == 0
    assert res.output.split() == ["heat", "schrodinger", "dissipative", "mult-example"]


def test_run_unknown_key_exits_3(cli, tmp_path):
    path = _write(tmp_path, {"scenario": "heat", "bogus_key": 1})
    res = cli.invoke(main, ["run", "--config", path])
    assert res.exit_code == 3
    assert "bogus_key" in res.output


def test_run_t_grid_outside_horizon_exits_3(cli, tmp_path):
    path = _write(tmp_path, {"scenario": "heat", "t0": 1.0, "t_grid": [0.5, 1.5]})
    res = cli.invoke(main, ["run", "--config", path])
    assert res.exit_code == 3
    assert "t_grid" in res.output


def test_run_missing_config_file_exits_3(cli, tmp_path):
    res = cli.invoke(main, ["run", "--config", str(tmp_path / "absent.json")])
    assert res.exit_code == 3


def test_run_heat_zero_potential_converge(cli, tmp_path):
    doc = {
        "scenario": "heat",
        "potential": "zero",
        "grid_size": 64,
        "suite": "converge",
        "n_grid": [16, 32, 64, 128],
        "t_grid": [0.5, 1.0],
    }
    path = _write(tmp_path, doc)
    res = cli.invoke(main, ["run", "--config", path, "--out", str(tmp_path)])
    assert res.exit_code == 0
    assert "converge: pass" in res.output
    csv_lines = (tmp_path / "chernoff.csv").read_text().strip().splitlines()
    assert csv_lines[0] == "seminorm,t,n,error"
    # zero potential: the splitting is exact, errors sit at the floor
    for line in csv_lines[1:]:
        assert float(line.split(",")[3]) <= 1e-10


def test_run_writes_artifacts_and_reports_verdicts(cli, tmp_path):
    path = _write(tmp_path, FAST_CONVERGE)
    res = cli.invoke(main, ["run", "--config", path, "--out", str(tmp_path)])
    assert res.exit_code == 0
    doc = json.loads((tmp_path / "chernoff.json").read_text())
    assert doc["schema_version"] == "1"
    assert doc["verdicts"] == {"converge": "pass"}


def test_run_determinism_byte_identical(cli, tmp_path):
    path = _write(tmp_path, FAST_CONVERGE)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.invoke(main, ["run", "--config", path, "--out", str(out1)]).exit_code == 0
    assert cli.invoke(main, ["run", "--config", path, "--out", str(out2)]).exit_code == 0
    assert (out1 / "chernoff.csv").read_bytes() == (out2 / "chernoff.csv").read_bytes()
    assert (out1 / "chernoff.json").read_bytes() == (out2 / "chernoff.json").read_bytes()


def test_seed_env_var_changes_output(cli, tmp_path, monkeypatch):
    path = _write(tmp_path, FAST_CONVERGE)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    cli.invoke(main, ["run", "--config", path, "--out", str(out1)])
    monkeypatch.setenv("CHERNOFF_KIT_SEED", "99")
    cli.invoke(main, ["run", "--config", path, "--out", str(out2)])
    j1 = json.loads((out1 / "chernoff.json").read_text())
    j2 = json.loads((out2 / "chernoff.json").read_text())
    assert j1["config"]["seed"] == 3
    assert j2["config"]["seed"] == 99


def test_rates_refits_csv(cli, tmp_path):
    path = _write(tmp_path, FAST_CONVERGE)
    cli.invoke(main, ["run", "--config", path, "--out", str(tmp_path)])
    res = cli.invoke(main, ["rates", "--csv", str(tmp_path / "chernoff.csv")])
    assert res.exit_code == 0
    doc = json.loads(res.output)
    assert 0.8 <= doc["l2"]["slope"] <= 1.2


def test_rates_rejects_foreign_csv(cli, tmp_path):
    bad = tmp_path / "x.csv"
    bad.write_text("a,b\n1,2\n")
    res = cli.invoke(main, ["rates", "--csv", str(bad)])
    assert res.exit_code != 0


def test_jobs_flag_accepted(cli, tmp_path):
    path = _write(tmp_path, dict(FAST_CONVERGE, suite="all"))
    res = cli.invoke(main, ["run", "--config", path, "--jobs", "4", "--out", str(tmp_path)])
    assert res.exit_code == 0
