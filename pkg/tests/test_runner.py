"""Experiment runner: config parsing, rate refits, report rendering,
determinism, and the exit-code contract."""

import json

import numpy as np
import pytest

from chernoff_kit import runner


def _cfg(**kw):
    base = dict(scenario="dissipative", dim=6, seed=3, suite="converge",
                n_grid=[16, 32, 64, 128], t_grid=[0.5, 1.0])
    base.update(kw)
    return runner.ExperimentConfig.model_validate(base)


# ------------------------------------------------------------ config


def test_parse_config_rejects_unknown_key():
    with pytest.raises(runner.ConfigError, match="bogus_key"):
        runner.parse_config(json.dumps({"scenario": "heat", "bogus_key": 1}))


def test_parse_config_rejects_bad_json():
    with pytest.raises(runner.ConfigError, match="JSON"):
        runner.parse_config("{not json")


def test_parse_config_t_grid_outside_horizon():
    doc = {"scenario": "heat", "t0": 1.0, "t_grid": [0.5, 1.5]}
    with pytest.raises(runner.ConfigError, match="t_grid"):
        runner.parse_config(json.dumps(doc))


def test_parse_config_suite_scenario_mismatch():
    doc = {"scenario": "heat", "suite": "exa-gap"}
    with pytest.raises(runner.ConfigError, match="exa-gap"):
        runner.parse_config(json.dumps(doc))


def test_parse_config_defaults_round_trip():
    cfg = runner.parse_config(json.dumps({"scenario": "mult-example"}))
    assert cfg.suite == "all"
    again = runner.ExperimentConfig.model_validate(json.loads(cfg.model_dump_json()))
    assert again == cfg


def test_tolerances_must_be_positive():
    with pytest.raises(runner.ConfigError):
        runner.parse_config(
            json.dumps({"scenario": "heat", "tolerances": {"unique": -1.0}})
        )


# ------------------------------------------------------------ fit_rate


def test_fit_rate_first_order():
    ns = [10, 20, 40, 80]
    slope, resid = runner.fit_rate([0.1 / n for n in ns], ns)
    assert slope == pytest.approx(1.0, abs=1e-12)
    assert resid <= 1e-12


def test_fit_rate_second_order():
    ns = [10, 20, 40, 80]
    slope, _ = runner.fit_rate([0.1 / n**2 for n in ns], ns)
    assert slope == pytest.approx(2.0, abs=1e-12)


def test_fit_rate_flat_curve():
    ns = [10, 20, 40, 80]
    slope, _ = runner.fit_rate([0.5] * 4, ns)
    assert slope == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_flags_nonpositive():
    slope, resid = runner.fit_rate([0.1, 0.01, 0.0, 0.0], [1, 2, 4, 8])
    assert slope is None and resid == float("inf")


def test_fit_rate_needs_four_points():
    with pytest.raises(ValueError):
        runner.fit_rate([1.0, 0.5], [1, 2])


# ------------------------------------------------------------ rendering


def test_render_csv_header_only_without_report():
    assert runner.render_csv(None) == "seminorm,t,n,error\n"


def test_csv_and_json_schema():
    cfg = _cfg()
    summary, report = runner.run(cfg)
    csv_text = runner.render_csv(report)
    lines = csv_text.strip().splitlines()
    assert lines[0] == "seminorm,t,n,error"
    # every data row: label, float t, int n, float error that re-parse exactly
    for line in lines[1:]:
        lab, t, n, err = line.split(",")
        assert lab in ("l2", "sup")
        float(t), int(n), float(err)
    doc = json.loads(runner.render_json(summary))
    assert doc["schema_version"] == "1"
    assert doc["scenario"] == "dissipative"
    assert set(doc["verdicts"]) == {"converge"}
    assert "timings" not in doc  # wall-clock never enters the artifact


def test_refit_rates_matches_run(tmp_path):
    cfg = _cfg()
    summary, report = runner.run(cfg)
    refit = runner.refit_rates_from_csv(runner.render_csv(report))
    for lab, rate in summary.fitted_rates.items():
        assert refit[lab]["slope"] == pytest.approx(rate[0], rel=1e-6)


def test_refit_rejects_foreign_csv():
    with pytest.raises(ValueError):
        runner.refit_rates_from_csv("a,b,c\n1,2,3\n")


def test_emit_reports_atomic(tmp_path):
    cfg = _cfg()
    summary, report = runner.run(cfg)
    files = runner.emit_reports(summary, report, tmp_path, "chernoff")
    assert [f.name for f in files] == ["chernoff.csv", "chernoff.json"]
    assert not list(tmp_path.glob("*.tmp"))
    assert files[0].read_text().startswith("seminorm,t,n,error")


# ------------------------------------------------------------ contracts


def test_determinism_byte_identical():
    cfg = _cfg(suite="all")
    s1, r1 = runner.run(cfg)
    s2, r2 = runner.run(cfg)
    assert runner.render_csv(r1) == runner.render_csv(r2)
    assert runner.render_json(s1) == runner.render_json(s2)


def test_env_seed_override(monkeypatch):
    cfg = _cfg(seed=3)
    monkeypatch.setenv(runner.SEED_ENV_VAR, "11")
    s_env, _ = runner.run(cfg)
    monkeypatch.delenv(runner.SEED_ENV_VAR)
    s_plain, _ = runner.run(_cfg(seed=11))
    assert runner.render_json(s_env) == runner.render_json(s_plain)
    with monkeypatch.context() as m:
        m.setenv(runner.SEED_ENV_VAR, "not-an-int")
        with pytest.raises(runner.ConfigError):
            runner.run(cfg)


def test_config_echo_round_trip():
    cfg = _cfg(suite="all")
    summary, _ = runner.run(cfg)
    echoed = runner.ExperimentConfig.model_validate(summary.config_echo)
    assert echoed == cfg


def test_exit_code_contract_randomized():
    rng = np.random.default_rng(42)
    for _ in range(5):
        cfg = _cfg(
            seed=int(rng.integers(0, 1000)),
            dim=int(rng.integers(4, 9)),
            suite=str(rng.choice(["converge", "unique", "diagnostics"])),
        )
        summary, _ = runner.run(cfg)
        expected = 0 if all(s.verdict == "pass" for s in summary.suites) else 2
        assert summary.exit_code == expected


def test_jobs_parallel_same_result():
    cfg = _cfg(suite="all")
    s1, r1 = runner.run(cfg)
    s2, r2 = runner.run(cfg.model_copy(update={"jobs": 4}))
    # jobs only changes scheduling, never content (modulo the echoed config)
    d1, d2 = json.loads(runner.render_json(s1)), json.loads(runner.render_json(s2))
    d1["config"].pop("jobs"), d2["config"].pop("jobs")
    assert d1 == d2
    assert runner.render_csv(r1) == runner.render_csv(r2)
