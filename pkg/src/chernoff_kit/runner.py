"""Experiment runner: config parsing, suite execution, rate fitting, reports.

The config is a single strict JSON document; runs are deterministic given
the seed (one global seed feeds a named per-suite stream).  Reports are a
CSV of convergence cells and a JSON summary with schema version "1";
identical config + seed yields byte-identical outputs.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .lcs_core import StateVector, LatticeSpec
from . import operators as ops
from . import chernoff as ch
from . import trotter_kato as tk
from . import scenarios as sc

SCHEMA_VERSION = "1"
SEED_ENV_VAR = "CHERNOFF_KIT_SEED"

SUITES = ("converge", "unique", "tk", "diagnostics", "exa-gap")

# fixed stream indices so toggling suites never shifts other suites' draws
_SUITE_STREAM = {name: i + 1 for i, name in enumerate(SUITES)}


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 3)."""


class Tolerances(BaseModel):
    model_config = ConfigDict(extra="forbid")
    unique: float = 1e-2
    rate_low: float = 0.8
    rate_high: float = 1.2
    error_floor: float = 1e-10
    stability_slack: float = 1e-8

    @model_validator(mode="after")
    def _positive(self):
        for name, value in self.model_dump().items():
            if value <= 0:
                raise ValueError(f"tolerance {name} must be > 0")
        return self


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Literal["heat", "schrodinger", "dissipative", "mult-example"]
    suite: Literal["converge", "unique", "tk", "diagnostics", "exa-gap", "all"] = "all"
    seed: int = 0
    t0: Optional[float] = None
    n_grid: Optional[list[int]] = None
    t_grid: Optional[list[float]] = None
    s_grid: Optional[list[float]] = None
    n_big: int = 4096
    tolerances: Tolerances = Field(default_factory=Tolerances)
    grid_size: int = 128
    dim: int = 10
    potential: Literal["zero", "one_plus_cos", "constant", "barrier"] = "one_plus_cos"
    radii: list[float] = Field(default_factory=lambda: [0.5, 1.0])
    out_prefix: str = "chernoff"
    jobs: int = 1

    @field_validator("n_grid", "t_grid", "s_grid")
    @classmethod
    def _nonempty(cls, v, info):
        if v is not None and len(v) == 0:
            raise ValueError(f"{info.field_name} must be nonempty")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.t0 is not None and self.t0 <= 0:
            raise ValueError("t0 must be > 0")
        if self.t_grid is not None:
            t0 = self.t0 if self.t0 is not None else 1.0
            if any(t < 0 or t > t0 for t in self.t_grid):
                raise ValueError("t_grid contains a point outside [0, t0]")
        if self.n_grid is not None and any(n < 1 for n in self.n_grid):
            raise ValueError("n_grid entries must be >= 1")
        if self.suite == "exa-gap" and self.scenario != "mult-example":
            raise ValueError("suite exa-gap applies only to scenario mult-example")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        return self


class SuiteResult(BaseModel):
    name: str
    verdict: Literal["pass", "fail", "flagged"]
    details: dict = Field(default_factory=dict)


class RunSummary(BaseModel):
    schema_version: str = SCHEMA_VERSION
    scenario: str
    suites: list[SuiteResult]
    fitted_rates: dict = Field(default_factory=dict)
    stability_estimate: Optional[tuple] = None
    config_echo: dict
    timings: dict = Field(default_factory=dict)
    artifact_files: list[str] = Field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if all(s.verdict == "pass" for s in self.suites) else 2


def parse_config(text: str) -> ExperimentConfig:
    """Parse a strict-JSON config; raises ConfigError with key diagnostics."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        return ExperimentConfig.model_validate(data)
    except Exception as exc:
        raise ConfigError(f"config invalid: {exc}") from exc


def fit_rate(errors: Sequence[float], ns: Sequence[int]) -> tuple:
    """Least-squares slope of log(error) vs log(1/n) over the last 4 points.

    Returns (slope, residual); raises ValueError on fewer than 4 points and
    returns a flagged (None, inf) result on nonpositive errors.
    """
    if len(errors) < 4 or len(errors) != len(ns):
        raise ValueError("need at least 4 matching (error, n) points")
    if any(e <= 0 for e in errors[-4:]):
        return None, float("inf")
    slope, resid = ch._fit_loglog(errors, ns, points=4)
    return slope, resid


def _tail_strictly_decreasing(values, k=4, floor=1e-13):
    vals = list(values)[-k:]
    if all(v <= floor for v in vals):
        return True
    return all(b < a for a, b in zip(vals, vals[1:]))


def _round(x, nd=12):
    if isinstance(x, float):
        return float(f"{x:.{nd}e}")
    return x


def _suite_converge(scn: sc.Scenario, cfg: ExperimentConfig, grids) -> tuple:
    t0, n_grid, t_grid = grids
    F = scn.chernoff_fns[scn.primary_fn]
    report = ch.chernoff_converge(
        F, scn.reference, scn.initial, t0, n_grid, t_grid, scn.family
    )
    tol = cfg.tolerances
    details = {"n_grid": list(n_grid), "seminorms": {}}
    ok = True
    for lab in report.seminorm_labels:
        uniform = [float(v) for v in report.uniform_errors[lab]]
        rate = report.fitted_rate[lab]
        at_floor = max(uniform) <= tol.error_floor
        decreasing = _tail_strictly_decreasing(uniform, floor=tol.error_floor)
        details["seminorms"][lab] = {
            "uniform_errors": [_round(v) for v in uniform],
            "rate": None if rate is None else [_round(rate[0]), _round(rate[1])],
            "at_floor": at_floor,
        }
        if not (at_floor or decreasing):
            ok = False
    verdict = "pass" if ok else "fail"
    return SuiteResult(name="converge", verdict=verdict, details=details), report


def _suite_unique(scn: sc.Scenario, cfg: ExperimentConfig, grids) -> SuiteResult:
    t0, _, t_grid = grids
    fns = list(scn.chernoff_fns.values())
    worst = ch.uniqueness_cross_check(
        fns, scn.initial, t0, cfg.n_big, scn.family, t_grid
    )
    ok = worst <= cfg.tolerances.unique
    return SuiteResult(
        name="unique",
        verdict="pass" if ok else "fail",
        details={
            "max_pairwise_deviation": _round(worst),
            "n_big": cfg.n_big,
            "tolerance": cfg.tolerances.unique,
        },
    )


def _tk_space_cap(scn: sc.Scenario, max_dim: int = 256):
    """Trotter-Kato sweeps need dense expm; restrict large diagonal
    scenarios to a leading sub-block (an honest diagonal restriction)."""
    Z = scn.generator
    if scn.dim <= max_dim:
        return Z, scn.initial, scn.dim
    if Z.kind == "diagonal":
        sub = Z.diag[:max_dim]
        return ops.diagonal(sub), StateVector(scn.initial.coords[:max_dim]), max_dim
    raise ConfigError(f"tk suite unsupported for dim {scn.dim} non-diagonal space")


def _suite_tk(scn: sc.Scenario, cfg: ExperimentConfig, grids, rng) -> SuiteResult:
    t0, _, t_grid = grids
    Z, h, dim = _tk_space_cap(scn)
    if Z.kind == "diagonal":
        W = ops.diagonal(0.5 * np.conj(Z.diag) / max(1.0, np.max(np.abs(Z.diag))))
    else:
        Wm = rng.standard_normal((dim, dim))
        W = ops.dense(0.5 * (Wm + Wm.T) / np.linalg.norm(Wm, 2))
    s_grid = tuple(cfg.s_grid) + (0.0,) if cfg.s_grid else tk.default_s_grid()
    fam = tk.linear_perturbation_family(Z, W, s_grid)
    equi = tk.family_equicontinuity(fam, l0=t0, m_cap=50.0, a_cap=50.0)
    basis_idx = list(range(min(dim, 8)))
    basis = []
    for i in basis_idx:
        e = np.zeros(dim, dtype=complex)
        e[i] = 1.0
        basis.append(StateVector(e))
    witnesses = [tk.CoreWitness.constant(b) for b in basis]
    # density basis restricted to the spanned coordinates keeps the check
    # meaningful at any dim
    core = tk.core_condition_check(fam, witnesses, basis)
    sweep = tk.semigroup_convergence_sweep(
        fam, h, t0, [t for t in t_grid if t <= t0], scn.family
        if dim == scn.dim
        else _sub_family(scn, dim),
    )
    S0 = ops.semigroup(fam.at(0.0))
    defects = []
    # the smooth initial state keeps the trapezoid rule in its asymptotic
    # regime for stiff and oscillatory generators
    for qn in (64, 128, 256, 512):
        _, d = tk.core_elements_from_integrals(S0, h, 0.0, min(1.0, t0), qn)
        defects.append(d)
    orders = [
        float(np.log2(a / b)) for a, b in zip(defects, defects[1:]) if b > 0 and a > 0
    ]
    order_ok = bool(orders) and abs(np.mean(orders) - 2.0) <= 0.5
    ok = equi["pass"] and core["pass"] and sweep["pass"] and order_ok
    return SuiteResult(
        name="tk",
        verdict="pass" if ok else "fail",
        details={
            "equicontinuity": {k: _round(v) for k, v in equi.items()},
            "core_condition": {k: _round(v) for k, v in core.items()},
            "sweep_pass": sweep["pass"],
            "sup_errors": {
                lab: [_round(v) for v in vals]
                for lab, vals in sweep["sup_errors"].items()
            },
            "quadrature_defects": [_round(d) for d in defects],
            "quadrature_orders": [_round(o) for o in orders],
        },
    )


def _sub_family(scn: sc.Scenario, dim: int):
    from .lcs_core import l2_sup_family

    return l2_sup_family()


def _suite_diagnostics(scn: sc.Scenario, cfg: ExperimentConfig, grids) -> SuiteResult:
    t0, _, _ = grids
    eps_grid = [3e-2, 1e-2, 3e-3, 1e-3]
    details = {}
    ok = True
    for label, F in scn.chernoff_fns.items():
        small = ch.small_step_consistency(F, scn.initial, eps_grid, scn.family)
        diff = ch.step_difference_consistency(F, scn.initial, t0, eps_grid, scn.family)
        fn_ok = True
        for curves in (small, diff):
            for lab, vals in curves.items():
                tail = vals[-3:]
                if not all(
                    b <= a * (1 + 1e-9) + 1e-13 for a, b in zip(tail, tail[1:])
                ):
                    fn_ok = False
        details[label] = {
            "eps_grid": eps_grid,
            "small_step": {k: [_round(v) for v in vs] for k, vs in small.items()},
            "step_difference": {k: [_round(v) for v in vs] for k, vs in diff.items()},
            "pass": fn_ok,
        }
        ok = ok and fn_ok
    return SuiteResult(
        name="diagnostics", verdict="pass" if ok else "fail", details=details
    )


def _suite_exa_gap(scn: sc.Scenario, cfg: ExperimentConfig, rng_seed: int) -> SuiteResult:
    r = max(scn.radii)
    candidates = sc.random_polynomial_candidates(
        scn.grid_points, count=100, seed=rng_seed
    )
    gap = sc.resolvent_range_gap(scn, 0.0, scn.initial, candidates, r=r)
    gap_ok = gap["eps_grid"] < 0.02 and gap["min_defect"] >= gap["f_at_node"] - gap[
        "eps_grid"
    ] - 1e-10
    # local equicontinuity bound ||T(s)f||_r <= e^{s r} ||f||_r, with
    # equality at f == 1
    bound_ok = True
    equality_gap = 0.0
    ridx = scn.family.index_of(f"sup_r={r:g}")
    p = scn.family.members[ridx]
    f1 = np.ones_like(scn.grid_points)
    for s in (0.1, 0.25, 0.5, 1.0):
        Ts_f1 = scn.reference.apply_array(s, f1)
        lhs = p(Ts_f1)
        rhs = np.exp(s * r) * p(f1)
        equality_gap = max(equality_gap, abs(lhs - rhs))
        if lhs > rhs * (1 + 1e-10):
            bound_ok = False
        v = rng_vector(scn.dim, rng_seed + 1)
        if p(scn.reference.apply_array(s, v)) > np.exp(s * r) * p(v) * (1 + 1e-10):
            bound_ok = False
    ok = gap_ok and bound_ok and equality_gap <= 1e-10
    return SuiteResult(
        name="exa-gap",
        verdict="pass" if ok else "fail",
        details={
            "min_defect": _round(gap["min_defect"]),
            "eps_grid": _round(gap["eps_grid"]),
            "f_at_node": _round(gap["f_at_node"]),
            "semigroup_bound_ok": bound_ok,
            "equality_gap_at_one": _round(equality_gap),
        },
    )


def rng_vector(dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def run(config: ExperimentConfig) -> tuple:
    """Execute the selected suites deterministically for the given seed.

    Returns (RunSummary, ConvergenceReport-or-None).
    """
    seed = config.seed
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from None
    config = config.model_copy(update={"seed": seed})

    scn = sc.build_scenario(
        config.scenario,
        grid_size=config.grid_size,
        dim=config.dim,
        seed=seed,
        potential=config.potential,
        radii=tuple(config.radii),
    )
    scn.validate()
    t0 = config.t0 if config.t0 is not None else scn.t0
    n_grid = tuple(config.n_grid) if config.n_grid else scn.default_n_grid
    t_grid = (
        tuple(config.t_grid)
        if config.t_grid
        else tuple(float(t) for t in np.linspace(0.0, t0, 9))
    )
    grids = (t0, n_grid, t_grid)

    requested = list(SUITES) if config.suite == "all" else [config.suite]
    if scn.name != "mult-example" and "exa-gap" in requested:
        requested.remove("exa-gap")

    report_holder = {}

    def exec_suite(name: str) -> SuiteResult:
        stream = np.random.default_rng([seed, _SUITE_STREAM[name]])
        t_start = time.perf_counter()
        if name == "converge":
            result, report = _suite_converge(scn, config, grids)
            report_holder["converge"] = report
        elif name == "unique":
            result = _suite_unique(scn, config, grids)
        elif name == "tk":
            result = _suite_tk(scn, config, grids, stream)
        elif name == "diagnostics":
            result = _suite_diagnostics(scn, config, grids)
        elif name == "exa-gap":
            result = _suite_exa_gap(scn, config, seed + 7000 + _SUITE_STREAM[name])
        else:  # pragma: no cover
            raise ConfigError(f"unknown suite {name}")
        result.details["wall_seconds"] = time.perf_counter() - t_start
        return result

    results: list[SuiteResult] = []
    if config.jobs > 1 and len(requested) > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(exec_suite, requested))
    else:
        results = [exec_suite(name) for name in requested]

    timings = {r.name: r.details.pop("wall_seconds") for r in results}
    rates = {}
    stability = None
    if "converge" in report_holder:
        rep = report_holder["converge"]
        for lab, rate in rep.fitted_rate.items():
            rates[lab] = None if rate is None else [_round(rate[0]), _round(rate[1])]
    if config.scenario == "dissipative":
        F = scn.chernoff_fns["implicit_euler"]
        lattice = LatticeSpec.geometric(t0, steps_per_decade=4, decades=1)
        stability = ch.stability_estimate(F, lattice)
        stability = (_round(stability[0], 14), _round(stability[1], 14))

    return RunSummary(
        scenario=scn.name,
        suites=results,
        fitted_rates=rates,
        stability_estimate=stability,
        config_echo=json.loads(config.model_dump_json()),
        timings=timings,
        artifact_files=[],
    ), report_holder.get("converge")


def render_csv(report) -> str:
    """CSV text for a convergence report (header only when absent)."""
    lines = ["seminorm,t,n,error"]
    if report is not None:
        for lab, t, n, err in report.csv_rows():
            lines.append(f"{lab},{t!r},{n},{err!r}")
    return "\n".join(lines) + "\n"


def render_json(summary: RunSummary) -> str:
    """Deterministic JSON summary; timings are excluded so reruns with the
    same config and seed are byte-identical."""
    doc = {
        "schema_version": summary.schema_version,
        "scenario": summary.scenario,
        "verdicts": {s.name: s.verdict for s in summary.suites},
        "suites": {s.name: s.details for s in summary.suites},
        "fitted_rates": summary.fitted_rates,
        "stability_estimate": summary.stability_estimate,
        "config": summary.config_echo,
    }
    return json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n"


def write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def emit_reports(summary: RunSummary, report, out_dir, prefix: str) -> list:
    """Write CSV + JSON artifacts atomically; returns the file paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{prefix}.csv"
    json_path = out / f"{prefix}.json"
    try:
        write_atomic(csv_path, render_csv(report))
        write_atomic(json_path, render_json(summary))
    except OSError as exc:
        raise OSError(f"failed writing report to {out}: {exc}") from exc
    summary.artifact_files = [str(csv_path), str(json_path)]
    return [csv_path, json_path]


def refit_rates_from_csv(csv_text: str) -> dict:
    """Group a report CSV by seminorm and refit rates on uniform errors."""
    rows = csv_text.strip().splitlines()
    if not rows or rows[0] != "seminorm,t,n,error":
        raise ValueError("not a chernoff-kit report CSV")
    cells: dict = {}
    for line in rows[1:]:
        lab, t, n, err = line.split(",")
        cells.setdefault(lab, {}).setdefault(int(n), []).append(float(err))
    out = {}
    for lab, by_n in cells.items():
        ns = sorted(by_n)
        uniform = [max(by_n[n]) for n in ns]
        if len(ns) >= 4 and all(u > 0 for u in uniform[-4:]):
            slope, resid = fit_rate(uniform, ns)
            out[lab] = {"slope": slope, "residual": resid}
        else:
            out[lab] = {"slope": None, "residual": None}
    return out
