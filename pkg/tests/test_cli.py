import csv
import json
import math

import numpy as np
import pytest

from sparsepred.cli import (DEFAULTS, EXIT_AUDIT, EXIT_CAPABILITY, EXIT_CONFIG, EXIT_OK, ConfigError,
                            load_config, run, theta_grid)
from sparsepred.priors import SSL, DiracLaplaceSS, Laplace, PredictionContext
from sparsepred.risk import risk_decomposed


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def _risk_at(rows, col, key, theta_col=-2):
    return {tuple(r[:col]): float(r[-1]) for r in rows if float(r[theta_col]) == key}


@pytest.fixture(scope="module")
def fig1_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig1")
    assert run(["fig1", "--out", str(out)]) == EXIT_OK
    return out / "fig1"


@pytest.fixture(scope="module")
def fig2_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("fig2")
    assert run(["fig2", "--out", str(out)]) == EXIT_OK
    return out / "fig2"


def test_theta_grid_default():
    grid = theta_grid(DEFAULTS["fig1"])
    assert len(grid) == 321 and grid[0] == -8.0 and grid[-1] == 8.0 and 0.0 in grid


def test_fig1_row_counts(fig1_out):
    header, rows = _read(fig1_out / "lasso.csv")
    assert header == ["lambda", "theta", "risk"] and len(rows) == 3 * 321
    header, rows = _read(fig1_out / "spike_slab.csv")
    assert header == ["lambda", "eta", "theta", "risk"] and len(rows) == 3 * 321


def test_fig1_lasso_zero_risk_decreasing_in_lambda(fig1_out):
    _, rows = _read(fig1_out / "lasso.csv")
    at_zero = _risk_at(rows, 1, 0.0)
    vals = [at_zero[(lam,)] for lam in ("0.1", "1.0", "2.0")]
    assert vals[0] > vals[1] > vals[2]


def test_fig1_spike_slab_zero_risk_increasing_in_eta(fig1_out):
    _, rows = _read(fig1_out / "spike_slab.csv")
    at_zero = _risk_at(rows, 2, 0.0)
    vals = [at_zero[("0.1", eta)] for eta in ("0.1", "0.5", "0.8")]
    assert vals[0] < vals[1] < vals[2]


def test_fig1_values_come_from_library(fig1_out):
    _, rows = _read(fig1_out / "lasso.csv")
    ctx = PredictionContext(2.0)
    for lam, theta, risk in rows[::97]:
        ref = risk_decomposed(float(theta), Laplace(float(lam)), ctx).value
        assert float(risk) == pytest.approx(ref, rel=1e-13, abs=1e-15)
    _, rows = _read(fig1_out / "spike_slab.csv")
    for lam, eta, theta, risk in rows[::131]:
        ref = risk_decomposed(float(theta), DiracLaplaceSS(float(lam), float(eta)), ctx).value
        assert float(risk) == pytest.approx(ref, rel=1e-13, abs=1e-15)


def test_fig2_panels(fig2_out):
    for name, count in [("vary_eta", 3), ("vary_lambda0", 4), ("vary_lambda1", 3)]:
        header, rows = _read(fig2_out / f"{name}.csv")
        assert header == ["lambda0", "lambda1", "eta", "theta", "risk"]
        assert len(rows) == count * 321


def test_fig2_curves_even(fig2_out):
    for name in ("vary_eta", "vary_lambda0", "vary_lambda1"):
        _, rows = _read(fig2_out / f"{name}.csv")
        risk = np.array([float(r[-1]) for r in rows]).reshape(-1, 321)
        np.testing.assert_allclose(risk, risk[:, ::-1], rtol=0, atol=1e-8)


def test_fig2_zero_risk_decreasing_in_lambda0(fig2_out):
    _, rows = _read(fig2_out / "vary_lambda0.csv")
    at_zero = _risk_at(rows, 3, 0.0)
    vals = [at_zero[(l0, "0.1", "0.1")] for l0 in ("2.0", "5.0", "10.0", "20.0")]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    report = json.loads((fig2_out / "report.json").read_text())
    assert all(a["satisfied"] for a in report["audits"])


def test_fig2_values_come_from_library(fig2_out):
    _, rows = _read(fig2_out / "vary_eta.csv")
    ctx = PredictionContext(2.0)
    for l0, l1, eta, theta, risk in rows[::113]:
        ref = risk_decomposed(float(theta), SSL(float(l0), float(l1), float(eta)), ctx).value
        assert float(risk) == pytest.approx(ref, rel=1e-13, abs=1e-15)


def test_report_contents(fig1_out):
    report = json.loads((fig1_out / "report.json").read_text())
    assert report["seed"] == 20240
    assert report["config"] == DEFAULTS["fig1"]
    assert set(report["versions"]) == {"sparsepred", "numpy", "scipy", "python"}
    assert report["files"] == {"lasso.csv": 963, "spike_slab.csv": 963}


def test_default_audit_all_theorem2_satisfied(tmp_path):
    assert run(["audit", "--out", str(tmp_path)]) == EXIT_OK
    header, rows = _read(tmp_path / "audit" / "bounds.csv")
    assert header[:6] == ["bound_name", "inputs", "bound", "observed", "observed_se", "slack"]
    t2 = [r for r in rows if r[0].startswith("theorem2")]
    assert len(t2) == 2 * 12 and all(r[6] == "true" for r in t2)


def test_odds_moment_suite_reports_audit_failure(tmp_path):
    cfg = _config(tmp_path, {"suites": ["odds_moments"],
                             "odds_moments": {"ns": [50], "s_values": [10], "s_fracs": []}})
    assert run(["audit", "--config", cfg, "--out", str(tmp_path)]) == EXIT_AUDIT
    _, rows = _read(tmp_path / "audit" / "bounds.csv")
    verdict = {r[0]: r[6] for r in rows}
    assert verdict == {"odds_moment": "false", "inverse_odds_moment": "true"}


@pytest.mark.parametrize("command, data, name", [
    ("rate-sweep", {"ns": []}, "sweep.csv"),
    ("hier-sim", {"ns": []}, "hierarchical.csv"),
    ("reg-sim", {"grid": []}, "theorem7.csv"),
    ("audit", {"theorem2": {"lambdas": []}, "suites": ["theorem2"]}, "bounds.csv"),
])
def test_empty_grid_writes_header_only(tmp_path, command, data, name):
    assert run([command, "--config", _config(tmp_path, data), "--out", str(tmp_path)]) == EXIT_OK
    header, rows = _read(tmp_path / command / name)
    assert header and rows == []


def test_bad_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "r": 2.0,\n  "lambdas": [0.1,]\n}', encoding="utf-8")
    assert run(["fig1", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 3" in err and "column" in err


@pytest.mark.parametrize("data, fragment", [
    ({"rr": 2.0}, "rr: unknown field"),
    ({"vary_eta": {"eta": 0.1}}, "vary_eta.eta: unknown field"),
    ({"r": "two"}, "r: expected a number"),
    ({"etas": 0.5}, "etas: expected a list"),
])
def test_config_field_errors(tmp_path, data, fragment):
    command = "fig2" if "vary_eta" in data else "fig1"
    with pytest.raises(ConfigError, match=fragment):
        load_config(command, _config(tmp_path, data))
    assert run([command, "--config", _config(tmp_path, data), "--out", str(tmp_path)]) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ["nope"],
    ["fig1", "--seed", "-1"],
    ["fig1", "--jobs", "0"],
    ["hier-sim", "--draws", "0"],
    ["fig1", "--config", "/nonexistent/cfg.json"],
])
def test_usage_errors_exit_two(tmp_path, argv):
    assert run(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG


def test_invalid_prior_parameter_is_config_error(tmp_path):
    cfg = _config(tmp_path, {"vary_eta": {"lambda0": 0.1, "lambda1": 0.5, "etas": [0.5]}})
    assert run(["fig2", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_enumeration_budget_exit_three(tmp_path):
    cfg = _config(tmp_path, {"grid": [[60, 400, 10]], "draws": 1})
    assert run(["reg-sim", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CAPABILITY


def _small_hier(tmp_path):
    return _config(tmp_path, {"ns": [20, 30], "draws": 4})


def test_rerun_is_byte_identical(tmp_path):
    cfg = _small_hier(tmp_path)
    outs = []
    for k, jobs in enumerate(("1", "1", "2")):
        out = tmp_path / f"run{k}"
        assert run(["hier-sim", "--config", cfg, "--out", str(out), "--jobs", jobs]) == EXIT_OK
        outs.append({p.name: p.read_bytes() for p in (out / "hier-sim").glob("*.csv")})
    assert outs[0] == outs[1] == outs[2]
    assert set(outs[0]) == {"hierarchical.csv", "model_sizes.csv"}


def test_seed_changes_simulation_output(tmp_path):
    cfg = _small_hier(tmp_path)
    blobs = []
    for seed in ("1", "2"):
        out = tmp_path / seed
        assert run(["hier-sim", "--config", cfg, "--out", str(out), "--seed", seed]) == EXIT_OK
        blobs.append((out / "hier-sim" / "model_sizes.csv").read_bytes())
    assert blobs[0] != blobs[1]


def test_draws_flag_overrides_config(tmp_path):
    cfg = _small_hier(tmp_path)
    assert run(["hier-sim", "--config", cfg, "--out", str(tmp_path), "--draws", "3"]) == EXIT_OK
    _, rows = _read(tmp_path / "hier-sim" / "model_sizes.csv")
    assert len(rows) == 2 * 3
    report = json.loads((tmp_path / "hier-sim" / "report.json").read_text())
    assert report["config"]["draws"] == 3


def test_rate_sweep_small(tmp_path):
    cfg = _config(tmp_path, {"kinds": ["theorem4"], "ns": [100, 300], "rs": [2.0]})
    assert run(["rate-sweep", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    header, rows = _read(tmp_path / "rate-sweep" / "sweep.csv")
    assert len(rows) == 2 and all(r[header.index("satisfied")] == "true" for r in rows)
    assert all(math.isfinite(float(r[header.index("ratio")])) for r in rows)


def test_unknown_sweep_kind(tmp_path):
    cfg = _config(tmp_path, {"kinds": ["bogus"]})
    assert run(["rate-sweep", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_reg_sim_small(tmp_path):
    cfg = _config(tmp_path, {"grid": [[30, 6, 1]], "draws": 2})
    assert run(["reg-sim", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    header, rows = _read(tmp_path / "reg-sim" / "theorem7.csv")
    assert len(rows) == 1 and rows[0][header.index("pinsker")] == "true"
