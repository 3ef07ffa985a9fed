"""Experiment runner: validation, artifacts, determinism, CLI."""

import json

import numpy as np
import pytest

from chaosbench._version import __version__
from chaosbench.cli import main
from chaosbench.harness import (ConfigError, ExperimentConfig,
                                available_scenarios, default_params,
                                _pool_size, run, validate)
from chaosbench.particles import Ensemble, save_ensemble


def _config(scenario, seed=11, **kw):
    params = kw.pop("params", {})
    return ExperimentConfig(scenario=scenario, seed=seed, params=params,
                            **kw)


_SMALL_LLN = dict(sizes=[64, 128, 256, 512], reps=50)


def test_scenario_catalog():
    names = available_scenarios()
    assert "brownian_contraction" in names and "lln_rate" in names
    assert default_params("lln_rate")["tail_index"] == 1.7
    # returned catalogs are copies, not aliases
    default_params("lln_rate")["sizes"].append(1)
    assert default_params("lln_rate")["sizes"][-1] == 16384
    with pytest.raises(KeyError):
        default_params("nope")


def test_from_dict_rejects_unknown_fields():
    with pytest.raises(ConfigError, match="unknown config field 'sed'"):
        ExperimentConfig.from_dict({"scenario": "lln_rate", "sed": 1})


def test_validate_basic_diagnostics():
    assert validate(_config("no_such")) != []
    missing = validate(ExperimentConfig(scenario="lln_rate"))
    assert any("seed" in d for d in missing)
    bad = ExperimentConfig(scenario="lln_rate", seed=-1, workers=0,
                           schema=2, params={"bogus": 1})
    diags = validate(bad)
    assert len(diags) >= 4
    joined = "\n".join(diags)
    for needle in ("seed", "workers", "schema", "bogus"):
        assert needle in joined
    with pytest.raises(ConfigError) as err:
        run(bad)
    assert err.value.diagnostics == diags


def test_validate_scenario_rules():
    assert any("tail_index" in d for d in validate(
        _config("lln_rate", params={"tail_index": 0.9})))
    assert any("four sizes" in d for d in validate(
        _config("lln_rate", params={"sizes": [64, 128]})))
    # inadmissible interaction strength is caught with the actual margin
    diags = validate(_config("brownian_contraction",
                             params={"strength": 0.6}))
    assert any("margin" in d for d in diags)
    assert validate(_config("brownian_contraction",
                            params={"merge_radius": 0.2})) != []
    assert any("alpha" in d for d in validate(
        _config("stable_contraction", params={"alpha": 2.0})))
    assert any("trunc" in d for d in validate(
        _config("stable_contraction", params={"trunc": 0.05})))
    assert any("tail_index" in d for d in validate(
        _config("tv_n_scaling", params={"tail_index": 1.5})))
    assert any("mode" in d for d in validate(
        _config("coupling_bias_study", params={"modes": ["laplace"]})))
    assert any("model" in d for d in validate(
        _config("constants_report", params={"drift": ["linear", {}]})))


def test_validate_accepts_all_default_scenarios():
    for name in available_scenarios():
        assert validate(_config(name)) == []


def test_run_writes_artifacts(tmp_path):
    config = _config("lln_rate", seed=5, params=dict(_SMALL_LLN),
                     outdir=str(tmp_path))
    report = run(config)
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == ("scenario,quantity,parameter,estimate,mc_stderr,"
                       "theory_bound,passed")
    assert len(lines) == len(report.rows) + 1
    for row in report.rows:
        assert (row.passed is None) == (row.theory_bound is None)
    slope_cell = lines[-1].split(",")
    assert slope_cell[1] == "fitted_slope"
    assert float(slope_cell[3]) == report.rows[-1].estimate  # %.17g exact
    assert slope_cell[6] in ("true", "false")

    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["config_sha256"] == config.digest()
    assert payload["version"] == __version__
    assert payload["wall_time_s"] > 0
    assert payload["artifacts"][0] == "report.csv"
    assert payload["summary"]["fitted_slope"] == pytest.approx(
        report.summary["fitted_slope"])
    assert report.figure_paths
    svg = open(report.figure_paths[0], "rb").read(200)
    assert b"<svg" in svg or b"<?xml" in svg


def test_reports_identical_across_outdirs_and_workers(tmp_path):
    outputs = {}
    for tag, workers in (("a", 1), ("b", 1), ("c", 4)):
        outdir = tmp_path / tag
        config = _config("lln_rate", seed=9, params=dict(_SMALL_LLN),
                         workers=workers, outdir=str(outdir))
        run(config)
        outputs[tag] = {
            "csv": (outdir / "report.csv").read_bytes(),
            "svg": (outdir / "lln_rate_rate.svg").read_bytes(),
            "json": json.loads((outdir / "report.json").read_text()),
        }
    assert outputs["a"]["csv"] == outputs["b"]["csv"] == outputs["c"]["csv"]
    assert outputs["a"]["svg"] == outputs["b"]["svg"] == outputs["c"]["svg"]
    trimmed = []
    for tag in ("a", "b", "c"):
        payload = outputs[tag]["json"]
        payload.pop("wall_time_s")
        payload["config"].pop("outdir")
        payload["config"].pop("workers")
        payload.pop("config_sha256")  # covers outdir, so differs too
        trimmed.append(payload)
    assert trimmed[0] == trimmed[1] == trimmed[2]


def test_result_key_ignores_outdir_and_workers():
    base = _config("lln_rate", seed=1)
    moved = _config("lln_rate", seed=1, outdir="elsewhere", workers=6)
    other = _config("lln_rate", seed=2)
    assert base.result_key() == moved.result_key()
    assert base.digest() != moved.digest()
    assert base.result_key() != other.result_key()


def test_constants_report_scenario_values(tmp_path):
    report = run(_config("constants_report", outdir=str(tmp_path)))
    got = {r.quantity: r for r in report.rows}
    assert got["slope_at_zero"].estimate == pytest.approx(2.0, rel=1e-9)
    assert got["contraction_rate"].estimate == pytest.approx(0.8, rel=1e-9)
    assert got["contraction_rate"].passed is True
    assert got["admissibility_margin"].theory_bound == \
        pytest.approx(0.5, rel=1e-9)
    assert got["prefactor"].estimate == pytest.approx(1.0, rel=1e-9)


def test_ou_scenario_small_run_passes(tmp_path):
    params = dict(n=20000, dt=2e-3, bins=32)
    report = run(_config("ou_exact", seed=3, params=params,
                         outdir=str(tmp_path / "full")))
    checked = [r for r in report.rows if r.passed is not None]
    assert len(checked) == 3
    assert all(r.passed for r in checked)
    tv_full = next(r for r in report.rows if r.quantity == "tv_vs_exact")
    half = run(_config("ou_exact", seed=3, params=params, half_tv=True,
                       outdir=str(tmp_path / "half")))
    tv_half = next(r for r in half.rows if r.quantity == "tv_vs_exact")
    assert tv_half.estimate == 0.5 * tv_full.estimate
    assert tv_half.theory_bound == 0.025


def test_pool_size_honors_environment(monkeypatch):
    monkeypatch.delenv("CHAOSBENCH_THREADS", raising=False)
    assert _pool_size(8, 100) == 8
    assert _pool_size(8, 3) == 3
    assert _pool_size(0, 5) == 1
    monkeypatch.setenv("CHAOSBENCH_THREADS", "2")
    assert _pool_size(8, 100) == 2
    monkeypatch.setenv("CHAOSBENCH_THREADS", "0")
    assert _pool_size(8, 100) == 1


def test_cli_models_and_constants(capsys):
    assert main(["models"]) == 0
    out = capsys.readouterr().out
    assert "curie-weiss" in out and "lln_rate" in out
    assert main(["constants", "--interaction", "curie-weiss:strength=0.1",
                 "--json"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["brownian_rate"] == pytest.approx(0.8, rel=1e-9)
    assert record["slope_at_zero"] == pytest.approx(2.0, rel=1e-9)
    assert main(["constants"]) == 0
    assert "slope_at_zero" in capsys.readouterr().out


def test_cli_dist(tmp_path, capsys):
    a = tmp_path / "a.bin"
    b = tmp_path / "b.bin"
    save_ensemble(a, Ensemble(np.array([[0.0], [1.0]])))
    save_ensemble(b, Ensemble(np.array([[0.0], [3.0]])))
    assert main(["dist", str(a), str(b)]) == 0
    assert float(capsys.readouterr().out) == 1.0
    assert main(["dist", "--metric", "tv", "--bins", "2", str(a),
                 str(b)]) == 0
    full = float(capsys.readouterr().out)
    assert main(["dist", "--metric", "tv", "--bins", "2", "--half-tv",
                 str(a), str(b)]) == 0
    assert float(capsys.readouterr().out) == 0.5 * full
    wide = tmp_path / "c.bin"
    save_ensemble(wide, Ensemble(np.zeros((2, 2))))
    assert main(["dist", str(a), str(wide)]) == 2


def test_cli_run_roundtrip(tmp_path, capsys):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "scenario": "lln_rate", "seed": 21, "params": dict(_SMALL_LLN)}))
    code = main(["run", str(path), "--outdir", str(tmp_path / "out")])
    out = capsys.readouterr().out
    assert code == 0
    assert (tmp_path / "out" / "report.csv").exists()
    assert out.count("wrote") == 3
    assert "pass  fitted_slope" in out


def test_cli_run_reports_failures_and_bad_configs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"scenario": "lln_rate"}))
    assert main(["run", str(bad)]) == 2
    assert "seed" in capsys.readouterr().err
    # a nearly tail-index-one law honestly misses the slope gate
    slow = tmp_path / "slow.json"
    slow.write_text(json.dumps({
        "scenario": "lln_rate", "seed": 4,
        "params": {"tail_index": 1.05, "sizes": [64, 128, 256, 512],
                   "reps": 20}}))
    code = main(["run", str(slow), "--outdir", str(tmp_path / "slow_out")])
    assert code == 1
    assert "FAIL" in capsys.readouterr().out
