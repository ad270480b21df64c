"""Config handling, CLI surfaces, artifact files, exit codes."""

import json
import os

import numpy as np
import pytest

from gcpinn.cli import main
from gcpinn.config import RunConfig
from gcpinn.errors import ConfigError
from gcpinn.network import load_checkpoint


def test_config_roundtrip_identity():
    cfg = RunConfig.from_dict({"benchmark": "burgers1d", "method": "gc-radial",
                               "alpha": 35.0, "preset": "desk", "seed": 11})
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({"benchmark": "burgers1d", "optimizer": "sgd"})


@pytest.mark.parametrize("bad", [
    {"benchmark": "heat9d"},
    {"method": "xpinn"},
    {"preset": "huge"},
    {"alpha": -1.0},
    {"trials": 0},
    {"seed": -4},
])
def test_config_rejects_bad_values(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_defaults_reproduce_published_protocol():
    cfg = RunConfig.from_dict({"benchmark": "helmholtz1d", "method": "pinn"})
    budget = cfg.resolved_budget()
    assert budget == {"adam_epochs": 6000, "adam_points": 3000,
                      "lbfgs_steps": 500, "lbfgs_points": 15000}
    assert cfg.resolved_alpha() == 20.0
    assert cfg.resolved_beta() == 10.0


def test_tuned_mapping_preset():
    cfg = RunConfig.from_dict({"benchmark": "burgers1d", "method": "gc-radial",
                               "mapping_preset": "tuned"})
    assert cfg.resolved_alpha() == 50.0
    assert cfg.resolved_beta() == 20.0
    cfg2 = RunConfig.from_dict({"benchmark": "burgers1d", "method": "gc-radial",
                                "mapping_preset": "tuned", "alpha": 12.0})
    assert cfg2.resolved_alpha() == 12.0   # explicit values win over presets


TINY = ["--adam-epochs", "5", "--adam-points", "40",
        "--lbfgs-steps", "2", "--lbfgs-points", "60", "--preset", "desk"]


def test_cmd_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["run", "--benchmark", "helmholtz1d", "--method", "gc-torus",
                 "--out", str(out)] + TINY)
    assert code == 0
    blob = json.loads(capsys.readouterr().out)
    assert np.isfinite(blob["rel_l2"])
    assert sorted(os.listdir(out)) == ["checkpoint.npz", "convergence.csv",
                                       "metrics.json"]
    header = open(out / "convergence.csv").readline()
    assert header.startswith("# config:")
    assert '"seed": 3407' in header
    metrics = json.loads(open(out / "metrics.json").read())
    assert "rel_l2" in metrics and "config" in metrics
    params, meta = load_checkpoint(out / "checkpoint.npz")
    assert params.shape == (19761,)
    assert meta["config"]["method"] == "gc-torus"


def test_cmd_run_untrained_is_finite(capsys):
    code = main(["run", "--benchmark", "burgers1d", "--method", "pinn",
                 "--adam-epochs", "0", "--lbfgs-steps", "0"])
    assert code == 0
    blob = json.loads(capsys.readouterr().out)
    assert np.isfinite(blob["rel_l2"]) and np.isfinite(blob["mse"])


def test_cmd_run_invalid_config_exit_2(capsys):
    assert main(["run", "--benchmark", "nope", "--method", "pinn"]) == 2


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"benchmark": "helmholtz1d", "method": "pinn",
                                    "preset": "desk", "adam_epochs": 5,
                                    "adam_points": 40, "lbfgs_steps": 0}))
    code = main(["run", "--config", str(cfg_path), "--method", "gc-torus"])
    assert code == 0
    blob = json.loads(capsys.readouterr().out)
    assert blob["method"] == "gc-torus"   # flag beats file


def test_cmd_sweep_rows_and_csv(tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep", "--benchmark", "burgers1d", "--parameter", "beta",
                 "--values", "5,10", "--out", str(out)] + TINY)
    assert code == 0
    lines = open(out / "sweep.csv").read().strip().splitlines()
    assert lines[1] == "beta,mse,rel_l2,rel_h1"
    assert len(lines) == 4


def test_sweep_single_value_matches_run(capsys):
    code = main(["sweep", "--benchmark", "burgers1d", "--parameter", "alpha",
                 "--values", "20"] + TINY)
    assert code == 0
    sweep_out = capsys.readouterr().out.strip().splitlines()
    row = sweep_out[-1].split(",")
    code = main(["run", "--benchmark", "burgers1d", "--method", "gc-radial",
                 "--alpha", "20"] + TINY)
    assert code == 0
    blob = json.loads(capsys.readouterr().out)
    assert float(row[2]) == blob["rel_l2"]


def test_cmd_params(capsys):
    assert main(["params"]) == 0
    reports = json.loads(capsys.readouterr().out)
    by_method = {r["method"]: r for r in reports}
    assert by_method["pinn"]["count"] == 19681
    assert by_method["gc-local"]["count"] == 19684
    assert "note" in by_method["gc-torus"]


def test_cmd_check_fast_suites(capsys):
    code = main(["check", "--suite", "mapping,probe", "--json"])
    assert code == 0
    results = json.loads(capsys.readouterr().out)
    assert all(r["passed"] for r in results)
    names = {r["name"] for r in results}
    assert "saturating-gradient-collapse" in names
    assert "amplification-ratio" in names


def test_cmd_ntk_artifacts(tmp_path, capsys):
    out = tmp_path / "ntk"
    code = main(["ntk", "--benchmark", "convdiff1d", "--method", "pinn",
                 "--out", str(out)] + TINY)
    assert code == 0
    files = sorted(os.listdir(out))
    assert "ntk_effective_rank.csv" in files
    spectra = [f for f in files if f.startswith("ntk_spectrum_")]
    assert "ntk_spectrum_000000.csv" in spectra   # untrained snapshot
    blob = json.loads(capsys.readouterr().out)
    traj = blob["effective_rank_trajectory"]
    assert traj[0]["iteration"] == 0
    assert all(t["effective_rank"] >= 1.0 for t in traj)


def test_determinism_byte_identical_csv(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["run", "--benchmark", "helmholtz1d", "--method", "gc-radial",
                     "--out", str(out), "--adam-epochs", "25", "--adam-points", "50",
                     "--lbfgs-steps", "4", "--lbfgs-points", "60"])
        assert code == 0
        outs.append(open(out / "convergence.csv", "rb").read())
    assert outs[0] == outs[1]


def test_multi_trial_aggregation():
    from gcpinn.runner import run_experiment
    cfg = RunConfig.from_dict({"benchmark": "helmholtz1d", "method": "pinn",
                               "preset": "desk", "trials": 3, "seed": 3407,
                               "adam_epochs": 3, "adam_points": 30,
                               "lbfgs_steps": 0})
    res = run_experiment(cfg)
    assert [t["seed"] for t in res["trials"]] == [3407, 3408, 3409]
    assert res["mean"]["rel_l2"] == pytest.approx(
        np.mean([t["rel_l2"] for t in res["trials"]]))


def test_ns2d_smoke_run(capsys):
    code = main(["run", "--benchmark", "ns2d", "--method", "gc-torus",
                 "--adam-epochs", "2", "--adam-points", "40",
                 "--lbfgs-steps", "1", "--lbfgs-points", "50"])
    assert code == 0
    blob = json.loads(capsys.readouterr().out)
    assert np.isfinite(blob["rel_l2"]) and np.isfinite(blob["rel_h1"])
