import json

import numpy as np
import pytest

from pdescl import bvp
from pdescl.errors import ConfigError, PdesclError
from pdescl.harness import PRESETS, complexity_report, evaluate, parse_config, preset, run_experiment
from pdescl.harness.cli import main
from pdescl.harness.config import load_config
from pdescl.jets import MLP, save_checkpoint
from pdescl.oracles import default_grid, exact_field, oracle_field, relative_l2


def tiny_config(**train):
    t = {"epochs": 3, "seed": 1}
    t.update(train)
    return {
        "schema_version": 1,
        "problem": {"id": "convection", "coefficients": {"beta": 5.0}, "boundary": {"n_initial": 16, "n_face": 8}},
        "model": {"hidden": [8, 8]},
        "constraints": [
            {"kind": "bc", "role": "objective"},
            {"kind": "pde", "tolerance": 1e-3, "policy": "mh",
             "proposal": {"variances": [0.25, 0.01], "n_steps": 40, "n_keep": 20, "chains": 4}},
        ],
        "train": t,
        "evaluation": {"grid": {"counts": [32, 10]}, "fresh_points": 200},
        "output": {"directory": "tiny"},
    }


# -- config parsing ---------------------------------------------------------------------------


def test_schema_round_trip():
    for raw in (tiny_config(), preset("convection_param_scl_desk"), preset("eikonal_pinn")):
        cfg = parse_config(raw)
        again = parse_config(json.loads(cfg.to_json()))
        assert again.to_dict() == cfg.to_dict()
        assert again.hash == cfg.hash


def test_unknown_keys_and_bad_values_listed_together():
    raw = tiny_config()
    raw["train"]["learning_rate"] = 1.0
    raw["constraints"][1]["tolerance"] = -1.0
    with pytest.raises(ConfigError) as info:
        parse_config(raw)
    text = str(info.value)
    assert "learning_rate" in text
    assert "constraints[1].tolerance" in text


def test_semantic_checks():
    raw = tiny_config()
    raw["problem"]["coefficients"] = {"beta": 5.0, "nu": 1.0}
    with pytest.raises(ConfigError) as info:
        parse_config(raw)
    assert "problem.coefficients.nu" in str(info.value)
    raw = tiny_config()
    raw["constraints"][1]["proposal"]["variances"] = [0.25]
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_hash_ignores_output_directory():
    a = parse_config(tiny_config())
    raw = tiny_config()
    raw["output"]["directory"] = "elsewhere"
    assert parse_config(raw).hash == a.hash
    assert parse_config(tiny_config(seed=2)).hash != a.hash


def test_presets_cover_both_scales_and_parse():
    names = set(PRESETS)
    assert "convection_b30_scl" in names
    for name in names:
        if not name.endswith("_desk"):
            assert f"{name}_desk" in names
        parse_config(preset(name))
    with pytest.raises(ConfigError):
        preset("nope")


# -- runs and artifacts --------------------------------------------------------------------------


def test_run_writes_stamped_artifacts(tmp_path):
    out = run_experiment(tiny_config(), tmp_path)
    assert out.status == 0
    cfg = parse_config(tiny_config())
    stamp = f"config_hash={cfg.hash} seed=1"
    metrics = json.loads((out.directory / "metrics.json").read_text())
    assert metrics["config_hash"] == cfg.hash and metrics["seed"] == 1
    for key in ("relative_l2", "operator_evals", "epochs", "final_losses", "final_lambdas", "fresh_pde_loss"):
        assert key in metrics
    assert metrics["operator_evals"] == 3 * 40
    for path in out.directory.iterdir():
        if path.suffix == ".csv":
            assert path.read_text().splitlines()[0] == "# " + stamp, path.name
        elif path.suffix == ".json" and path.name != "checkpoint.json":
            doc = json.loads(path.read_text())
            assert doc["config_hash"] == cfg.hash and doc["seed"] == 1, path.name
    ck = json.loads((out.directory / "checkpoint.json").read_text())
    assert ck["meta"]["config_hash"] == cfg.hash and ck["meta"]["seed"] == 1
    traj = (out.directory / "lambda_trajectory.csv").read_text().splitlines()
    assert traj[1] == "epoch,constraint,lambda,loss"
    assert len(traj) == 2 + 3 * 2


def test_rerun_is_byte_identical(tmp_path):
    a = run_experiment(tiny_config(), tmp_path / "a")
    b = run_experiment(tiny_config(), tmp_path / "b")
    for name in ("metrics.json", "lambda_trajectory.csv", "checkpoint.json", "sample_histograms.csv"):
        assert (a.directory / name).read_bytes() == (b.directory / name).read_bytes()


def test_shipped_preset_produces_relative_error(tmp_path):
    cfg = parse_config(preset("convection_b30_scl")).with_overrides(epochs=1)
    out = run_experiment(cfg, tmp_path)
    assert out.status == 0
    assert "relative_l2" in json.loads((out.directory / "metrics.json").read_text())


def test_runtime_abort_writes_report(tmp_path):
    out = run_experiment(tiny_config(divergence_threshold=1e-9), tmp_path)
    assert out.status == 3
    doc = json.loads((out.directory / "abort.json").read_text())
    assert doc["diagnostics"]["epoch"] == 0


# -- evaluate and complexity ---------------------------------------------------------------------


def test_evaluate_oracle_stub_and_zero_model(tmp_path):
    spec = bvp.convection(30.0)
    grid = default_grid(spec)
    assert evaluate(exact_field(spec), spec, grid).relative_l2 < 1e-10
    zero = MLP([np.zeros((2, 3)), np.zeros((3, 1))], [np.zeros(3), np.zeros(1)])
    path = save_checkpoint(zero, tmp_path / "zero.json")
    assert evaluate(path, spec, grid).relative_l2 == 1.0


def test_parametric_average_equals_loop_of_single_evaluations():
    spec = bvp.convection((1.0, 30.0))
    grid = default_grid(spec, 64, 20)
    betas = [(float(b),) for b in np.linspace(1, 30, 20)]
    model = MLP.glorot([3, 10, 10, 1], seed=0)
    report = evaluate(model, spec, grid, betas)
    singles = []
    for (b,) in betas:
        fixed = bvp.convection(b)

        def wrapped(points, b=b):
            return model(np.column_stack([points, np.full(len(points), b)]))

        singles.append(relative_l2(wrapped(grid.points), oracle_field(fixed, grid)))
    assert report.relative_l2 == pytest.approx(np.mean(singles), rel=1e-12)
    assert [e for _, e in report.per_coefficient] == pytest.approx(singles, rel=1e-12)
    with pytest.raises(PdesclError):
        evaluate(model, spec, grid)


def test_complexity_report_arithmetic():
    assert complexity_report({"operator_evals": 500, "epochs": 5}, {"operator_evals": 100, "epochs": 1}) == 100.0
    assert complexity_report({"operator_evals": 5000, "epochs": 1}, {"operator_evals": 30_000, "epochs": 1}) == pytest.approx(
        16.6667, abs=1e-3
    )
    assert complexity_report({"operator_evals": 4000, "epochs": 1}, {"operator_evals": 5000, "epochs": 1}) == 80.0
    assert complexity_report({"operator_evals": 5000, "epochs": 1}, {"operator_evals": 4000, "epochs": 1}) == 125.0
    with pytest.raises(PdesclError):
        complexity_report({"operator_evals": 1, "epochs": 1}, {"operator_evals": 0, "epochs": 1})
    with pytest.raises(PdesclError):
        complexity_report({"operator_evals": 1, "epochs": 0}, {"operator_evals": 1, "epochs": 1})


# -- command line ---------------------------------------------------------------------------------


def test_cli_end_to_end(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PDESCL_OUTPUT_ROOT", str(tmp_path / "root"))
    cfg_path = tmp_path / "tiny.json"
    cfg_path.write_text(json.dumps(tiny_config()))
    assert main(["train", str(cfg_path), "--log-every", "0"]) == 0
    run_dir = tmp_path / "root" / "tiny"
    assert (run_dir / "metrics.json").exists()

    capsys.readouterr()
    assert main(["evaluate", str(run_dir / "checkpoint.json"), str(cfg_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    metrics = json.loads((run_dir / "metrics.json").read_text())
    assert report["relative_l2"] == metrics["relative_l2"]

    assert main(["compare-complexity", str(run_dir / "metrics.json"), str(run_dir / "metrics.json")]) == 0
    assert capsys.readouterr().out.strip() == "100.0000%"

    assert main(["sample-diagnostics", str(cfg_path), "--checkpoint", str(run_dir / "checkpoint.json")]) == 0
    diag = json.loads(capsys.readouterr().out)
    assert 0 <= diag["pde"]["acceptance_rate"] <= 1

    assert main(["list-presets"]) == 0
    assert "convection_b30_scl_desk" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("PDESCL_OUTPUT_ROOT", str(tmp_path))
    raw = tiny_config()
    raw["constraints"][1]["tolerance"] = -0.5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw))
    assert main(["train", str(bad)]) == 2
    assert "constraints[1].tolerance" in capsys.readouterr().err
    diverge = tmp_path / "diverge.json"
    diverge.write_text(json.dumps(tiny_config(divergence_threshold=1e-9)))
    assert main(["train", str(diverge)]) == 3
    assert main(["evaluate", str(tmp_path / "nothing.json"), str(diverge)]) == 3


def test_cli_parallel_jobs(tmp_path, monkeypatch):
    monkeypatch.setenv("PDESCL_OUTPUT_ROOT", str(tmp_path / "root"))
    paths = []
    for seed in (1, 2):
        raw = tiny_config(seed=seed)
        raw["output"]["directory"] = f"tiny{seed}"
        p = tmp_path / f"c{seed}.json"
        p.write_text(json.dumps(raw))
        paths.append(str(p))
    assert main(["train", *paths, "--jobs", "2", "--log-every", "0"]) == 0
    for seed in (1, 2):
        assert json.loads((tmp_path / "root" / f"tiny{seed}" / "metrics.json").read_text())["seed"] == seed


def test_export_preset_round_trips(tmp_path):
    path = tmp_path / "p.json"
    assert main(["export-preset", "rd_3_3_scl_desk", str(path)]) == 0
    assert load_config(path).to_dict() == parse_config(preset("rd_3_3_scl_desk")).to_dict()
