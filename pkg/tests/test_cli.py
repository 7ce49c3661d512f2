"""End-to-end runs of the command-line entry point on a deliberately tiny configuration."""

import json

import numpy as np
import pandas as pd
import pytest

from bathyfer.configs.run_config import load_run_config
from bathyfer.configs.settings import Config
from bathyfer.core import experiments
from bathyfer.core.errors import (
    CalibrationError,
    ConfigError,
    DivergenceError,
    FitError,
    InferenceError,
    InputError,
    StabilityError,
)
from bathyfer.core.experiments import ExperimentRunner, fit_report
from bathyfer.core.fields import Grid
from bathyfer.main import EXIT_INFERENCE, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, exit_code, main
from bathyfer.utils.bundle import load_manifest, read_commented_csv, verify_bundle


def bump_csv(path, b_p=4.0, b_w=0.05, amplitude=0.2):
    x = np.round(np.arange(0, 261) * 0.05, 10)
    b = amplitude * np.exp(-((x - b_p) ** 2) / (2.0 * b_w))
    pd.DataFrame({"x": x, "b": b}).to_csv(path, index=False)
    return path


def tiny_payload(truth_file, **sections):
    payload = {
        "domain": {"n_cells": 16, "dt": 1e-2, "t_end": 2.0, "reconstruction_nodes": 12},
        "data": {
            "kind": "synthetic",
            "truth_file": str(truth_file),
            "noise_fraction": 0.05,
            "seed": 5,
            "fine_n_cells": 32,
            "fine_dt": 5e-3,
        },
        "prior": {
            "kind": "independent",
            "components": [
                {"kind": "gaussian", "mean": 4.0, "variance": 0.1},
                {"kind": "uniform", "lo": 0.0, "hi": 1.0},
            ],
        },
        "proposal": {"variance": [1e-2, 1e-4]},
        "chains": {"n_samples": 20, "burn_in": 10, "inits": [[4.0, 0.05], [4.2, 0.1]], "seeds": [3]},
        "landscape": {
            "b_p": {"start": 3.0, "stop": 5.0, "num": 3},
            "b_w": {"start": 0.05, "stop": 0.25, "num": 3},
        },
    }
    payload.update(sections)
    return payload


@pytest.fixture
def truth_file(tmp_path):
    return bump_csv(tmp_path / "bed.csv")


@pytest.fixture
def write_config(tmp_path, truth_file):
    def write(name="run.json", **sections):
        path = tmp_path / name
        path.write_text(json.dumps(tiny_payload(truth_file, **sections)))
        return str(path)

    return write


def test_schema(capsys):
    assert main(["schema"]) == EXIT_OK
    schema = json.loads(capsys.readouterr().out)
    assert "prior" in schema["properties"]


def test_simulate_writes_measurements(tmp_path, write_config):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", write_config(), "--out", str(out)]) == EXIT_OK

    measured = pd.read_csv(out / "measurements.csv")
    assert list(measured.columns) == ["time", "sensor_1.5", "sensor_3.5", "sensor_5.5", "sensor_7.5"]
    assert len(measured) == 200
    assert measured["time"].iloc[0] == pytest.approx(0.01)
    truth = pd.read_csv(out / "truth_on_grid.csv")
    assert len(truth) == 12

    manifest = verify_bundle(out)
    assert manifest.command == "simulate"
    assert {e.path for e in manifest.files} == {"measurements.csv", "clean.csv", "truth_on_grid.csv"}
    assert manifest.seeds[0] == 5


def test_simulate_is_deterministic(tmp_path, write_config):
    config = write_config()
    main(["simulate", "--config", config, "--out", str(tmp_path / "a")])
    main(["simulate", "--config", config, "--out", str(tmp_path / "b")])
    first = (tmp_path / "a" / "manifest.json").read_text()
    assert first == (tmp_path / "b" / "manifest.json").read_text()


def test_zero_noise_leaves_measurements_clean(tmp_path, truth_file, write_config):
    payload = tiny_payload(truth_file)
    payload["data"]["noise_fraction"] = 0.0
    out = tmp_path / "sim"
    config = write_config(data=payload["data"])
    assert main(["simulate", "--config", config, "--out", str(out)]) == EXIT_OK
    assert (out / "measurements.csv").read_bytes() == (out / "clean.csv").read_bytes()


def test_same_discretization_is_refused(tmp_path, truth_file, write_config):
    payload = tiny_payload(truth_file)
    payload["data"].update(fine_n_cells=16, fine_dt=1e-2)
    config = write_config(data=payload["data"])
    assert main(["simulate", "--config", config, "--out", str(tmp_path / "sim")]) == EXIT_INPUT


def test_calibrate(tmp_path, write_config):
    out = tmp_path / "cal"
    assert main(["calibrate", "--config", write_config(), "--out", str(out)]) == EXIT_OK
    noise = pd.read_csv(out / "noise_model.csv")
    assert noise["sensor"].tolist() == [3.5, 5.5, 7.5]
    assert (noise["variance"] > 0).all()


def test_infer_writes_a_complete_bundle(tmp_path, write_config):
    out = tmp_path / "infer"
    assert main(["infer", "--config", write_config(), "--out", str(out), "--seed", "9"]) == EXIT_OK

    manifest = verify_bundle(out)
    names = {e.path for e in manifest.files}
    assert {"chains/chain_0.csv", "chains/chain_1.csv", "summary.csv", "parameter_summary.csv", "report.csv"} <= names
    assert manifest.seeds == [5, 9, 9]
    assert "log_likelihood_constant" in manifest.constants

    metadata, chain = read_commented_csv(out / "chains" / "chain_0.csv")
    assert metadata["seed"] == "9"
    assert len(chain) == 20
    assert chain["step"].iloc[0] == 11

    summary = pd.read_csv(out / "summary.csv")
    assert list(summary.columns) == ["x", "mean", "lo95", "hi95", "truth"]
    assert (summary["lo95"] <= summary["hi95"]).all()


def test_truth_is_never_read_during_inference(tmp_path, write_config, monkeypatch):
    config = load_run_config(write_config())
    runner = ExperimentRunner(config, Config(), out_dir=tmp_path / "infer")
    phases = []
    original = experiments.load_bathymetry_csv

    def recording_loader(path):
        phases.append(runner.phase)
        return original(path)

    monkeypatch.setattr(experiments, "load_bathymetry_csv", recording_loader)
    outcome = runner.infer()

    assert "inference" not in phases
    assert "inference" not in runner.truth.accesses
    assert runner.truth.accesses == ["synthesis", "report"]
    assert outcome.report is not None


def test_report_is_idempotent(tmp_path, write_config):
    out = tmp_path / "infer"
    main(["infer", "--config", write_config(), "--out", str(out)])
    manifest = (out / "manifest.json").read_text()

    assert main(["report", str(out)]) == EXIT_OK
    metrics = pd.read_csv(out / "metrics.csv")
    assert list(metrics.columns) == ["nrmse", "rel_l2", "rel_linf", "acceptance_rate", "ess"]
    assert 0 <= metrics["acceptance_rate"].iloc[0] <= 1
    first = {name: (out / name).read_bytes() for name in ("metrics.csv", "field_overlay.csv", "report.txt")}

    assert main(["report", str(out)]) == EXIT_OK
    assert {name: (out / name).read_bytes() for name in first} == first
    assert (out / "manifest.json").read_text() == manifest
    verify_bundle(out)


def test_measured_data_reports_absent_truth(tmp_path, write_config):
    sim = tmp_path / "sim"
    main(["simulate", "--config", write_config(), "--out", str(sim)])
    measured = write_config(
        "measured.json",
        data={"kind": "measured", "files": [str(sim / "measurements.csv")]},
        noise={"kind": "fixed", "variances": [1e-6, 1e-6, 1e-6]},
    )
    out = tmp_path / "infer"
    assert main(["infer", "--config", measured, "--out", str(out)]) == EXIT_OK
    assert "report.csv" not in {e.path for e in load_manifest(out).files}

    assert main(["report", str(out)]) == EXIT_OK
    metrics = pd.read_csv(out / "metrics.csv")
    assert metrics["nrmse"].iloc[0] == "absent"
    assert (pd.read_csv(out / "field_overlay.csv")["truth"] == "absent").all()


def test_sweep_and_landscape(tmp_path, write_config):
    out = tmp_path / "sweep"
    config = write_config()
    assert main(["sweep", "--config", config, "--out", str(out), "--vary", "width", "--values", "0.05"]) == EXIT_OK
    table = pd.read_csv(out / "sweep.csv")
    assert table["target"].tolist() == [0.05]
    assert table["vary"].iloc[0] == "width"

    out = tmp_path / "landscape"
    assert main(["landscape", "--config", config, "--out", str(out), "--threads", "2"]) == EXIT_OK
    metadata, grid = read_commented_csv(out / "landscape.csv")
    assert metadata["order"] == "b_p major, b_w minor"
    assert len(grid) == 9


def test_gridded_landscape_is_an_input_error(tmp_path, write_config):
    config = write_config(
        space={"kind": "gridded"},
        prior={"kind": "cauchy", "scale": 0.01},
        proposal={"kind": "correlated", "variance": 1e-6},
        chains={"n_samples": 20, "seeds": [1]},
    )
    assert main(["landscape", "--config", config, "--out", str(tmp_path / "l")]) == EXIT_INPUT


def test_invalid_config_exits_with_input_code(tmp_path, write_config):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"data": {"kind": "synthetic"}, "prior": {"kind": "cauchy", "scale": 1.0}}))
    assert main(["infer", "--config", str(path), "--out", str(tmp_path / "x")]) == EXIT_INPUT
    assert main(["report", str(tmp_path / "nowhere")]) == EXIT_INPUT


def test_impossible_inits_exit_with_input_code(tmp_path, write_config):
    config = write_config(chains={"n_samples": 20, "inits": [[4.0, 2.0], [4.0, -1.0]], "seeds": [1]})
    assert main(["infer", "--config", config, "--out", str(tmp_path / "infer")]) == EXIT_INPUT


def test_fit_recovers_the_flume_bump(tmp_path, truth_file, write_config):
    config = write_config(domain={"reconstruction_nodes": 231})
    assert main(["fit", "--truth", str(truth_file), "--config", config]) == EXIT_OK
    result = fit_report(str(truth_file), Grid.reconstruction(1.5, 13.0, 231))
    assert result["b_p"] == pytest.approx(4.0, abs=1e-3)
    assert result["b_w"] == pytest.approx(0.05, abs=1e-3)
    assert result["nrmse"] < 1e-3


def test_fit_of_a_flat_bed_is_a_numerical_failure(tmp_path):
    flat = tmp_path / "flat.csv"
    pd.DataFrame({"x": [0.0, 5.0, 13.0], "b": [0.0, 0.0, 0.0]}).to_csv(flat, index=False)
    assert main(["fit", "--truth", str(flat)]) == EXIT_NUMERICAL


@pytest.mark.parametrize(
    "error, code",
    [
        (InputError("x"), EXIT_INPUT),
        (ConfigError("x"), EXIT_INPUT),
        (InferenceError("x"), EXIT_INFERENCE),
        (StabilityError(2.0, 1.0, 0.5), EXIT_NUMERICAL),
        (DivergenceError("x"), EXIT_NUMERICAL),
        (FitError("x"), EXIT_NUMERICAL),
        (CalibrationError("x"), EXIT_NUMERICAL),
    ],
)
def test_exit_codes(error, code):
    assert exit_code(error) == code
