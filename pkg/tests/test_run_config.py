import json
from pathlib import Path

import numpy as np
import pytest

from bathyfer.configs.run_config import (
    RunConfig,
    build_prior,
    config_hash,
    load_run_config,
    run_config_schema,
)
from bathyfer.configs.settings import Config
from bathyfer.core.errors import ConfigError, InputError
from bathyfer.ml import priors
from bathyfer.ml.mcmc import CorrelatedGaussian, IndependentGaussian

PARAMETRIC = {
    "data": {"kind": "synthetic", "bump": {"b_p": 4.0, "b_w": 0.05}},
    "prior": {
        "kind": "independent",
        "components": [
            {"kind": "gaussian", "mean": 4.0, "variance": 0.1},
            {"kind": "uniform", "lo": 0.0, "hi": 1.0},
        ],
    },
    "proposal": {"variance": [1e-2, 1e-4]},
    "chains": {"inits": [[5.0, 0.5], [3.0, 0.2]], "seeds": [3]},
}

GRIDDED = {
    "domain": {"reconstruction_nodes": 16},
    "data": {"kind": "measured", "files": ["gauges.csv"]},
    "noise": {"kind": "fixed", "variances": [1e-6, 1e-6, 1e-6]},
    "space": {"kind": "gridded"},
    "prior": {
        "kind": "composite",
        "components": [
            {"kind": "cauchy", "scale": 0.01},
            {"kind": "smoothness", "variance": 0.005, "length_scale": 2},
        ],
    },
    "proposal": {"kind": "correlated", "variance": 2e-6, "length_scale": 2.0},
    "chains": {"seeds": [1, 2, 3]},
}


def write(tmp_path, payload, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def test_parametric_config_loads_with_defaults(tmp_path):
    config = load_run_config(write(tmp_path, PARAMETRIC))
    assert config.domain.x_left == 1.5 and config.domain.L == 13.0
    assert config.sensors.observation == [3.5, 5.5, 7.5]
    assert config.dim == 2
    assert [s.tolist() for s in config.initial_states()] == [[5.0, 0.5], [3.0, 0.2]]
    assert config.seeds() == [3, 3]

    spec = config.proposal.build(config.dim)
    assert isinstance(spec, IndependentGaussian)
    assert spec.variance == (1e-2, 1e-4)


def test_gridded_config_starts_flat_chains_per_seed(tmp_path):
    config = load_run_config(write(tmp_path, GRIDDED))
    states = config.initial_states()
    assert len(states) == 3
    assert all(np.array_equal(s, np.zeros(16)) for s in states)
    assert config.seeds() == [1, 2, 3]
    assert isinstance(config.proposal.build(config.dim), CorrelatedGaussian)


def test_build_prior_translates_the_tree():
    config = RunConfig.model_validate(GRIDDED)
    spec = build_prior(config.prior, config.dim)
    assert isinstance(spec, priors.Composite)
    assert isinstance(spec.components[0], priors.CauchySparse)
    assert isinstance(spec.components[1], priors.Smoothness)

    parametric = RunConfig.model_validate(PARAMETRIC)
    independent = build_prior(parametric.prior, parametric.dim)
    assert isinstance(independent, priors.Independent)
    assert priors.log_prior(independent, [4.0, 1.5]) == -np.inf


def test_independent_prior_must_match_the_dimension():
    config = RunConfig.model_validate(PARAMETRIC)
    with pytest.raises(ConfigError):
        build_prior(config.prior, 3)


def test_smoothness_is_not_a_per_coordinate_prior():
    payload = dict(PARAMETRIC, prior={
        "kind": "independent",
        "components": [
            {"kind": "smoothness", "variance": 1.0, "length_scale": 1},
            {"kind": "uniform", "lo": 0.0, "hi": 1.0},
        ],
    })
    with pytest.raises(ConfigError):
        build_prior(RunConfig.model_validate(payload).prior, 2)


@pytest.mark.parametrize(
    "change",
    [
        {"unexpected": 1},
        {"domain": {"x_left": 5.0, "L": 4.0}},
        {"chains": {"inits": [[5.0]], "seeds": [1]}},
        {"chains": {"inits": [], "seeds": [1]}},
        {"proposal": {"variance": [1e-2, 1e-4, 1e-4]}},
        {"data": {"kind": "synthetic"}},
        {"data": {"kind": "synthetic", "bump": {"b_p": 4.0, "b_w": 0.05}, "truth_file": "bed.csv"}},
        {"noise": {"kind": "fixed", "variances": [1e-6]}},
        {"noise": {"kind": "fixed"}},
        {"prior": {"kind": "uniform", "lo": 1.0, "hi": 0.0}},
    ],
)
def test_invalid_configs_are_config_errors(tmp_path, change):
    payload = dict(PARAMETRIC)
    payload.update(change)
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path, payload))


def test_missing_config_file_is_an_input_error(tmp_path):
    with pytest.raises(InputError):
        load_run_config(tmp_path / "missing.json")


def test_config_hash_ignores_key_order_and_tracks_values():
    a = RunConfig.model_validate(PARAMETRIC)
    b = RunConfig.model_validate(json.loads(json.dumps(PARAMETRIC, sort_keys=True)))
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 64

    changed = a.model_copy(update={"chains": a.chains.model_copy(update={"seeds": [4]})})
    assert config_hash(changed) != config_hash(a)


def test_forcing_file_is_built_from_the_boundary_column(tmp_path):
    lines = ["time,sensor_1.5,sensor_3.5"] + [
        f"{k / 100:.2f},{0.3 + 0.01 * np.sin(k / 10):.6f},0.3" for k in range(301)
    ]
    gauges = tmp_path / "gauges.csv"
    gauges.write_text("\n".join(lines) + "\n")
    config = RunConfig.model_validate(
        dict(PARAMETRIC, data={
            "kind": "synthetic",
            "bump": {"b_p": 4.0, "b_w": 0.05},
            "forcing": {"kind": "file", "path": str(gauges)},
        })
    )
    forcing = config.data.forcing.build(config.domain, rate=100.0, t_end=2.0)
    assert forcing.surface_at(0.0) == pytest.approx(0.3)
    with pytest.raises(ConfigError):
        config.data.forcing.build(config.domain, rate=100.0, t_end=5.0)


def test_schema_lists_the_sections():
    schema = run_config_schema()
    assert {"domain", "data", "prior", "chains"} <= set(schema["properties"])


def test_environment_settings(monkeypatch):
    monkeypatch.setenv("BATHYFER_GRAVITY", "9.5")
    monkeypatch.setenv("BATHYFER_THREADS", "2")
    settings = Config()
    assert settings.solver.gravity == 9.5
    assert settings.runtime.threads == 2

    monkeypatch.setenv("BATHYFER_GRAVITY", "-1")
    with pytest.raises(ConfigError):
        Config()
    monkeypatch.setenv("BATHYFER_GRAVITY", "heavy")
    with pytest.raises(ConfigError):
        Config()


SHIPPED = sorted((Path(__file__).resolve().parent.parent / "run_configs").glob("*.json"))


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.stem)
def test_shipped_configs_build(path):
    config = load_run_config(path)
    build_prior(config.prior, config.dim)
    config.proposal.build(config.dim)
    if config.space.kind == "parametric":
        assert (config.landscape.b_p.num, config.landscape.b_w.num) == (50, 50)
