import logging

import numpy as np
import pytest

from bathyfer.core.errors import InputError, StabilityError
from bathyfer.core.fields import GaussianBumpParams, Grid, gaussian_bump_eval
from bathyfer.core.swe import solve_forward
from bathyfer.ml.posterior import (
    Gridded,
    Parametric2D,
    PosteriorModel,
    landscape,
    landscape_argmax,
    landscape_frame,
    log_likelihood,
    log_posterior,
    profile_peaks,
)
from bathyfer.ml.priors import IMPOSSIBLE, GaussianScalar, Independent, Uniform
from bathyfer.services.observe import NoiseModel

TRUTH = GaussianBumpParams(4.0, 0.05)


@pytest.fixture
def grid():
    return Grid.reconstruction(1.5, 13.0, 32)


@pytest.fixture
def observed(small_config, forcing, layout, grid):
    bed = Parametric2D(grid).solver_bed(TRUTH.as_vector(), small_config.grid)
    return solve_forward(bed, small_config, forcing, layout.observation_sensors)


@pytest.fixture
def model(small_config, forcing, layout, observed, grid):
    return PosteriorModel(
        space=Parametric2D(grid),
        solver_config=small_config,
        forcing=forcing,
        layout=layout,
        observed=observed,
        noise=NoiseModel(variances=[1e-6, 1e-6, 1e-6]),
        prior=Independent((GaussianScalar(4.0, 0.1), Uniform(0.0, 1.0))),
    )


def test_spaces(grid):
    parametric = Parametric2D(grid)
    assert parametric.dim == 2
    assert parametric.labels == ["b_p", "b_w"]
    heights = parametric.node_heights([4.0, 0.05])
    assert np.allclose(heights, gaussian_bump_eval(TRUTH, grid.nodes))

    gridded = Gridded(grid)
    assert gridded.dim == 32
    assert np.array_equal(gridded.node_heights(heights), heights)


def test_likelihood_at_truth_is_the_normalizer(model):
    expected = -0.5 * 200 * 3 * np.log(2 * np.pi * 1e-6)
    assert model.log_normalizer == pytest.approx(expected)
    assert log_likelihood(model, TRUTH.as_vector()) == pytest.approx(model.log_normalizer, abs=1e-9)


def test_posterior_adds_prior_and_likelihood(model):
    theta = np.array([4.2, 0.08])
    assert log_posterior(model, theta) == pytest.approx(model.log_prior(theta) + model.log_likelihood(theta))
    assert log_posterior(model, theta) < log_posterior(model, TRUTH.as_vector())


def test_impossible_prior_skips_the_forward_model(model):
    calls = model.forward_calls
    assert log_posterior(model, np.array([4.0, 1.5])) == IMPOSSIBLE
    assert model.forward_calls == calls


def width_free_model(small_config, forcing, layout, observed, grid):
    return PosteriorModel(
        space=Parametric2D(grid),
        solver_config=small_config,
        forcing=forcing,
        layout=layout,
        observed=observed,
        noise=NoiseModel(variances=[1e-6, 1e-6, 1e-6]),
        prior=Independent((GaussianScalar(4.0, 0.1), GaussianScalar(0.05, 1.0))),
    )


def test_non_positive_width_is_impossible_without_solving(small_config, forcing, layout, observed, grid):
    model = width_free_model(small_config, forcing, layout, observed, grid)
    assert log_posterior(model, np.array([4.0, -0.1])) == IMPOSSIBLE
    assert log_likelihood(model, np.array([4.0, 0.0])) == IMPOSSIBLE
    assert model.forward_calls == 0 and model.failures == 0


def test_forward_failure_becomes_impossible(small_config, forcing, layout, observed, grid, caplog, monkeypatch):
    model = width_free_model(small_config, forcing, layout, observed, grid)

    def unstable(theta):
        raise StabilityError(cfl=1.2, wave_speed=1.7, t=0.5)

    monkeypatch.setattr(model, "forward", unstable)
    with caplog.at_level(logging.WARNING, logger="bathyfer.ml.posterior"):
        assert log_posterior(model, TRUTH.as_vector()) == IMPOSSIBLE
    assert model.failures == 1
    assert "forward model failed" in caplog.text


def test_malformed_theta_is_an_input_error(model):
    with pytest.raises(InputError):
        log_likelihood(model, np.array([4.0, 0.05, 1.0]))


def test_model_validation(small_config, forcing, layout, observed, grid):
    common = dict(space=Parametric2D(grid), solver_config=small_config, forcing=forcing, layout=layout)
    prior = Independent((GaussianScalar(4.0, 0.1), Uniform(0.0, 1.0)))
    with pytest.raises(InputError):
        PosteriorModel(**common, observed=observed, noise=NoiseModel(variances=[1e-6, 1e-6]), prior=prior)
    with pytest.raises(InputError):
        PosteriorModel(**common, observed=observed.select([3.5, 5.5]), noise=NoiseModel(variances=[1e-6] * 3), prior=prior)
    with pytest.raises(InputError):
        PosteriorModel(
            **common,
            observed=observed,
            noise=NoiseModel(variances=[1e-6] * 3),
            prior=Independent((Uniform(0.0, 1.0),) * 3),
        )


def test_landscape_peaks_at_truth(model):
    bp = np.array([3.0, 4.0, 5.0])
    bw = np.array([0.05, 0.2])
    values = landscape(model, bp, bw)
    assert values.shape == (3, 2)
    assert landscape_argmax(bp, bw, values) == (4.0, 0.05)
    assert np.array_equal(landscape(model, bp, bw, threads=3), values)

    frame = landscape_frame(bp, bw, values)
    assert list(frame.columns) == ["b_p", "b_w", "log_posterior"]
    assert frame.iloc[1][["b_p", "b_w"]].tolist() == [3.0, 0.2]
    assert frame["log_posterior"].iloc[3] == values[1, 1]


def test_landscape_needs_the_parametric_space(small_config, forcing, layout, observed, grid):
    gridded = PosteriorModel(
        space=Gridded(grid),
        solver_config=small_config,
        forcing=forcing,
        layout=layout,
        observed=observed,
        noise=NoiseModel(variances=[1e-6] * 3),
        prior=Uniform(-1.0, 1.0),
    )
    with pytest.raises(InputError):
        landscape(gridded, [4.0], [0.05])


def test_profile_peaks_finds_two_modes():
    values = np.array([[0.0], [2.0], [1.0], [1.5], [3.0], [2.5]])
    assert profile_peaks(values).tolist() == [1, 4]
