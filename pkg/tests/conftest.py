import numpy as np
import pytest

from bathyfer.core.swe import SolverConfig, sine_forcing
from bathyfer.services.observe import SensorLayout

REST_LEVEL = 0.3


@pytest.fixture
def small_config():
    """Coarse inference-style solver over two seconds."""
    return SolverConfig(n_cells=32, dt=1e-2, t_end=2.0)


@pytest.fixture
def fine_config():
    return SolverConfig(n_cells=64, dt=5e-3, t_end=2.0)


@pytest.fixture
def forcing():
    return sine_forcing(REST_LEVEL, 0.02, 0.5, t_end=2.0)


@pytest.fixture
def layout():
    return SensorLayout(boundary_sensor=1.5, observation_sensors=(3.5, 5.5, 7.5), rate=100.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
