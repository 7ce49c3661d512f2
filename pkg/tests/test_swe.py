import numpy as np
import pytest

from bathyfer.core.errors import DivergenceError, InputError, StabilityError
from bathyfer.core.fields import GaussianBumpParams, gaussian_bump_eval
from bathyfer.core.swe import (
    BoundaryForcing,
    FlowState,
    SolverConfig,
    cfl_number,
    constant_forcing,
    init_lake_at_rest,
    pulse_forcing,
    sine_forcing,
    solve_forward,
    step,
)

REST_LEVEL = 0.3


def bump_bed(config):
    return gaussian_bump_eval(GaussianBumpParams(4.0, 0.05), config.grid.nodes)


def test_config_validation():
    with pytest.raises(InputError):
        SolverConfig(n_cells=4)
    with pytest.raises(InputError):
        SolverConfig(dt=0.0)
    with pytest.raises(InputError):
        SolverConfig(L=1.0, x_left=1.5)
    with pytest.raises(InputError):
        SolverConfig(left_boundary="periodic")


def test_presets():
    assert SolverConfig.inference().n_cells == 64
    truth = SolverConfig.synthetic_truth()
    assert (truth.n_cells, truth.dt) == (128, 5e-5)
    assert not truth.same_discretization(SolverConfig.inference())


def test_cfl_of_still_water():
    config = SolverConfig(n_cells=64, dt=1e-2, L=13.0, x_left=0.0)
    state = init_lake_at_rest(np.zeros(64), REST_LEVEL)
    assert cfl_number(state, config) == pytest.approx(0.0844, abs=1e-4)


def test_lake_at_rest_single_step_is_unchanged():
    config = SolverConfig(n_cells=64, left_boundary="wall", right_boundary="wall")
    bed = bump_bed(config)
    state = init_lake_at_rest(bed, REST_LEVEL)
    after = step(state, bed, config)
    assert np.max(np.abs(after.h - state.h)) < 1e-12
    assert np.max(np.abs(after.hu)) < 1e-12


def test_lake_at_rest_over_bump_stays_flat():
    config = SolverConfig(n_cells=64, dt=1e-2, t_end=10.0)
    bed = bump_bed(config)
    series = solve_forward(bed, config, constant_forcing(REST_LEVEL, 10.0), (3.5, 4.0, 5.5, 7.5))
    assert series.n_times == 1000
    assert np.max(np.abs(series.values - REST_LEVEL)) < 1e-10


def test_mass_conserved_between_walls():
    config = SolverConfig(n_cells=64, dt=1e-2, kappa=0.0, left_boundary="wall", right_boundary="wall")
    x = config.grid.nodes
    bed = np.zeros(config.n_cells)
    state = FlowState(h=REST_LEVEL + 0.02 * np.exp(-((x - 7.0) ** 2)), hu=np.zeros(config.n_cells))
    initial = state.mass(config.dx)
    for _ in range(1000):
        state = step(state, bed, config)
    assert abs(state.mass(config.dx) - initial) / initial < 1e-12


def test_friction_decays_uniform_flow():
    config = SolverConfig(n_cells=32, dt=1e-2, kappa=0.5, left_boundary="outflow", right_boundary="outflow")
    h = np.full(32, REST_LEVEL)
    state = FlowState(h=h, hu=0.1 * h)
    after = step(state, np.zeros(32), config)
    assert np.allclose(after.velocity(), 0.1 / (1.0 + 0.5 * 1e-2), rtol=0.0, atol=1e-12)


def test_depth_stays_non_negative_for_random_states(rng):
    config = SolverConfig(n_cells=64, dt=1e-3, left_boundary="wall", right_boundary="wall")
    x = config.grid.nodes
    for _ in range(10):
        bed = rng.uniform(0.05, 0.25) * np.exp(-((x - rng.uniform(3.0, 11.0)) ** 2) / rng.uniform(0.02, 1.0))
        surface = REST_LEVEL + rng.uniform(-0.02, 0.02) * np.sin(rng.uniform(0.5, 3.0) * x)
        h = np.maximum(surface - bed, 0.0)
        state = FlowState(h=h, hu=rng.uniform(-0.1, 0.1, x.size) * h)
        for _ in range(200):
            state = step(state, bed, config)
            assert np.all(state.h >= 0.0)
        assert np.all(np.isfinite(state.hu))


def test_step_raises_on_cfl_violation():
    config = SolverConfig(n_cells=64, left_boundary="wall", right_boundary="wall")
    state = init_lake_at_rest(np.zeros(64), REST_LEVEL)
    with pytest.raises(StabilityError) as info:
        step(state, np.zeros(64), config, dt=0.2)
    assert info.value.cfl > config.max_cfl
    assert info.value.wave_speed == pytest.approx(np.sqrt(9.81 * REST_LEVEL))


def test_substeps_keep_fine_grids_stable():
    forcing = sine_forcing(REST_LEVEL, 0.02, 0.5, t_end=0.5)
    fine = SolverConfig(n_cells=512, dt=1e-2, t_end=0.5)
    series = solve_forward(np.zeros(512), fine, forcing, (3.5,))
    assert np.all(np.isfinite(series.values))

    with pytest.raises(StabilityError):
        solve_forward(np.zeros(1024), SolverConfig(n_cells=1024, dt=1e-2, t_end=0.5, substep=False), forcing, (3.5,))


def test_divergent_state_is_reported():
    config = SolverConfig(n_cells=16, left_boundary="wall", right_boundary="wall")
    h = np.full(16, REST_LEVEL)
    h[3] = np.nan
    with pytest.raises(DivergenceError):
        step(FlowState(h=h, hu=np.zeros(16)), np.zeros(16), config)


def test_wave_reaches_first_gauge_at_shallow_water_speed():
    config = SolverConfig(n_cells=128, dt=1e-2, t_end=2.0)
    forcing = sine_forcing(REST_LEVEL, 0.02, 0.5, t_end=2.0)
    series = solve_forward(np.zeros(128), config, forcing, (3.5,))
    arrived = np.flatnonzero(np.abs(series.column(3.5) - REST_LEVEL) > 0.005)
    assert arrived.size
    assert 1.0 <= series.times[arrived[0]] <= 1.4


def test_forward_output_shape_and_times(small_config, forcing):
    series = solve_forward(np.zeros(32), small_config, forcing, (3.5, 5.5, 7.5))
    assert series.values.shape == (200, 3)
    assert series.times[0] == pytest.approx(0.01)
    assert series.times[-1] == pytest.approx(2.0)


def test_forward_rejects_bad_inputs(small_config, forcing):
    bed = np.zeros(32)
    with pytest.raises(InputError):
        solve_forward(bed, small_config, forcing, (0.5,))
    with pytest.raises(InputError):
        solve_forward(bed, small_config, sine_forcing(REST_LEVEL, 0.02, 0.5, t_end=1.0), (3.5,))
    with pytest.raises(InputError):
        solve_forward(bed, small_config.with_(dt=3e-3), forcing, (3.5,))
    with pytest.raises(InputError):
        solve_forward(np.zeros(31), small_config, forcing, (3.5,))


def test_forcing_builders():
    pulse = pulse_forcing(REST_LEVEL, 0.01, center=1.0, width=0.2, t_end=2.0)
    assert pulse.rate == pytest.approx(100.0)
    assert pulse.surface_at(1.0) == pytest.approx(REST_LEVEL + 0.01)
    ramped = sine_forcing(REST_LEVEL, 0.02, 0.5, t_end=2.0, ramp_time=1.0)
    assert abs(ramped.surface_at(0.05) - REST_LEVEL) < 1e-4
    assert ramped.covers(2.0) and not ramped.covers(3.0)
    with pytest.raises(InputError):
        BoundaryForcing(times=[0.0, 0.1, 0.3], surface_elevation=[0.3, 0.3, 0.3])


@pytest.mark.slow
def test_forced_wave_self_convergence_is_second_order():
    forcing = sine_forcing(REST_LEVEL, 0.01, 0.5, t_end=4.0, ramp_time=1.0)
    gauges = (3.5, 5.5, 7.5)
    surfaces = {}
    for n in (64, 128, 256, 512):
        config = SolverConfig(n_cells=n, dt=1e-3, t_end=4.0)
        surfaces[n] = solve_forward(bump_bed(config), config, forcing, gauges).values

    def gap(coarse, fine):
        return np.sqrt(np.mean((surfaces[coarse] - surfaces[fine]) ** 2))

    order = np.log2(gap(128, 256) / gap(256, 512))
    assert order >= 1.5
    assert gap(64, 128) > gap(128, 256) > gap(256, 512)
