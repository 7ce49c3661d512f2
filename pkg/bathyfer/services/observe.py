"""Sensor layout, synthetic measurements, noise calibration and measurement CSV I/O."""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from bathyfer.core.errors import CalibrationError, InputError, ParseError
from bathyfer.core.fields import BathymetryField, GaussianBumpParams, gaussian_bump_eval, resample_bathymetry
from bathyfer.core.measurements import MeasurementSeries, sensor_column
from bathyfer.core.swe import BoundaryForcing, SolverConfig, solve_forward

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12
CADENCE_RTOL = 1e-6
_SENSOR_COLUMN = re.compile(r"^sensor_(.+)$")
_PANDAS_LINE = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class SensorLayout:
    boundary_sensor: float = 1.5
    observation_sensors: Tuple[float, ...] = (3.5, 5.5, 7.5)
    rate: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "observation_sensors", tuple(float(x) for x in self.observation_sensors))
        if not self.observation_sensors:
            raise InputError("layout needs at least one observation sensor")
        positions = np.array(self.positions)
        if np.any(np.diff(positions) <= 0):
            raise InputError(f"sensor positions must be strictly increasing, got {self.positions}")
        if self.rate <= 0:
            raise InputError("sampling rate must be positive")

    @property
    def positions(self) -> Tuple[float, ...]:
        return (self.boundary_sensor,) + self.observation_sensors

    @property
    def n_s(self) -> int:
        return len(self.observation_sensors)

    def without(self, exclude: Sequence[float]) -> "SensorLayout":
        drop = [float(x) for x in exclude]
        unknown = [x for x in drop if not any(np.isclose(x, s) for s in self.observation_sensors)]
        if unknown:
            raise InputError(f"cannot exclude unknown sensors {unknown}")
        kept = tuple(s for s in self.observation_sensors if not any(np.isclose(s, x) for x in drop))
        return SensorLayout(self.boundary_sensor, kept, self.rate)

    def check_inside(self, x_left: float, L: float):
        if self.boundary_sensor < x_left - 1e-12:
            raise InputError(f"boundary sensor {self.boundary_sensor} lies left of the domain start {x_left}")
        for x in self.observation_sensors:
            if not x_left < x < L:
                raise InputError(f"sensor {x} outside the domain ({x_left}, {L})")


@dataclass(frozen=True)
class NoiseModel:
    """Per-sensor noise variances sigma_i^2, floored at ``floor``."""

    variances: np.ndarray
    floor: float = VARIANCE_FLOOR
    floored: Tuple[bool, ...] = field(default=(), compare=False)

    def __post_init__(self):
        raw = np.atleast_1d(np.array(self.variances, dtype=float))
        if not np.all(np.isfinite(raw)) or np.any(raw < 0):
            raise InputError("noise variances must be finite and non-negative")
        variances = np.maximum(raw, self.floor)
        variances.setflags(write=False)
        object.__setattr__(self, "variances", variances)
        if not self.floored:
            object.__setattr__(self, "floored", tuple(bool(v) for v in raw < self.floor))

    @property
    def n_sensors(self) -> int:
        return int(self.variances.size)


def truth_on_grid(truth: Union[BathymetryField, GaussianBumpParams], config: SolverConfig) -> np.ndarray:
    """Bed heights of the true bathymetry at the solver cell centres."""
    grid = config.grid
    if isinstance(truth, GaussianBumpParams):
        return np.asarray(gaussian_bump_eval(truth, grid.nodes), dtype=float)
    return resample_bathymetry(truth, grid)


def simulate_clean(
    truth: Union[BathymetryField, GaussianBumpParams],
    fine_config: SolverConfig,
    forcing: BoundaryForcing,
    layout: SensorLayout,
) -> MeasurementSeries:
    layout.check_inside(fine_config.x_left, fine_config.L)
    bed = truth_on_grid(truth, fine_config)
    return solve_forward(bed, fine_config, forcing, layout.observation_sensors, rate=layout.rate)


def add_noise(clean: MeasurementSeries, noise_fraction: float, seed: int) -> MeasurementSeries:
    """Add i.i.d. Gaussian noise with std = fraction x (max - min) of the clean series."""
    if noise_fraction < 0:
        raise InputError(f"noise fraction must be non-negative, got {noise_fraction}")
    if noise_fraction == 0:
        return clean
    wave_height = float(np.max(clean.values) - np.min(clean.values))
    if wave_height <= 0:
        raise CalibrationError("clean series has zero wave-height range; noise level undefined")
    sigma = noise_fraction * wave_height
    rng = np.random.default_rng(seed)
    noisy = clean.values + rng.normal(0.0, sigma, size=clean.values.shape)
    logger.info(f"added noise sigma={sigma:.3e} m ({noise_fraction:.1%} of wave height {wave_height:.4f} m)")
    return MeasurementSeries(times=clean.times, values=noisy, positions=clean.positions)


def synthesize_pair(
    truth: Union[BathymetryField, GaussianBumpParams],
    fine_config: SolverConfig,
    forcing: BoundaryForcing,
    layout: SensorLayout,
    noise_fraction: float,
    seed: int,
    inference_config: Optional[SolverConfig] = None,
) -> Tuple[MeasurementSeries, MeasurementSeries]:
    """Clean and noisy series from the fine solver; refuses the inference discretization."""
    if inference_config is not None and fine_config.same_discretization(inference_config):
        raise InputError(
            "synthetic data must use a discretization different from the inference solver "
            f"(both use {fine_config.n_cells} cells, dt={fine_config.dt})"
        )
    clean = simulate_clean(truth, fine_config, forcing, layout)
    return clean, add_noise(clean, noise_fraction, seed)


def synthesize_measurements(
    truth: Union[BathymetryField, GaussianBumpParams],
    fine_config: SolverConfig,
    forcing: BoundaryForcing,
    layout: SensorLayout,
    noise_fraction: float,
    seed: int,
    inference_config: Optional[SolverConfig] = None,
) -> MeasurementSeries:
    return synthesize_pair(truth, fine_config, forcing, layout, noise_fraction, seed, inference_config)[1]


def calibrate_noise(observed: MeasurementSeries, flat_simulation: MeasurementSeries) -> NoiseModel:
    """sigma_i^2 = mean over time of the squared misfit to a flat-bed simulation."""
    if not observed.same_shape(flat_simulation) or not np.allclose(observed.positions, flat_simulation.positions):
        raise InputError(
            f"observed {observed.values.shape} and flat simulation "
            f"{flat_simulation.values.shape} do not share times and sensors"
        )
    residual = observed.values - flat_simulation.values
    noise = NoiseModel(variances=np.mean(residual ** 2, axis=0))
    for position, hit in zip(observed.positions, noise.floored):
        if hit:
            logger.warning(f"noise variance at sensor {position:g} m floored at {noise.floor:g}")
    return noise


def _positions_from_columns(columns: Sequence[str]) -> List[float]:
    positions = []
    for name in columns:
        match = _SENSOR_COLUMN.match(name)
        if match is None:
            raise ParseError(f"unexpected column {name!r}", row=0)
        try:
            positions.append(float(match.group(1)))
        except ValueError:
            raise ParseError(f"cannot read a sensor position from column {name!r}", row=0)
    return positions


def _check_cadence(times: np.ndarray, rows: np.ndarray, rate: float):
    step = 1.0 / rate
    if times.size < 2:
        return
    gaps = np.diff(times)
    bad = np.flatnonzero(np.abs(gaps - step) > CADENCE_RTOL * max(1.0, float(np.max(np.abs(times)))) + 1e-9)
    if bad.size:
        k = bad[0] + 1
        raise ParseError(f"time {times[k]:g} breaks the {rate:g} Hz cadence (previous {times[k - 1]:g})", row=int(rows[k]))


def load_measurements(
    path: Union[str, Path], rate: float = 100.0, surface_offset: float = 0.0
) -> List[MeasurementSeries]:
    """Read ``time,sensor_<x>,...`` rows, one series per ``rep`` value (or one series)."""
    try:
        frame = pd.read_csv(path, dtype=str, skipinitialspace=True, comment="#")
    except pd.errors.ParserError as e:
        line = _PANDAS_LINE.search(str(e))
        raise ParseError(f"malformed row in {path}", row=int(line.group(1)) - 1 if line else None) from e
    except (OSError, pd.errors.EmptyDataError) as e:
        raise InputError(f"cannot read measurement file {path}: {e}") from e

    if "time" not in frame.columns:
        raise ParseError(f"{path} has no 'time' column", row=0)
    sensor_columns = [c for c in frame.columns if c not in ("time", "rep")]
    if not sensor_columns:
        raise ParseError(f"{path} has no sensor columns", row=0)
    positions = _positions_from_columns(sensor_columns)

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    invalid = numeric.isna().any(axis=1).to_numpy()
    if invalid.any():
        first = int(np.flatnonzero(invalid)[0])
        raise ParseError(f"missing or non-numeric value in {path}", row=first + 1)

    rows = np.arange(1, len(numeric) + 1)
    groups = [(None, numeric.index)] if "rep" not in numeric.columns else list(
        numeric.groupby("rep", sort=False).groups.items()
    )

    series = []
    for rep, index in groups:
        block = numeric.loc[index]
        times = block["time"].to_numpy(dtype=float)
        _check_cadence(times, rows[np.asarray(index)], rate)
        values = block[sensor_columns].to_numpy(dtype=float) + surface_offset
        series.append(MeasurementSeries(times=times, values=values, positions=positions))
    logger.info(f"loaded {len(series)} repetition(s) of {series[0].n_times} samples from {path}")
    return series


def write_measurements(series: MeasurementSeries, path: Union[str, Path]):
    frame = pd.DataFrame(series.values, columns=series.columns)
    frame.insert(0, "time", series.times)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def average_repeats(series: Sequence[MeasurementSeries]) -> MeasurementSeries:
    if not series:
        raise InputError("no repetitions to average")
    first = series[0]
    for other in series[1:]:
        if not first.same_shape(other) or not np.allclose(first.positions, other.positions):
            raise InputError("repetitions differ in shape, times or sensors")
    mean = np.mean(np.stack([s.values for s in series]), axis=0)
    return MeasurementSeries(times=first.times, values=mean, positions=first.positions)


def attach_boundary(series: MeasurementSeries, forcing: BoundaryForcing, position: float) -> MeasurementSeries:
    """Prepend the boundary-sensor column, read from the forcing at the sample times."""
    boundary = np.array([forcing.surface_at(t) for t in series.times])
    return MeasurementSeries(
        times=series.times,
        values=np.column_stack([boundary, series.values]),
        positions=np.concatenate([[position], series.positions]),
    )


def forcing_from_series(series: MeasurementSeries, boundary_position: float) -> BoundaryForcing:
    """Use the boundary-sensor column as the left-boundary forcing, holding its first value back to t = 0."""
    times = series.times
    surface = series.column(boundary_position)
    if times[0] > 1e-9:
        times = np.concatenate([[0.0], times])
        surface = np.concatenate([[surface[0]], surface])
    return BoundaryForcing(times=times, surface_elevation=surface)


def observation_window(series: MeasurementSeries, layout: SensorLayout, t_end: float) -> MeasurementSeries:
    """Observation-sensor columns at t_k = k / rate, k = 1..round(t_end * rate)."""
    n_obs = int(round(t_end * layout.rate))
    expected = np.arange(1, n_obs + 1) / layout.rate
    mask = (series.times > 0.5 / layout.rate) & (series.times <= t_end + 0.5 / layout.rate)
    times = series.times[mask]
    if times.size != n_obs or not np.allclose(times, expected, rtol=0.0, atol=1e-6):
        raise InputError(
            f"measurements cover {times.size} samples in (0, {t_end}] s, expected {n_obs} at {layout.rate:g} Hz"
        )
    selected = series.select(layout.observation_sensors)
    return MeasurementSeries(times=expected, values=selected.values[mask], positions=selected.positions)


def measurement_header(layout: SensorLayout) -> List[str]:
    return ["time"] + [sensor_column(p) for p in layout.positions]
