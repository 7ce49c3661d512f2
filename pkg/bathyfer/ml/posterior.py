"""Gaussian likelihood and log-posterior over the bump parameters or the gridded bed."""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import pandas as pd

from bathyfer.core.errors import InputError, NumericalError
from bathyfer.core.fields import BathymetryField, GaussianBumpParams, Grid, gaussian_bump_eval, resample_bathymetry
from bathyfer.core.measurements import MeasurementSeries
from bathyfer.core.swe import BoundaryForcing, SolverConfig, solve_forward
from bathyfer.ml.priors import IMPOSSIBLE, PriorSpec, is_impossible, log_prior as prior_log_density
from bathyfer.services.observe import NoiseModel, SensorLayout

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Parametric2D:
    """theta = (b_p, b_w), expanded to the reconstruction nodes as a Gaussian bump."""

    grid: Grid
    kind: str = "parametric"

    @property
    def dim(self) -> int:
        return 2

    @property
    def labels(self):
        return ["b_p", "b_w"]

    def admissible(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (2,):
            raise InputError(f"parametric theta needs (b_p, b_w), got shape {theta.shape}")
        return bool(np.all(np.isfinite(theta)) and theta[1] > 0)

    def node_heights(self, theta) -> np.ndarray:
        params = GaussianBumpParams(b_p=float(theta[0]), b_w=float(theta[1]))
        return np.asarray(gaussian_bump_eval(params, self.grid.nodes), dtype=float)

    def solver_bed(self, theta, solver_grid: Grid) -> np.ndarray:
        field = BathymetryField(grid=self.grid, heights=self.node_heights(theta))
        return resample_bathymetry(field, solver_grid)


@dataclass(frozen=True)
class Gridded:
    """theta = bed heights at the reconstruction nodes."""

    grid: Grid
    kind: str = "gridded"

    @property
    def dim(self) -> int:
        return self.grid.n

    @property
    def labels(self):
        return [f"b_{i}" for i in range(self.grid.n)]

    def admissible(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.grid.n,):
            raise InputError(f"gridded theta needs {self.grid.n} heights, got shape {theta.shape}")
        return bool(np.all(np.isfinite(theta)))

    def node_heights(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float)

    def solver_bed(self, theta, solver_grid: Grid) -> np.ndarray:
        return resample_bathymetry(BathymetryField(grid=self.grid, heights=theta), solver_grid)


ParameterSpace = Union[Parametric2D, Gridded]


class PosteriorModel:
    def __init__(
        self,
        space: ParameterSpace,
        solver_config: SolverConfig,
        forcing: BoundaryForcing,
        layout: SensorLayout,
        observed: MeasurementSeries,
        noise: NoiseModel,
        prior: PriorSpec,
    ):
        n_times = int(round(solver_config.t_end * layout.rate))
        if observed.n_sensors != layout.n_s or not np.allclose(observed.positions, layout.observation_sensors):
            raise InputError(f"observed sensors {observed.positions.tolist()} do not match the layout {layout.observation_sensors}")
        if observed.n_times != n_times:
            raise InputError(f"observed series has {observed.n_times} samples, solver produces {n_times}")
        if noise.n_sensors != observed.n_sensors:
            raise InputError(f"noise model has {noise.n_sensors} variances for {observed.n_sensors} sensors")
        if prior.dim is not None and prior.dim != space.dim:
            raise InputError(f"prior dimension {prior.dim} does not match the {space.kind} space ({space.dim})")
        layout.check_inside(solver_config.x_left, solver_config.L)

        self.space = space
        self.solver_config = solver_config
        self.forcing = forcing
        self.layout = layout
        self.observed = observed
        self.noise = noise
        self.prior = prior
        self._log_norm = -0.5 * observed.n_times * float(np.sum(np.log(2.0 * np.pi * noise.variances)))
        self._lock = threading.Lock()
        self._failures = 0
        self._forward_calls = 0

    @property
    def failures(self) -> int:
        return self._failures

    @property
    def forward_calls(self) -> int:
        return self._forward_calls

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def log_normalizer(self) -> float:
        """Additive likelihood constant -1/2 sum_i T log(2 pi sigma_i^2)."""
        return self._log_norm

    def forward(self, theta) -> MeasurementSeries:
        with self._lock:
            self._forward_calls += 1
        bed = self.space.solver_bed(theta, self.solver_config.grid)
        return solve_forward(bed, self.solver_config, self.forcing, self.layout.observation_sensors, rate=self.layout.rate)

    def _record_failure(self, error: Exception):
        with self._lock:
            self._failures += 1
            first = self._failures == 1
        message = f"forward model failed ({type(error).__name__}: {error}); sample treated as impossible"
        if first:
            logger.warning(message)
        else:
            logger.debug(message)

    def log_likelihood(self, theta) -> float:
        if not self.space.admissible(theta):
            return IMPOSSIBLE
        try:
            simulated = self.forward(theta)
        except NumericalError as e:
            self._record_failure(e)
            return IMPOSSIBLE
        residual = self.observed.values - simulated.values
        quadratic = -0.5 * float(np.sum(residual ** 2 / self.noise.variances))
        value = self._log_norm + quadratic
        return value if np.isfinite(value) else IMPOSSIBLE

    def log_prior(self, theta) -> float:
        return prior_log_density(self.prior, theta)

    def log_posterior(self, theta) -> float:
        prior_value = self.log_prior(theta)
        if is_impossible(prior_value):
            return IMPOSSIBLE
        likelihood = self.log_likelihood(theta)
        if is_impossible(likelihood):
            return IMPOSSIBLE
        return prior_value + likelihood


def log_likelihood(model: PosteriorModel, theta) -> float:
    return model.log_likelihood(theta)


def log_posterior(model: PosteriorModel, theta) -> float:
    return model.log_posterior(theta)


def landscape(model: PosteriorModel, bp_grid: Sequence[float], bw_grid: Sequence[float], threads: int = 1) -> np.ndarray:
    """Log-posterior on the (b_p, b_w) grid; rows follow ``bp_grid``, columns ``bw_grid``."""
    if not isinstance(model.space, Parametric2D):
        raise InputError("landscapes are only defined on the parametric (b_p, b_w) space")
    bp = np.asarray(bp_grid, dtype=float)
    bw = np.asarray(bw_grid, dtype=float)
    pairs = [(p, w) for p in bp for w in bw]

    def evaluate(pair):
        return model.log_posterior(np.array(pair))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(evaluate, pairs))
    else:
        values = [evaluate(pair) for pair in pairs]
    logger.info(f"evaluated landscape on {bp.size}x{bw.size} grid ({model.failures} forward failures)")
    return np.array(values, dtype=float).reshape(bp.size, bw.size)


def landscape_frame(bp_grid: Sequence[float], bw_grid: Sequence[float], values: np.ndarray) -> pd.DataFrame:
    pp, ww = np.meshgrid(np.asarray(bp_grid, dtype=float), np.asarray(bw_grid, dtype=float), indexing="ij")
    return pd.DataFrame({"b_p": pp.ravel(), "b_w": ww.ravel(), "log_posterior": np.asarray(values).ravel()})


def landscape_argmax(bp_grid: Sequence[float], bw_grid: Sequence[float], values: np.ndarray):
    i, j = np.unravel_index(np.argmax(values), values.shape)
    return float(bp_grid[i]), float(bw_grid[j])


def profile_peaks(values: np.ndarray) -> np.ndarray:
    """Row indices of strict local maxima of the b_p profile (max over b_w)."""
    profile = np.max(values, axis=1)
    interior = np.arange(1, profile.size - 1)
    left = profile[interior] > profile[interior - 1]
    right = profile[interior] > profile[interior + 1]
    peaks = interior[left & right & np.isfinite(profile[interior])]
    if profile.size > 1 and np.isfinite(profile[0]) and profile[0] > profile[1]:
        peaks = np.concatenate([[0], peaks])
    if profile.size > 1 and np.isfinite(profile[-1]) and profile[-1] > profile[-2]:
        peaks = np.concatenate([peaks, [profile.size - 1]])
    return peaks
