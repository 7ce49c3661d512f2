"""JSON run configuration: schema, validation and translation into domain objects."""

import hashlib
import json
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from bathyfer.configs.settings import Config
from bathyfer.core.errors import ConfigError, InputError
from bathyfer.core.fields import GaussianBumpParams, Grid
from bathyfer.core.swe import BoundaryForcing, SolverConfig, pulse_forcing, sine_forcing
from bathyfer.ml import priors
from bathyfer.ml.mcmc import CorrelatedGaussian, IndependentGaussian, ProposalSpec
from bathyfer.services.observe import average_repeats, forcing_from_series, load_measurements


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(StrictModel):
    x_left: float = Field(1.5, ge=0, description="Left end of the computational domain (m)")
    L: float = Field(13.0, gt=0, description="Right end of the domain (m)")
    n_cells: int = Field(64, ge=8, description="Inference solver cells")
    dt: float = Field(1e-2, gt=0, description="Inference time step (s)")
    t_end: float = Field(10.0, gt=0)
    g: Optional[float] = Field(None, gt=0, description="Gravity; defaults to BATHYFER_GRAVITY")
    kappa: Optional[float] = Field(None, ge=0, description="Friction; defaults to BATHYFER_FRICTION")
    still_water_depth: float = Field(0.3, gt=0)
    reconstruction_nodes: int = Field(64, ge=2)
    left_boundary: Literal["forced", "outflow", "wall"] = "forced"
    right_boundary: Literal["outflow", "wall"] = "outflow"

    @model_validator(mode="after")
    def _ordered(self):
        if self.L <= self.x_left:
            raise ValueError(f"L={self.L} must exceed x_left={self.x_left}")
        return self

    def solver_config(self, settings: Config, n_cells: Optional[int] = None, dt: Optional[float] = None) -> SolverConfig:
        return SolverConfig(
            n_cells=n_cells or self.n_cells,
            dt=dt or self.dt,
            t_end=self.t_end,
            L=self.L,
            x_left=self.x_left,
            g=self.g if self.g is not None else settings.solver.gravity,
            kappa=self.kappa if self.kappa is not None else settings.solver.friction,
            dry_tolerance=settings.solver.dry_tolerance,
            left_boundary=self.left_boundary,
            right_boundary=self.right_boundary,
        )

    def reconstruction_grid(self) -> Grid:
        return Grid.reconstruction(self.x_left, self.L, self.reconstruction_nodes)


class SensorConfig(StrictModel):
    boundary: float = Field(1.5, ge=0)
    observation: List[float] = Field(default_factory=lambda: [3.5, 5.5, 7.5], min_length=1)
    rate: float = Field(100.0, gt=0, description="Sampling rate (Hz)")
    exclude: List[float] = Field(default_factory=list, description="Observation sensors dropped from the likelihood")


class ForcingConfig(StrictModel):
    kind: Literal["sine", "pulse", "file"] = "sine"
    amplitude: float = 0.02
    frequency: float = Field(0.5, gt=0)
    ramp_time: float = Field(0.0, ge=0)
    center: float = Field(1.0, ge=0, description="Pulse centre time (s)")
    width: float = Field(0.2, gt=0, description="Pulse standard deviation (s)")
    path: Optional[str] = Field(None, description="Measurement CSV whose boundary column drives the model")
    surface_offset: float = Field(0.0, description="Added to the file's elevations at import (m)")

    @model_validator(mode="after")
    def _file_needs_path(self):
        if self.kind == "file" and not self.path:
            raise ValueError("forcing kind 'file' needs a path")
        return self

    def build(
        self, domain: DomainConfig, rate: float, t_end: Optional[float] = None, boundary: Optional[float] = None
    ) -> BoundaryForcing:
        t_end = t_end or domain.t_end
        if self.kind == "sine":
            return sine_forcing(domain.still_water_depth, self.amplitude, self.frequency, t_end, self.ramp_time, rate)
        if self.kind == "pulse":
            return pulse_forcing(domain.still_water_depth, self.amplitude, self.center, self.width, t_end, rate)
        series = average_repeats(load_measurements(self.path, rate=rate, surface_offset=self.surface_offset))
        forcing = forcing_from_series(series, boundary if boundary is not None else domain.x_left)
        if not forcing.covers(t_end):
            raise ConfigError(f"forcing file {self.path} ends before t_end={t_end}")
        return forcing


class BumpTruth(StrictModel):
    b_p: float
    b_w: float = Field(gt=0)

    def params(self) -> GaussianBumpParams:
        return GaussianBumpParams(b_p=self.b_p, b_w=self.b_w)


class SyntheticDataConfig(StrictModel):
    kind: Literal["synthetic"] = "synthetic"
    truth_file: Optional[str] = None
    bump: Optional[BumpTruth] = None
    noise_fraction: float = Field(0.05, ge=0)
    seed: int = Field(0, ge=0)
    fine_n_cells: int = Field(128, ge=8)
    fine_dt: float = Field(5e-5, gt=0)
    forcing: ForcingConfig = Field(default_factory=ForcingConfig)

    @model_validator(mode="after")
    def _one_truth(self):
        if (self.truth_file is None) == (self.bump is None):
            raise ValueError("synthetic data needs exactly one of truth_file or bump")
        return self


class MeasuredDataConfig(StrictModel):
    kind: Literal["measured"] = "measured"
    files: List[str] = Field(min_length=1, description="One CSV per repetition, or stacked files with a rep column")
    surface_offset: float = Field(0.0, description="Added to every elevation at import (m)")
    truth_file: Optional[str] = Field(None, description="Surveyed bed used only for the final error report")


DataConfig = Annotated[Union[SyntheticDataConfig, MeasuredDataConfig], Field(discriminator="kind")]


class NoiseConfig(StrictModel):
    kind: Literal["calibrate", "fixed", "file"] = "calibrate"
    variances: Optional[List[float]] = None
    path: Optional[str] = None

    @model_validator(mode="after")
    def _inputs_present(self):
        if self.kind == "fixed" and not self.variances:
            raise ValueError("noise kind 'fixed' needs variances")
        if self.kind == "file" and not self.path:
            raise ValueError("noise kind 'file' needs a path")
        if self.variances is not None and any(v <= 0 for v in self.variances):
            raise ValueError("noise variances must be positive")
        return self


class ParameterSpaceConfig(StrictModel):
    kind: Literal["parametric", "gridded"] = "parametric"


class UniformPrior(StrictModel):
    kind: Literal["uniform"] = "uniform"
    lo: float
    hi: float

    @model_validator(mode="after")
    def _ordered(self):
        if not self.lo < self.hi:
            raise ValueError("uniform prior needs lo < hi")
        return self


class GaussianPrior(StrictModel):
    kind: Literal["gaussian"] = "gaussian"
    mean: float
    variance: float = Field(gt=0)


class CauchyPrior(StrictModel):
    kind: Literal["cauchy"] = "cauchy"
    scale: float = Field(gt=0)


class SmoothnessPrior(StrictModel):
    kind: Literal["smoothness"] = "smoothness"
    variance: float = Field(gt=0)
    length_scale: int = Field(ge=1)


class CompositePrior(StrictModel):
    kind: Literal["composite"] = "composite"
    components: List["PriorConfig"] = Field(min_length=1)


class IndependentPrior(StrictModel):
    kind: Literal["independent"] = "independent"
    components: List["PriorConfig"] = Field(min_length=1, description="One scalar prior per coordinate")


PriorConfig = Annotated[
    Union[UniformPrior, GaussianPrior, CauchyPrior, SmoothnessPrior, CompositePrior, IndependentPrior],
    Field(discriminator="kind"),
]
CompositePrior.model_rebuild()
IndependentPrior.model_rebuild()


def build_prior(config, dim: Optional[int]) -> priors.PriorSpec:
    if isinstance(config, UniformPrior):
        return priors.Uniform(config.lo, config.hi)
    if isinstance(config, GaussianPrior):
        return priors.GaussianScalar(config.mean, config.variance)
    if isinstance(config, CauchyPrior):
        return priors.CauchySparse(config.scale)
    if isinstance(config, SmoothnessPrior):
        if dim is None:
            raise ConfigError("a smoothness prior cannot be a per-coordinate component")
        return priors.Smoothness(config.variance, config.length_scale, dim)
    if isinstance(config, CompositePrior):
        return priors.Composite(tuple(build_prior(c, dim) for c in config.components))
    if isinstance(config, IndependentPrior):
        if dim is not None and len(config.components) != dim:
            raise ConfigError(f"independent prior lists {len(config.components)} coordinates, space has {dim}")
        return priors.Independent(tuple(build_prior(c, None) for c in config.components))
    raise ConfigError(f"unknown prior {config!r}")


class ProposalConfig(StrictModel):
    kind: Literal["independent", "correlated"] = "independent"
    variance: Union[float, List[float]] = Field(1e-6, description="Step variance (or one per coordinate)")
    length_scale: float = Field(2.0, ge=1, description="SE length scale of correlated steps, in nodes")
    scale: float = Field(1.0, gt=0, description="Initial scale multiplier, adapted during burn-in")

    @model_validator(mode="after")
    def _positive(self):
        variances = self.variance if isinstance(self.variance, list) else [self.variance]
        if not variances or any(v <= 0 for v in variances):
            raise ValueError("proposal variances must be positive")
        if self.kind == "correlated" and isinstance(self.variance, list):
            raise ValueError("correlated proposals take a single variance")
        return self

    def build(self, dim: int) -> ProposalSpec:
        if self.kind == "correlated":
            return CorrelatedGaussian(priors.build_se_covariance(dim, float(self.variance), self.length_scale), scale=self.scale)
        variance = tuple(self.variance) if isinstance(self.variance, list) else self.variance
        return IndependentGaussian(variance=variance, dim=dim, scale=self.scale)


class ChainConfig(StrictModel):
    n_samples: int = Field(2000, ge=10, description="Retained samples per chain")
    burn_in: int = Field(200, ge=0)
    inits: List[List[float]] = Field(default_factory=list, description="Empty means a flat bed (gridded only)")
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    adapt_window: Optional[int] = Field(None, ge=50)
    discard_threshold: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _seeds_match(self):
        if len(self.seeds) > 1 and self.inits and len(self.seeds) != len(self.inits):
            raise ValueError(f"{len(self.seeds)} seeds for {len(self.inits)} inits")
        return self


class SweepConfig(StrictModel):
    vary: Literal["position", "width"] = "position"
    values: List[float] = Field(default_factory=list)
    fixed_b_p: float = 4.0
    fixed_b_w: float = Field(0.05, gt=0)
    position_tolerance: float = Field(0.3, gt=0, description="Max |b_p error| for a successful recovery (m)")
    width_tolerance: float = Field(0.05, gt=0)


class AxisConfig(StrictModel):
    start: float
    stop: float
    num: int = Field(ge=1)

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


class LandscapeConfig(StrictModel):
    b_p: AxisConfig = Field(default_factory=lambda: AxisConfig(start=1.5, stop=12.5, num=50))
    b_w: AxisConfig = Field(default_factory=lambda: AxisConfig(start=0.01, stop=0.5, num=50))
    with_chains: bool = Field(False, description="Also run the configured chains and write their paths")


class OutputConfig(StrictModel):
    directory: Optional[str] = Field(None, description="Defaults to BATHYFER_OUTPUT_DIR")
    plots: bool = False


class RunConfig(StrictModel):
    domain: DomainConfig = Field(default_factory=DomainConfig)
    sensors: SensorConfig = Field(default_factory=SensorConfig)
    data: DataConfig
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    space: ParameterSpaceConfig = Field(default_factory=ParameterSpaceConfig)
    prior: PriorConfig
    proposal: ProposalConfig = Field(default_factory=ProposalConfig)
    chains: ChainConfig = Field(default_factory=ChainConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    landscape: LandscapeConfig = Field(default_factory=LandscapeConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    threads: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _consistent(self):
        nodes = self.domain.reconstruction_nodes
        dim = 2 if self.space.kind == "parametric" else nodes
        for init in self.chains.inits:
            if len(init) != dim:
                raise ValueError(f"init {init} has {len(init)} coordinates, {self.space.kind} space has {dim}")
        if self.space.kind == "parametric" and not self.chains.inits:
            raise ValueError("parametric runs need explicit chain inits")
        if isinstance(self.proposal.variance, list) and len(self.proposal.variance) != dim:
            raise ValueError(f"{len(self.proposal.variance)} proposal variances for dimension {dim}")
        if self.noise.variances is not None:
            kept = len(self.sensors.observation) - len(self.sensors.exclude)
            if len(self.noise.variances) != kept:
                raise ValueError(f"{len(self.noise.variances)} noise variances for {kept} observation sensors")
        return self

    @property
    def dim(self) -> int:
        return 2 if self.space.kind == "parametric" else self.domain.reconstruction_nodes

    def initial_states(self) -> List[np.ndarray]:
        if self.chains.inits:
            return [np.asarray(init, dtype=float) for init in self.chains.inits]
        return [np.zeros(self.dim) for _ in self.chains.seeds]

    def seeds(self) -> List[int]:
        n = len(self.initial_states())
        seeds = self.chains.seeds
        return list(seeds) * n if len(seeds) == 1 else list(seeds)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read run config {path}: {e}") from e
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"invalid run config {path}:\n{e}") from e


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def run_config_schema() -> dict:
    return RunConfig.model_json_schema()
