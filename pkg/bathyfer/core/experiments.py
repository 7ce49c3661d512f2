"""Experiment orchestration behind the CLI commands."""

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from bathyfer import __version__
from bathyfer.configs.run_config import (
    BumpTruth,
    MeasuredDataConfig,
    RunConfig,
    SyntheticDataConfig,
    build_prior,
    config_hash,
)
from bathyfer.configs.settings import Config
from bathyfer.core.errors import InferenceError, InputError
from bathyfer.core.fields import (
    BathymetryField,
    GaussianBumpParams,
    Grid,
    field_from_bump,
    field_from_profile,
    fit_gaussian_bump,
    gaussian_bump_eval,
    load_bathymetry_csv,
    resample_bathymetry,
)
from bathyfer.core.measurements import MeasurementSeries
from bathyfer.core.swe import BoundaryForcing, SolverConfig, solve_forward
from bathyfer.database.manager import RunLedger
from bathyfer.ml.mcmc import RNG_ALGORITHM, MultiChainResult, run_multichain
from bathyfer.ml.posterior import Gridded, Parametric2D, PosteriorModel, landscape, landscape_argmax, landscape_frame
from bathyfer.models.models import ChainStats, ErrorReport, SweepRecord
from bathyfer.services import plots
from bathyfer.services.observe import (
    NoiseModel,
    SensorLayout,
    attach_boundary,
    average_repeats,
    calibrate_noise,
    forcing_from_series,
    load_measurements,
    observation_window,
    synthesize_pair,
)
from bathyfer.services.stats import ChainSummary, FieldSummary, error_report, field_summary, summarize_chains
from bathyfer.utils.bundle import BundleWriter, verify_bundle

logger = logging.getLogger(__name__)

Truth = Union[BathymetryField, GaussianBumpParams]


class TruthSource:
    """Ground-truth bathymetry, read on demand; every read is logged with the caller's phase."""

    def __init__(self, path: Optional[str] = None, bump: Optional[BumpTruth] = None):
        self.path = path
        self.bump = bump
        self.accesses: List[str] = []

    @property
    def available(self) -> bool:
        return self.path is not None or self.bump is not None

    def load(self, phase: str) -> Truth:
        if not self.available:
            raise InputError("no ground-truth bathymetry configured")
        self.accesses.append(phase)
        if self.bump is not None:
            return self.bump.params()
        xs, bs = load_bathymetry_csv(self.path)
        grid = Grid(start=float(xs[0]), length=float(xs[-1] - xs[0]), nodes=xs, uniform=False)
        return BathymetryField(grid=grid, heights=bs)

    def on_nodes(self, grid: Grid, phase: str) -> np.ndarray:
        truth = self.load(phase)
        if isinstance(truth, GaussianBumpParams):
            return np.asarray(gaussian_bump_eval(truth, grid.nodes), dtype=float)
        return resample_bathymetry(truth, grid)


@dataclass
class PreparedData:
    forcing: BoundaryForcing
    observed: MeasurementSeries
    clean: Optional[MeasurementSeries] = None


@dataclass
class InferenceOutcome:
    model: PosteriorModel
    result: MultiChainResult
    summary: ChainSummary
    field: FieldSummary
    truth: Optional[np.ndarray] = None
    report: Optional[ErrorReport] = None


class ExperimentRunner:
    def __init__(self, config: RunConfig, settings: Config, out_dir: Optional[Union[str, Path]] = None, threads: Optional[int] = None):
        self.config = config
        self.settings = settings
        self.out_dir = Path(out_dir or config.output.directory or settings.runtime.output_dir)
        self.threads = threads or config.threads or settings.runtime.threads
        self.phase = "setup"

        data = config.data
        self.truth = TruthSource(path=data.truth_file, bump=getattr(data, "bump", None))
        self.full_layout = SensorLayout(
            boundary_sensor=config.sensors.boundary,
            observation_sensors=tuple(config.sensors.observation),
            rate=config.sensors.rate,
        )
        self.layout = self.full_layout.without(config.sensors.exclude)
        self.solver_config = config.domain.solver_config(settings)
        self.grid = config.domain.reconstruction_grid()

    @contextmanager
    def _phase(self, name: str):
        previous, self.phase = self.phase, name
        try:
            yield
        finally:
            self.phase = previous

    @property
    def space(self) -> Union[Parametric2D, Gridded]:
        return Parametric2D(self.grid) if self.config.space.kind == "parametric" else Gridded(self.grid)

    @property
    def adapt_window(self) -> int:
        return self.config.chains.adapt_window or self.settings.sampler.adapt_window

    @property
    def discard_threshold(self) -> float:
        return self.config.chains.discard_threshold or self.settings.sampler.discard_threshold

    def _fine_config(self, data: SyntheticDataConfig) -> SolverConfig:
        return self.config.domain.solver_config(self.settings, n_cells=data.fine_n_cells, dt=data.fine_dt)

    def prepare_data(self, truth: Optional[Truth] = None) -> PreparedData:
        """Synthesize or load the observations; ``truth`` overrides the configured one."""
        data = self.config.data
        if isinstance(data, SyntheticDataConfig):
            fine = self._fine_config(data)
            forcing = data.forcing.build(self.config.domain, self.full_layout.rate, boundary=self.full_layout.boundary_sensor)
            with self._phase("synthesis"):
                if truth is None:
                    truth = self.truth.load(self.phase)
                clean, observed = synthesize_pair(
                    truth, fine, forcing, self.full_layout, data.noise_fraction, data.seed,
                    inference_config=self.solver_config,
                )
            return PreparedData(forcing=forcing, observed=observed, clean=clean)

        assert isinstance(data, MeasuredDataConfig)
        repetitions: List[MeasurementSeries] = []
        for path in data.files:
            repetitions.extend(load_measurements(path, rate=self.full_layout.rate, surface_offset=data.surface_offset))
        averaged = average_repeats(repetitions)
        forcing = forcing_from_series(averaged, self.full_layout.boundary_sensor)
        observed = observation_window(averaged, self.full_layout, self.config.domain.t_end)
        return PreparedData(forcing=forcing, observed=observed)

    def flat_simulation(self, forcing: BoundaryForcing) -> MeasurementSeries:
        bed = np.zeros(self.solver_config.n_cells)
        return solve_forward(bed, self.solver_config, forcing, self.layout.observation_sensors, rate=self.layout.rate)

    def noise_model(self, prepared: PreparedData) -> NoiseModel:
        noise = self.config.noise
        observed = prepared.observed.select(self.layout.observation_sensors)
        if noise.kind == "fixed":
            return NoiseModel(variances=noise.variances)
        if noise.kind == "file":
            try:
                table = pd.read_csv(noise.path)
                variances = [
                    float(table.loc[np.isclose(table["sensor"], x), "variance"].iloc[0])
                    for x in self.layout.observation_sensors
                ]
            except (OSError, KeyError, IndexError) as e:
                raise InputError(f"cannot read noise variances for {self.layout.observation_sensors} from {noise.path}: {e}") from e
            return NoiseModel(variances=variances)
        return calibrate_noise(observed, self.flat_simulation(prepared.forcing))

    def build_model(self, prepared: PreparedData) -> PosteriorModel:
        space = self.space
        return PosteriorModel(
            space=space,
            solver_config=self.solver_config,
            forcing=prepared.forcing,
            layout=self.layout,
            observed=prepared.observed.select(self.layout.observation_sensors),
            noise=self.noise_model(prepared),
            prior=build_prior(self.config.prior, space.dim),
        )

    def _bundle(self, command: str) -> BundleWriter:
        return BundleWriter(self.out_dir, command)

    @contextmanager
    def _recorded(self, command: str):
        """Ledger entry for one command; marked failed if the body raises."""
        ledger = RunLedger.in_directory(self.out_dir)
        run_id = ledger.start_run(command, config_hash(self.config), self.config.seeds()[0], __version__, self.config.space.kind)
        logger.info(f"{command} started (run {run_id}, output {self.out_dir})")
        try:
            yield ledger, run_id
        except Exception:
            ledger.finish_run(run_id, "failed")
            raise
        ledger.finish_run(run_id, "done")
        logger.info(f"{command} finished (run {run_id})")

    def _finish(self, bundle: BundleWriter, constants: Optional[Dict[str, float]] = None):
        seeds = self.config.seeds()
        if isinstance(self.config.data, SyntheticDataConfig):
            seeds = [self.config.data.seed] + seeds
        bundle.write_manifest(config_hash(self.config), seeds, RNG_ALGORITHM, constants)

    def _truth_on_nodes(self) -> Optional[np.ndarray]:
        if not self.truth.available:
            return None
        with self._phase("report"):
            return self.truth.on_nodes(self.grid, self.phase)

    def simulate(self) -> PreparedData:
        if not isinstance(self.config.data, SyntheticDataConfig):
            raise InputError("simulate needs a synthetic data source")
        bundle = self._bundle("simulate")
        with self._recorded("simulate"):
            prepared = self.prepare_data()
            boundary = self.full_layout.boundary_sensor
            bundle.write_frame("measurements.csv", _series_frame(attach_boundary(prepared.observed, prepared.forcing, boundary)))
            bundle.write_frame("clean.csv", _series_frame(attach_boundary(prepared.clean, prepared.forcing, boundary)))
            with self._phase("synthesis"):
                truth = self.truth.on_nodes(self.grid, self.phase)
            bundle.write_frame("truth_on_grid.csv", pd.DataFrame({"x": self.grid.nodes, "b": truth}))
            self._finish(bundle)
        return prepared

    def calibrate(self) -> NoiseModel:
        bundle = self._bundle("calibrate")
        with self._recorded("calibrate"):
            prepared = self.prepare_data()
            observed = prepared.observed.select(self.layout.observation_sensors)
            noise = calibrate_noise(observed, self.flat_simulation(prepared.forcing))
            bundle.write_frame("noise_model.csv", pd.DataFrame({"sensor": observed.positions, "variance": noise.variances}))
            self._finish(bundle)
        return noise

    def run_chains(self, model: PosteriorModel) -> MultiChainResult:
        proposal = self.config.proposal.build(model.dim)
        with self._phase("inference"):
            return run_multichain(
                model,
                proposal,
                self.config.initial_states(),
                self.config.chains.n_samples,
                self.config.chains.burn_in,
                self.config.seeds(),
                threads=self.threads,
                adapt_window=self.adapt_window,
                discard_threshold=self.discard_threshold,
            )

    def run_inference(self, prepared: PreparedData) -> InferenceOutcome:
        model = self.build_model(prepared)
        result = self.run_chains(model)
        if result.all_discarded:
            raise InferenceError("every chain was discarded", diagnostics=_chain_diagnostics(result))
        kept = result.kept_chains
        outcome = InferenceOutcome(
            model=model,
            result=result,
            summary=summarize_chains(kept),
            field=field_summary(kept, model.space),
        )
        outcome.truth = self._truth_on_nodes()
        if outcome.truth is not None:
            outcome.report = error_report(outcome.field.mean, outcome.truth)
            logger.info(f"reconstruction NRMSE {outcome.report.nrmse:.4g}")
        return outcome

    def infer(self) -> InferenceOutcome:
        bundle = self._bundle("infer")
        with self._recorded("infer") as (ledger, run_id):
            outcome = self.run_inference(self.prepare_data())
            for chain in outcome.result.chains:
                bundle.write_frame(f"chains/chain_{chain.chain_index}.csv", chain.frame(), header=chain.metadata())
            bundle.write_frame("summary.csv", outcome.field.frame(outcome.truth))
            bundle.write_frame("parameter_summary.csv", outcome.summary.frame(outcome.model.space.labels))
            if outcome.report is not None:
                bundle.write_frame("report.csv", pd.DataFrame(outcome.report.rows(), columns=["metric", "value"]))
                ledger.log_metrics(run_id, outcome.report.model_dump())
            ledger.log_chains(run_id, _chain_stats(outcome.result))
            if self.config.output.plots:
                plots.field_figure(outcome.field.frame(outcome.truth), bundle.path("field.html"))
                bundle.adopt("field.html")
                plots.trace_figure(outcome.result.kept_chains[0].frame(), bundle.path("trace.html"))
                bundle.adopt("trace.html")
            self._finish(bundle, {"log_likelihood_constant": outcome.model.log_normalizer})
        return outcome

    def sweep_point(self, vary: str, value: float) -> SweepRecord:
        """Synthesize data for one target bump, infer it and score the recovery."""
        cfg = self.config.sweep
        if vary == "position":
            target = BumpTruth(b_p=value, b_w=cfg.fixed_b_w)
        else:
            target = BumpTruth(b_p=cfg.fixed_b_p, b_w=value)
        record = SweepRecord(vary=vary, target=value)
        configured, self.truth = self.truth, TruthSource(bump=target)
        try:
            outcome = self.run_inference(self.prepare_data())
        except InferenceError as e:
            logger.warning(f"sweep {vary}={value}: {e}")
            record.failed = True
            return record
        finally:
            self.truth = configured

        s = outcome.summary
        record.b_p_mean, record.b_w_mean = float(s.mean[0]), float(s.mean[1])
        record.b_p_se, record.b_w_se = float(s.se[0]), float(s.se[1])
        record.kept_chains = len(outcome.result.kept)
        if vary == "position":
            record.failed = abs(record.b_p_mean - target.b_p) > cfg.position_tolerance
        else:
            record.failed = abs(record.b_w_mean - target.b_w) > cfg.width_tolerance
        logger.info(
            f"sweep {vary}={value}: b_p={record.b_p_mean:.4f}±{record.b_p_se:.4f} "
            f"b_w={record.b_w_mean:.4f}±{record.b_w_se:.4f}{' (failed)' if record.failed else ''}"
        )
        return record

    def sweep(self, vary: Optional[str] = None, values: Optional[Sequence[float]] = None) -> pd.DataFrame:
        vary = vary or self.config.sweep.vary
        values = list(values if values is not None else self.config.sweep.values)
        if vary not in ("position", "width"):
            raise InputError(f"sweep varies 'position' or 'width', not '{vary}'")
        if self.config.space.kind != "parametric":
            raise InputError("sweeps run on the parametric space")
        if not isinstance(self.config.data, SyntheticDataConfig):
            raise InputError("sweeps need a synthetic data source")
        if not values:
            raise InputError("sweep has no target values")

        bundle = self._bundle("sweep")
        with self._recorded("sweep"):
            table = pd.DataFrame([self.sweep_point(vary, float(v)).model_dump() for v in values])
            bundle.write_frame("sweep.csv", table)
            if self.config.output.plots:
                plots.sweep_figure(table, bundle.path("sweep.html"))
                bundle.adopt("sweep.html")
            self._finish(bundle)
        return table

    def landscape(self) -> np.ndarray:
        if self.config.space.kind != "parametric":
            raise InputError("landscapes run on the parametric space")
        bundle = self._bundle("landscape")
        with self._recorded("landscape") as (ledger, run_id):
            model = self.build_model(self.prepare_data())
            bp = self.config.landscape.b_p.values()
            bw = self.config.landscape.b_w.values()
            with self._phase("inference"):
                values = landscape(model, bp, bw, threads=self.threads)
            best_bp, best_bw = landscape_argmax(bp, bw, values)
            header = {
                "order": "b_p major, b_w minor",
                "log_likelihood_constant": repr(model.log_normalizer),
                "argmax": f"b_p={best_bp!r} b_w={best_bw!r}",
            }
            bundle.write_frame("landscape.csv", landscape_frame(bp, bw, values), header=header)

            paths = None
            if self.config.landscape.with_chains:
                result = self.run_chains(model)
                paths = _chain_paths(result)
                bundle.write_frame("landscape_paths.csv", paths)
                ledger.log_chains(run_id, _chain_stats(result))
            if self.config.output.plots:
                plots.landscape_figure(bp, bw, values, bundle.path("landscape.html"), paths)
                bundle.adopt("landscape.html")
            self._finish(bundle, {"log_likelihood_constant": model.log_normalizer})
        return values


def _chain_paths(result: MultiChainResult) -> pd.DataFrame:
    frames = []
    for i, chain in enumerate(result.chains):
        frame = chain.frame().rename(columns={"theta_0": "b_p", "theta_1": "b_w"})
        frame.insert(0, "chain", chain.chain_index)
        frame["kept"] = i in result.kept
        frames.append(frame[["chain", "step", "b_p", "b_w", "log_posterior", "kept"]])
    return pd.concat(frames, ignore_index=True)


def _series_frame(series: MeasurementSeries) -> pd.DataFrame:
    frame = pd.DataFrame(series.values, columns=series.columns)
    frame.insert(0, "time", series.times)
    return frame


def _chain_stats(result: MultiChainResult) -> List[ChainStats]:
    return [
        ChainStats(
            chain_index=chain.chain_index,
            seed=chain.seed,
            n_samples=chain.n_samples,
            burn_in=chain.burn_in,
            acceptance_rate=chain.acceptance_rate,
            mean_log_posterior=chain.mean_log_posterior,
            final_scale=chain.final_scale,
            kept=i in result.kept,
        )
        for i, chain in enumerate(result.chains)
    ]


def _chain_diagnostics(result: MultiChainResult) -> Dict:
    return {
        "skipped": result.skipped,
        "chains": [s.model_dump() for s in _chain_stats(result)],
    }


def fit_report(truth_path: str, grid: Grid) -> Dict[str, float]:
    """Least-squares bump fit of a surveyed bed and the NRMSE of the fitted bump on ``grid``."""
    xs, bs = load_bathymetry_csv(truth_path)
    field = field_from_profile(xs, bs, grid)
    params = fit_gaussian_bump(field)
    fitted = field_from_bump(params, grid)
    report = error_report(fitted.heights, field.heights)
    return {"b_p": params.b_p, "b_w": params.b_w, **report.model_dump()}


REPORT_METRICS = ["nrmse", "rel_l2", "rel_linf", "acceptance_rate", "ess"]


def build_report(bundle_dir: Union[str, Path]) -> Dict[str, pd.DataFrame]:
    """Consolidate an infer bundle into a metrics row, a field overlay and a text table."""
    bundle_dir = Path(bundle_dir)
    manifest = verify_bundle(bundle_dir)
    if manifest.command != "infer":
        raise InputError(f"{bundle_dir} holds a '{manifest.command}' bundle, report needs an infer bundle")
    names = {entry.path for entry in manifest.files}
    if "summary.csv" not in names or "parameter_summary.csv" not in names:
        raise InputError(f"bundle {bundle_dir} is incomplete: summaries missing")

    summary = pd.read_csv(bundle_dir / "summary.csv")
    parameters = pd.read_csv(bundle_dir / "parameter_summary.csv")
    errors = {}
    if "report.csv" in names:
        errors = dict(pd.read_csv(bundle_dir / "report.csv").itertuples(index=False, name=None))

    ledger = RunLedger.in_directory(bundle_dir)
    run = ledger.latest_run("infer", status="done")
    chains = ledger.chains_frame(int(run["id"]))
    kept = chains[chains["kept"].astype(bool)]
    acceptance = float(kept["acceptance_rate"].mean()) if len(kept) else float("nan")

    row = {
        "nrmse": errors.get("nrmse", "absent"),
        "rel_l2": errors.get("rel_l2", "absent"),
        "rel_linf": errors.get("rel_linf", "absent"),
        "acceptance_rate": acceptance,
        "ess": float(parameters["ess"].min()),
    }
    metrics = pd.DataFrame([row], columns=REPORT_METRICS)
    overlay = summary.copy()
    if "truth" not in overlay.columns:
        overlay["truth"] = "absent"
    return {"metrics": metrics, "field_overlay": overlay, "chains": chains}


def format_report(tables: Dict[str, pd.DataFrame]) -> str:
    lines = ["bathyfer report", "", "metrics:"]
    for name, value in tables["metrics"].iloc[0].items():
        lines.append(f"  {name:<16} {value if isinstance(value, str) else f'{value:.6g}'}")
    lines.extend(["", "chains:", tables["chains"].to_string(index=False)])
    return "\n".join(lines) + "\n"


def write_report(bundle_dir: Union[str, Path]) -> Dict[str, pd.DataFrame]:
    """Write ``report.txt``, ``metrics.csv`` and ``field_overlay.csv`` next to the bundle files."""
    tables = build_report(bundle_dir)
    writer = BundleWriter(bundle_dir, "report")
    writer.write_frame("metrics.csv", tables["metrics"])
    writer.write_frame("field_overlay.csv", tables["field_overlay"])
    writer.write_text("report.txt", format_report(tables))
    return tables
