"""Chain summaries, effective sample size and reconstruction error metrics."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from bathyfer.core.errors import InputError
from bathyfer.core.fields import bump_profiles
from bathyfer.ml.mcmc import Chain
from bathyfer.ml.posterior import Gridded, ParameterSpace, Parametric2D
from bathyfer.models.models import ErrorReport

logger = logging.getLogger(__name__)

MIN_SAMPLES = 10
CREDIBLE_MASS = 0.95


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalised sample autocorrelation of a 1-D series via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    centered = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(centered, n=size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), n=size)[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x: np.ndarray) -> float:
    """n / (1 + 2 sum rho_k), truncated at the first non-positive pair sum, clamped to [1, n]."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2 or np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    tau = -1.0
    for m in range(n // 2):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(np.clip(n / tau, 1.0, n))


def credible_band(samples: np.ndarray, mass: float = CREDIBLE_MASS, axis: int = 0):
    tail = 0.5 * (1.0 - mass)
    lo, hi = np.quantile(samples, [tail, 1.0 - tail], axis=axis, method="linear")
    return lo, hi


@dataclass(frozen=True)
class ChainSummary:
    mean: np.ndarray
    sd: np.ndarray
    ess: np.ndarray
    se: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    n: int
    mass: float = CREDIBLE_MASS

    def frame(self, labels: Optional[Sequence[str]] = None) -> pd.DataFrame:
        labels = list(labels) if labels is not None else [f"theta_{i}" for i in range(self.mean.size)]
        return pd.DataFrame(
            {
                "parameter": labels,
                "mean": self.mean,
                "sd": self.sd,
                "ess": self.ess,
                "se": self.se,
                "q2.5": self.lo,
                "q97.5": self.hi,
            }
        )


def _summarize(samples: np.ndarray, ess: np.ndarray, mass: float) -> ChainSummary:
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    sd = samples.std(axis=0, ddof=1)
    lo, hi = credible_band(samples, mass)
    return ChainSummary(mean=mean, sd=sd, ess=ess, se=sd / np.sqrt(ess), lo=lo, hi=hi, n=n, mass=mass)


def _as_samples(chain: Union[Chain, np.ndarray]) -> np.ndarray:
    samples = chain.samples if isinstance(chain, Chain) else np.asarray(chain, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] < MIN_SAMPLES:
        raise InputError(f"need at least {MIN_SAMPLES} retained samples, got {samples.shape[0]}")
    return samples


def summarize(chain: Union[Chain, np.ndarray], mass: float = CREDIBLE_MASS) -> ChainSummary:
    samples = _as_samples(chain)
    ess = np.array([effective_sample_size(samples[:, j]) for j in range(samples.shape[1])])
    return _summarize(samples, ess, mass)


def summarize_chains(chains: Sequence[Chain], mass: float = CREDIBLE_MASS) -> ChainSummary:
    """Pool the retained samples; the pooled ESS is the sum of per-chain ESS."""
    if not chains:
        raise InputError("no chains to summarize")
    per_chain = [_as_samples(c) for c in chains]
    ess = np.sum(
        [[effective_sample_size(s[:, j]) for j in range(s.shape[1])] for s in per_chain], axis=0
    )
    pooled = np.concatenate(per_chain, axis=0)
    return _summarize(pooled, np.minimum(ess, pooled.shape[0]), mass)


@dataclass(frozen=True)
class FieldSummary:
    x: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def frame(self, truth: Optional[np.ndarray] = None) -> pd.DataFrame:
        frame = pd.DataFrame({"x": self.x, "mean": self.mean, "lo95": self.lo, "hi95": self.hi})
        if truth is not None:
            frame["truth"] = truth
        return frame


def node_samples(chains: Union[Chain, Sequence[Chain]], space: ParameterSpace) -> np.ndarray:
    chains = [chains] if isinstance(chains, Chain) else list(chains)
    samples = np.concatenate([_as_samples(c) for c in chains], axis=0)
    if samples.shape[1] != space.dim:
        raise InputError(f"chain has {samples.shape[1]} coordinates, {space.kind} space has {space.dim}")
    if isinstance(space, Parametric2D):
        return bump_profiles(samples[:, 0], samples[:, 1], space.grid.nodes)
    if isinstance(space, Gridded):
        return samples
    raise InputError(f"unknown parameter space {space!r}")


def field_summary(chains: Union[Chain, Sequence[Chain]], space: ParameterSpace, mass: float = CREDIBLE_MASS) -> FieldSummary:
    """Per-node mean and credible band of the bathymetry on the reconstruction grid."""
    nodes = node_samples(chains, space)
    lo, hi = credible_band(nodes, mass)
    return FieldSummary(x=np.asarray(space.grid.nodes), mean=nodes.mean(axis=0), lo=lo, hi=hi)


def error_report(reconstruction, truth) -> ErrorReport:
    recon = np.asarray(reconstruction, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if recon.shape != truth.shape or recon.ndim != 1:
        raise InputError(f"reconstruction {recon.shape} and truth {truth.shape} must be equal-length vectors")
    spread = float(np.max(truth) - np.min(truth))
    if spread == 0:
        raise InputError("NRMSE is undefined for a constant truth profile")
    diff = recon - truth
    nrmse = float(np.sqrt(np.mean(diff ** 2)) / spread)
    return ErrorReport(
        nrmse=nrmse,
        nrmse_percent=100.0 * nrmse,
        rel_l2=float(100.0 * np.linalg.norm(diff) / np.linalg.norm(truth)),
        rel_linf=float(100.0 * np.max(np.abs(diff)) / np.max(np.abs(truth))),
        peak_height=float(np.max(recon)),
    )
