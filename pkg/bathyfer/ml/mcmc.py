"""Random-walk Metropolis-Hastings with burn-in scale adaptation and multiple chains."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from bathyfer.core.errors import ImpossibleInitError, InputError
from bathyfer.ml.priors import SECovariance, is_impossible, sample_mvn

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "PCG64/SeedSequence"
ADAPT_WINDOW = 100
MIN_ADAPT_WINDOW = 50
ACCEPTANCE_BAND = (0.1, 0.4)
SHRINK_FACTOR = 0.7
GROW_FACTOR = 1.4
DISCARD_THRESHOLD = 2.0


class LogDensity(Protocol):
    def log_posterior(self, theta) -> float: ...


@dataclass(frozen=True)
class IndependentGaussian:
    """Uncorrelated Gaussian steps; ``variance`` is one value or one per coordinate."""

    variance: Union[float, Tuple[float, ...]]
    dim: int
    scale: float = 1.0

    def __post_init__(self):
        variance = np.atleast_1d(np.asarray(self.variance, dtype=float))
        if self.dim < 1:
            raise InputError("proposal dimension must be positive")
        if variance.size not in (1, self.dim):
            raise InputError(f"{variance.size} proposal variances for dimension {self.dim}")
        if not np.all(variance > 0) or not self.scale > 0:
            raise InputError("proposal variance and scale must be positive")
        if variance.size > 1:
            object.__setattr__(self, "variance", tuple(float(v) for v in variance))
        else:
            object.__setattr__(self, "variance", float(variance[0]))

    def perturbation(self, rng: np.random.Generator) -> np.ndarray:
        return np.sqrt(np.asarray(self.variance)) * rng.standard_normal(self.dim)

    def describe(self) -> str:
        variance = np.atleast_1d(self.variance)
        return f"independent(variance={' '.join(f'{v:g}' for v in variance)}, scale={self.scale:g})"


@dataclass(frozen=True)
class CorrelatedGaussian:
    covariance: SECovariance
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise InputError("proposal scale must be positive")

    @property
    def dim(self) -> int:
        return self.covariance.dim

    def perturbation(self, rng: np.random.Generator) -> np.ndarray:
        return sample_mvn(self.covariance, rng)

    def describe(self) -> str:
        cov = self.covariance
        return f"correlated(variance={cov.variance:g}, length_scale={cov.length_scale:g}, scale={self.scale:g})"


ProposalSpec = Union[IndependentGaussian, CorrelatedGaussian]


def chain_rng(seed: int, chain_index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chain_index,))))


def propose(current: np.ndarray, spec: ProposalSpec, rng: np.random.Generator) -> np.ndarray:
    """Symmetric random-walk move: current + scale * perturbation."""
    if np.size(current) != spec.dim:
        raise InputError(f"proposal has dimension {spec.dim}, state has {np.size(current)}")
    return current + spec.scale * spec.perturbation(rng)


def mh_step(
    current: np.ndarray,
    logp_current: float,
    model: LogDensity,
    spec: ProposalSpec,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, float, bool]:
    candidate = propose(current, spec, rng)
    u = rng.random()
    logp_candidate = model.log_posterior(candidate)
    if is_impossible(logp_candidate):
        return current, logp_current, False
    if u < np.exp(min(0.0, logp_candidate - logp_current)):
        return candidate, logp_candidate, True
    return current, logp_current, False


def adapt_scale(acceptance_window: Sequence[bool], scale: float) -> float:
    if len(acceptance_window) < MIN_ADAPT_WINDOW:
        raise InputError(f"adaptation window needs at least {MIN_ADAPT_WINDOW} proposals, got {len(acceptance_window)}")
    rate = float(np.mean(acceptance_window))
    if rate < ACCEPTANCE_BAND[0]:
        return scale * SHRINK_FACTOR
    if rate > ACCEPTANCE_BAND[1]:
        return scale * GROW_FACTOR
    return scale


@dataclass
class Chain:
    samples: np.ndarray
    log_posteriors: np.ndarray
    accepted: int
    proposed: int
    accept_flags: np.ndarray
    seed: int
    chain_index: int = 0
    burn_in: int = 0
    burn_in_accepted: int = 0
    init: Optional[np.ndarray] = None
    final_scale: float = 1.0
    proposal: str = ""
    rng: str = RNG_ALGORITHM

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def dim(self) -> int:
        return int(self.samples.shape[1])

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    @property
    def mean_log_posterior(self) -> float:
        return float(np.mean(self.log_posteriors))

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "chain_index": self.chain_index,
            "rng": self.rng,
            "proposal": self.proposal,
            "final_scale": repr(self.final_scale),
            "burn_in": self.burn_in,
            "n_samples": self.n_samples,
            "acceptance_rate": repr(self.acceptance_rate),
            "init": " ".join(repr(float(v)) for v in (self.init if self.init is not None else [])),
        }

    def frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.samples, columns=[f"theta_{i}" for i in range(self.dim)])
        frame.insert(0, "log_posterior", self.log_posteriors)
        frame.insert(0, "step", np.arange(self.burn_in + 1, self.burn_in + self.n_samples + 1))
        return frame


def run_chain(
    model: LogDensity,
    spec: ProposalSpec,
    init,
    n_samples: int,
    burn_in: int,
    seed: int,
    chain_index: int = 0,
    adapt_window: int = ADAPT_WINDOW,
) -> Chain:
    if n_samples < 1 or burn_in < 0:
        raise InputError("n_samples must be positive and burn_in non-negative")
    if adapt_window < MIN_ADAPT_WINDOW:
        raise InputError(f"adapt_window must be at least {MIN_ADAPT_WINDOW}")
    current = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    if current.size != spec.dim:
        raise InputError(f"init has {current.size} coordinates, proposal expects {spec.dim}")
    logp = model.log_posterior(current)
    if is_impossible(logp):
        raise ImpossibleInitError(
            f"chain {chain_index}: init {current.tolist()} lies outside the posterior support", chain_index
        )

    rng = chain_rng(seed, chain_index)
    kernel = spec
    window: List[bool] = []
    burn_in_accepted = 0
    for _ in range(burn_in):
        current, logp, accepted = mh_step(current, logp, model, kernel, rng)
        burn_in_accepted += accepted
        window.append(accepted)
        if len(window) == adapt_window:
            scale = adapt_scale(window, kernel.scale)
            if scale != kernel.scale:
                logger.debug(f"chain {chain_index}: acceptance {np.mean(window):.2f}, scale {kernel.scale:.3g} -> {scale:.3g}")
                kernel = replace(kernel, scale=scale)
            window = []

    samples = np.empty((n_samples, current.size))
    log_posteriors = np.empty(n_samples)
    flags = np.zeros(n_samples, dtype=bool)
    for k in range(n_samples):
        current, logp, flags[k] = mh_step(current, logp, model, kernel, rng)
        samples[k] = current
        log_posteriors[k] = logp

    chain = Chain(
        samples=samples,
        log_posteriors=log_posteriors,
        accepted=int(flags.sum()),
        proposed=n_samples,
        accept_flags=flags,
        seed=seed,
        chain_index=chain_index,
        burn_in=burn_in,
        burn_in_accepted=burn_in_accepted,
        init=np.atleast_1d(np.asarray(init, dtype=float)),
        final_scale=kernel.scale,
        proposal=kernel.describe(),
    )
    logger.info(
        f"chain {chain_index} (seed {seed}) done: acceptance {chain.acceptance_rate:.3f}, "
        f"mean log-posterior {chain.mean_log_posterior:.3f}"
    )
    return chain


def discard_rule(mean_log_posteriors: Sequence[float], threshold: float = DISCARD_THRESHOLD) -> List[int]:
    """Indices of chains whose mean log-posterior is within ``threshold`` of the best chain."""
    means = np.asarray(mean_log_posteriors, dtype=float)
    finite = np.isfinite(means)
    if not finite.any():
        return []
    best = np.max(means[finite])
    return [i for i, m in enumerate(means) if np.isfinite(m) and m >= best - threshold]


@dataclass
class MultiChainResult:
    chains: List[Chain]
    kept: List[int]
    skipped: List[int] = field(default_factory=list)
    threshold: float = DISCARD_THRESHOLD

    @property
    def kept_chains(self) -> List[Chain]:
        return [self.chains[i] for i in self.kept]

    @property
    def discarded(self) -> List[int]:
        return [i for i in range(len(self.chains)) if i not in self.kept]

    @property
    def all_discarded(self) -> bool:
        return not self.kept


def run_multichain(
    model: LogDensity,
    spec: ProposalSpec,
    inits: Sequence,
    n_samples: int,
    burn_in: int,
    seeds: Sequence[int],
    threads: int = 1,
    adapt_window: int = ADAPT_WINDOW,
    discard_threshold: float = DISCARD_THRESHOLD,
) -> MultiChainResult:
    if not inits:
        raise InputError("at least one chain init is required")
    seeds = list(seeds)
    if len(seeds) == 1:
        seeds = seeds * len(inits)
    if len(seeds) != len(inits):
        raise InputError(f"{len(seeds)} seeds given for {len(inits)} chains")

    def task(k: int) -> Optional[Chain]:
        try:
            return run_chain(model, spec, inits[k], n_samples, burn_in, seeds[k], chain_index=k, adapt_window=adapt_window)
        except ImpossibleInitError as e:
            logger.warning(f"skipping chain {k}: {e}")
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, range(len(inits))))
    else:
        results = [task(k) for k in range(len(inits))]

    skipped = [k for k, chain in enumerate(results) if chain is None]
    chains = [chain for chain in results if chain is not None]
    if not chains:
        raise InputError(f"every chain init lies outside the posterior support (chains {skipped})")

    kept = discard_rule([c.mean_log_posterior for c in chains], discard_threshold)
    for i, chain in enumerate(chains):
        if i not in kept:
            logger.info(f"discarding chain {chain.chain_index}: mean log-posterior {chain.mean_log_posterior:.3f}")
    return MultiChainResult(chains=chains, kept=kept, skipped=skipped, threshold=discard_threshold)
