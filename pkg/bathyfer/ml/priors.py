"""Prior log-densities and the squared-exponential covariance."""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from scipy import linalg, stats

from bathyfer.core.errors import InputError, NumericalError

logger = logging.getLogger(__name__)

IMPOSSIBLE = -np.inf
SE_JITTER = 1e-12


def is_impossible(value: float) -> bool:
    return not np.isfinite(value)


@dataclass(frozen=True)
class SECovariance:
    """Sigma_ij = variance * exp(-(i - j)^2 / length_scale^2) with its lower Cholesky factor."""

    dim: int
    variance: float
    length_scale: float
    matrix: np.ndarray
    factor: np.ndarray

    def log_density(self, x: np.ndarray) -> float:
        z = linalg.solve_triangular(self.factor, x, lower=True)
        log_det = 2.0 * np.sum(np.log(np.diag(self.factor)))
        return float(-0.5 * (self.dim * np.log(2.0 * np.pi) + log_det + z @ z))


@lru_cache(maxsize=32)
def build_se_covariance(dim: int, variance: float, length_scale: float) -> SECovariance:
    if dim < 1:
        raise InputError(f"covariance dimension must be positive, got {dim}")
    if not variance > 0:
        raise InputError(f"SE variance must be positive, got {variance}")
    if not length_scale >= 1:
        raise InputError(f"SE length scale must be at least 1, got {length_scale}")

    idx = np.arange(dim, dtype=float)
    matrix = variance * np.exp(-((idx[:, None] - idx[None, :]) ** 2) / length_scale ** 2)
    try:
        factor = linalg.cholesky(matrix + SE_JITTER * variance * np.eye(dim), lower=True)
    except linalg.LinAlgError as e:
        raise NumericalError(f"SE covariance (N={dim}, var={variance}, l={length_scale}) is not factorizable: {e}") from e
    matrix.setflags(write=False)
    factor.setflags(write=False)
    return SECovariance(dim=dim, variance=variance, length_scale=length_scale, matrix=matrix, factor=factor)


def sample_mvn(cov: SECovariance, rng: np.random.Generator) -> np.ndarray:
    return cov.factor @ rng.standard_normal(cov.dim)


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float
    dim: Optional[int] = None

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InputError(f"uniform prior needs lo < hi, got [{self.lo}, {self.hi}]")

    def log_density(self, theta: np.ndarray) -> float:
        return float(np.sum(stats.uniform.logpdf(theta, loc=self.lo, scale=self.hi - self.lo)))


@dataclass(frozen=True)
class GaussianScalar:
    mean: float
    variance: float
    dim: Optional[int] = None

    def __post_init__(self):
        if not self.variance > 0:
            raise InputError(f"Gaussian prior variance must be positive, got {self.variance}")

    def log_density(self, theta: np.ndarray) -> float:
        return float(np.sum(stats.norm.logpdf(theta, loc=self.mean, scale=np.sqrt(self.variance))))


@dataclass(frozen=True)
class CauchySparse:
    """Independent zero-centred Cauchy density on every coordinate."""

    scale: float
    dim: Optional[int] = None

    def __post_init__(self):
        if not self.scale > 0:
            raise InputError(f"Cauchy scale must be positive, got {self.scale}")

    def log_density(self, theta: np.ndarray) -> float:
        return float(np.sum(stats.cauchy.logpdf(theta, loc=0.0, scale=self.scale)))


@dataclass(frozen=True)
class Smoothness:
    """Zero-mean Gaussian with squared-exponential covariance over node indices."""

    variance: float
    length_scale: float
    dim: int

    def __post_init__(self):
        if self.length_scale < 1 or float(self.length_scale) != int(self.length_scale):
            raise InputError(f"smoothness length scale must be an integer >= 1, got {self.length_scale}")
        self.covariance()

    def covariance(self) -> SECovariance:
        return build_se_covariance(self.dim, self.variance, float(self.length_scale))

    def log_density(self, theta: np.ndarray) -> float:
        return self.covariance().log_density(theta)


@dataclass(frozen=True)
class Composite:
    components: Tuple["PriorSpec", ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise InputError("composite prior needs at least one component")
        dims = {c.dim for c in self.components if c.dim is not None}
        if len(dims) > 1:
            raise InputError(f"composite components disagree on dimension: {sorted(dims)}")

    @property
    def dim(self) -> Optional[int]:
        dims = [c.dim for c in self.components if c.dim is not None]
        return dims[0] if dims else None

    def log_density(self, theta: np.ndarray) -> float:
        total = 0.0
        for component in self.components:
            total += component.log_density(theta)
            if is_impossible(total):
                return IMPOSSIBLE
        return total


@dataclass(frozen=True)
class Independent:
    """One scalar prior per coordinate, e.g. N(4, 0.1) on b_p and U(0, 1) on b_w."""

    components: Tuple["PriorSpec", ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise InputError("independent prior needs at least one coordinate")

    @property
    def dim(self) -> int:
        return len(self.components)

    def log_density(self, theta: np.ndarray) -> float:
        total = 0.0
        for component, value in zip(self.components, theta):
            total += component.log_density(np.array([value]))
            if is_impossible(total):
                return IMPOSSIBLE
        return total


PriorSpec = Union[Uniform, GaussianScalar, CauchySparse, Smoothness, Composite, Independent]


def log_prior(spec: PriorSpec, theta) -> float:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if spec.dim is not None and theta.size != spec.dim:
        raise InputError(f"prior expects {spec.dim} coordinates, got {theta.size}")
    if not np.all(np.isfinite(theta)):
        return IMPOSSIBLE
    value = spec.log_density(theta)
    return IMPOSSIBLE if is_impossible(value) else value
