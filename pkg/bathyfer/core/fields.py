"""Bathymetry discretizations, PCHIP resampling and the Gaussian bump model."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize

from bathyfer.core.errors import DomainError, ExtrapolationError, FitError, InputError

logger = logging.getLogger(__name__)

BUMP_AMPLITUDE = 0.2
UNIFORM_RTOL = 1e-12

# grid-search resolution for the bump fit
FIT_POSITION_STEP = 0.05
FIT_WIDTH_RANGE = (1e-3, 1.0)
FIT_WIDTH_COUNT = 61


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid:
    """Node positions on ``[start, start + length]``.

    The reconstruction grid is equidistant with its end nodes on the domain ends;
    the solver grid holds cell centres.
    """

    start: float
    length: float
    nodes: np.ndarray
    uniform: bool = True

    def __post_init__(self):
        nodes = _frozen_array(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        if self.length <= 0:
            raise InputError(f"grid length must be positive, got {self.length}")
        if nodes.ndim != 1 or nodes.size < 1:
            raise InputError("grid needs at least one node")
        if not np.all(np.isfinite(nodes)):
            raise DomainError("grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0):
            raise InputError("grid nodes must be strictly increasing")
        tol = 1e-12 * max(1.0, abs(self.end))
        if nodes[0] < self.start - tol or nodes[-1] > self.end + tol:
            raise InputError(f"grid nodes leave [{self.start}, {self.end}]")
        if self.uniform and nodes.size > 2:
            spacing = np.diff(nodes)
            if np.max(np.abs(spacing - spacing.mean())) > UNIFORM_RTOL * spacing.mean():
                raise InputError("reconstruction grid spacing is not uniform")

    @classmethod
    def reconstruction(cls, start: float, end: float, n: int) -> "Grid":
        if n < 2:
            raise InputError("reconstruction grid needs at least two nodes")
        return cls(start=start, length=end - start, nodes=np.linspace(start, end, n))

    @classmethod
    def cell_centers(cls, start: float, end: float, n_cells: int) -> "Grid":
        if n_cells < 1:
            raise InputError("solver grid needs at least one cell")
        dx = (end - start) / n_cells
        return cls(start=start, length=end - start, nodes=start + dx * (np.arange(n_cells) + 0.5))

    @property
    def n(self) -> int:
        return int(self.nodes.size)

    @property
    def end(self) -> float:
        return self.start + self.length

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0]) if self.n > 1 else self.length


@dataclass(frozen=True)
class BathymetryField:
    grid: Grid
    heights: np.ndarray

    def __post_init__(self):
        heights = _frozen_array(self.heights)
        object.__setattr__(self, "heights", heights)
        if heights.shape != (self.grid.n,):
            raise InputError(f"expected {self.grid.n} heights, got shape {heights.shape}")
        if not np.all(np.isfinite(heights)):
            raise DomainError("bathymetry heights must be finite")

    @classmethod
    def flat(cls, grid: Grid) -> "BathymetryField":
        return cls(grid=grid, heights=np.zeros(grid.n))


@dataclass(frozen=True)
class GaussianBumpParams:
    b_p: float
    b_w: float
    amplitude: float = BUMP_AMPLITUDE

    def __post_init__(self):
        if not (np.isfinite(self.b_p) and np.isfinite(self.b_w)):
            raise DomainError("bump parameters must be finite")
        if self.b_w <= 0:
            raise InputError(f"bump width parameter must be positive, got {self.b_w}")
        if self.amplitude != BUMP_AMPLITUDE:
            raise InputError(f"bump amplitude is fixed at {BUMP_AMPLITUDE} m")

    def as_vector(self) -> np.ndarray:
        return np.array([self.b_p, self.b_w])


def gaussian_bump_eval(params: GaussianBumpParams, x):
    """0.2 * exp(-(x - b_p)^2 / (2 b_w)); accepts scalars or arrays."""
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)):
        raise DomainError("bump evaluated at a non-finite position")
    values = params.amplitude * np.exp(-((x_arr - params.b_p) ** 2) / (2.0 * params.b_w))
    return float(values) if values.ndim == 0 else values


def bump_profiles(b_p: np.ndarray, b_w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Vectorised bump profiles: one row per (b_p, b_w) pair."""
    b_p = np.asarray(b_p, dtype=float)[..., None]
    b_w = np.asarray(b_w, dtype=float)[..., None]
    return BUMP_AMPLITUDE * np.exp(-((np.asarray(x, dtype=float) - b_p) ** 2) / (2.0 * b_w))


@dataclass(frozen=True)
class MonotoneInterpolant:
    """Piecewise cubic Hermite interpolant with Fritsch-Carlson slopes."""

    knots: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    _poly: PchipInterpolator = field(repr=False, compare=False)

    def __call__(self, xq):
        return pchip_eval(self, xq)


def pchip_build(xs, ys) -> MonotoneInterpolant:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1:
        raise InputError("knots and values must be one-dimensional")
    if xs.size != ys.size:
        raise InputError(f"{xs.size} knots but {ys.size} values")
    if xs.size < 2:
        raise InputError("PCHIP needs at least two knots")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise DomainError("knots and values must be finite")
    if np.any(np.diff(xs) <= 0):
        raise InputError("knot positions must be strictly increasing")

    poly = PchipInterpolator(xs, ys, extrapolate=False)
    slopes = poly.derivative()(xs)
    return MonotoneInterpolant(
        knots=_frozen_array(xs),
        values=_frozen_array(ys),
        slopes=_frozen_array(slopes),
        _poly=poly,
    )


def pchip_eval(interp: MonotoneInterpolant, xq):
    xq_arr = np.atleast_1d(np.asarray(xq, dtype=float))
    if not np.all(np.isfinite(xq_arr)):
        raise DomainError("interpolation query must be finite")
    lo, hi = interp.knots[0], interp.knots[-1]
    slack = 1e-12 * max(1.0, abs(lo), abs(hi))
    if np.any(xq_arr < lo - slack) or np.any(xq_arr > hi + slack):
        bad = xq_arr[(xq_arr < lo - slack) | (xq_arr > hi + slack)][0]
        raise ExtrapolationError(f"query {bad} outside knot range [{lo}, {hi}]")
    xq_arr = np.clip(xq_arr, lo, hi)

    out = interp._poly(xq_arr)
    # knot hits return the stored value bit-for-bit
    idx = np.clip(np.searchsorted(interp.knots, xq_arr), 0, interp.knots.size - 1)
    on_knot = interp.knots[idx] == xq_arr
    out[on_knot] = interp.values[idx[on_knot]]

    if np.ndim(xq) == 0:
        return float(out[0])
    return out


def resample_bathymetry(field: BathymetryField, target: Grid) -> np.ndarray:
    interp = pchip_build(field.grid.nodes, field.heights)
    return np.asarray(pchip_eval(interp, target.nodes), dtype=float)


def field_from_bump(params: GaussianBumpParams, grid: Grid) -> BathymetryField:
    return BathymetryField(grid=grid, heights=gaussian_bump_eval(params, grid.nodes))


def field_from_profile(xs, bs, grid: Grid) -> BathymetryField:
    """Interpolate a surveyed profile onto ``grid`` with PCHIP."""
    interp = pchip_build(xs, bs)
    return BathymetryField(grid=grid, heights=pchip_eval(interp, grid.nodes))


def load_bathymetry_csv(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """Read a ground-truth profile with header ``x,b``."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise InputError(f"cannot read bathymetry file {path}: {e}") from e
    missing = {"x", "b"} - set(frame.columns)
    if missing:
        raise InputError(f"bathymetry file {path} lacks columns {sorted(missing)}")
    xs = pd.to_numeric(frame["x"], errors="coerce").to_numpy(dtype=float)
    bs = pd.to_numeric(frame["b"], errors="coerce").to_numpy(dtype=float)
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(bs))):
        raise InputError(f"bathymetry file {path} has non-numeric entries")
    if np.any(np.diff(xs) <= 0):
        raise InputError(f"positions in {path} must be ascending")
    return xs, bs


def fit_gaussian_bump(field: BathymetryField) -> GaussianBumpParams:
    """Least-squares fit of the Gaussian bump: grid search, then Nelder-Mead."""
    x = field.grid.nodes
    b = field.heights
    if not np.any(b != 0):
        raise FitError("cannot fit a bump to an all-zero bathymetry")

    positions = np.arange(field.grid.start, field.grid.end + 0.5 * FIT_POSITION_STEP, FIT_POSITION_STEP)
    widths = np.logspace(np.log10(FIT_WIDTH_RANGE[0]), np.log10(FIT_WIDTH_RANGE[1]), FIT_WIDTH_COUNT)
    pp, ww = np.meshgrid(positions, widths, indexing="ij")
    sse = np.sum((bump_profiles(pp, ww, x) - b) ** 2, axis=-1)
    i, j = np.unravel_index(np.argmin(sse), sse.shape)
    start = np.array([positions[i], np.log(widths[j])])

    def objective(z):
        return float(np.sum((bump_profiles(z[0], np.exp(z[1]), x) - b) ** 2))

    result = minimize(
        objective,
        start,
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000, "maxfev": 8000},
    )
    b_p, log_w = result.x
    logger.debug(f"bump fit: b_p={b_p:.6f} b_w={np.exp(log_w):.6f} sse={result.fun:.3e}")
    return GaussianBumpParams(b_p=float(b_p), b_w=float(np.exp(log_w)))
