"""One-dimensional shallow water forward model.

Second-order MUSCL finite volumes (minmod slopes on depth, free surface and
velocity), HLL fluxes with hydrostatic reconstruction of the bed (well balanced
for the lake at rest), Heun/SSP-RK2 in time and a semi-implicit friction update.
Two ghost cells per side carry the boundary conditions.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from bathyfer.core.errors import DivergenceError, DomainError, InputError, StabilityError
from bathyfer.core.fields import Grid
from bathyfer.core.measurements import MeasurementSeries

logger = logging.getLogger(__name__)

LEFT_BOUNDARIES = ("forced", "outflow", "wall")
RIGHT_BOUNDARIES = ("outflow", "wall")
SAMPLE_RATE = 100.0


@dataclass(frozen=True)
class SolverConfig:
    n_cells: int = 64
    dt: float = 1e-2
    t_end: float = 10.0
    L: float = 13.0
    x_left: float = 1.5
    g: float = 9.81
    kappa: float = 0.0
    dry_tolerance: float = 1e-8
    max_cfl: float = 0.9
    target_cfl: float = 0.45
    substep: bool = True
    left_boundary: str = "forced"
    right_boundary: str = "outflow"

    def __post_init__(self):
        if self.n_cells < 8:
            raise InputError(f"n_cells must be at least 8, got {self.n_cells}")
        if not self.dt > 0:
            raise InputError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise InputError(f"t_end must be positive, got {self.t_end}")
        if not self.L > self.x_left:
            raise InputError(f"domain end L={self.L} must exceed x_left={self.x_left}")
        if self.g <= 0 or self.kappa < 0 or self.dry_tolerance <= 0:
            raise InputError("g and dry_tolerance must be positive and kappa non-negative")
        if not 0 < self.target_cfl < self.max_cfl:
            raise InputError("target_cfl must lie in (0, max_cfl)")
        if self.left_boundary not in LEFT_BOUNDARIES:
            raise InputError(f"left boundary must be one of {LEFT_BOUNDARIES}")
        if self.right_boundary not in RIGHT_BOUNDARIES:
            raise InputError(f"right boundary must be one of {RIGHT_BOUNDARIES}")

    @classmethod
    def inference(cls, **overrides) -> "SolverConfig":
        return cls(**{"n_cells": 64, "dt": 1e-2, **overrides})

    @classmethod
    def synthetic_truth(cls, **overrides) -> "SolverConfig":
        return cls(**{"n_cells": 128, "dt": 5e-5, **overrides})

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)

    @property
    def dx(self) -> float:
        return (self.L - self.x_left) / self.n_cells

    @property
    def grid(self) -> Grid:
        return Grid.cell_centers(self.x_left, self.L, self.n_cells)

    def same_discretization(self, other: "SolverConfig") -> bool:
        return self.n_cells == other.n_cells and math.isclose(self.dt, other.dt, rel_tol=1e-12)


@dataclass(frozen=True)
class FlowState:
    h: np.ndarray
    hu: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        hu = np.array(self.hu, dtype=float)
        if h.shape != hu.shape or h.ndim != 1:
            raise InputError("h and hu must be 1-D arrays of equal length")
        h.setflags(write=False)
        hu.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "hu", hu)

    def velocity(self, dry_tolerance: float = 1e-8) -> np.ndarray:
        return _velocity(self.h, self.hu, dry_tolerance)

    def mass(self, dx: float) -> float:
        return float(np.sum(self.h) * dx)


@dataclass(frozen=True)
class BoundaryForcing:
    """Free-surface elevation imposed at the left domain edge, sampled uniformly in time."""

    times: np.ndarray
    surface_elevation: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        surface = np.array(self.surface_elevation, dtype=float)
        if times.ndim != 1 or times.shape != surface.shape or times.size < 2:
            raise InputError("forcing needs matching 1-D times and elevations (>= 2 samples)")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(surface))):
            raise DomainError("forcing must be finite")
        spacing = np.diff(times)
        if np.any(spacing <= 0) or np.max(np.abs(spacing - spacing[0])) > 1e-6 * spacing[0]:
            raise InputError("forcing times must be uniformly spaced")
        times.setflags(write=False)
        surface.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "surface_elevation", surface)

    @property
    def rate(self) -> float:
        return 1.0 / float(self.times[1] - self.times[0])

    def covers(self, t_end: float) -> bool:
        tol = 1e-9 * max(1.0, t_end)
        return self.times[0] <= tol and self.times[-1] >= t_end - tol

    def surface_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.surface_elevation))


def forcing_from_function(fn: Callable[[np.ndarray], np.ndarray], t_end: float, rate: float = SAMPLE_RATE) -> BoundaryForcing:
    n = int(round(t_end * rate))
    times = np.arange(n + 1) / rate
    return BoundaryForcing(times=times, surface_elevation=np.asarray(fn(times), dtype=float))


def constant_forcing(level: float, t_end: float, rate: float = SAMPLE_RATE) -> BoundaryForcing:
    return forcing_from_function(lambda t: np.full_like(t, level), t_end, rate)


def sine_forcing(
    rest_level: float,
    amplitude: float,
    frequency: float,
    t_end: float,
    ramp_time: float = 0.0,
    rate: float = SAMPLE_RATE,
) -> BoundaryForcing:
    """Sinusoidal wave maker with an optional sin^2 ramp-in."""

    def surface(t):
        ramp = np.ones_like(t)
        if ramp_time > 0:
            ramp = np.where(t < ramp_time, np.sin(0.5 * np.pi * t / ramp_time) ** 2, 1.0)
        return rest_level + amplitude * ramp * np.sin(2.0 * np.pi * frequency * t)

    return forcing_from_function(surface, t_end, rate)


def pulse_forcing(
    rest_level: float,
    amplitude: float,
    center: float,
    width: float,
    t_end: float,
    rate: float = SAMPLE_RATE,
) -> BoundaryForcing:
    return forcing_from_function(
        lambda t: rest_level + amplitude * np.exp(-0.5 * ((t - center) / width) ** 2), t_end, rate
    )


def _velocity(h: np.ndarray, hu: np.ndarray, dry_tolerance: float) -> np.ndarray:
    wet = h > dry_tolerance
    return np.divide(hu, h, out=np.zeros_like(hu), where=wet)


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _limited_slopes(q: np.ndarray) -> np.ndarray:
    d = np.diff(q)
    return _minmod(d[:-1], d[1:])


def _hll_flux(h_l, u_l, h_r, u_r, g) -> Tuple[np.ndarray, np.ndarray]:
    c_l = np.sqrt(g * h_l)
    c_r = np.sqrt(g * h_r)
    s_l = np.minimum(u_l - c_l, u_r - c_r)
    s_r = np.maximum(u_l + c_l, u_r + c_r)

    hu_l = h_l * u_l
    hu_r = h_r * u_r
    f_mass_l, f_mass_r = hu_l, hu_r
    f_mom_l = hu_l * u_l + 0.5 * g * h_l * h_l
    f_mom_r = hu_r * u_r + 0.5 * g * h_r * h_r

    denom = s_r - s_l
    wave = denom > 0.0
    mass_star = np.divide(
        s_r * f_mass_l - s_l * f_mass_r + s_l * s_r * (h_r - h_l), denom,
        out=np.zeros_like(denom), where=wave,
    )
    mom_star = np.divide(
        s_r * f_mom_l - s_l * f_mom_r + s_l * s_r * (hu_r - hu_l), denom,
        out=np.zeros_like(denom), where=wave,
    )
    right_going = s_l >= 0.0
    left_going = s_r <= 0.0
    mass = np.where(right_going, f_mass_l, np.where(left_going, f_mass_r, mass_star))
    mom = np.where(right_going, f_mom_l, np.where(left_going, f_mom_r, mom_star))
    return mass, mom


class _FiniteVolumeSolver:
    """Holds the padded bed and boundary data for repeated steps on one bathymetry."""

    def __init__(self, bed: np.ndarray, config: SolverConfig, forcing: Optional[BoundaryForcing]):
        if bed.shape != (config.n_cells,):
            raise InputError(f"bed has shape {bed.shape}, expected ({config.n_cells},)")
        if not np.all(np.isfinite(bed)):
            raise DomainError("bed heights must be finite")
        if config.left_boundary == "forced" and forcing is None:
            raise InputError("forced left boundary requires a BoundaryForcing")
        self.config = config
        self.forcing = forcing
        self.bed = bed
        left = bed[1::-1] if config.left_boundary == "wall" else np.full(2, bed[0])
        right = bed[:-3:-1] if config.right_boundary == "wall" else np.full(2, bed[-1])
        self.bed_ext = np.concatenate([left, bed, right])

    def _extend(self, h: np.ndarray, hu: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        h_e = np.empty(h.size + 4)
        hu_e = np.empty(h.size + 4)
        h_e[2:-2] = h
        hu_e[2:-2] = hu

        if cfg.left_boundary == "forced":
            h_e[:2], hu_e[:2] = self._forced_ghosts(h, hu, t)
        elif cfg.left_boundary == "wall":
            h_e[:2] = h[1::-1]
            hu_e[:2] = -hu[1::-1]
        else:
            h_e[:2] = h[0]
            hu_e[:2] = hu[0]

        if cfg.right_boundary == "wall":
            h_e[-2:] = h[:-3:-1]
            hu_e[-2:] = -hu[:-3:-1]
        else:
            h_e[-2:] = h[-1]
            hu_e[-2:] = hu[-1]
        return h_e, hu_e

    def _forced_ghosts(self, h: np.ndarray, hu: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Ghost cells for a surface elevation imposed at the x_left interface.

        The interface velocity carries the outgoing linearised invariant u - (g/c) eta,
        extrapolated from the first two cells; ghost values continue the line through
        the interface state and the first cell.
        """
        cfg = self.config
        eta_b = self.forcing.surface_at(t)
        eta_1, eta_2 = h[0] + self.bed[0], h[1] + self.bed[1]
        h_b = eta_b - self.bed[0]
        if min(h_b, h[0], h[1]) <= cfg.dry_tolerance:
            h_ghost = np.maximum(eta_b - self.bed_ext[:2], 0.0)
            return h_ghost, np.zeros(2)

        u_1, u_2 = hu[0] / h[0], hu[1] / h[1]
        k = cfg.g / math.sqrt(cfg.g * h_b)
        outgoing = 1.5 * (u_1 - k * eta_1) - 0.5 * (u_2 - k * eta_2)
        u_b = outgoing + k * eta_b

        # ghost 0 sits 3dx/2 left of the interface, ghost 1 dx/2
        eta_g = np.array([3.0 * eta_b - 2.0 * eta_1, 2.0 * eta_b - eta_1])
        u_g = np.array([3.0 * u_b - 2.0 * u_1, 2.0 * u_b - u_1])
        h_ghost = np.maximum(eta_g - self.bed_ext[:2], 0.0)
        return h_ghost, h_ghost * u_g

    def rhs(self, h: np.ndarray, hu: np.ndarray, t: float) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.config
        g = cfg.g
        h_e, hu_e = self._extend(h, hu, t)
        u_e = _velocity(h_e, hu_e, cfg.dry_tolerance)
        eta_e = h_e + self.bed_ext

        # reconstructed face values for extended cells 1 .. n+2
        s_h, s_eta, s_u = _limited_slopes(h_e), _limited_slopes(eta_e), _limited_slopes(u_e)
        h_c, eta_c, u_c = h_e[1:-1], eta_e[1:-1], u_e[1:-1]
        h_east, h_west = h_c + 0.5 * s_h, h_c - 0.5 * s_h
        eta_east, eta_west = eta_c + 0.5 * s_eta, eta_c - 0.5 * s_eta
        u_east, u_west = u_c + 0.5 * s_u, u_c - 0.5 * s_u
        b_east, b_west = eta_east - h_east, eta_west - h_west

        # interfaces j = 0..n sit between extended cells j+1 and j+2
        b_star = np.maximum(b_east[:-1], b_west[1:])
        h_l_star = np.maximum(eta_east[:-1] - b_star, 0.0)
        h_r_star = np.maximum(eta_west[1:] - b_star, 0.0)
        f_mass, f_mom = _hll_flux(h_l_star, u_east[:-1], h_r_star, u_west[1:], g)

        # interior cell i has west interface i and east interface i+1
        h_in_east, h_in_west = h_east[1:-1], h_west[1:-1]
        mom_east = f_mom[1:] + 0.5 * g * (h_in_east ** 2 - h_l_star[1:] ** 2)
        mom_west = f_mom[:-1] + 0.5 * g * (h_in_west ** 2 - h_r_star[:-1] ** 2)
        bed_source = -0.5 * g * (h_in_west + h_in_east) * (b_east[1:-1] - b_west[1:-1])

        dx = cfg.dx
        dh = -(f_mass[1:] - f_mass[:-1]) / dx
        dhu = (-(mom_east - mom_west) + bed_source) / dx
        return dh, dhu

    def _clip(self, h: np.ndarray, hu: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        h = np.maximum(h, 0.0)
        hu = np.where(h > self.config.dry_tolerance, hu, 0.0)
        return h, hu

    def step(self, state: FlowState, dt: float) -> FlowState:
        cfg = self.config
        _check_finite(state)
        cfl, speed = _cfl(state, cfg, dt)
        if cfl >= cfg.max_cfl:
            raise StabilityError(cfl=cfl, wave_speed=speed, t=state.t)

        h0, hu0, t = state.h, state.hu, state.t
        dh, dhu = self.rhs(h0, hu0, t)
        h1, hu1 = self._clip(h0 + dt * dh, hu0 + dt * dhu)
        dh, dhu = self.rhs(h1, hu1, t + dt)
        h2, hu2 = self._clip(0.5 * h0 + 0.5 * (h1 + dt * dh), 0.5 * hu0 + 0.5 * (hu1 + dt * dhu))
        if cfg.kappa > 0:
            hu2 = hu2 / (1.0 + cfg.kappa * dt)

        new_state = FlowState(h=h2, hu=hu2, t=t + dt)
        _check_finite(new_state)
        return new_state

    def advance(self, state: FlowState, t_next: float) -> FlowState:
        """One configured step, split into substeps when CFL demands it."""
        cfg = self.config
        dt = t_next - state.t
        cfl, _ = _cfl(state, cfg, dt)
        if cfg.substep and cfl > cfg.target_cfl:
            n_sub = int(math.ceil(cfl / cfg.target_cfl))
            for _ in range(n_sub):
                state = self.step(state, dt / n_sub)
            return FlowState(h=state.h, hu=state.hu, t=t_next)
        state = self.step(state, dt)
        return FlowState(h=state.h, hu=state.hu, t=t_next)


def _check_finite(state: FlowState):
    if not (np.all(np.isfinite(state.h)) and np.all(np.isfinite(state.hu))):
        raise DivergenceError(f"non-finite water depth or discharge at t={state.t:.4f}s")


def _cfl(state: FlowState, config: SolverConfig, dt: float) -> Tuple[float, float]:
    if state.h.size == 0:
        return 0.0, 0.0
    u = _velocity(state.h, state.hu, config.dry_tolerance)
    wet = state.h >= config.dry_tolerance
    speed = np.where(wet, np.abs(u) + np.sqrt(config.g * state.h), 0.0)
    max_speed = float(np.max(speed))
    return max_speed * dt / config.dx, max_speed


def init_lake_at_rest(bed, surface_level: float) -> FlowState:
    if not np.isfinite(surface_level):
        raise InputError(f"surface level must be finite, got {surface_level}")
    bed = np.asarray(bed, dtype=float)
    h = np.maximum(surface_level - bed, 0.0)
    return FlowState(h=h, hu=np.zeros_like(h), t=0.0)


def cfl_number(state: FlowState, config: SolverConfig) -> float:
    """max (|u| + sqrt(g h)) * dt / dx, with u = 0 in dry cells."""
    return _cfl(state, config, config.dt)[0]


def step(
    state: FlowState,
    bed,
    config: SolverConfig,
    forcing: Optional[BoundaryForcing] = None,
    dt: Optional[float] = None,
) -> FlowState:
    solver = _FiniteVolumeSolver(np.asarray(bed, dtype=float), config, forcing)
    return solver.step(state, config.dt if dt is None else dt)


def _sensor_weights(grid: Grid, positions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    centers = grid.nodes
    if np.any(positions < centers[0]) or np.any(positions > centers[-1]):
        raise InputError(
            f"sensors {positions.tolist()} must lie between the first and last cell centre "
            f"[{centers[0]:.4f}, {centers[-1]:.4f}]"
        )
    j = np.clip(np.searchsorted(centers, positions, side="right") - 1, 0, centers.size - 2)
    w = (positions - centers[j]) / (centers[j + 1] - centers[j])
    return j, w


def solve_forward(
    bathymetry_on_solver_grid,
    config: SolverConfig,
    forcing: BoundaryForcing,
    sensor_positions: Sequence[float],
    rate: float = SAMPLE_RATE,
) -> MeasurementSeries:
    """Run from the lake at rest to ``t_end`` and record H = h + b at the sensors."""
    bed = np.asarray(bathymetry_on_solver_grid, dtype=float)
    positions = np.asarray(sensor_positions, dtype=float)
    if config.left_boundary == "forced" and not forcing.covers(config.t_end):
        raise InputError(f"forcing covers [{forcing.times[0]}, {forcing.times[-1]}], need [0, {config.t_end}]")

    n_obs = int(round(config.t_end * rate))
    steps_per_obs = int(round(1.0 / (rate * config.dt)))
    if steps_per_obs < 1 or abs(steps_per_obs * config.dt * rate - 1.0) > 1e-9:
        raise InputError(f"dt={config.dt} does not divide the sampling interval 1/{rate:g} s")

    solver = _FiniteVolumeSolver(bed, config, forcing)
    j, w = _sensor_weights(config.grid, positions)
    level = forcing.surface_at(0.0) if forcing is not None else float(np.max(bed))
    state = init_lake_at_rest(bed, level)

    values = np.empty((n_obs, positions.size))
    n_step = 0
    for k in range(n_obs):
        for _ in range(steps_per_obs):
            n_step += 1
            state = solver.advance(state, n_step * config.dt)
        surface = state.h + bed
        values[k] = (1.0 - w) * surface[j] + w * surface[j + 1]

    times = np.arange(1, n_obs + 1) / rate
    return MeasurementSeries(times=times, values=values, positions=positions)
