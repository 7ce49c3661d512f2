from dataclasses import dataclass
from typing import Sequence

import numpy as np

from bathyfer.core.errors import DomainError, InputError


def sensor_column(position: float) -> str:
    return f"sensor_{position:g}"


@dataclass(frozen=True)
class MeasurementSeries:
    """Free-surface elevation ``values[t, i]`` at ``positions[i]`` sampled at ``times[t]``."""

    times: np.ndarray
    values: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        positions = np.array(self.positions, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or values.ndim != 2:
            raise InputError("times must be 1-D and values 2-D")
        if values.shape != (times.size, positions.size):
            raise InputError(
                f"values shape {values.shape} does not match "
                f"{times.size} times x {positions.size} sensors"
            )
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(times))):
            raise DomainError("measurement series must be finite")
        for arr in (times, values, positions):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "positions", positions)

    @property
    def n_times(self) -> int:
        return int(self.times.size)

    @property
    def n_sensors(self) -> int:
        return int(self.positions.size)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def columns(self):
        return [sensor_column(p) for p in self.positions]

    def column_index(self, position: float) -> int:
        hits = np.flatnonzero(np.isclose(self.positions, position, rtol=0.0, atol=1e-9))
        if hits.size == 0:
            raise InputError(f"no sensor at {position} m in series {self.columns}")
        return int(hits[0])

    def select(self, positions: Sequence[float]) -> "MeasurementSeries":
        idx = [self.column_index(p) for p in positions]
        return MeasurementSeries(times=self.times, values=self.values[:, idx], positions=self.positions[idx])

    def column(self, position: float) -> np.ndarray:
        return self.values[:, self.column_index(position)]

    def same_shape(self, other: "MeasurementSeries") -> bool:
        return (
            self.values.shape == other.values.shape
            and np.allclose(self.times, other.times, rtol=0.0, atol=1e-9)
        )
