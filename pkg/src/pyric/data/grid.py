"""Regular lat-lon grids, raster stacks and fire observation masks."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..nfdrs import CLIMATE_ZONES, FUEL_MODELS, SLOPE_CLASSES, VEGETATION_COVER, VEGETATION_STAGES, CellInputs

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

# registered class codes per categorical layer
CLASS_CODES = {
    "vegetation_stage": tuple(VEGETATION_STAGES.values()),
    "vegetation_cover": tuple(VEGETATION_COVER.values()),
    "slope_class": tuple(SLOPE_CLASSES),
    "fuel_model": tuple(FUEL_MODELS.values()),
    "climate_zone": tuple(CLIMATE_ZONES.values()),
}

INPUT_VARIABLES = (
    "temp", "temp_max", "temp_min", "rh", "rh_max", "rh_min", "wind_speed", "cloud_cover",
    "precip_duration", "annual_precip_mean", "vegetation_stage", "vegetation_cover",
    "slope_class", "fuel_model", "climate_zone",
)


def _strictly_monotone(a: np.ndarray) -> bool:
    d = np.diff(a)
    return bool(np.all(d > 0) or np.all(d < 0))


@dataclass(frozen=True)
class GridDefinition:
    """Cell-center coordinates of a regular lat-lon grid, in degrees."""

    lat: tuple
    lon: tuple

    def __post_init__(self):
        lat = tuple(float(x) for x in self.lat)
        lon = tuple(float(x) for x in self.lon)
        if not lat or not lon:
            raise ValueError("grid needs at least one row and one column")
        for name, a in (("lat", lat), ("lon", lon)):
            if len(a) > 1 and not _strictly_monotone(np.array(a)):
                raise ValueError(f"{name} centers must be strictly monotone")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)

    @classmethod
    def regular(cls, n_rows: int, n_cols: int, lat0: float = 35.0, lon0: float = -120.0,
                resolution: float = 0.25) -> "GridDefinition":
        return cls(tuple(lat0 + resolution * i for i in range(n_rows)),
                   tuple(lon0 + resolution * j for j in range(n_cols)))

    @property
    def n_rows(self) -> int:
        return len(self.lat)

    @property
    def n_cols(self) -> int:
        return len(self.lon)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def resolution(self) -> tuple[float, float]:
        dlat = abs(self.lat[1] - self.lat[0]) if self.n_rows > 1 else float("nan")
        dlon = abs(self.lon[1] - self.lon[0]) if self.n_cols > 1 else float("nan")
        return dlat, dlon


def _dates(dates: Sequence) -> tuple:
    out = tuple(d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d)) for d in dates)
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ValueError("time axis must be strictly increasing")
    return out


def daily_dates(start: dt.date | str, days: int) -> tuple:
    start = start if isinstance(start, dt.date) else dt.date.fromisoformat(start)
    return tuple(start + dt.timedelta(days=i) for i in range(days))


@dataclass
class RasterStack:
    """Named (time, row, col) layers on one grid and one daily time axis.

    Static layers may be stored with a time length of 1; they broadcast over
    the time axis.  Missing values are NaN and are reported by
    :meth:`valid_mask`.
    """

    grid: GridDefinition
    dates: tuple
    layers: dict[str, np.ndarray]
    kinds: dict[str, str]
    units: dict[str, str] = field(default_factory=dict)
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dates = _dates(self.dates)
        for name, a in self.layers.items():
            a = np.asarray(a, dtype=np.float64)
            if a.ndim != 3 or a.shape[1:] != self.grid.shape or a.shape[0] not in (1, len(self.dates)):
                raise ValueError(f"layer {name}: shape {a.shape} does not match grid/time axis")
            kind = self.kinds.get(name)
            if kind not in (CONTINUOUS, CATEGORICAL):
                raise ValueError(f"layer {name}: kind must be continuous or categorical")
            if kind == CATEGORICAL and name in CLASS_CODES:
                vals = a[np.isfinite(a)]
                if not np.all(np.isin(vals, CLASS_CODES[name])):
                    raise ValueError(f"layer {name}: unregistered class code")
            self.layers[name] = a

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def layer(self, name: str) -> np.ndarray:
        """Full (time, row, col) view of a layer."""
        a = self.layers[name]
        if a.shape[0] == 1 and self.n_days != 1:
            return np.broadcast_to(a, (self.n_days,) + self.grid.shape)
        return a

    def valid_mask(self, names: Sequence[str] = INPUT_VARIABLES) -> np.ndarray:
        ok = np.ones((self.n_days,) + self.grid.shape, dtype=bool)
        for n in names:
            ok &= np.isfinite(self.layer(n))
        return ok

    def day_slice(self, start: int, stop: int) -> "RasterStack":
        layers = {n: (a if a.shape[0] == 1 else a[start:stop]) for n, a in self.layers.items()}
        return RasterStack(self.grid, self.dates[start:stop], layers, dict(self.kinds), dict(self.units),
                           dict(self.attrs))

    def cell_inputs(self) -> tuple[CellInputs, np.ndarray]:
        """Chain inputs shaped (days, cells) plus the validity mask.

        Missing cell-days are filled with a fixed benign value so the chain
        can run; callers must drop them using the returned mask.
        """
        valid = self.valid_mask().reshape(self.n_days, -1)
        kw = {}
        for name in INPUT_VARIABLES:
            a = np.array(self.layer(name), dtype=np.float64).reshape(self.n_days, -1)
            a[~valid] = _FILL[name]
            kw[name] = a
        return CellInputs(**kw), valid


_FILL = {
    "temp": 60.0, "temp_max": 60.0, "temp_min": 60.0, "rh": 50.0, "rh_max": 50.0, "rh_min": 50.0,
    "wind_speed": 0.0, "cloud_cover": 0.5, "precip_duration": 0.0, "annual_precip_mean": 20.0,
    "vegetation_stage": 1, "vegetation_cover": 1, "slope_class": 1, "fuel_model": 1, "climate_zone": 1,
}


@dataclass
class FireObservationGrid:
    """Binary daily fire mask; ``valid`` marks cells that could be observed."""

    grid: GridDefinition
    dates: tuple
    fire: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.dates = _dates(self.dates)
        self.fire = np.asarray(self.fire)
        if self.fire.shape != (len(self.dates),) + self.grid.shape:
            raise ValueError(f"fire grid shape {self.fire.shape} does not match grid/time axis")
        if not np.all((self.fire == 0) | (self.fire == 1)):
            raise ValueError("fire observations must be 0 or 1")
        self.fire = self.fire.astype(np.uint8)
        if self.valid is None:
            self.valid = np.ones(self.fire.shape, dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)

    def day_slice(self, start: int, stop: int) -> "FireObservationGrid":
        return FireObservationGrid(self.grid, self.dates[start:stop], self.fire[start:stop],
                                   self.valid[start:stop])


@dataclass
class Dataset:
    """Inputs and observed fire on a shared grid and time axis."""

    stack: RasterStack
    fire: FireObservationGrid

    def __post_init__(self):
        if self.stack.grid != self.fire.grid:
            raise GridMismatchError("inputs and observations are on different grids")
        if self.stack.dates != self.fire.dates:
            raise ValueError("inputs and observations have different time axes")

    @property
    def grid(self) -> GridDefinition:
        return self.stack.grid

    @property
    def dates(self) -> tuple:
        return self.stack.dates

    def valid_mask(self) -> np.ndarray:
        return self.stack.valid_mask() & self.fire.valid

    def day_slice(self, start: int, stop: int) -> "Dataset":
        return Dataset(self.stack.day_slice(start, stop), self.fire.day_slice(start, stop))

    def index_of(self, day: dt.date) -> int:
        return self.dates.index(day)


class GridMismatchError(ValueError):
    pass
