"""Seeded synthetic regions for tests and demonstrations.

Weather has a seasonal cycle, a latitude gradient, regional day-to-day
anomalies and cell-level noise.  Fire is drawn cell-day by cell-day as a
Bernoulli event whose probability depends on the scenario:

``parameter-shift``
    Probability rises steeply with the hard-mode IC of a "true" parameter
    set equal to the defaults except for one coefficient.  Training from the
    defaults should move that coefficient back toward its true value.
``seasonal``
    Probability follows the default-parameter IC.
``random``
    Probability is constant, unrelated to weather.

All values are rounded to float32 before fire is generated, so a dataset
written to disk and read back yields the same IC.
"""
from __future__ import annotations

import datetime as dt

import numpy as np

from ..nfdrs import simulate
from ..params import ParameterSet
from ..seeding import substream
from .grid import Dataset, FireObservationGrid, GridDefinition, RasterStack, daily_dates
from .io import DEFAULT_UNITS, KINDS

SCENARIOS = ("parameter-shift", "seasonal", "random")

SHIFT_PARAMETER = "ic.chi_scale"
SHIFT_FACTOR = 0.7
FIRE_RATE = 0.04  # ceiling of the daily fire probability
FIRE_STEEPNESS = 8.0  # logistic scale is median IC / steepness


def _ar1(rng, n_days: int, shape: tuple, phi: float, sigma: float) -> np.ndarray:
    out = np.empty((n_days,) + shape)
    x = rng.normal(0.0, sigma, shape)
    innov = sigma * np.sqrt(1.0 - phi * phi)
    for t in range(n_days):
        x = phi * x + rng.normal(0.0, innov, shape)
        out[t] = x
    return out


def _blocks(rng, shape: tuple, codes, block: int = 4) -> np.ndarray:
    """Categorical map made of ``block`` x ``block`` patches."""
    nr = -(-shape[0] // block)
    nc = -(-shape[1] // block)
    coarse = rng.choice(np.asarray(codes), size=(nr, nc))
    return np.kron(coarse, np.ones((block, block), dtype=coarse.dtype))[: shape[0], : shape[1]]


def _stage(doy: np.ndarray, lag: np.ndarray) -> np.ndarray:
    d = (doy[:, None, None] - lag[None]) % 365
    stage = np.ones(d.shape)  # cured
    stage[(d >= 60) & (d < 105)] = 2  # pre-green
    stage[(d >= 105) & (d < 180)] = 3  # green
    stage[(d >= 180) & (d < 240)] = 4  # transition
    return stage


def synthetic_weather(grid: GridDefinition, dates: tuple, seed: int) -> RasterStack:
    """Weather and site layers only (no fire)."""
    shape = grid.shape
    n = len(dates)
    site = substream(seed, "synthetic.site")
    wx = substream(seed, "synthetic.weather")

    lat = np.asarray(grid.lat)[:, None] * np.ones(shape)
    lat_rel = (lat - lat.mean()) / max(np.ptp(lat), 1e-9)
    annual = np.clip(18.0 + 20.0 * lat_rel + site.normal(0.0, 3.0, shape), 4.0, 60.0)
    temp_base = 66.0 - 12.0 * lat_rel + site.normal(0.0, 2.0, shape)
    green_lag = site.integers(0, 25, shape)
    static = {
        "annual_precip_mean": annual,
        "fuel_model": _blocks(site, shape, (1, 2, 3, 4, 5, 6)),
        "climate_zone": _blocks(site, shape, (1, 2, 3, 4, 5), block=8),
        "vegetation_cover": _blocks(site, shape, (1, 2, 3, 4)),
        "slope_class": site.integers(1, 6, shape),
    }

    doy = np.array([d.timetuple().tm_yday for d in dates], dtype=np.float64)
    season = np.sin(2.0 * np.pi * (doy - 105.0) / 365.0)[:, None, None]
    regional = _ar1(wx, n, (1, 1), 0.7, 6.0)
    local = _ar1(wx, n, shape, 0.5, 3.0)
    temp = temp_base[None] + 20.0 * season + regional + local
    temp_max = temp + wx.uniform(6.0, 16.0, (n,) + shape)
    temp_min = temp - wx.uniform(8.0, 22.0, (n,) + shape)

    dryness = _ar1(wx, n, (1, 1), 0.8, 12.0)
    rh = np.clip(48.0 - 0.6 * (temp - 60.0) + 10.0 * lat_rel[None] + dryness + wx.normal(0.0, 6.0, (n,) + shape),
                 4.0, 96.0)
    rh_min = rh * wx.uniform(0.45, 0.9, (n,) + shape)
    rh_max = np.minimum(rh + wx.uniform(10.0, 35.0, (n,) + shape), 100.0)

    gust = np.exp(_ar1(wx, n, (1, 1), 0.4, 0.45))
    wind = gust * wx.gamma(2.0, 4.0, (n,) + shape)
    cloud = wx.beta(0.8, 1.2, (n,) + shape)

    wet_season = 0.5 * (1.0 - season)  # more rain in winter
    p_rain = np.clip(0.04 + 0.22 * wet_season * (annual[None] / 30.0), 0.0, 0.9)
    rain = wx.random((n,) + shape) < p_rain
    duration = np.where(rain, wx.uniform(1.0, 14.0, (n,) + shape), 0.0)

    layers = {
        "temp": temp, "temp_max": temp_max, "temp_min": temp_min,
        "rh": rh, "rh_max": rh_max, "rh_min": rh_min,
        "wind_speed": wind, "cloud_cover": cloud, "precip_duration": duration,
        "vegetation_stage": _stage(doy, green_lag),
    }
    layers.update({k: v[None].astype(np.float64) for k, v in static.items()})
    # float32 rounding is monotone, so the orderings above survive the cast
    layers = {k: v.astype(np.float32).astype(np.float64) for k, v in layers.items()}
    kinds = {k: KINDS[k] for k in layers}
    units = {k: DEFAULT_UNITS[k] for k in layers}
    return RasterStack(grid, dates, layers, kinds, units, {"seed": int(seed)})


def true_parameters(params: ParameterSet | None = None, factor: float = SHIFT_FACTOR,
                    name: str = SHIFT_PARAMETER) -> ParameterSet:
    base = params or ParameterSet.default()
    return base.with_values({name: base[name] * factor})


def _index(stack: RasterStack, params: ParameterSet) -> np.ndarray:
    inputs, valid = stack.cell_inputs()
    res = simulate(inputs, params, mode="hard", valid=valid)
    return np.asarray(res.state.ic, dtype=np.float64).reshape((stack.n_days,) + stack.grid.shape)


def generate_synthetic(grid: GridDefinition, days: int, seed: int, scenario: str = "parameter-shift",
                       start: dt.date | str = "2010-01-01", *, shift_factor: float = SHIFT_FACTOR,
                       shift_parameter: str = SHIFT_PARAMETER,
                       fire_rate: float = FIRE_RATE) -> Dataset:
    """Build a complete dataset.  Same arguments, same bytes."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    if days < 1:
        raise ValueError("days must be positive")
    dates = daily_dates(start, days)
    stack = synthetic_weather(grid, dates, seed)
    fire_rng = substream(seed, "synthetic.fire")
    shape = (days,) + grid.shape
    attrs = {"seed": int(seed), "scenario": scenario, "fire_rate": fire_rate}

    if scenario == "random":
        prob = np.full(shape, fire_rate / 2.0)
    else:
        if scenario == "parameter-shift":
            truth = true_parameters(factor=shift_factor, name=shift_parameter)
            attrs.update(perturbed_parameter=shift_parameter, shift_factor=shift_factor,
                         true_value=truth[shift_parameter],
                         default_value=ParameterSet.default()[shift_parameter])
            ic = _index(stack, truth)
            center = float(np.median(ic))
            scale = max(center, 1e-6) / FIRE_STEEPNESS
            prob = fire_rate / (1.0 + np.exp(-(ic - center) / scale))
        else:
            ic = _index(stack, ParameterSet.default())
            top = max(float(np.quantile(ic, 0.99)), 1e-6)
            prob = fire_rate * np.clip(ic / top, 0.0, 1.0) ** 2
    fire = (fire_rng.random(shape) < prob).astype(np.uint8)
    stack.attrs.update(attrs)
    stack.attrs["fire_base_rate"] = float(fire.mean())
    return Dataset(stack, FireObservationGrid(grid, dates, fire, np.ones(shape, dtype=bool)))


