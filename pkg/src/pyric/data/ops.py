"""Regridding, fire pooling, fuzzy matching, thresholds and temporal splits."""
from __future__ import annotations

import datetime as dt

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import maximum_filter

from ..loss import ConfusionCounts
from .grid import Dataset, FireObservationGrid, GridDefinition


def _ascending(coords: tuple, values: np.ndarray, axis: int):
    c = np.asarray(coords, dtype=np.float64)
    if c.size > 1 and c[1] < c[0]:
        return c[::-1], np.flip(values, axis=axis)
    return c, values


def resample_continuous(layer: np.ndarray, source: GridDefinition, target: GridDefinition) -> np.ndarray:
    """Bilinear interpolation between cell centers.

    ``layer`` is (row, col) or (time, row, col).  Target centers outside the
    source hull take the value at the nearest hull point.
    """
    if source.n_rows < 2 or source.n_cols < 2:
        raise ValueError("bilinear resampling needs at least 2x2 source cells")
    arr = np.asarray(layer, dtype=np.float64)
    if source == target:
        return arr.copy()
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    values = np.moveaxis(arr, 0, -1)  # (row, col, time)
    lat, values = _ascending(source.lat, values, 0)
    lon, values = _ascending(source.lon, values, 1)
    interp = RegularGridInterpolator((lat, lon), values, method="linear")
    tl = np.clip(np.asarray(target.lat), lat[0], lat[-1])
    tc = np.clip(np.asarray(target.lon), lon[0], lon[-1])
    pts = np.stack(np.meshgrid(tl, tc, indexing="ij"), axis=-1)
    out = np.moveaxis(interp(pts), -1, 0)
    return out[0] if squeeze else out


def _nearest_index(src: tuple, tgt: tuple) -> np.ndarray:
    s = np.asarray(src, dtype=np.float64)
    d = np.abs(np.asarray(tgt, dtype=np.float64)[:, None] - s[None, :])
    return np.argmin(d, axis=1)  # first minimum: smallest index wins ties


def resample_categorical(layer: np.ndarray, source: GridDefinition, target: GridDefinition) -> np.ndarray:
    """Nearest source cell center; ties go to the smallest (row, col)."""
    arr = np.asarray(layer)
    if arr.size == 0:
        raise ValueError("empty source layer")
    ri = _nearest_index(source.lat, target.lat)
    ci = _nearest_index(source.lon, target.lon)
    return arr[..., ri[:, None], ci[None, :]]


def _containing_index(fine: tuple, coarse: tuple, step: float) -> np.ndarray:
    c = np.asarray(coarse, dtype=np.float64)
    signed = step if c.size < 2 or c[1] > c[0] else -step
    edge = c[0] - signed / 2.0
    k = np.floor((np.asarray(fine, dtype=np.float64) - edge) / signed).astype(int)
    k[(k < 0) | (k >= c.size)] = -1
    return k


def pool_fire(fine: FireObservationGrid, target: GridDefinition) -> FireObservationGrid:
    """A target cell records fire on a day if any fine cell inside it does.

    Fine cells belong to the target cell whose extent contains their center.
    Target cells that receive no valid fine cell are marked invalid.
    """
    t_dlat, t_dlon = target.resolution
    f_dlat, f_dlon = fine.grid.resolution
    if np.isnan(t_dlat) or np.isnan(t_dlon):
        raise ValueError("target grid needs at least two rows and two columns")
    if (not np.isnan(f_dlat) and f_dlat > t_dlat + 1e-12) or (not np.isnan(f_dlon) and f_dlon > t_dlon + 1e-12):
        raise ValueError("fine grid is coarser than the target grid")
    rows = _containing_index(fine.grid.lat, target.lat, t_dlat)
    cols = _containing_index(fine.grid.lon, target.lon, t_dlon)
    n_days = len(fine.dates)
    fire = np.zeros((n_days,) + target.shape, dtype=np.uint8)
    seen = np.zeros((n_days,) + target.shape, dtype=bool)
    for i, ti in enumerate(rows):
        if ti < 0:
            continue
        for j, tj in enumerate(cols):
            if tj < 0:
                continue
            ok = fine.valid[:, i, j]
            seen[:, ti, tj] |= ok
            fire[:, ti, tj] |= (fine.fire[:, i, j] & ok).astype(np.uint8)
    return FireObservationGrid(target, fine.dates, fire, seen)


def fuzzy_contingency(predictions: np.ndarray, observations: np.ndarray, radius: int = 1, valid=None):
    """Per-cell contingency flags with fuzzy hits.

    A predicted fire where none was observed counts as a hit when an
    observed fire lies within ``radius`` cells (Chebyshev distance).  Works
    on (row, col) or (time, row, col) arrays; neighborhoods never cross days.
    Returns boolean arrays ``(hit, miss, false_alarm, correct_negative)``.
    """
    if radius < 0:
        raise ValueError("radius must be non-negative")
    pred = np.asarray(predictions, dtype=bool)
    obs = np.asarray(observations, dtype=bool)
    if pred.shape != obs.shape:
        raise ValueError("predictions and observations are on different grids")
    ok = np.ones(pred.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    obs = obs & ok
    pred = pred & ok
    if radius == 0:
        near = obs
    else:
        size = [1] * (obs.ndim - 2) + [2 * radius + 1, 2 * radius + 1]
        near = maximum_filter(obs.astype(np.uint8), size=size, mode="constant", cval=0).astype(bool)
    hit = pred & near  # includes pred & obs
    false_alarm = pred & ~near
    miss = ~pred & obs
    correct_negative = ok & ~pred & ~obs
    return hit, miss, false_alarm, correct_negative


def fuzzy_match(predictions, observations, radius: int = 1, valid=None) -> ConfusionCounts:
    hit, miss, fa, cn = fuzzy_contingency(predictions, observations, radius, valid)
    return ConfusionCounts(int(hit.sum()), int(miss.sum()), int(fa.sum()), int(cn.sum()))


def quantile_threshold(index_values, q: float = 0.5) -> float:
    """Empirical quantile, linear between order statistics."""
    a = np.asarray(index_values, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError("empty series")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    return float(np.quantile(a, q))


def _as_date(d) -> dt.date:
    return d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d))


def parse_range(text: str) -> tuple[dt.date, dt.date]:
    """``"2010-01-01:2015-12-31"`` -> (start, end), both inclusive."""
    start, _, end = text.partition(":")
    if not end:
        raise ValueError(f"date range must look like START:END, got {text!r}")
    return _as_date(start), _as_date(end)


def range_indices(dates: tuple, date_range) -> tuple[int, int]:
    """Half-open index span [i, j) of the dates inside an inclusive range."""
    start, end = (_as_date(d) for d in date_range)
    if end < start:
        raise ValueError("range ends before it starts")
    idx = [k for k, d in enumerate(dates) if start <= d <= end]
    if not idx:
        raise ValueError(f"range {start}..{end} is outside the time axis")
    return idx[0], idx[-1] + 1


def temporal_split(dataset: Dataset, train_range, test_range) -> tuple[Dataset, Dataset]:
    """Date-sliced training and testing views; ranges must not overlap."""
    tr = tuple(_as_date(d) for d in train_range)
    te = tuple(_as_date(d) for d in test_range)
    if tr[0] <= te[1] and te[0] <= tr[1]:
        raise ValueError("training and testing ranges overlap")
    i0, i1 = range_indices(dataset.dates, tr)
    j0, j1 = range_indices(dataset.dates, te)
    return dataset.day_slice(i0, i1), dataset.day_slice(j0, j1)
