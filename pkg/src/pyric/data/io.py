"""Dataset manifest, binary layer files and the CSV fixture format.

Manifest (``manifest.json``)::

    {
      "format": "pyric-dataset/1",
      "grid": {"lat": [...], "lon": [...]},
      "time": ["2010-01-01", ...],
      "byte_order": "little",
      "dtype": "float32",
      "variables": [
        {"name": "temp", "kind": "continuous", "units": "degF",
         "file": "layers/temp.f32", "static": false},
        ...
      ],
      "fire": {"file": "fire.f32"},
      "attrs": {...}
    }

Each layer file is the raw little-endian float32 array in (time, row, col)
order; static layers have a time length of 1.  NaN marks a missing value.
The fire file uses the same encoding with values 0, 1, or NaN (unobserved).

CSV fixtures hold one row per cell-day:
``date,row,col,lat,lon,<variables...>,fire`` with empty fields for missing.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import CATEGORICAL, CONTINUOUS, INPUT_VARIABLES, Dataset, FireObservationGrid, GridDefinition, RasterStack

DATASET_FORMAT = "pyric-dataset/1"
LAYER_DTYPE = np.dtype("<f4")

DEFAULT_UNITS = {
    "temp": "degF", "temp_max": "degF", "temp_min": "degF", "rh": "percent", "rh_max": "percent",
    "rh_min": "percent", "wind_speed": "mph", "cloud_cover": "fraction", "precip_duration": "hours",
    "annual_precip_mean": "inches/year", "vegetation_stage": "class", "vegetation_cover": "class",
    "slope_class": "class", "fuel_model": "class", "climate_zone": "class",
}
KINDS = {n: (CATEGORICAL if DEFAULT_UNITS[n] == "class" else CONTINUOUS) for n in DEFAULT_UNITS}


def to_fahrenheit(values: np.ndarray, units: str) -> np.ndarray:
    if units in ("degF", "F"):
        return values
    if units in ("degC", "C"):
        return values * 9.0 / 5.0 + 32.0
    if units == "K":
        return (values - 273.15) * 9.0 / 5.0 + 32.0
    raise ValueError(f"unsupported temperature units {units!r}")


def write_dataset(dataset: Dataset, directory: str | Path) -> Path:
    """Write manifest, layer files and fire file; returns the manifest path."""
    out = Path(directory)
    (out / "layers").mkdir(parents=True, exist_ok=True)
    stack = dataset.stack
    variables = []
    for name, arr in stack.layers.items():
        rel = f"layers/{name}.f32"
        np.ascontiguousarray(arr, dtype=LAYER_DTYPE).tofile(out / rel)
        variables.append({"name": name, "kind": stack.kinds[name],
                          "units": stack.units.get(name, DEFAULT_UNITS.get(name, "")),
                          "file": rel, "static": arr.shape[0] == 1})
    fire = dataset.fire.fire.astype(np.float64)
    fire[~dataset.fire.valid] = np.nan
    fire.astype(LAYER_DTYPE).tofile(out / "fire.f32")
    manifest = {
        "format": DATASET_FORMAT,
        "grid": {"lat": list(stack.grid.lat), "lon": list(stack.grid.lon)},
        "time": [d.isoformat() for d in stack.dates],
        "byte_order": "little",
        "dtype": "float32",
        "variables": variables,
        "fire": {"file": "fire.f32", "grid": {"lat": list(dataset.fire.grid.lat), "lon": list(dataset.fire.grid.lon)}},
        "attrs": stack.attrs,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=False) + "\n")
    return path


def read_dataset(manifest_path: str | Path) -> Dataset:
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    doc = json.loads(path.read_text())
    if doc.get("format") != DATASET_FORMAT:
        raise ValueError(f"{path}: not a dataset manifest")
    if doc.get("byte_order", "little") != "little" or doc.get("dtype", "float32") != "float32":
        raise ValueError(f"{path}: only little-endian float32 layers are supported")
    grid = GridDefinition(tuple(doc["grid"]["lat"]), tuple(doc["grid"]["lon"]))
    dates = tuple(doc["time"])
    base = path.parent
    layers, kinds, units = {}, {}, {}
    for var in doc["variables"]:
        t = 1 if var.get("static") else len(dates)
        raw = np.fromfile(base / var["file"], dtype=LAYER_DTYPE)
        if raw.size != t * grid.n_rows * grid.n_cols:
            raise ValueError(f"{var['file']}: expected {t * grid.n_rows * grid.n_cols} values, found {raw.size}")
        arr = raw.astype(np.float64).reshape(t, grid.n_rows, grid.n_cols)
        name, u = var["name"], var.get("units", "")
        if name in ("temp", "temp_max", "temp_min"):
            arr, u = to_fahrenheit(arr, u or "degF"), "degF"
        layers[name], kinds[name], units[name] = arr, var["kind"], u
    # observations may sit on their own grid; Dataset rejects a mismatch
    fg = doc["fire"].get("grid", doc["grid"])
    fire_grid = GridDefinition(tuple(fg["lat"]), tuple(fg["lon"]))
    raw = np.fromfile(base / doc["fire"]["file"], dtype=LAYER_DTYPE).astype(np.float64)
    if raw.size != len(dates) * fire_grid.n_rows * fire_grid.n_cols:
        raise ValueError(f"{doc['fire']['file']}: size does not match the fire grid and time axis")
    raw = raw.reshape(len(dates), fire_grid.n_rows, fire_grid.n_cols)
    valid = np.isfinite(raw)
    fire = np.where(valid, raw, 0.0)
    stack = RasterStack(grid, dates, layers, kinds, units, dict(doc.get("attrs", {})))
    return Dataset(stack, FireObservationGrid(fire_grid, dates, fire, valid))


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else repr(float(x))


def write_csv(dataset: Dataset, path: str | Path) -> None:
    stack = dataset.stack
    names = [n for n in INPUT_VARIABLES if n in stack.layers]
    full = {n: stack.layer(n) for n in names}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "row", "col", "lat", "lon", *names, "fire"])
        for t, d in enumerate(stack.dates):
            for i, lat in enumerate(stack.grid.lat):
                for j, lon in enumerate(stack.grid.lon):
                    fire = dataset.fire.fire[t, i, j] if dataset.fire.valid[t, i, j] else np.nan
                    w.writerow([d.isoformat(), i, j, repr(lat), repr(lon),
                                *(_fmt(full[n][t, i, j]) for n in names), _fmt(fire)])


def read_csv(path: str | Path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    dates = sorted({r["date"] for r in rows})
    n_rows = max(int(r["row"]) for r in rows) + 1
    n_cols = max(int(r["col"]) for r in rows) + 1
    lat = [None] * n_rows
    lon = [None] * n_cols
    names = [n for n in INPUT_VARIABLES if n in rows[0]]
    shape = (len(dates), n_rows, n_cols)
    layers = {n: np.full(shape, np.nan) for n in names}
    fire = np.full(shape, np.nan)
    t_of = {d: k for k, d in enumerate(dates)}
    for r in rows:
        t, i, j = t_of[r["date"]], int(r["row"]), int(r["col"])
        lat[i], lon[j] = float(r["lat"]), float(r["lon"])
        for n in names:
            if r[n] != "":
                layers[n][t, i, j] = float(r[n])
        if r.get("fire", "") != "":
            fire[t, i, j] = float(r["fire"])
    grid = GridDefinition(tuple(lat), tuple(lon))
    stack = RasterStack(grid, tuple(dates), layers, {n: KINDS[n] for n in names},
                        {n: DEFAULT_UNITS[n] for n in names})
    valid = np.isfinite(fire)
    return Dataset(stack, FireObservationGrid(grid, tuple(dates), np.where(valid, fire, 0.0), valid))
