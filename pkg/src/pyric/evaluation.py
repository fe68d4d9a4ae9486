"""Test-period skill maps, difference maps and report files."""
from __future__ import annotations

import csv
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data.grid import Dataset, GridDefinition, GridMismatchError
from .data.ops import fuzzy_contingency, quantile_threshold
from .loss import DEFAULT_EPSILON, ConfusionCounts, EdiScore, edi
from .nfdrs import simulate
from .params import ParameterSet

REPORT_COLUMNS = ("row", "col", "lat", "lon", "hits", "misses", "false_alarms", "correct_negatives",
                  "fire_days", "H", "F", "EDI", "degenerate", "floored")
DIFF_COLUMNS = ("row", "col", "lat", "lon", "edi_trained", "edi_untrained", "delta", "flagged")


def hard_index(data: Dataset, params: ParameterSet) -> tuple[np.ndarray, np.ndarray]:
    """Hard-mode IC shaped (days, rows, cols) and the usable-cell mask."""
    inputs, valid = data.stack.cell_inputs()
    shape = (data.stack.n_days,) + data.grid.shape
    res = simulate(inputs, params, "hard", valid)
    ok = valid.reshape(shape) & data.fire.valid
    return np.asarray(res.state.ic).reshape(shape), ok


def training_threshold(train_data: Dataset, params: ParameterSet, q: float = 0.5) -> float:
    """Forecast threshold from training-period IC only."""
    ic, ok = hard_index(train_data, params)
    return quantile_threshold(ic[ok], q)


@dataclass
class SkillReport:
    grid: GridDefinition
    hits: np.ndarray
    misses: np.ndarray
    false_alarms: np.ndarray
    correct_negatives: np.ndarray
    fire_days: np.ndarray
    h: np.ndarray
    f: np.ndarray
    edi: np.ndarray  # NaN where degenerate
    degenerate: np.ndarray
    floored: np.ndarray
    aggregate: EdiScore
    metadata: dict = field(default_factory=dict)

    def totals(self) -> ConfusionCounts:
        return ConfusionCounts(int(self.hits.sum()), int(self.misses.sum()), int(self.false_alarms.sum()),
                               int(self.correct_negatives.sum()))

    def summary(self) -> dict:
        scored = ~self.degenerate
        return {
            "kind": "skill",
            "aggregate_edi": self.aggregate.value,
            "aggregate_h": self.aggregate.h,
            "aggregate_f": self.aggregate.f,
            "cells": int(self.degenerate.size),
            "cells_scored": int(scored.sum()),
            "mean_cell_edi": float(np.mean(self.edi[scored])) if scored.any() else None,
            "counts": vars(self.totals()),
            **self.metadata,
        }


def _cell_scores(counts: ConfusionCounts, fire_days: int, epsilon: float):
    if fire_days == 0 or counts.false_alarms + counts.correct_negatives == 0:
        return np.nan, np.nan, np.nan, True, False
    s = edi(counts, epsilon)
    return s.h, s.f, s.value, False, s.degenerate


def evaluate_region(test_data: Dataset, params: ParameterSet, threshold: float, fuzzy_radius: int = 1, *,
                    epsilon: float = DEFAULT_EPSILON, metadata: dict | None = None) -> SkillReport:
    """Per-cell and pooled EDI of ``IC > threshold`` against observed fire.

    ``threshold`` must come from training data (see :func:`training_threshold`).
    A predicted fire next to an observed one (within ``fuzzy_radius`` cells on
    the same day) counts as a hit.  Cells without observed fire are flagged
    degenerate and left unscored.
    """
    if test_data.stack.n_days == 0:
        raise ValueError("empty test range")
    ic, ok = hard_index(test_data, params)
    hit, miss, fa, cn = fuzzy_contingency(ic > threshold, test_data.fire.fire.astype(bool), fuzzy_radius, ok)
    counts = [a.sum(axis=0).astype(np.int64) for a in (hit, miss, fa, cn)]
    fire_days = (test_data.fire.fire.astype(bool) & ok).sum(axis=0).astype(np.int64)
    shape = test_data.grid.shape
    h, f, e = (np.full(shape, np.nan) for _ in range(3))
    degenerate = np.zeros(shape, dtype=bool)
    floored = np.zeros(shape, dtype=bool)
    for i in range(shape[0]):
        for j in range(shape[1]):
            c = ConfusionCounts(*(int(a[i, j]) for a in counts))
            h[i, j], f[i, j], e[i, j], degenerate[i, j], floored[i, j] = _cell_scores(c, int(fire_days[i, j]),
                                                                                    epsilon)
    total = ConfusionCounts(*(int(a.sum()) for a in counts))
    meta = {
        "ledger_digest": params.digest(),
        "threshold": float(threshold),
        "fuzzy_radius": int(fuzzy_radius),
        "date_range": [test_data.dates[0].isoformat(), test_data.dates[-1].isoformat()],
        "epsilon": epsilon,
    }
    meta.update(metadata or {})
    return SkillReport(test_data.grid, *counts, fire_days, h, f, e, degenerate, floored, edi(total, epsilon), meta)


@dataclass
class DiffMap:
    grid: GridDefinition
    trained: np.ndarray
    untrained: np.ndarray
    delta: np.ndarray  # NaN where flagged
    flagged: np.ndarray
    aggregate_delta: float
    metadata: dict = field(default_factory=dict)

    def summary(self) -> dict:
        ok = ~self.flagged
        return {
            "kind": "difference",
            "aggregate_delta": self.aggregate_delta,
            "cells": int(self.flagged.size),
            "cells_scored": int(ok.sum()),
            "mean_cell_delta": float(np.mean(self.delta[ok])) if ok.any() else None,
            "cells_improved": int(np.sum(self.delta[ok] > 0)),
            "cells_worse": int(np.sum(self.delta[ok] < 0)),
            **self.metadata,
        }


def diff_report(trained: SkillReport, untrained: SkillReport) -> DiffMap:
    """Cell-wise trained minus untrained EDI; degenerate cells in either are flagged."""
    if trained.grid != untrained.grid:
        raise GridMismatchError("reports are on different grids")
    for key in ("date_range", "fuzzy_radius"):
        if trained.metadata.get(key) != untrained.metadata.get(key):
            raise GridMismatchError(f"reports differ in {key}")
    flagged = trained.degenerate | untrained.degenerate
    delta = np.where(flagged, np.nan, trained.edi - untrained.edi)
    meta = {
        "trained": trained.summary(),
        "untrained": untrained.summary(),
        "date_range": trained.metadata.get("date_range"),
        "fuzzy_radius": trained.metadata.get("fuzzy_radius"),
    }
    return DiffMap(trained.grid, trained.edi.copy(), untrained.edi.copy(), delta, flagged,
                   trained.aggregate.value - untrained.aggregate.value, meta)


# --- files ---------------------------------------------------------------------

def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "" if not np.isfinite(x) else repr(float(x))


def write_report_csv(report: SkillReport | DiffMap, path: str | Path) -> None:
    g = report.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(report, SkillReport):
            w.writerow(REPORT_COLUMNS)
            cols = (report.hits, report.misses, report.false_alarms, report.correct_negatives, report.fire_days,
                    report.h, report.f, report.edi, report.degenerate, report.floored)
        else:
            w.writerow(DIFF_COLUMNS)
            cols = (report.trained, report.untrained, report.delta, report.flagged)
        for i in range(g.n_rows):
            for j in range(g.n_cols):
                w.writerow([i, j, repr(g.lat[i]), repr(g.lon[j]), *(_num(c[i, j]) for c in cols)])


def read_report_csv(path: str | Path) -> list[dict]:
    """Rows of a report CSV with numbers parsed; empty fields become NaN."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (float(v) if v != "" else float("nan")) for k, v in r.items()} for r in rows]


# Diverging colormap: linear blue -> white -> red through these anchors (sRGB 0-255).
COLOR_LOW = (59, 76, 192)
COLOR_MID = (247, 247, 247)
COLOR_HIGH = (180, 4, 38)
COLOR_MISSING = (160, 160, 160)


def colorize(values: np.ndarray, vmax: float) -> np.ndarray:
    """Map values in [-vmax, vmax] to RGB; NaN becomes gray."""
    t = np.clip(np.nan_to_num(values, nan=0.0) / vmax, -1.0, 1.0)
    lo, mid, hi = (np.array(c, dtype=np.float64) for c in (COLOR_LOW, COLOR_MID, COLOR_HIGH))
    w = np.abs(t)[..., None]
    end = np.where((t < 0)[..., None], lo, hi)
    rgb = np.rint(mid * (1.0 - w) + end * w).astype(np.uint8)
    rgb[np.isnan(values)] = COLOR_MISSING
    return rgb


def _chunk(kind: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF)


def write_png(rgb: np.ndarray, path: str | Path) -> None:
    """Minimal 8-bit RGB PNG writer; output bytes depend only on the pixels."""
    h, w, _ = rgb.shape
    raw = b"".join(b"\x00" + rgb[r].tobytes() for r in range(h))
    png = (b"\x89PNG\r\n\x1a\n" + _chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))
           + _chunk(b"IDAT", zlib.compress(raw, 9)) + _chunk(b"IEND", b""))
    Path(path).write_bytes(png)


def heatmap(values: np.ndarray, grid: GridDefinition, symmetric_scale: bool, cell_px: int = 16) -> np.ndarray:
    if symmetric_scale:
        finite = np.abs(values[np.isfinite(values)])
        vmax = float(finite.max()) if finite.size and finite.max() > 0 else 1.0
    else:
        vmax = 1.0  # EDI lives in [-1, 1]
    img = colorize(values, vmax)
    if len(grid.lat) > 1 and grid.lat[1] > grid.lat[0]:
        img = img[::-1]  # north up
    return np.repeat(np.repeat(img, cell_px, axis=0), cell_px, axis=1)


def render(report: SkillReport | DiffMap, out_dir: str | Path) -> dict[str, Path]:
    """Write ``report.csv``, ``map.png`` and ``summary.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.csv", "map": out / "map.png", "summary": out / "summary.json"}
    write_report_csv(report, paths["report"])
    if isinstance(report, SkillReport):
        write_png(heatmap(report.edi, report.grid, symmetric_scale=False), paths["map"])
    else:
        write_png(heatmap(report.delta, report.grid, symmetric_scale=True), paths["map"])
    paths["summary"].write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
    return paths
