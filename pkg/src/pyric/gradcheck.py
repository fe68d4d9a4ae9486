"""Finite-difference checks of the IC graph and the EDI loss at random points."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import GradCheckReport, grad_check
from .loss import DEFAULT_EPSILON, edi_loss
from .nfdrs import BOUNDARY_WINDOW, CellInputs, MoistureCarry, forward
from .params import ParameterSet
from .seeding import substream


class BoundaryWarning(UserWarning):
    """A random point sat too close to a branch or guard and was skipped."""


@dataclass
class CheckSummary:
    graph: str
    reports: list = field(default_factory=list)
    excluded: int = 0
    tolerance: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.reports), default=0.0)

    @property
    def passed(self) -> bool:
        return bool(self.reports) and self.max_rel_error <= self.tolerance

    def worst(self) -> GradCheckReport | None:
        return max(self.reports, key=lambda r: r.max_rel_error, default=None)


def random_cell(rng: np.random.Generator) -> tuple[CellInputs, MoistureCarry]:
    """A plausible dry-season cell-day with a matching slow-moisture carry."""
    temp = rng.uniform(55.0, 100.0)
    rh = rng.uniform(8.0, 60.0)
    rain = rng.random() < 0.2
    inputs = CellInputs(
        temp=temp, temp_max=temp + rng.uniform(4.0, 15.0), temp_min=temp - rng.uniform(5.0, 20.0),
        rh=rh, rh_max=min(rh + rng.uniform(5.0, 30.0), 100.0), rh_min=rh * rng.uniform(0.5, 0.95),
        wind_speed=rng.uniform(0.5, 25.0), cloud_cover=rng.uniform(0.0, 1.0),
        precip_duration=rng.uniform(0.5, 6.0) if rain else 0.0,
        annual_precip_mean=rng.uniform(5.0, 40.0),
        vegetation_stage=int(rng.integers(1, 5)), vegetation_cover=int(rng.integers(1, 5)),
        slope_class=int(rng.integers(1, 6)), fuel_model=int(rng.integers(1, 7)),
        climate_zone=int(rng.integers(1, 6)),
    )
    carry = MoistureCarry(rng.uniform(6.0, 25.0), rng.uniform(8.0, 30.0),
                          tuple(rng.uniform(8.0, 30.0, BOUNDARY_WINDOW - 1)))
    return inputs, carry


def boundary_margin(trace: list, step: float) -> float:
    """Smallest |x - a| over all branch points and guards, in units of ``step``.

    Below 10 the point is too close to a kink for a finite-difference
    comparison.
    """
    worst = np.inf
    for _, diff, _ in trace:
        d = np.abs(np.asarray(diff, dtype=np.float64))
        worst = min(worst, float(np.min(d)) / step)
    return worst


def check_ic_graph(params: ParameterSet, points: int = 20, seed: int = 0, step: float = 1e-5,
                   tolerance: float = 1e-4, max_tries: int = 2000) -> CheckSummary:
    """d(IC)/d(parameter) for every unfrozen parameter at random cell-days."""
    rng = substream(seed, "gradcheck.ic")
    learn = params.learnable()
    base = params.values()
    summary = CheckSummary("ic", tolerance=tolerance)
    tries = 0
    while len(summary.reports) < points:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"only {len(summary.reports)} usable points after {max_tries} draws")
        inputs, carry = random_cell(rng)
        trace: list = []
        state, _ = forward(inputs, carry, base, "smooth", trace=trace)
        if boundary_margin(trace, step) < 10.0 or not 0.0 < state.ic < 100.0:
            summary.excluded += 1
            warnings.warn(f"point {tries} is within 10 steps of a branch boundary; skipped", BoundaryWarning)
            continue

        def ic(tape, xs, inputs=inputs, carry=carry):
            coeffs = dict(base)
            coeffs.update(xs)
            return forward(inputs, carry, coeffs, "smooth", tape=tape, validate=False)[0].ic

        def ic_reference(xs, inputs=inputs, carry=carry):
            coeffs = {k: np.longdouble(v) for k, v in base.items()}
            coeffs.update(xs)
            return forward(inputs, carry, coeffs, "smooth", validate=False)[0].ic

        summary.reports.append(grad_check(ic, {n: base[n] for n in learn}, step=step, tolerance=tolerance,
                                          reference=ic_reference))
    return summary


def check_edi_loss(points: int = 20, seed: int = 0, samples: int = 40, step: float = 1e-5,
                   tolerance: float = 1e-4, beta: float = 0.5, epsilon: float = DEFAULT_EPSILON) -> CheckSummary:
    """d(loss)/d(index value) on random fixtures with fire and no-fire samples."""
    rng = substream(seed, "gradcheck.edi")
    summary = CheckSummary("edi_loss", tolerance=tolerance)
    while len(summary.reports) < points:
        obs = (rng.random(samples) < 0.3).astype(np.float64)
        if obs.sum() == 0 or obs.sum() == samples:
            summary.excluded += 1
            continue
        index = rng.uniform(0.0, 100.0, samples) + 10.0 * obs
        threshold = float(np.median(index))
        # the rates are clamped at epsilon and 1 - epsilon; stay clear of both
        p = 1.0 / (1.0 + np.exp(-beta * (index - threshold)))
        h = p[obs == 1].mean()
        f = p[obs == 0].mean()
        if min(h, f, 1.0 - h, 1.0 - f) < 10.0 * epsilon:
            summary.excluded += 1
            warnings.warn("fixture rates touch the clamp; skipped", BoundaryWarning)
            continue

        def loss(tape, xs, obs=obs, threshold=threshold):
            vals = [xs[i] for i in range(samples)]
            return edi_loss(vals, obs, threshold, beta, epsilon)

        summary.reports.append(grad_check(loss, list(index), step=step, tolerance=tolerance))
    return summary
