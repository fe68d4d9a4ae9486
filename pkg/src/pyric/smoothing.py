"""Differentiable relaxation of ``if x < a then y else z``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Var, sigmoid, value_of, where


@dataclass(frozen=True)
class SmoothBranchParams:
    """Sharpness of one branch site.

    ``alpha`` may be a tape node (learnable) or a plain positive number.
    In ``hard_mode`` the exact discrete branch is taken instead of the blend.
    """

    alpha: float | Var = 1.0
    hard_mode: bool = False

    def __post_init__(self):
        a = value_of(self.alpha)
        if not np.all(np.asarray(a) > 0.0):
            raise ValueError(f"branch sharpness must be positive, got {a!r}")


def smooth_branch(x, a, y, z, params: SmoothBranchParams = SmoothBranchParams()):
    """Blend ``y`` (taken when x < a) and ``z`` (otherwise).

    Smooth mode returns ``sigmoid((x - a) * alpha) * (z - y) + y``.
    Hard mode returns exactly y for x < a and exactly z for x >= a, so a tie
    goes to ``z``.
    """
    if params.hard_mode:
        return where(value_of(x) < value_of(a), y, z)
    return sigmoid((x - a) * params.alpha) * (z - y) + y
