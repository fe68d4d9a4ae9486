"""Differentiable NFDRS ignition component with EDI-driven calibration."""
from .autodiff import Tape, Var, backward, grad_check
from .nfdrs import CellInputs, IntermediateState, MoistureCarry, forward
from .params import ParameterSet
from .smoothing import SmoothBranchParams, smooth_branch

__version__ = "0.1.0"

__all__ = [
    "Tape", "Var", "backward", "grad_check",
    "CellInputs", "IntermediateState", "MoistureCarry", "forward",
    "ParameterSet", "SmoothBranchParams", "smooth_branch",
]
