"""Gridded inputs, fire observations, regridding and synthetic regions."""
from .grid import (CATEGORICAL, CLASS_CODES, CONTINUOUS, INPUT_VARIABLES, Dataset, FireObservationGrid,
                   GridDefinition, GridMismatchError, RasterStack, daily_dates)
from .io import read_csv, read_dataset, write_csv, write_dataset
from .ops import (fuzzy_contingency, fuzzy_match, parse_range, pool_fire, quantile_threshold, range_indices,
                  resample_categorical, resample_continuous, temporal_split)
from .synthetic import SCENARIOS, generate_synthetic, synthetic_weather, true_parameters

__all__ = [
    "CATEGORICAL", "CLASS_CODES", "CONTINUOUS", "INPUT_VARIABLES", "Dataset", "FireObservationGrid",
    "GridDefinition", "GridMismatchError", "RasterStack", "daily_dates", "read_csv", "read_dataset",
    "write_csv", "write_dataset", "fuzzy_contingency", "fuzzy_match", "parse_range", "pool_fire",
    "quantile_threshold", "range_indices", "resample_categorical", "resample_continuous", "temporal_split",
    "SCENARIOS", "generate_synthetic", "synthetic_weather", "true_parameters",
]
