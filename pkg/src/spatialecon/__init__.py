"""Spatial weights, Moran statistics and spatial autoregressive models."""

__version__ = "0.1.0"

from .autocorr import (
    global_moran,
    lisa_test,
    local_moran,
    moran_moments,
    moran_test,
    permutation_test,
)
from .errors import InputError, NumericalError, SpatialError
from .geometry import DistanceMatrix, PointSet, build_distance_matrix, distance
from .models import ModelSpec, fit, lr_test, marginal_effects, wald_test
from .weights import SpatialWeights, WeightsSpec, guideline_hint, row_standardize, transform

__all__ = [
    "__version__",
    "PointSet",
    "DistanceMatrix",
    "SpatialWeights",
    "WeightsSpec",
    "ModelSpec",
    "SpatialError",
    "InputError",
    "NumericalError",
    "distance",
    "build_distance_matrix",
    "transform",
    "row_standardize",
    "guideline_hint",
    "global_moran",
    "moran_moments",
    "moran_test",
    "local_moran",
    "lisa_test",
    "permutation_test",
    "fit",
    "marginal_effects",
    "lr_test",
    "wald_test",
]
