import numpy as np
import pytest

from spatialecon.geometry import PointSet, build_distance_matrix
from spatialecon.weights import WeightsSpec, row_standardize, transform


def grid_points(rows, cols, **variables):
    r, c = np.divmod(np.arange(rows * cols), cols)
    coords = np.column_stack([c, r]).astype(float)
    return PointSet([f"s{i}" for i in range(rows * cols)], coords, variables)


def rook_weights(rows, cols, standardize=True):
    pts = grid_points(rows, cols)
    w = transform(build_distance_matrix(pts), WeightsSpec("connectivity", threshold=1.0))
    return row_standardize(w) if standardize else w


def checkerboard(rows, cols):
    r, c = np.divmod(np.arange(rows * cols), cols)
    return np.where((r + c) % 2 == 0, 1.0, -1.0)


def random_weights(rng, n, kind=None, standardize=True, extent=10.0):
    """Random point pattern turned into weights of a randomly chosen kind."""
    coords = rng.uniform(0, extent, size=(n, 2))
    kinds = [
        WeightsSpec("connectivity", threshold=2.5),
        WeightsSpec("inverse_distance", gamma=1.0),
        WeightsSpec("inverse_exponential"),
        WeightsSpec("gaussian", threshold=3.0),
        WeightsSpec("inverse_distance_thresholded", threshold=3.0, gamma=2.0),
    ]
    spec = kinds[rng.integers(len(kinds))] if kind is None else kind
    w = transform(build_distance_matrix(coords), spec)
    return row_standardize(w) if standardize else w


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def rook4():
    return rook_weights(4, 4)
