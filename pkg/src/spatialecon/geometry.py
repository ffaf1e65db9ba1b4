"""Observation locations and pairwise planar distances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidInputError, TooFewObservationsError

__all__ = [
    "METRICS",
    "PointSet",
    "DistanceMatrix",
    "distance",
    "build_distance_matrix",
]

METRICS = ("euclidean", "manhattan")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointSet:
    """Labelled planar locations with attached numeric columns.

    Parameters
    ----------
    ids : sequence of str
        Unique observation labels.
    coords : array_like, shape (n, 2)
        Planar ``(x, y)`` coordinates, already projected.
    variables : mapping of str to array_like
        Named numeric columns, one value per observation. Insertion order
        is preserved.
    """

    ids: tuple
    coords: np.ndarray
    variables: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        coords = _frozen(self.coords)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise InvalidInputError(f"coords must have shape (n, 2), got {coords.shape}")
        n = coords.shape[0]
        if len(ids) != n:
            raise InvalidInputError(f"{len(ids)} ids for {n} coordinate pairs")
        if n < 2:
            raise TooFewObservationsError(f"need at least 2 observations, got {n}")
        if len(set(ids)) != n:
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise InvalidInputError(f"duplicate observation id {dup!r}")
        if not np.isfinite(coords).all():
            raise InvalidInputError("coordinates must be finite")
        variables = {}
        for name, col in dict(self.variables).items():
            col = _frozen(col)
            if col.shape != (n,):
                raise InvalidInputError(
                    f"variable {name!r} has shape {col.shape}, expected ({n},)"
                )
            if not np.isfinite(col).all():
                raise InvalidInputError(f"variable {name!r} has non-finite values")
            variables[name] = col
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "variables", variables)

    @property
    def n(self) -> int:
        return len(self.ids)

    def __len__(self):
        return self.n

    def __getitem__(self, name) -> np.ndarray:
        try:
            return self.variables[name]
        except KeyError:
            raise InvalidInputError(
                f"unknown variable {name!r}; available: {', '.join(self.variables) or 'none'}"
            ) from None

    def with_variables(self, **columns) -> "PointSet":
        """Return a copy with extra (or replaced) variable columns."""
        merged = dict(self.variables)
        merged.update(columns)
        return PointSet(self.ids, self.coords, merged)

    def equals(self, other: "PointSet") -> bool:
        """Exact (bitwise) equality of ids, coordinates and every column."""
        if self.ids != other.ids or list(self.variables) != list(other.variables):
            return False
        if not np.array_equal(self.coords, other.coords):
            return False
        return all(np.array_equal(self.variables[k], other.variables[k]) for k in self.variables)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    metric: str
    values: np.ndarray
    ids: tuple | None = None

    @property
    def n(self) -> int:
        return self.values.shape[0]


def distance(p: Sequence[float], q: Sequence[float], metric: str = "euclidean") -> float:
    """Distance between two planar points.

    >>> distance((0, 0), (3, 4))
    5.0
    >>> distance((0, 0), (3, 4), "manhattan")
    7.0
    """
    xi, yi = float(p[0]), float(p[1])
    xj, yj = float(q[0]), float(q[1])
    if not all(math.isfinite(v) for v in (xi, yi, xj, yj)):
        raise InvalidInputError("coordinates must be finite")
    dx = xi - xj
    dy = yi - yj
    if metric == "euclidean":
        return math.sqrt(dy * dy + dx * dx)
    if metric == "manhattan":
        return abs(dy) + abs(dx)
    raise InvalidInputError(f"unknown metric {metric!r}; expected one of {METRICS}")


def build_distance_matrix(points: PointSet | np.ndarray, metric: str = "euclidean") -> DistanceMatrix:
    """Full pairwise distance matrix.

    The arithmetic mirrors :func:`distance` operation for operation so the
    vectorised result is bitwise identical to a pairwise loop.

    Parameters
    ----------
    points : PointSet or array_like, shape (n, 2)
    metric : {'euclidean', 'manhattan'}
    """
    if isinstance(points, PointSet):
        coords, ids = points.coords, points.ids
    else:
        coords, ids = np.asarray(points, dtype=float), None
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise InvalidInputError(f"coords must have shape (n, 2), got {coords.shape}")
        if not np.isfinite(coords).all():
            raise InvalidInputError("coordinates must be finite")
    n = coords.shape[0]
    if n < 2:
        raise TooFewObservationsError(f"need at least 2 observations, got {n}")
    if metric not in METRICS:
        raise InvalidInputError(f"unknown metric {metric!r}; expected one of {METRICS}")

    dx = coords[:, 0][:, None] - coords[:, 0][None, :]
    dy = coords[:, 1][:, None] - coords[:, 1][None, :]
    if metric == "euclidean":
        values = np.sqrt(dy * dy + dx * dx)
    else:
        values = np.abs(dy) + np.abs(dx)
    values.setflags(write=False)
    return DistanceMatrix(metric, values, ids)
