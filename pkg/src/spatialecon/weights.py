"""Distance-based spatial weights and row standardization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import CoincidentPointsError, InvalidInputError
from .geometry import DistanceMatrix

__all__ = [
    "KINDS",
    "KIND_ALIASES",
    "WeightsSpec",
    "SpatialWeights",
    "GuidelineHint",
    "transform",
    "row_standardize",
    "guideline_hint",
]

KINDS = (
    "connectivity",
    "inverse_distance",
    "inverse_exponential",
    "gaussian",
    "inverse_distance_thresholded",
)

# command-line spellings
KIND_ALIASES = {
    "connectivity": "connectivity",
    "idw": "inverse_distance",
    "exp": "inverse_exponential",
    "gaussian": "gaussian",
    "idw-threshold": "inverse_distance_thresholded",
}

_NEEDS_THRESHOLD = {"connectivity", "gaussian", "inverse_distance_thresholded"}
_NEEDS_GAMMA = {"inverse_distance", "inverse_distance_thresholded"}


@dataclass(frozen=True)
class WeightsSpec:
    """How a distance matrix is turned into weights.

    ``threshold`` is the cut-off distance (inclusive) and ``gamma`` the
    inverse-distance power. Parameters not used by ``kind`` must be None.
    """

    kind: str
    threshold: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        kind = KIND_ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise InvalidInputError(f"unknown weights kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        for name, required in (("threshold", _NEEDS_THRESHOLD), ("gamma", _NEEDS_GAMMA)):
            value = getattr(self, name)
            if kind in required:
                if value is None:
                    raise InvalidInputError(f"{kind} weights require {name}")
                value = float(value)
                if not np.isfinite(value) or value <= 0:
                    raise InvalidInputError(f"{name} must be a positive finite number, got {value}")
                object.__setattr__(self, name, value)
            elif value is not None:
                raise InvalidInputError(f"{kind} weights take no {name}")

    def params(self) -> dict:
        return {k: v for k, v in (("threshold", self.threshold), ("gamma", self.gamma)) if v is not None}


@dataclass(frozen=True, eq=False)
class SpatialWeights:
    """Dense n x n weights matrix with zero diagonal.

    Attributes
    ----------
    values : ndarray
        Read-only weights.
    spec : WeightsSpec or None
        Transformation that produced the matrix, None for user-supplied
        matrices.
    standardized : bool
        Whether rows have been rescaled to sum to one.
    metric : str or None
        Distance metric the matrix was derived from.
    ids : tuple or None
        Observation labels, when known.
    """

    values: np.ndarray
    spec: WeightsSpec | None = None
    standardized: bool = False
    metric: str | None = None
    ids: tuple | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InvalidInputError(f"weights must be a square matrix, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise InvalidInputError("weights must be finite")
        if (values < 0).any():
            raise InvalidInputError("weights must be nonnegative")
        if np.diagonal(values).any():
            raise InvalidInputError("weights must have a zero diagonal")
        if self.ids is not None and len(self.ids) != values.shape[0]:
            raise InvalidInputError(f"{len(self.ids)} ids for a {values.shape[0]}x{values.shape[0]} matrix")
        if self.standardized:
            rs = values.sum(axis=1)
            bad = (rs != 0) & (np.abs(rs - 1.0) > 1e-10)
            if bad.any():
                raise InvalidInputError(
                    f"matrix flagged standardized but row {int(np.flatnonzero(bad)[0])} "
                    f"sums to {rs[bad][0]!r}"
                )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def s0(self) -> float:
        return float(self.values.sum())

    @property
    def row_sums(self) -> np.ndarray:
        return self.values.sum(axis=1)

    @property
    def isolates(self) -> np.ndarray:
        """Row indices of observations without neighbours."""
        return np.flatnonzero(self.row_sums == 0)

    @property
    def isolate_ids(self) -> tuple:
        idx = self.isolates
        if self.ids is None:
            return tuple(str(i) for i in idx)
        return tuple(self.ids[i] for i in idx)

    @property
    def density(self) -> float:
        return np.count_nonzero(self.values) / self.values.size

    def lag(self, y) -> np.ndarray:
        """Spatial lag ``W @ y``."""
        return self.values @ np.asarray(y, dtype=float)

    def equals(self, other: "SpatialWeights") -> bool:
        return (
            np.array_equal(self.values, other.values)
            and self.standardized == other.standardized
            and self.spec == other.spec
            and self.metric == other.metric
        )


def transform(d: DistanceMatrix, spec: WeightsSpec) -> SpatialWeights:
    """Turn distances into weights that grow as locations get closer.

    Parameters
    ----------
    d : DistanceMatrix
    spec : WeightsSpec

    Returns
    -------
    SpatialWeights
        Unstandardized weights; the diagonal is always zero.

    Raises
    ------
    CoincidentPointsError
        For inverse-distance kinds when two distinct observations are at
        distance zero.
    """
    dist = np.asarray(d.values, dtype=float)
    n = dist.shape[0]
    off = ~np.eye(n, dtype=bool)
    kind = spec.kind

    if kind in _NEEDS_GAMMA:
        zero = np.argwhere((dist == 0) & off)
        if len(zero):
            i, j = sorted(zero[0])
            raise CoincidentPointsError(int(i), int(j), d.ids)

    within = dist <= spec.threshold if spec.threshold is not None else np.ones_like(off)
    mask = off & within
    w = np.zeros_like(dist)
    if kind == "connectivity":
        w[mask] = 1.0
    elif kind in ("inverse_distance", "inverse_distance_thresholded"):
        w[mask] = dist[mask] ** -spec.gamma
    elif kind == "inverse_exponential":
        w[mask] = np.exp(-dist[mask])
    elif kind == "gaussian":
        w[mask] = (1.0 - (dist[mask] / spec.threshold) ** 2) ** 2
    return SpatialWeights(w, spec=spec, standardized=False, metric=d.metric, ids=d.ids)


def row_standardize(w: SpatialWeights) -> SpatialWeights:
    """Rescale every row to sum to one.

    Rows without neighbours stay zero; they are reported through
    :attr:`SpatialWeights.isolates` on the result.
    """
    if w.standardized:
        warnings.warn("weights are already row-standardized; re-normalizing", stacklevel=2)
    values = np.array(w.values)
    rs = values.sum(axis=1)
    nz = rs > 0
    values[nz] /= rs[nz, None]
    return replace(w, values=values, standardized=True)


@dataclass(frozen=True)
class GuidelineHint:
    recommended: str
    text: str


def guideline_hint(large_region: bool | None = None, local_influence: bool = False) -> GuidelineHint:
    """Suggest a weights kind from the study design.

    Purely advisory. The large/small region call is left to the user
    because no numeric cut-off exists.

    Parameters
    ----------
    large_region : bool or None
        True for a large study region, False for a small one, None if
        unspecified.
    local_influence : bool
        Whether neighbours are expected to matter only at short range.
        Takes precedence over the region size.
    """
    if local_influence:
        kind = "connectivity"
        why = "influence expected mainly at short range: binary connectivity within a threshold"
    elif large_region is True:
        kind = "inverse_distance"
        why = "large study region: inverse-distance weights"
    elif large_region is False:
        kind = "inverse_exponential"
        why = "small study region: inverse-exponential weights"
    else:
        kind = "connectivity"
        why = "no region size given; connectivity is a neutral starting point"
    lines = [
        f"suggested transform: {kind} ({why}) [Chen 2013]",
        "threshold choice: when unsure, err on the small side; an under-estimated "
        "cut-off distance does less damage than an over-estimated one [Griffith 1996]",
    ]
    return GuidelineHint(kind, "\n".join(lines))
