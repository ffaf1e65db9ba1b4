"""Synthetic data from the spatial model families, and recovery studies.

Random numbers come from ``numpy.random.default_rng(seed)`` (PCG64 bit
generator seeded through SeedSequence); normal variates use numpy's
ziggurat ``Generator.standard_normal``. Draw order is fixed: layout
coordinates (random layouts only), then the n x K regressor matrix in
row-major order, then the n errors.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy import stats

from . import models
from .errors import InvalidInputError, SpatialError
from .geometry import PointSet, build_distance_matrix
from .weights import SpatialWeights, WeightsSpec, row_standardize, transform

__all__ = [
    "RNG_DESCRIPTION",
    "RESPONSE",
    "Lattice",
    "UniformRandom",
    "DgpSpec",
    "SimulatedData",
    "RecoveryTable",
    "generate",
    "recovery_experiment",
]

RNG_DESCRIPTION = "numpy Generator(PCG64) via default_rng(seed); standard_normal (ziggurat)"
RESPONSE = "outcome"
DGP_FAMILIES = ("slx", "sar", "sem", "sdm")


@dataclass(frozen=True)
class Lattice:
    rows: int
    cols: int
    spacing: float = 1.0

    @property
    def n(self) -> int:
        return self.rows * self.cols

    def coords(self, rng=None) -> np.ndarray:
        r, c = np.divmod(np.arange(self.n), self.cols)
        return np.column_stack([c, r]).astype(float) * self.spacing


@dataclass(frozen=True)
class UniformRandom:
    n: int
    extent: float = 1.0

    def coords(self, rng) -> np.ndarray:
        return rng.uniform(0.0, self.extent, size=(self.n, 2))


@dataclass(frozen=True)
class DgpSpec:
    """A data generating process with known parameters.

    ``beta`` holds the intercept followed by one slope per regressor;
    ``gamma`` (slx, sdm) one coefficient per lagged regressor.
    """

    family: str
    beta: tuple = (1.0, 2.0)
    gamma: tuple | None = None
    rho: float = 0.0
    lam: float = 0.0
    sigma: float = 1.0
    layout: Lattice | UniformRandom = Lattice(20, 20)
    seed: int = 0

    def __post_init__(self):
        if self.family not in DGP_FAMILIES:
            raise InvalidInputError(f"unknown DGP family {self.family!r}; expected one of {DGP_FAMILIES}")
        beta = tuple(float(b) for b in self.beta)
        if len(beta) < 2:
            raise InvalidInputError("beta needs an intercept and at least one slope")
        object.__setattr__(self, "beta", beta)
        k = len(beta) - 1
        if self.family in ("slx", "sdm"):
            if self.gamma is None or len(self.gamma) != k:
                raise InvalidInputError(f"{self.family} needs {k} gamma value(s)")
            object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        elif self.gamma is not None:
            raise InvalidInputError(f"{self.family} takes no gamma")
        lo, hi = models.SPATIAL_BOUNDS
        for name in ("rho", "lam"):
            v = getattr(self, name)
            if not lo < v < hi:
                raise InvalidInputError(f"{name} must lie in {models.SPATIAL_BOUNDS}, got {v}")
        if self.family not in ("sar", "sdm") and self.rho != 0:
            raise InvalidInputError(f"{self.family} takes no rho")
        if self.family != "sem" and self.lam != 0:
            raise InvalidInputError(f"{self.family} takes no lambda")
        if not self.sigma > 0 or not math.isfinite(self.sigma):
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")
        if self.layout.n < 9:
            raise InvalidInputError(f"need at least 9 locations, got {self.layout.n}")

    @property
    def k(self) -> int:
        return len(self.beta) - 1

    @property
    def regressors(self) -> tuple:
        return tuple(f"x{j + 1}" for j in range(self.k))

    def truth(self) -> dict:
        """True parameter values keyed by the names a fit reports."""
        out = {"const": self.beta[0]}
        out.update(zip(self.regressors, self.beta[1:]))
        if self.gamma is not None:
            out.update((f"W_{r}", g) for r, g in zip(self.regressors, self.gamma))
        if self.family in ("sar", "sdm"):
            out["rho"] = self.rho
        elif self.family == "sem":
            out["lambda"] = self.lam
        return out

    def model_spec(self, weights: SpatialWeights) -> models.ModelSpec:
        return models.ModelSpec(self.family, RESPONSE, self.regressors, weights)


@dataclass(frozen=True, eq=False)
class SimulatedData:
    points: PointSet
    weights: SpatialWeights
    truth: dict
    dgp: DgpSpec
    rng: str = RNG_DESCRIPTION


DEFAULT_WEIGHTS = WeightsSpec("connectivity", threshold=1.0)


def lattice_weights(layout: Lattice, weights_spec: WeightsSpec | None = None, standardize: bool = True):
    """Weights for a lattice layout, identical to what :func:`generate` builds."""
    w = transform(build_distance_matrix(layout.coords(), "euclidean"), weights_spec or DEFAULT_WEIGHTS)
    if standardize:
        w = row_standardize(w)
    return replace(w, ids=tuple(str(i) for i in range(layout.n)))


def _solve(A, b):
    return sla.solve(A, b, check_finite=False)


def generate(
    dgp: DgpSpec,
    weights_spec: WeightsSpec | None = None,
    standardize: bool = True,
    weights: SpatialWeights | None = None,
) -> SimulatedData:
    """Draw one data set from ``dgp``.

    Parameters
    ----------
    dgp : DgpSpec
    weights_spec : WeightsSpec, optional
        Defaults to connectivity within distance 1 (rook neighbours on a
        unit lattice).
    standardize : bool
        Row-standardize the weights (required by sar, sem, sdm fits).
    weights : SpatialWeights, optional
        Reuse a prebuilt matrix for the layout instead of rebuilding it;
        only valid for lattice layouts.
    """
    rng = np.random.default_rng(dgp.seed)
    coords = dgp.layout.coords(rng)
    n = len(coords)
    ids = tuple(str(i) for i in range(n))
    if weights is None:
        d = build_distance_matrix(coords, "euclidean")
        w = transform(d, weights_spec or DEFAULT_WEIGHTS)
        if standardize:
            w = row_standardize(w)
        w = replace(w, ids=ids)
    else:
        if not isinstance(dgp.layout, Lattice) or weights.n != n:
            raise InvalidInputError("prebuilt weights only apply to a lattice layout of the same size")
        w = weights
    W = w.values

    x = rng.standard_normal((n, dgp.k))
    eps = dgp.sigma * rng.standard_normal(n)
    beta = np.asarray(dgp.beta)
    mean = beta[0] + x @ beta[1:]
    if dgp.gamma is not None:
        mean = mean + W @ (x @ np.asarray(dgp.gamma))

    if dgp.family == "slx":
        y = mean + eps
    elif dgp.family == "sem":
        u = eps if dgp.lam == 0 else _solve(np.eye(n) - dgp.lam * W, eps)
        y = mean + u
    else:
        y = mean + eps
        if dgp.rho != 0:
            y = _solve(np.eye(n) - dgp.rho * W, y)

    variables = {RESPONSE: y}
    variables.update((name, x[:, j]) for j, name in enumerate(dgp.regressors))
    points = PointSet(ids, coords, variables)
    return SimulatedData(points, w, dgp.truth(), dgp)


@dataclass(frozen=True, eq=False)
class RecoveryTable:
    """Bias, RMSE and 95% interval coverage per parameter over seeds."""

    dgp: DgpSpec
    seeds: tuple
    rows: list
    estimates: dict = field(repr=False)
    std_errors: dict = field(repr=False)
    failures: list = field(default_factory=list)

    def row(self, name: str) -> dict:
        for r in self.rows:
            if r["parameter"] == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "family": self.dgp.family,
            "n": self.dgp.layout.n,
            "seeds": [int(s) for s in self.seeds],
            "rng": RNG_DESCRIPTION,
            "parameters": self.rows,
            "failures": [{"seed": s, "error": msg} for s, msg in self.failures],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["parameter", "truth", "mean", "bias", "rmse", "mean_abs_error", "coverage", "fits"]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({c: repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols})
        return buf.getvalue()


def recovery_experiment(
    dgp: DgpSpec,
    seeds: int = 100,
    weights_spec: WeightsSpec | None = None,
    level: float = 0.95,
) -> RecoveryTable:
    """Fit the matching model to ``seeds`` replications of ``dgp``.

    Replication ``s`` uses seed ``dgp.seed + s``. A fit that raises is
    recorded in ``failures`` and left out of the aggregates.
    """
    if seeds < 20:
        raise InvalidInputError(f"need at least 20 seeds, got {seeds}")
    crit = float(stats.norm.ppf(0.5 + level / 2))
    truth = dgp.truth()
    est = {k: [] for k in truth}
    ses = {k: [] for k in truth}
    failures = []
    shared = None
    if isinstance(dgp.layout, Lattice):
        shared = lattice_weights(dgp.layout, weights_spec)
    used = []
    for s in range(seeds):
        seed = dgp.seed + s
        try:
            data = generate(replace(dgp, seed=seed), weights_spec, weights=shared)
            f = models.fit(dgp.model_spec(data.weights), data.points, diagnostics=False)
        except SpatialError as exc:
            failures.append((seed, f"{type(exc).__name__}: {exc}"))
            continue
        used.append(seed)
        params, errs = f.params(), f.std_errors()
        for k in truth:
            est[k].append(params[k])
            ses[k].append(errs[k])

    rows = []
    for k, t in truth.items():
        e = np.asarray(est[k])
        s = np.asarray(ses[k])
        if len(e) == 0:
            rows.append({"parameter": k, "truth": t, "mean": math.nan, "bias": math.nan,
                         "rmse": math.nan, "mean_abs_error": math.nan, "coverage": math.nan, "fits": 0})
            continue
        rows.append({
            "parameter": k,
            "truth": t,
            "mean": float(e.mean()),
            "bias": float(e.mean() - t),
            "rmse": float(np.sqrt(np.mean((e - t) ** 2))),
            "mean_abs_error": float(np.mean(np.abs(e - t))),
            "coverage": float(np.mean(np.abs(e - t) <= crit * s)),
            "fits": int(len(e)),
        })
    return RecoveryTable(
        dgp=dgp,
        seeds=tuple(used),
        rows=rows,
        estimates={k: np.asarray(v) for k, v in est.items()},
        std_errors={k: np.asarray(v) for k, v in ses.items()},
        failures=failures,
    )
