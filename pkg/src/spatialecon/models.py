"""Spatial regression models fitted by (concentrated) maximum likelihood.

Families
--------
ols  y = X b + e                         (no spatial terms; nesting baseline)
slx  y = X b + W X g + e
sar  y = rho W y + X b + e
sem  y = X b + u,  u = lam W u + e
sdm  y = rho W y + X b + W X g + e

For sar, sem and sdm the error variance and the regression coefficients
are concentrated out, leaving a one-dimensional search over the spatial
parameter on (-0.999, 0.999). The search evaluates a 40 point grid and
refines the best bracket by golden-section search.
"""

from __future__ import annotations

import math
import warnings
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import sparse, stats
from scipy.sparse.linalg import splu

from . import autocorr
from .errors import (
    BoundarySolutionError,
    CollinearityError,
    EmptyWeightsError,
    IllConditionedInformationError,
    InvalidComparisonError,
    InvalidInputError,
    SampleTooSmallError,
    SingularSystemError,
    ZeroVarianceError,
)
from .geometry import PointSet
from .weights import SpatialWeights

__all__ = [
    "FAMILIES",
    "SPATIAL_BOUNDS",
    "ModelSpec",
    "ModelFit",
    "Effects",
    "ResidualDiagnostics",
    "ChiSquareTest",
    "LogDet",
    "fit",
    "fit_ols",
    "fit_slx",
    "fit_sar",
    "fit_sem",
    "fit_sdm",
    "loglik_at",
    "reduced_form",
    "marginal_effects",
    "residual_diagnostics",
    "lr_test",
    "wald_test",
]

FAMILIES = ("ols", "slx", "sar", "sem", "sdm")
SPATIAL_BOUNDS = (-0.999, 0.999)
GRID_POINTS = 40
GOLDEN_TOL = 1e-7
BOUNDARY_TOL = 1e-6
DIAG_ALPHA = 0.05
MEAN_ZERO_TOL = 1e-8

_LAGGED_X = {"slx", "sdm"}
_LAGGED_Y = {"sar", "sdm"}
_SPATIAL = {"sar", "sem", "sdm"}
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """What to fit.

    Parameters
    ----------
    family : {'ols', 'slx', 'sar', 'sem', 'sdm'}
    response : str
        Name of the dependent variable in the PointSet.
    regressors : sequence of str
        Explanatory variables, in output order.
    weights : SpatialWeights, optional
        Required for every family except ols; must be row-standardized
        for sar, sem and sdm.
    intercept : bool
    """

    family: str
    response: str
    regressors: tuple
    weights: SpatialWeights | None = None
    intercept: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown model family {self.family!r}; expected one of {FAMILIES}")
        regressors = tuple(self.regressors)
        if not regressors:
            raise InvalidInputError("at least one regressor is required")
        if len(set(regressors)) != len(regressors):
            raise InvalidInputError("regressor names must be unique")
        if self.response in regressors:
            raise InvalidInputError(f"response {self.response!r} is also listed as a regressor")
        object.__setattr__(self, "regressors", regressors)
        if self.family != "ols":
            if self.weights is None:
                raise InvalidInputError(f"{self.family} models need a weights matrix")
            if self.family in _SPATIAL and not self.weights.standardized:
                raise InvalidInputError(f"{self.family} models need row-standardized weights")


class LogDet:
    """``ln|I - a W|`` by LU factorisation, memoised per value of ``a``.

    A sparse LU is used when fewer than 10% of the weights are nonzero.
    """

    def __init__(self, w: SpatialWeights, sparse_threshold: float = 0.1):
        self.W = w.values
        self.n = w.n
        self.sparse = w.density < sparse_threshold and self.n > 50
        if self.sparse:
            self._Ws = sparse.csc_matrix(self.W)
            self._I = sparse.identity(self.n, format="csc")
        self._cache: dict[float, float] = {}

    @classmethod
    def for_weights(cls, w: SpatialWeights) -> "LogDet":
        """Shared instance per weights object, so repeated fits reuse values."""
        inst = _LOGDET_CACHE.get(w)
        if inst is None:
            inst = _LOGDET_CACHE[w] = cls(w)
        return inst

    def _factor(self, a: float):
        if self.sparse:
            return splu((self._I - a * self._Ws).tocsc())
        return sla.lu_factor(np.eye(self.n) - a * self.W, check_finite=False)

    def __call__(self, a: float) -> float:
        a = float(a)
        if a == 0.0:
            return 0.0
        hit = self._cache.get(a)
        if hit is not None:
            return hit
        f = self._factor(a)
        diag = f.U.diagonal() if self.sparse else np.diagonal(f[0])
        if np.min(np.abs(diag)) <= self.n * np.finfo(float).eps * np.max(np.abs(diag)):
            raise SingularSystemError(f"I - {a!r} W is singular")
        value = float(np.sum(np.log(np.abs(diag))))
        self._cache[a] = value
        return value

    def trace_sq(self, a: float) -> float:
        """``tr[(W (I - aW)^-1)^2]``, the negative second derivative of the log-determinant."""
        A = np.eye(self.n) - a * self.W
        B = _solve(A, self.W)
        return float(np.sum(B * B.T))


_LOGDET_CACHE: "weakref.WeakKeyDictionary[SpatialWeights, LogDet]" = weakref.WeakKeyDictionary()


def _solve(A, B):
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            return sla.solve(A, B, check_finite=False)
        except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
            raise SingularSystemError(f"linear system is numerically singular: {exc}") from None


@dataclass(frozen=True)
class MeanZeroCheck:
    statistic: float
    passed: bool | None


@dataclass(frozen=True)
class HomoscedasticityCheck:
    """Auxiliary regression of squared residuals on fitted values and their squares."""

    statistic: float
    df: int
    p_value: float
    passed: bool


@dataclass(frozen=True)
class ResidualDiagnostics:
    mean_zero: MeanZeroCheck
    homoscedastic: HomoscedasticityCheck
    residual_moran: autocorr.MoranReport | None
    residual_moran_passed: bool | None
    alpha: float = DIAG_ALPHA

    def to_dict(self) -> dict:
        return {
            "mean_zero": {"statistic": self.mean_zero.statistic, "passed": self.mean_zero.passed},
            "homoscedastic": {
                "statistic": self.homoscedastic.statistic,
                "df": self.homoscedastic.df,
                "p_value": self.homoscedastic.p_value,
                "passed": self.homoscedastic.passed,
            },
            "residual_moran": None if self.residual_moran is None else self.residual_moran.to_dict(),
            "residual_moran_passed": self.residual_moran_passed,
            "alpha": self.alpha,
        }


@dataclass(frozen=True, eq=False)
class ModelFit:
    """Result of fitting a :class:`ModelSpec`.

    ``coefficients`` follows ``names``: intercept (if any), the
    regressors, then their spatial lags ``W_<name>`` for slx and sdm.
    ``vcov`` covers the coefficients followed by the spatial parameter
    (rho or lambda) when the family has one. ``sigma2`` is the ML
    estimate ``e'e / n``.
    """

    spec: ModelSpec
    names: tuple
    coefficients: np.ndarray
    spatial: float | None
    sigma2: float
    loglik: float
    residuals: np.ndarray
    fitted: np.ndarray
    vcov: np.ndarray
    y: np.ndarray
    X: np.ndarray
    fixed: bool = False
    diagnostics: ResidualDiagnostics | None = field(default=None, repr=False)

    @property
    def family(self) -> str:
        return self.spec.family

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def rho(self) -> float | None:
        return self.spatial if self.family in _LAGGED_Y else None

    @property
    def lam(self) -> float | None:
        return self.spatial if self.family == "sem" else None

    @property
    def spatial_name(self) -> str | None:
        if self.family in _LAGGED_Y:
            return "rho"
        if self.family == "sem":
            return "lambda"
        return None

    @property
    def n_params(self) -> int:
        """Free mean and spatial parameters (sigma2 excluded)."""
        return len(self.names) + (1 if self.spatial_name and not self.fixed else 0)

    @property
    def _n_beta(self) -> int:
        return int(self.spec.intercept) + len(self.spec.regressors)

    @property
    def beta(self) -> np.ndarray:
        return self.coefficients[: self._n_beta]

    @property
    def gamma(self) -> np.ndarray | None:
        if self.family not in _LAGGED_X:
            return None
        return self.coefficients[self._n_beta:]

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diagonal(self.vcov))

    @property
    def spatial_se(self) -> float | None:
        if self.spatial_name is None:
            return None
        return float(self.se[-1])

    def params(self) -> dict:
        out = dict(zip(self.names, self.coefficients.tolist()))
        if self.spatial_name:
            out[self.spatial_name] = self.spatial
        return out

    def std_errors(self) -> dict:
        names = list(self.names) + ([self.spatial_name] if self.spatial_name else [])
        return dict(zip(names, self.se.tolist()))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "response": self.spec.response,
            "regressors": list(self.spec.regressors),
            "intercept": self.spec.intercept,
            "n": self.n,
            "params": self.params(),
            "std_errors": self.std_errors(),
            "spatial_fixed": self.fixed,
            "sigma2": self.sigma2,
            "loglik": self.loglik,
            "diagnostics": None if self.diagnostics is None else self.diagnostics.to_dict(),
        }


# --------------------------------------------------------------------------
# design and least squares


def _design(spec: ModelSpec, data: PointSet):
    y = np.asarray(data[spec.response], dtype=float)
    cols, names = [], []
    if spec.intercept:
        cols.append(np.ones(data.n))
        names.append("const")
    xs = np.column_stack([data[name] for name in spec.regressors])
    cols.extend(xs.T)
    names.extend(spec.regressors)
    if spec.family in _LAGGED_X:
        if spec.weights.n != data.n:
            raise InvalidInputError(f"weights are {spec.weights.n}x{spec.weights.n}, data has {data.n} rows")
        wx = spec.weights.values @ xs
        cols.extend(wx.T)
        names.extend(f"W_{name}" for name in spec.regressors)
    if spec.weights is not None and spec.weights.n != data.n:
        raise InvalidInputError(f"weights are {spec.weights.n}x{spec.weights.n}, data has {data.n} rows")
    X = np.column_stack(cols)
    _check_rank(X, names)
    return y, X, tuple(names)


def _check_rank(X, names):
    n, k = X.shape
    if n <= k:
        raise CollinearityError(f"{n} observations for {k} coefficients", names)
    _, R, piv = sla.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diagonal(R))
    tol = d[0] * max(n, k) * np.finfo(float).eps * 10 if d[0] > 0 else 0.0
    rank = int(np.sum(d > tol)) if d[0] > 0 else 0
    if rank < k:
        bad = [names[i] for i in piv[rank:]]
        raise CollinearityError(
            f"design matrix is rank deficient ({rank} < {k}); "
            f"linearly dependent column(s): {', '.join(bad)}",
            bad,
        )


def _lstsq(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef


# --------------------------------------------------------------------------
# likelihood


def _loglik(n, ee, logdet):
    sigma2 = ee / n
    return -n * _HALF_LOG_2PI - 0.5 * n * math.log(sigma2) - 0.5 * n + logdet


def _maximize(f, lo, hi):
    grid = np.linspace(lo, hi, GRID_POINTS)
    vals = np.array([f(a) for a in grid])
    best = vals.max()
    ties = np.flatnonzero(vals == best)
    k = int(ties[np.argmin(np.abs(grid[ties]))])
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, GRID_POINTS - 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > GOLDEN_TOL:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    fx = f(x)
    if fx < best:
        x, fx = float(grid[k]), float(best)
    return float(x), float(fx)


def _check_boundary(a, name):
    lo, hi = SPATIAL_BOUNDS
    if a - lo < BOUNDARY_TOL or hi - a < BOUNDARY_TOL:
        raise BoundarySolutionError(
            f"{name} estimate {a:.6f} is at the edge of the admissible interval "
            f"{SPATIAL_BOUNDS}; the model is probably misspecified"
        )


def _filter(W, a, v):
    return v - a * (W @ v)


def _spatial_hessian(family, W, y, X, coef, a, sigma2, logdet: LogDet):
    """Observed information pieces: Hessian of the full log-likelihood in
    (coefficients, spatial parameter, sigma2)."""
    n, k = X.shape
    if family == "sem":
        u = y - X @ coef
        e = _filter(W, a, u)
        J = np.column_stack([-_filter(W, a, X), -(W @ u)])
        C = np.zeros((k + 1, k + 1))
        cross = e @ (W @ X)
        C[:k, k] = cross
        C[k, :k] = cross
    else:
        Wy = W @ y
        e = y - a * Wy - X @ coef
        J = np.column_stack([-X, -Wy])
        C = np.zeros((k + 1, k + 1))
    H = np.zeros((k + 2, k + 2))
    H[: k + 1, : k + 1] = -(J.T @ J + C) / sigma2
    H[k, k] -= logdet.trace_sq(a)
    g = (J.T @ e) / sigma2**2
    H[: k + 1, k + 1] = g
    H[k + 1, : k + 1] = g
    H[k + 1, k + 1] = n / (2.0 * sigma2**2) - (e @ e) / sigma2**3
    return H


def _invert_information(H, keep):
    try:
        V = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        return np.full((keep, keep), np.nan)
    return V[:keep, :keep]


def loglik_at(fit: ModelFit, coefficients=None, spatial=None, sigma2=None) -> float:
    """Full Gaussian log-likelihood of ``fit``'s model at arbitrary parameters.

    Unspecified parameters default to the fitted values.
    """
    coef = fit.coefficients if coefficients is None else np.asarray(coefficients, dtype=float)
    a = fit.spatial if spatial is None else float(spatial)
    s2 = fit.sigma2 if sigma2 is None else float(sigma2)
    y, X, n = fit.y, fit.X, fit.n
    logdet = 0.0
    if fit.family in _LAGGED_Y:
        W = fit.spec.weights.values
        e = y - a * (W @ y) - X @ coef
        logdet = LogDet.for_weights(fit.spec.weights)(a)
    elif fit.family == "sem":
        W = fit.spec.weights.values
        e = _filter(W, a, y - X @ coef)
        logdet = LogDet.for_weights(fit.spec.weights)(a)
    else:
        e = y - X @ coef
    return float(-n * _HALF_LOG_2PI - 0.5 * n * math.log(s2) - (e @ e) / (2.0 * s2) + logdet)


# --------------------------------------------------------------------------
# fitting


def _finish(spec, names, coef, spatial, y, X, e, vcov, loglik, fixed, diagnostics):
    fit_ = ModelFit(
        spec=spec,
        names=names,
        coefficients=coef,
        spatial=spatial,
        sigma2=float(e @ e) / len(y),
        loglik=float(loglik),
        residuals=e,
        fitted=y - e,
        vcov=vcov,
        y=y,
        X=X,
        fixed=fixed,
    )
    if diagnostics and spec.weights is not None:
        object.__setattr__(fit_, "diagnostics", residual_diagnostics(fit_, spec.weights))
    return fit_


def _fit_linear(spec: ModelSpec, data: PointSet, diagnostics: bool) -> ModelFit:
    y, X, names = _design(spec, data)
    n, k = X.shape
    coef = _lstsq(X, y)
    e = y - X @ coef
    ee = float(e @ e)
    if ee == 0.0:
        raise ZeroVarianceError("perfect fit: residual variance is zero")
    s2 = ee / (n - k)
    vcov = s2 * np.linalg.inv(X.T @ X)
    return _finish(spec, names, coef, None, y, X, e, vcov, _loglik(n, ee, 0.0), False, diagnostics)


def fit_ols(spec: ModelSpec, data: PointSet, diagnostics: bool = True) -> ModelFit:
    """Least squares without spatial terms; the restricted model for LR tests."""
    if spec.family != "ols":
        raise InvalidInputError(f"fit_ols called with family {spec.family!r}")
    return _fit_linear(spec, data, diagnostics)


def fit_slx(spec: ModelSpec, data: PointSet, diagnostics: bool = True) -> ModelFit:
    """Least squares on ``[1 | X | W X]``.

    Raises
    ------
    CollinearityError
        If the lagged regressors are linearly dependent on the others,
        e.g. when ``W`` is all zeros.
    """
    if spec.family != "slx":
        raise InvalidInputError(f"fit_slx called with family {spec.family!r}")
    return _fit_linear(spec, data, diagnostics)


def _fit_lag(spec, data, rho, diagnostics):
    y, X, names = _design(spec, data)
    n, k = X.shape
    W = spec.weights.values
    Wy = W @ y
    b0 = _lstsq(X, y)
    b1 = _lstsq(X, Wy)
    e0 = y - X @ b0
    e1 = Wy - X @ b1
    logdet = LogDet.for_weights(spec.weights)

    def profile(a):
        e = e0 - a * e1
        return _loglik(n, float(e @ e), logdet(a))

    fixed = rho is not None
    if fixed:
        rho = float(rho)
        if not SPATIAL_BOUNDS[0] < rho < SPATIAL_BOUNDS[1]:
            raise InvalidInputError(f"rho must lie in {SPATIAL_BOUNDS}, got {rho}")
        ll = profile(rho)
    else:
        rho, ll = _maximize(profile, *SPATIAL_BOUNDS)
        _check_boundary(rho, "rho")
    coef = b0 - rho * b1
    e = y - rho * Wy - X @ coef
    if float(e @ e) == 0.0:
        raise ZeroVarianceError("perfect fit: residual variance is zero")
    sigma2 = float(e @ e) / n
    H = _spatial_hessian(spec.family, W, y, X, coef, rho, sigma2, logdet)
    vcov = _invert_information(H, k + 1)
    return _finish(spec, names, coef, rho, y, X, e, vcov, ll, fixed, diagnostics)


def fit_sar(spec: ModelSpec, data: PointSet, rho: float | None = None, diagnostics: bool = True) -> ModelFit:
    """Spatial lag model by concentrated maximum likelihood.

    For each candidate rho, ``b(rho) = (X'X)^-1 X'(y - rho W y)`` and
    ``sigma2(rho) = e'e / n``; the profile log-likelihood is
    ``-n/2 (ln 2pi + 1) - n/2 ln sigma2(rho) + ln|I - rho W|``.

    Parameters
    ----------
    rho : float, optional
        Hold rho at this value instead of estimating it.

    Raises
    ------
    BoundarySolutionError
        If the estimate lands on the edge of (-0.999, 0.999).
    """
    if spec.family != "sar":
        raise InvalidInputError(f"fit_sar called with family {spec.family!r}")
    return _fit_lag(spec, data, rho, diagnostics)


def fit_sdm(spec: ModelSpec, data: PointSet, rho: float | None = None, diagnostics: bool = True) -> ModelFit:
    """Spatial Durbin model: :func:`fit_sar` on the design ``[1 | X | W X]``."""
    if spec.family != "sdm":
        raise InvalidInputError(f"fit_sdm called with family {spec.family!r}")
    return _fit_lag(spec, data, rho, diagnostics)


def fit_sem(spec: ModelSpec, data: PointSet, lam: float | None = None, diagnostics: bool = True) -> ModelFit:
    """Spatial error model by concentrated maximum likelihood.

    Each candidate lambda filters both sides, ``y* = (I - lam W) y`` and
    ``X* = (I - lam W) X``, and regresses ``y*`` on ``X*``. Residuals on
    the result are the filtered innovations.
    """
    if spec.family != "sem":
        raise InvalidInputError(f"fit_sem called with family {spec.family!r}")
    y, X, names = _design(spec, data)
    n, k = X.shape
    W = spec.weights.values
    Wy, WX = W @ y, W @ X
    logdet = LogDet.for_weights(spec.weights)

    def gls(a):
        ys, Xs = y - a * Wy, X - a * WX
        coef = _lstsq(Xs, ys)
        return coef, ys - Xs @ coef

    def profile(a):
        _, e = gls(a)
        return _loglik(n, float(e @ e), logdet(a))

    fixed = lam is not None
    if fixed:
        lam = float(lam)
        if not SPATIAL_BOUNDS[0] < lam < SPATIAL_BOUNDS[1]:
            raise InvalidInputError(f"lambda must lie in {SPATIAL_BOUNDS}, got {lam}")
        ll = profile(lam)
    else:
        lam, ll = _maximize(profile, *SPATIAL_BOUNDS)
        _check_boundary(lam, "lambda")
    coef, e = gls(lam)
    if float(e @ e) == 0.0:
        raise ZeroVarianceError("perfect fit: residual variance is zero")
    sigma2 = float(e @ e) / n
    H = _spatial_hessian("sem", W, y, X, coef, lam, sigma2, logdet)
    vcov = _invert_information(H, k + 1)
    return _finish(spec, names, coef, lam, y, X, e, vcov, ll, fixed, diagnostics)


_FITTERS = {"ols": fit_ols, "slx": fit_slx, "sar": fit_sar, "sem": fit_sem, "sdm": fit_sdm}


def fit(spec: ModelSpec, data: PointSet, diagnostics: bool = True) -> ModelFit:
    """Dispatch on ``spec.family``."""
    return _FITTERS[spec.family](spec, data, diagnostics=diagnostics)


# --------------------------------------------------------------------------
# effects


@dataclass(frozen=True, eq=False)
class Effects:
    """Marginal effect of one regressor: ``matrix[i, j] = d y_i / d x_jk``."""

    name: str
    matrix: np.ndarray
    direct: float
    indirect: float
    total: float

    def summary(self) -> dict:
        return {"direct": self.direct, "indirect": self.indirect, "total": self.total}


def _spatial_multiplier(fit_: ModelFit):
    """``(I - rho W)^-1`` for lag families, None otherwise."""
    if fit_.family not in _LAGGED_Y:
        return None
    n = fit_.n
    A = np.eye(n) - fit_.spatial * fit_.spec.weights.values
    if np.linalg.cond(A) > 1e12:
        raise SingularSystemError(f"I - rho W is numerically singular at rho={fit_.spatial!r}")
    return _solve(A, np.eye(n))


def marginal_effects(fit_: ModelFit) -> dict[str, Effects]:
    """Effect matrices for every regressor.

    ========  ===============================
    ols, sem  ``b_k I``
    slx       ``b_k I + g_k W``
    sar       ``(I - rho W)^-1 b_k``
    sdm       ``(I - rho W)^-1 (b_k I + g_k W)``
    ========  ===============================

    ``direct`` is the mean diagonal, ``total`` the mean row sum and
    ``indirect = total - direct``.
    """
    n = fit_.n
    I = np.eye(n)
    W = fit_.spec.weights.values if fit_.spec.weights is not None else None
    M = _spatial_multiplier(fit_)
    offset = int(fit_.spec.intercept)
    K = len(fit_.spec.regressors)
    out = {}
    for j, name in enumerate(fit_.spec.regressors):
        b = fit_.coefficients[offset + j]
        S = b * I
        if fit_.family in _LAGGED_X:
            S = S + fit_.coefficients[offset + K + j] * W
        if M is not None:
            S = M @ S
        direct = float(np.trace(S) / n)
        total = float(S.sum() / n)
        out[name] = Effects(name, S, direct, total - direct, total)
    return out


def reduced_form(fit_: ModelFit, x=None) -> np.ndarray:
    """Systematic part of y implied by the fitted model at regressors ``x``.

    Parameters
    ----------
    x : array_like, shape (n, K), optional
        Raw regressor values (no intercept, no lags); defaults to the
        fitted data.
    """
    K = len(fit_.spec.regressors)
    offset = int(fit_.spec.intercept)
    if x is None:
        x = fit_.X[:, offset:offset + K]
    x = np.asarray(x, dtype=float)
    coef = fit_.coefficients
    mean = x @ coef[offset:offset + K]
    if offset:
        mean = mean + coef[0]
    if fit_.family in _LAGGED_X:
        mean = mean + fit_.spec.weights.values @ (x @ coef[offset + K:])
    if fit_.family in _LAGGED_Y:
        A = np.eye(fit_.n) - fit_.spatial * fit_.spec.weights.values
        mean = _solve(A, mean)
    return mean


# --------------------------------------------------------------------------
# diagnostics and tests


def _homoscedasticity(e, fitted):
    e2 = e * e
    Z = np.column_stack([np.ones_like(fitted), fitted, fitted * fitted])
    coef = _lstsq(Z, e2)
    r = e2 - Z @ coef
    tss = float(np.sum((e2 - e2.mean()) ** 2))
    r2 = 0.0 if tss == 0 else 1.0 - float(r @ r) / tss
    stat = len(e) * r2
    p = float(stats.chi2.sf(stat, 2))
    return HomoscedasticityCheck(stat, 2, p, p >= DIAG_ALPHA)


def residual_diagnostics(fit_: ModelFit, w: SpatialWeights | None = None) -> ResidualDiagnostics:
    """Check the residual conditions a valid fit should satisfy.

    * mean zero: ``|mean(e)| / sd(e)``, passed below 1e-8 when the model
      has an intercept (an exact property then), otherwise unjudged;
    * homoscedasticity: ``n R^2`` from regressing ``e^2`` on fitted values
      and their squares, chi-square(2), passed at p >= 0.05;
    * independence: two-sided Moran test on the residuals, passed at
      p >= 0.05. For sem these are the filtered innovations.
    """
    w = fit_.spec.weights if w is None else w
    e = fit_.residuals
    sd = float(np.std(e))
    stat = abs(float(np.mean(e))) / sd if sd > 0 else 0.0
    mean_zero = MeanZeroCheck(stat, stat < MEAN_ZERO_TOL if fit_.spec.intercept else None)
    homo = _homoscedasticity(e, fit_.fitted)
    moran, passed = None, None
    if w is not None:
        try:
            moran = autocorr.moran_test(e, w, "two_sided")
            passed = moran.p_value >= DIAG_ALPHA
        except (ZeroVarianceError, EmptyWeightsError, SampleTooSmallError):
            pass
    return ResidualDiagnostics(mean_zero, homo, moran, passed)


@dataclass(frozen=True)
class ChiSquareTest:
    name: str
    statistic: float
    df: int
    p_value: float

    def to_dict(self) -> dict:
        return {"test": self.name, "statistic": self.statistic, "df": self.df, "p_value": self.p_value}


# (full, restricted) family pairs with a parameter restriction between them
_NESTED = {
    ("sar", "ols"),
    ("sem", "ols"),
    ("slx", "ols"),
    ("sdm", "slx"),
    ("sdm", "sar"),
    ("sdm", "ols"),
}


def lr_test(full: ModelFit, restricted: ModelFit) -> ChiSquareTest:
    """Likelihood ratio test of a restricted model against a nesting one.

    Raises
    ------
    InvalidComparisonError
        If the models are fitted to different data or are not nested.
    """
    if full.n != restricted.n or not np.array_equal(full.y, restricted.y):
        raise InvalidComparisonError("models were fitted to different data")
    if full.spec.intercept != restricted.spec.intercept:
        raise InvalidComparisonError("models differ in the intercept")
    same = (full.family, full.spec.regressors) == (restricted.family, restricted.spec.regressors)
    if not same:
        if (full.family, restricted.family) not in _NESTED:
            raise InvalidComparisonError(
                f"{restricted.family} is not nested in {full.family}"
            )
        if full.spec.regressors != restricted.spec.regressors:
            raise InvalidComparisonError("models use different regressors")
    df = full.n_params - restricted.n_params
    if df < 0:
        raise InvalidComparisonError("restricted model has more free parameters than the full model")
    stat = max(2.0 * (full.loglik - restricted.loglik), 0.0)
    p = 1.0 if df == 0 else float(stats.chi2.sf(stat, df))
    return ChiSquareTest("likelihood ratio", stat, df, p)


def wald_test(fit_: ModelFit, parameter: str | None = None) -> ChiSquareTest:
    """Wald test that the spatial parameter is zero, ``a^2 / Var(a)``.

    The variance comes from the inverse observed information at the
    estimate.
    """
    name = fit_.spatial_name
    if name is None:
        raise InvalidInputError(f"{fit_.family} models have no spatial parameter")
    if parameter is not None and parameter != name:
        raise InvalidInputError(f"{fit_.family} models have {name}, not {parameter}")
    var = float(fit_.vcov[-1, -1])
    if not np.isfinite(var) or var <= 0:
        raise IllConditionedInformationError(
            f"information matrix gives a non-positive variance for {name} ({var!r})"
        )
    stat = fit_.spatial**2 / var
    return ChiSquareTest(f"wald ({name} = 0)", float(stat), 1, float(stats.chi2.sf(stat, 1)))
