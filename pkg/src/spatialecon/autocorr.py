"""Global and local Moran statistics.

Analytic inference uses the moments under the normality assumption and a
standard normal reference distribution. :func:`permutation_test` provides
the randomization counterpart and doubles as a check on the analytic
moments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (
    EmptyWeightsError,
    InsufficientDrawsError,
    InvalidInputError,
    SampleTooSmallError,
    ZeroVarianceError,
)
from .weights import SpatialWeights

__all__ = [
    "ALTERNATIVES",
    "LISA_CAVEAT",
    "RNG_DESCRIPTION",
    "MoranReport",
    "LisaReport",
    "PermutationResult",
    "global_moran",
    "moran_moments",
    "moran_test",
    "local_moran",
    "local_moran_moments",
    "lisa_test",
    "permutation_test",
    "normal_pvalue",
]

ALTERNATIVES = ("two_sided", "greater", "less")

LISA_CAVEAT = (
    "Local Moran p-values use a normal approximation. The local statistic is "
    "known not to be normally distributed (Boots & Tiefelsdorf 2000), so treat "
    "these p-values as indicative and prefer permutation inference."
)

RNG_DESCRIPTION = (
    "numpy Generator(PCG64) seeded with SeedSequence([seed, block]); "
    "blocks of 1000 draws; permutations via Generator.permuted"
)

_BLOCK = 1000


def _alternative(alt: str) -> str:
    alt = alt.replace("-", "_")
    if alt not in ALTERNATIVES:
        raise InvalidInputError(f"unknown alternative {alt!r}; expected one of {ALTERNATIVES}")
    return alt


def normal_pvalue(z, alternative: str = "two_sided"):
    """Standard normal p-value for ``z`` under the given alternative."""
    alternative = _alternative(alternative)
    z = np.asarray(z, dtype=float)
    if alternative == "two_sided":
        p = 2.0 * stats.norm.sf(np.abs(z))
    elif alternative == "greater":
        p = stats.norm.sf(z)
    else:
        p = stats.norm.cdf(z)
    p = np.minimum(p, 1.0)
    return float(p) if p.ndim == 0 else p


def _prepare(y, w: SpatialWeights, min_n: int = 3):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != w.n:
        raise InvalidInputError(f"y has shape {y.shape}, weights are {w.n}x{w.n}")
    if not np.isfinite(y).all():
        raise InvalidInputError("y must be finite")
    if w.n < min_n:
        raise SampleTooSmallError(f"need at least {min_n} observations, got {w.n}")
    z = y - y.mean()
    ss = float(z @ z)
    if ss == 0.0:
        raise ZeroVarianceError("y is constant; Moran statistics are undefined")
    if w.s0 <= 0:
        raise EmptyWeightsError("weights matrix has no positive entries")
    return z, ss


def global_moran(y, w: SpatialWeights) -> tuple[float, float]:
    """Moran's I of ``y``.

    Returns
    -------
    I : float
    s0 : float
        Sum of all weights.
    """
    z, ss = _prepare(y, w)
    s0 = w.s0
    I = (w.n / s0) * float(z @ (w.values @ z)) / ss
    return I, s0


def moran_moments(w: SpatialWeights, n: int | None = None) -> tuple[float, float]:
    """Mean and variance of Moran's I under the normality assumption."""
    n = w.n if n is None else int(n)
    if n != w.n:
        raise InvalidInputError(f"n={n} does not match {w.n}x{w.n} weights")
    if n < 4:
        raise SampleTooSmallError(f"Moran variance needs at least 4 observations, got {n}")
    W = w.values
    s0 = W.sum()
    if s0 <= 0:
        raise EmptyWeightsError("weights matrix has no positive entries")
    s1 = ((W + W.T) ** 2).sum() / 2.0
    s2 = ((W.sum(axis=1) + W.sum(axis=0)) ** 2).sum()
    ei = -1.0 / (n - 1)
    vi = (n * n * s1 - n * s2 + 3.0 * s0 * s0) / (s0 * s0 * (n * n - 1.0)) - ei * ei
    return ei, float(vi)


@dataclass(frozen=True)
class MoranReport:
    I: float
    expected: float
    variance: float
    z: float
    p_value: float
    alternative: str
    s0: float
    n: int
    reference: str = "standard normal (z-test)"

    def to_dict(self) -> dict:
        return {
            "I": self.I,
            "expected": self.expected,
            "variance": self.variance,
            "z": self.z,
            "p_value": self.p_value,
            "alternative": self.alternative,
            "s0": self.s0,
            "n": self.n,
            "reference": self.reference,
        }


def moran_test(y, w: SpatialWeights, alternative: str = "two_sided") -> MoranReport:
    """Analytic significance test for global spatial autocorrelation.

    Parameters
    ----------
    y : array_like, shape (n,)
    w : SpatialWeights
        Raw or standardized; moments are computed from the matrix given.
    alternative : {'two_sided', 'greater', 'less'}
        'greater' tests for positive autocorrelation.

    Returns
    -------
    MoranReport
    """
    alternative = _alternative(alternative)
    I, s0 = global_moran(y, w)
    ei, vi = moran_moments(w)
    z = (I - ei) / np.sqrt(vi)
    return MoranReport(I, ei, vi, float(z), normal_pvalue(z, alternative), alternative, s0, w.n)


def local_moran(y, w: SpatialWeights) -> np.ndarray:
    """Local Moran values ``(y_i - ybar) * sum_j w_ij (y_j - ybar)``.

    Values are in the units of squared deviations, so their sum equals
    ``I * s0 * sum((y - ybar)**2) / n``.
    """
    z, _ = _prepare(y, w)
    return z * (w.values @ z)


def local_moran_moments(y, w: SpatialWeights) -> tuple[np.ndarray, np.ndarray]:
    """Randomization moments of each local Moran value.

    With ``m2`` and ``m4`` the second and fourth central sample moments
    and ``b2 = m4 / m2**2``, for row sum ``w_i``, squared-weight sum
    ``w_i2`` and cross-product sum ``w_ikh = w_i**2 - w_i2``::

        E  = -m2 * w_i / (n - 1)
        V  = m2**2 * [ w_i2 (n - b2) / (n - 1)
                       + w_ikh (2 b2 - n) / ((n - 1)(n - 2))
                       - w_i**2 / (n - 1)**2 ]

    For unit-variance ``y`` (``m2 = 1``) these are the usual LISA
    moments. The scaling by ``m2`` keeps them in the units returned by
    :func:`local_moran`; z-scores are unaffected.
    """
    z, ss = _prepare(y, w, min_n=4)
    n = w.n
    m2 = ss / n
    b2 = (np.sum(z**4) / n) / (m2 * m2)
    W = w.values
    wi = W.sum(axis=1)
    wi2 = (W * W).sum(axis=1)
    wikh = wi * wi - wi2
    expected = -m2 * wi / (n - 1)
    var_std = (
        wi2 * (n - b2) / (n - 1)
        + wikh * (2.0 * b2 - n) / ((n - 1.0) * (n - 2.0))
        - wi * wi / (n - 1.0) ** 2
    )
    return expected, m2 * m2 * var_std


@dataclass(frozen=True, eq=False)
class LisaReport:
    """Per-observation local Moran results.

    Sites with no neighbours are not testable: their z and p are NaN and
    they are never flagged significant.
    """

    Is: np.ndarray
    expected: np.ndarray
    variance: np.ndarray
    z: np.ndarray
    p_values: np.ndarray
    significant: np.ndarray
    testable: np.ndarray
    alpha: float
    bonferroni: bool
    threshold: float
    alternative: str = "two_sided"
    ids: tuple | None = None
    caveat: str = LISA_CAVEAT
    reference: str = "standard normal (approximation)"

    @property
    def n(self) -> int:
        return len(self.Is)

    @property
    def non_testable(self) -> np.ndarray:
        return np.flatnonzero(~self.testable)

    def records(self) -> list[dict]:
        ids = self.ids or tuple(str(i) for i in range(self.n))
        out = []
        for i in range(self.n):
            out.append({
                "id": ids[i],
                "I": float(self.Is[i]),
                "expected": float(self.expected[i]),
                "variance": float(self.variance[i]),
                "z": None if np.isnan(self.z[i]) else float(self.z[i]),
                "p_value": None if np.isnan(self.p_values[i]) else float(self.p_values[i]),
                "significant": bool(self.significant[i]),
                "testable": bool(self.testable[i]),
            })
        return out


def lisa_test(
    y,
    w: SpatialWeights,
    alpha: float = 0.05,
    bonferroni: bool = False,
    alternative: str = "two_sided",
) -> LisaReport:
    """Normal-approximation tests of every local Moran value.

    With ``bonferroni`` the per-site level is ``alpha / n`` where ``n``
    counts all observations, isolates included.
    """
    alternative = _alternative(alternative)
    if not 0 < alpha < 1:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    Is = local_moran(y, w)
    expected, variance = local_moran_moments(y, w)
    testable = (w.row_sums > 0) & (variance > 0)
    z = np.full(w.n, np.nan)
    z[testable] = (Is[testable] - expected[testable]) / np.sqrt(variance[testable])
    p = np.full(w.n, np.nan)
    p[testable] = normal_pvalue(z[testable], alternative)
    threshold = alpha / w.n if bonferroni else alpha
    significant = np.zeros(w.n, dtype=bool)
    significant[testable] = p[testable] < threshold
    return LisaReport(
        Is=Is,
        expected=expected,
        variance=variance,
        z=z,
        p_values=p,
        significant=significant,
        testable=testable,
        alpha=float(alpha),
        bonferroni=bool(bonferroni),
        threshold=threshold,
        alternative=alternative,
        ids=w.ids,
    )


@dataclass(frozen=True, eq=False)
class PermutationResult:
    """Outcome of a permutation test.

    For ``statistic='local'`` every array field has one entry per site.
    """

    statistic: str
    observed: float | np.ndarray
    p_value: float | np.ndarray
    mean: float | np.ndarray
    sd: float | np.ndarray
    draws: int
    seed: int
    alternative: str
    rng: str = RNG_DESCRIPTION
    reference: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        def conv(v):
            return v.tolist() if isinstance(v, np.ndarray) else v

        return {
            "statistic": self.statistic,
            "observed": conv(self.observed),
            "p_value": conv(self.p_value),
            "mean": conv(self.mean),
            "sd": conv(self.sd),
            "draws": self.draws,
            "seed": self.seed,
            "alternative": self.alternative,
            "rng": self.rng,
        }


def _blocks(seed: int, draws: int):
    for b, start in enumerate(range(0, draws, _BLOCK)):
        yield np.random.default_rng([seed, b]), min(_BLOCK, draws - start)


def _pseudo_p(sim, observed, center, alternative, axis=0):
    draws = sim.shape[axis]
    if alternative == "two_sided":
        hits = (np.abs(sim - center) >= np.abs(observed - center)).sum(axis=axis)
    elif alternative == "greater":
        hits = (sim >= observed).sum(axis=axis)
    else:
        hits = (sim <= observed).sum(axis=axis)
    return (1.0 + hits) / (1.0 + draws)


def _global_draws(z, w: SpatialWeights, draws: int, seed: int) -> np.ndarray:
    n = w.n
    scale = (n / w.s0) / float(z @ z)
    Wt = w.values.T
    out = []
    for rng, m in _blocks(seed, draws):
        Z = rng.permuted(np.broadcast_to(z, (m, n)), axis=1)
        out.append(scale * np.einsum("ij,ij->i", Z @ Wt, Z))
    return np.concatenate(out)


def _local_draws(z, w: SpatialWeights, draws: int, seed: int) -> np.ndarray:
    """Conditional randomization: y_i held fixed, the other values shuffled.

    One shuffle of the n-1 remaining positions per draw is shared across
    sites. Returns an array of shape (draws, n).
    """
    n = w.n
    W = w.values
    neighbours = [np.flatnonzero(W[i]) for i in range(n)]
    out = np.zeros((draws, n))
    row = 0
    for rng, m in _blocks(seed, draws):
        P = rng.permuted(np.broadcast_to(np.arange(n - 1), (m, n - 1)), axis=1)
        for i in range(n):
            nb = neighbours[i]
            k = len(nb)
            if k == 0:
                continue
            others = np.delete(z, i)
            wi = W[i, nb]
            out[row:row + m, i] = z[i] * (others[P[:, :k]] @ wi)
        row += m
    return out


def permutation_test(
    y,
    w: SpatialWeights,
    statistic: str = "global",
    draws: int = 999,
    seed: int = 0,
    alternative: str = "two_sided",
    keep_reference: bool = False,
) -> PermutationResult:
    """Pseudo p-values from random relabelling of ``y``.

    Global: all values are shuffled. Local: each site keeps its own value
    and the others are shuffled. The two-sided p-value counts draws at
    least as far from the expectation as the observed value,
    ``(1 + hits) / (1 + draws)``.

    Results depend only on ``(y, w, draws, seed)``; see
    :data:`RNG_DESCRIPTION` for the generator.
    """
    alternative = _alternative(alternative)
    if draws < 999:
        raise InsufficientDrawsError(f"need at least 999 permutations, got {draws}")
    seed = int(seed)
    z, ss = _prepare(y, w)
    n = w.n
    if statistic == "global":
        observed = (n / w.s0) * float(z @ (w.values @ z)) / ss
        sim = _global_draws(z, w, draws, seed)
        center = -1.0 / (n - 1)
        p = float(_pseudo_p(sim, observed, center, alternative))
        mean, sd = float(sim.mean()), float(sim.std(ddof=1))
    elif statistic == "local":
        observed = z * (w.values @ z)
        sim = _local_draws(z, w, draws, seed)
        # exact conditional mean given y_i
        center = -(z * z) * w.row_sums / (n - 1)
        p = _pseudo_p(sim, observed, center, alternative)
        mean, sd = sim.mean(axis=0), sim.std(axis=0, ddof=1)
    else:
        raise InvalidInputError(f"statistic must be 'global' or 'local', got {statistic!r}")
    return PermutationResult(
        statistic=statistic,
        observed=observed,
        p_value=p,
        mean=mean,
        sd=sd,
        draws=draws,
        seed=seed,
        alternative=alternative,
        reference=sim if keep_reference else None,
    )
