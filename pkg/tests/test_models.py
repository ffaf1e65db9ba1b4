from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from spatialecon import models as M
from spatialecon import simulate as S
from spatialecon.autocorr import moran_test
from spatialecon.errors import (
    BoundarySolutionError,
    CollinearityError,
    IllConditionedInformationError,
    InvalidComparisonError,
    InvalidInputError,
    SingularSystemError,
)
from spatialecon.geometry import PointSet, build_distance_matrix
from spatialecon.weights import SpatialWeights, WeightsSpec, row_standardize, transform

from conftest import checkerboard, rook_weights

LATTICE = S.Lattice(10, 10)
W10 = S.lattice_weights(LATTICE)


def draw(family, seed=0, layout=LATTICE, weights=None, **kw):
    if family in ("slx", "sdm") and "gamma" not in kw:
        kw["gamma"] = (0.5,)
    dgp = S.DgpSpec(family, layout=layout, seed=seed, **kw)
    w = weights if weights is not None else (W10 if layout == LATTICE else S.lattice_weights(layout))
    return S.generate(dgp, weights=w)


def spec(family, w=W10, regressors=("x1",)):
    return M.ModelSpec(family, S.RESPONSE, regressors, None if family == "ols" else w)


def fit(family, data, w=W10, **kw):
    return M.fit(spec(family, w), data.points, **kw)


class TestModelSpec:
    def test_unknown_family(self):
        with pytest.raises(InvalidInputError, match="unknown model family"):
            M.ModelSpec("gwr", "y1", ("x1",), W10)

    def test_spatial_family_needs_standardized(self):
        with pytest.raises(InvalidInputError, match="row-standardized"):
            M.ModelSpec("sar", "y1", ("x1",), rook_weights(3, 3, standardize=False))

    def test_slx_accepts_raw_weights(self):
        M.ModelSpec("slx", "y1", ("x1",), rook_weights(3, 3, standardize=False))

    def test_weights_required(self):
        with pytest.raises(InvalidInputError, match="weights"):
            M.ModelSpec("sem", "y1", ("x1",))

    def test_response_not_regressor(self):
        with pytest.raises(InvalidInputError):
            M.ModelSpec("ols", "x1", ("x1",))

    def test_size_mismatch(self):
        data = draw("sar")
        with pytest.raises(InvalidInputError, match="data has 100 rows"):
            fit("sar", data, w=rook_weights(3, 3))


class TestLogDet:
    def test_zero(self):
        assert M.LogDet(W10)(0.0) == 0.0

    @pytest.mark.parametrize("a", [-0.9, -0.5, 0.3, 0.9])
    def test_matches_dense(self, a):
        A = np.eye(100) - a * W10.values
        assert_allclose(M.LogDet(W10)(a), np.linalg.slogdet(A)[1], rtol=0, atol=1e-8)

    def test_sparse_and_dense_paths_agree(self):
        w = S.lattice_weights(S.Lattice(12, 12))
        sp, de = M.LogDet(w), M.LogDet(w, sparse_threshold=0.0)
        assert sp.sparse and not de.sparse
        for a in (-0.7, 0.2, 0.95):
            assert_allclose(sp(a), de(a), atol=1e-10)

    def test_eigenvalue_form_symmetric_weights(self, rng):
        w = rook_weights(6, 6, standardize=False)
        lam = np.linalg.eigvalsh(w.values)
        ld = M.LogDet(w)
        for a in (-0.2, 0.1, 0.24):
            assert_allclose(ld(a), np.sum(np.log(1 - a * lam)), atol=1e-10)

    def test_singular(self):
        with pytest.raises(SingularSystemError):
            M.LogDet(rook_weights(3, 3))(1.0)

    def test_shared_per_weights_object(self):
        assert M.LogDet.for_weights(W10) is M.LogDet.for_weights(W10)

    def test_trace_sq_is_second_derivative(self):
        ld = M.LogDet(W10)
        h = 1e-4
        fd = (ld(0.3 + h) - 2 * ld(0.3) + ld(0.3 - h)) / h**2
        assert_allclose(-ld.trace_sq(0.3), fd, rtol=1e-5)


class TestLinear:
    def test_slx_zero_weights_collinear(self):
        zero = SpatialWeights(np.zeros((100, 100)))
        data = draw("sar")
        with pytest.raises(CollinearityError, match="W_x1"):
            M.fit(M.ModelSpec("slx", S.RESPONSE, ("x1",), zero), data.points)

    def test_collinear_regressors_named(self):
        data = draw("sar")
        pts = data.points.with_variables(x2=2 * data.points["x1"])
        with pytest.raises(CollinearityError) as exc:
            M.fit(M.ModelSpec("ols", S.RESPONSE, ("x1", "x2")), pts)
        assert set(exc.value.columns) & {"x1", "x2"}

    def test_ols_normal_equations(self):
        data = draw("sar")
        f = fit("ols", data)
        assert_allclose(f.X.T @ f.residuals, 0, atol=1e-10)
        assert f.diagnostics is None

    def test_ols_covariance(self):
        data = draw("sar")
        f = fit("ols", data)
        s2 = f.residuals @ f.residuals / (f.n - 2)
        assert_allclose(f.vcov, s2 * np.linalg.inv(f.X.T @ f.X))

    def test_slx_recovery(self):
        data = draw("slx", beta=(1.0, 2.0), gamma=(-1.5,), sigma=0.1)
        f = fit("slx", data)
        assert f.names == ("const", "x1", "W_x1")
        assert_allclose(f.coefficients, [1.0, 2.0, -1.5], atol=0.1)
        assert_allclose(f.gamma, [-1.5], atol=0.1)

    def test_slx_within_three_se(self):
        w = S.lattice_weights(S.Lattice(20, 20))
        truth = np.array([1.0, 2.0, 0.5])
        hits = 0
        for seed in range(100):
            data = draw("slx", seed=seed, gamma=(0.5,), sigma=0.1, layout=S.Lattice(20, 20), weights=w)
            f = fit("slx", data, w=w, diagnostics=False)
            hits += np.all(np.abs(f.coefficients - truth) < 3 * f.se)
        assert hits >= 95

    def test_slx_gamma_zero_size(self):
        rejections = 0
        for seed in range(200):
            f = fit("slx", draw("slx", seed=seed, gamma=(0.0,)), diagnostics=False)
            t = f.coefficients[2] / f.se[2]
            rejections += 2 * stats.t.sf(abs(t), f.n - 3) < 0.05
        assert 3 <= rejections <= 20

    def test_mean_zero_with_intercept(self):
        f = fit("slx", draw("slx"))
        assert f.diagnostics.mean_zero.passed
        assert abs(f.residuals.mean()) < 1e-10

    def test_mean_zero_unjudged_without_intercept(self):
        data = draw("slx")
        f = M.fit(M.ModelSpec("slx", S.RESPONSE, ("x1",), W10, intercept=False), data.points)
        assert f.diagnostics.mean_zero.passed is None


class TestReductions:
    @pytest.mark.parametrize("family,kw", [("sar", "rho"), ("sem", "lam")])
    def test_fixed_zero_matches_ols(self, family, kw):
        data = draw("sar", rho=0.4)
        ols = fit("ols", data)
        f = getattr(M, f"fit_{family}")(spec(family), data.points, **{kw: 0.0})
        assert f.fixed and f.spatial == 0.0
        assert_allclose(f.coefficients, ols.coefficients, rtol=0, atol=1e-8)
        assert_allclose(f.loglik, ols.loglik, atol=1e-8)

    def test_sdm_fixed_zero_matches_slx(self):
        data = draw("sdm", rho=0.3)
        f = M.fit_sdm(spec("sdm"), data.points, rho=0.0)
        assert_allclose(f.coefficients, fit("slx", data).coefficients, atol=1e-8)

    def test_fixed_outside_bounds(self):
        with pytest.raises(InvalidInputError):
            M.fit_sar(spec("sar"), draw("sar").points, rho=1.0)

    def test_fixed_has_fewer_params(self):
        data = draw("sar")
        assert M.fit_sar(spec("sar"), data.points, rho=0.0).n_params == 2
        assert fit("sar", data).n_params == 3

    def test_sdm_with_gamma_zero_agrees_with_sar(self):
        # the sdm-sar gap has sd sqrt(V_sdm - V_sar) < se_sdm, so most seeds agree
        w = S.lattice_weights(S.Lattice(20, 20))
        agree = np.zeros(3)
        seeds = 30
        for seed in range(seeds):
            data = draw("sdm", seed=seed, rho=0.5, gamma=(0.0,), layout=S.Lattice(20, 20), weights=w)
            sdm = fit("sdm", data, w=w, diagnostics=False)
            sar = fit("sar", data, w=w, diagnostics=False)
            gap = np.abs(np.r_[sdm.beta, sdm.rho] - np.r_[sar.beta, sar.rho])
            agree += gap < np.r_[sdm.se[:2], sdm.spatial_se]
        assert np.all(agree / seeds >= 0.8), agree


class TestLikelihood:
    @pytest.mark.parametrize("family", ["ols", "slx", "sar", "sem", "sdm"])
    def test_loglik_at_estimate(self, family):
        data = draw("sdm", rho=0.3)
        f = fit(family, data)
        assert_allclose(M.loglik_at(f), f.loglik, rtol=0, atol=1e-9)

    @pytest.mark.parametrize("family", ["sar", "sem", "sdm"])
    def test_estimate_is_maximum(self, family):
        data = draw("sem" if family == "sem" else family, **({"lam": 0.4} if family == "sem" else {"rho": 0.4}))
        f = fit(family, data)
        for d in (-1e-3, 1e-3):
            assert M.loglik_at(f, spatial=f.spatial + d) < f.loglik
            assert M.loglik_at(f, coefficients=f.coefficients + d) < f.loglik
            assert M.loglik_at(f, sigma2=f.sigma2 * (1 + d)) < f.loglik

    def test_nesting_order(self):
        for seed in range(5):
            data = draw("sdm", seed=seed, rho=0.2)
            sdm, sar, ols = (fit(f, data, diagnostics=False) for f in ("sdm", "sar", "ols"))
            assert sdm.loglik >= sar.loglik - 1e-9
            assert sar.loglik >= ols.loglik - 1e-9

    @pytest.mark.parametrize("family", ["sar", "sem", "sdm"])
    def test_analytic_hessian_matches_numerical(self, family):
        data = draw("sem" if family == "sem" else family, seed=7,
                    **({"lam": 0.5} if family == "sem" else {"rho": 0.5}))
        f = fit(family, data)
        theta0 = np.r_[f.coefficients, f.spatial, f.sigma2]
        k = len(f.coefficients)

        def ll(t):
            return M.loglik_at(f, t[:k], t[k], t[k + 1])

        h = 1e-5
        p = len(theta0)
        H = np.empty((p, p))
        for i in range(p):
            for j in range(p):
                ei, ej = np.eye(p)[i] * h, np.eye(p)[j] * h
                H[i, j] = (ll(theta0 + ei + ej) - ll(theta0 + ei - ej)
                           - ll(theta0 - ei + ej) + ll(theta0 - ei - ej)) / (4 * h * h)
        Ha = M._spatial_hessian(family, W10.values, f.y, f.X, f.coefficients, f.spatial, f.sigma2,
                                M.LogDet.for_weights(W10))
        assert_allclose(Ha, H, rtol=1e-3, atol=1e-2)
        assert_allclose(f.vcov, np.linalg.inv(-Ha)[: k + 1, : k + 1])


class TestEstimation:
    def test_sem_recovery(self):
        data = draw("sem", lam=0.6, layout=S.Lattice(20, 20), seed=11)
        f = M.fit(spec("sem", data.weights), data.points)
        assert abs(f.lam - 0.6) < 3 * f.spatial_se
        assert_allclose(f.beta, [1.0, 2.0], atol=4 * f.se[:2].max())

    def test_sem_residuals_pass_moran(self):
        passed = sum(
            fit("sem", draw("sem", seed=s, lam=0.6)).diagnostics.residual_moran_passed
            for s in range(40)
        )
        assert passed >= 34

    def test_slx_on_lag_data_leaves_autocorrelation(self):
        w = S.lattice_weights(S.Lattice(20, 20))
        fails = 0
        for s in range(100):
            data = draw("sar", seed=s, rho=0.7, layout=S.Lattice(20, 20), weights=w)
            f = M.fit(spec("slx", w), data.points)
            fails += not f.diagnostics.residual_moran_passed
        assert fails >= 90

    def test_homoscedasticity_size(self):
        rejections = sum(
            not M.residual_diagnostics(fit("ols", draw("sar", seed=s), diagnostics=False), W10)
            .homoscedastic.passed
            for s in range(300)
        )
        assert 5 <= rejections <= 28

    def test_homoscedasticity_detects_variance_trend(self):
        data = draw("sar")
        x = data.points["x1"]
        y = 1 + 2 * x + np.exp(1.5 * x) * np.random.default_rng(0).standard_normal(100)
        pts = data.points.with_variables(**{S.RESPONSE: y})
        f = M.fit(spec("ols"), pts)
        assert not M.residual_diagnostics(f).homoscedastic.passed

    def test_sar_rho_zero_within_three_se(self):
        for seed in range(10):
            f = fit("sar", draw("sar", seed=seed), diagnostics=False)
            assert abs(f.rho) < 3 * f.spatial_se

    def test_isolates_allowed(self):
        coords = np.vstack([LATTICE.coords(), [[50.0, 50.0]]])
        w = row_standardize(transform(build_distance_matrix(coords), WeightsSpec("connectivity", threshold=1.0)))
        assert list(w.isolates) == [100]
        rng = np.random.default_rng(2)
        x = rng.standard_normal(101)
        y = np.linalg.solve(np.eye(101) - 0.5 * w.values, 1 + 2 * x + rng.standard_normal(101))
        pts = PointSet([str(i) for i in range(101)], coords, {"y1": y, "x1": x})
        for family in ("sar", "sem", "sdm"):
            f = M.fit(M.ModelSpec(family, "y1", ("x1",), w), pts)
            assert np.all(np.isfinite(f.se))
        assert (w.values @ y)[100] == 0.0

    def test_checkerboard_hits_boundary(self):
        coords = LATTICE.coords()
        rng = np.random.default_rng(1)
        y = checkerboard(10, 10) + 1e-3 * rng.standard_normal(100)
        pts = PointSet([str(i) for i in range(100)], coords, {"y1": y, "x1": rng.standard_normal(100)})
        for family in ("sar", "sem"):
            with pytest.raises(BoundarySolutionError, match="edge"):
                M.fit(M.ModelSpec(family, "y1", ("x1",), W10), pts)

    def test_estimate_deterministic(self):
        data = draw("sar", rho=0.5)
        assert fit("sar", data).rho == fit("sar", data).rho

    def test_to_dict(self):
        d = fit("sem", draw("sem", lam=0.3)).to_dict()
        assert set(d["params"]) == {"const", "x1", "lambda"}
        assert d["diagnostics"]["homoscedastic"]["df"] == 2


def fd_effects(f, h=1e-5):
    """Central differences of the reduced form, one column per location."""
    k0 = int(f.spec.intercept)
    K = len(f.spec.regressors)
    x0 = f.X[:, k0:k0 + K].copy()
    out = []
    for k in range(K):
        S_ = np.empty((f.n, f.n))
        for j in range(f.n):
            xp, xm = x0.copy(), x0.copy()
            xp[j, k] += h
            xm[j, k] -= h
            S_[:, j] = (M.reduced_form(f, xp) - M.reduced_form(f, xm)) / (2 * h)
        out.append(S_)
    return out


class TestEffects:
    @pytest.mark.parametrize("family", ["ols", "slx", "sar", "sem", "sdm"])
    def test_matches_finite_differences(self, family):
        data = draw("sdm", rho=0.4, beta=(1.0, 2.0, -1.0), gamma=(0.5, 0.7))
        f = M.fit(spec(family, regressors=("x1", "x2")), data.points)
        eff = M.marginal_effects(f)
        for E, fd in zip(eff.values(), fd_effects(f)):
            scale = np.abs(E.matrix).max()
            assert_allclose(E.matrix, fd, rtol=1e-6, atol=1e-6 * scale)

    def test_sem_is_scaled_identity(self):
        f = fit("sem", draw("sem", lam=0.5))
        E = M.marginal_effects(f)["x1"]
        assert_allclose(E.matrix, f.beta[1] * np.eye(100))
        assert E.indirect == pytest.approx(0.0, abs=1e-12)

    def test_sar_rho_zero_is_scaled_identity(self):
        f = M.fit_sar(spec("sar"), draw("sar").points, rho=0.0)
        assert_allclose(M.marginal_effects(f)["x1"].matrix, f.beta[1] * np.eye(100))

    def test_sar_total_is_beta_over_one_minus_rho(self):
        f = fit("sar", draw("sar", rho=0.5))
        E = M.marginal_effects(f)["x1"]
        assert_allclose(E.total, f.beta[1] / (1 - f.rho), rtol=1e-10)
        assert_allclose(E.direct + E.indirect, E.total)

    def test_slx_totals(self):
        f = fit("slx", draw("slx"))
        E = M.marginal_effects(f)["x1"]
        assert_allclose(E.direct, f.beta[1])
        assert_allclose(E.indirect, f.gamma[0])

    def test_reduced_form_at_fit(self):
        f = fit("sar", draw("sar", rho=0.5))
        A = np.eye(100) - f.rho * W10.values
        assert_allclose(A @ M.reduced_form(f), f.X @ f.coefficients, atol=1e-10)

    def test_singular_multiplier(self):
        f = fit("sar", draw("sar", rho=0.5))
        broken = replace(f, spatial=1.0)
        with pytest.raises(SingularSystemError):
            M.marginal_effects(broken)


class TestLikelihoodRatio:
    def test_identical_models(self):
        f = fit("sar", draw("sar"))
        r = M.lr_test(f, f)
        assert r.statistic == 0.0 and r.p_value == 1.0 and r.df == 0

    @pytest.mark.parametrize("full,restricted,df", [
        ("sar", "ols", 1), ("sem", "ols", 1), ("slx", "ols", 1),
        ("sdm", "slx", 1), ("sdm", "sar", 1), ("sdm", "ols", 2),
    ])
    def test_nested_pairs(self, full, restricted, df):
        data = draw("sdm", rho=0.3)
        r = M.lr_test(fit(full, data), fit(restricted, data))
        assert r.df == df and r.statistic >= 0

    def test_not_nested(self):
        data = draw("sar")
        with pytest.raises(InvalidComparisonError, match="not nested"):
            M.lr_test(fit("sar", data), fit("sem", data))
        with pytest.raises(InvalidComparisonError):
            M.lr_test(fit("ols", data), fit("sar", data))

    def test_different_data(self):
        with pytest.raises(InvalidComparisonError, match="different data"):
            M.lr_test(fit("sar", draw("sar", seed=1)), fit("ols", draw("sar", seed=2)))

    def test_fixed_parameter_is_restricted(self):
        data = draw("sar", rho=0.4)
        r = M.lr_test(fit("sar", data), M.fit_sar(spec("sar"), data.points, rho=0.0))
        assert r.df == 1
        assert_allclose(r.statistic, M.lr_test(fit("sar", data), fit("ols", data)).statistic, atol=1e-8)

    def test_power(self):
        assert all(
            M.lr_test(fit("sar", d := draw("sar", seed=s, rho=0.6)), fit("ols", d)).p_value < 0.05
            for s in range(10)
        )


class TestWald:
    def test_zero_at_zero(self):
        f = M.fit_sar(spec("sar"), draw("sar").points, rho=0.0)
        r = M.wald_test(f)
        assert r.statistic == 0.0 and r.p_value == 1.0

    @staticmethod
    def _ratios(rho, seeds=5):
        w = S.lattice_weights(S.Lattice(20, 20))
        out = []
        for s in range(seeds):
            d = draw("sar", seed=s, rho=rho, layout=S.Lattice(20, 20), weights=w)
            sar = M.fit(spec("sar", w), d.points, diagnostics=False)
            ols = M.fit(spec("ols"), d.points, diagnostics=False)
            out.append(M.wald_test(sar).statistic / M.lr_test(sar, ols).statistic)
        return np.array(out)

    def test_close_to_lr_near_null(self):
        assert np.all(np.abs(self._ratios(0.2) - 1) < 0.2)

    @pytest.mark.xfail(strict=True, reason="profile likelihood is far from quadratic in rho "
                       "over [0, 0.5]; Wald/LR is about 1.35 at N=400")
    def test_close_to_lr_at_half(self):
        assert np.all(np.abs(self._ratios(0.5) - 1) < 0.2)

    def test_ratio_shrinks_toward_null(self):
        assert self._ratios(0.1).mean() < self._ratios(0.3).mean() < self._ratios(0.5).mean()

    def test_no_spatial_parameter(self):
        with pytest.raises(InvalidInputError):
            M.wald_test(fit("slx", draw("slx")))

    def test_wrong_parameter_name(self):
        with pytest.raises(InvalidInputError, match="lambda"):
            M.wald_test(fit("sem", draw("sem")), "rho")

    def test_bad_information(self):
        f = fit("sar", draw("sar"))
        broken = replace(f, vcov=-np.abs(f.vcov))
        with pytest.raises(IllConditionedInformationError):
            M.wald_test(broken)


class TestSize:
    """Null rejection rates on a small lattice; 200 seeds gives a loose band."""

    def test_lr_wald_moran_null_rates(self):
        lr = wald = moran = 0
        seeds = 200
        for s in range(seeds):
            d = draw("sar", seed=1000 + s)
            sar = fit("sar", d, diagnostics=False)
            ols = fit("ols", d, diagnostics=False)
            lr += M.lr_test(sar, ols).p_value < 0.05
            wald += M.wald_test(sar).p_value < 0.05
            moran += moran_test(d.points[S.RESPONSE], W10).p_value < 0.05
        for count in (lr, wald, moran):
            assert 2 <= count <= 22, (lr, wald, moran)


class TestRandomWeights:
    def test_sar_on_irregular_weights(self, rng):
        coords = rng.uniform(0, 10, size=(120, 2))
        w = row_standardize(transform(build_distance_matrix(coords), WeightsSpec("inverse_distance", gamma=1.0)))
        x = rng.standard_normal(120)
        y = np.linalg.solve(np.eye(120) - 0.4 * w.values, 1 + x + rng.standard_normal(120))
        pts = PointSet([str(i) for i in range(120)], coords, {"y1": y, "x1": x})
        f = M.fit(M.ModelSpec("sar", "y1", ("x1",), w), pts)
        assert -0.999 < f.rho < 0.999
        assert np.all(np.isfinite(f.se))
