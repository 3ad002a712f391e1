"""Model-comparison tests: log-likelihood-ratio variance, W matrix and
eigenvalue weights, distinguishability test, non-nested LRT, nested
tests, information-criterion intervals, and the sequential procedure.

Oracles: hand-evaluated fixtures for the variance and z statistics, the
standard-normal and chi-square tails, and recomputed weighted-chi-square
probabilities.
"""

import types
import warnings

import numpy as np
import pytest
from scipy import stats

from semvuong.dsl import parse_model
from semvuong.sem import Dataset, fit_ml, information_criteria
from semvuong.vuong import (
    ComparisonResult,
    DegenerateComparisonError,
    distinguishability_test,
    ic_difference_ci,
    nested_tests,
    nonnested_lrt,
    omega_hat_squared,
    sequential_compare,
    w_matrix,
)
from semvuong.wchisq import WeightedChiSq

from modelzoo import simulate_from


def fake_fit(ll, k=2, scores=None, unit_hessian=None):
    ll = np.asarray(ll, dtype=float)
    return types.SimpleNamespace(
        loglik_casewise=ll,
        loglik_total=float(ll.sum()),
        n=ll.size,
        k=k,
        scores=scores,
        unit_hessian=unit_hessian,
        converged=True,
    )


def fake_data(n):
    return types.SimpleNamespace(n=n)


MEDIATION = """
X2 ~ X1
X3 ~ X2
"""

DIRECT = """
X2 ~ X1
X3 ~ X1
"""


def mediation_dataset(n, seed, b1=0.6, b2=0.5):
    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal(n)
    x2 = b1 * x1 + rng.standard_normal(n) * 0.8
    x3 = b2 * x2 + rng.standard_normal(n) * 0.8
    return Dataset(np.column_stack([x1, x2, x3]), ["X1", "X2", "X3"])


class TestOmegaHatSquared:
    def test_identical_vectors(self):
        ll = np.array([-1.0, -2.0, -0.5])
        assert omega_hat_squared(ll, ll) == 0.0

    def test_hand_fixture(self):
        ll_a = np.array([0.0, 1.0, 2.0])
        ll_b = np.zeros(3)
        assert omega_hat_squared(ll_a, ll_b) == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_constant_offset(self):
        ll = np.array([-1.0, -2.0, -0.5, -3.0])
        assert abs(omega_hat_squared(ll + 1.7, ll)) < 1e-12

    def test_equals_biased_sample_variance(self):
        rng = np.random.default_rng(0)
        ll_a = rng.standard_normal(50)
        ll_b = rng.standard_normal(50)
        assert omega_hat_squared(ll_a, ll_b) == pytest.approx(
            float(np.var(ll_a - ll_b)), abs=1e-14
        )

    def test_bessel_flag(self):
        rng = np.random.default_rng(1)
        ll_a = rng.standard_normal(20)
        ll_b = rng.standard_normal(20)
        plain = omega_hat_squared(ll_a, ll_b)
        bessel = omega_hat_squared(ll_a, ll_b, bessel=True)
        assert bessel == pytest.approx(plain * 20 / 19, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            omega_hat_squared(np.zeros(3), np.zeros(4))

    def test_too_short(self):
        with pytest.raises(ValueError):
            omega_hat_squared(np.zeros(1), np.zeros(1))


class TestWMatrix:
    def test_block_shape(self):
        rng = np.random.default_rng(2)
        s_a = rng.standard_normal((40, 3))
        s_b = rng.standard_normal((40, 2))
        u_a = -np.eye(3)
        u_b = -np.eye(2)
        w = w_matrix(u_a, u_b, s_a, s_b)
        assert w.shape == (5, 5)

    def test_block_layout_against_direct_assembly(self):
        rng = np.random.default_rng(3)
        s_a = rng.standard_normal((60, 2))
        s_b = rng.standard_normal((60, 2))
        a_mat = rng.standard_normal((2, 2))
        u_a = -(a_mat @ a_mat.T + np.eye(2))
        b_mat = rng.standard_normal((2, 2))
        u_b = -(b_mat @ b_mat.T + np.eye(2))
        n = 60
        v_a = s_a.T @ s_a / n
        v_b = s_b.T @ s_b / n
        v_ab = s_a.T @ s_b / n
        expected = np.block([
            [-v_a @ np.linalg.inv(u_a), -v_ab @ np.linalg.inv(u_b)],
            [v_ab.T @ np.linalg.inv(u_a), v_b @ np.linalg.inv(u_b)],
        ])
        np.testing.assert_allclose(w_matrix(u_a, u_b, s_a, s_b), expected, atol=1e-10)

    def test_identical_model_nilpotent_structure(self):
        # With A = B the block matrix squares to zero: every eigenvalue
        # vanishes up to roundoff, so the sum is ~0 and the squared
        # eigenvalues are equal.
        rng = np.random.default_rng(4)
        s = rng.standard_normal((80, 1))
        u = np.array([[-0.7]])
        w = w_matrix(u, u, s, s)
        np.testing.assert_allclose(w @ w, np.zeros((2, 2)), atol=1e-12)
        eig = np.linalg.eigvals(w)
        assert abs(eig.sum()) < 1e-8
        assert abs(abs(eig[0]) - abs(eig[1])) < 1e-8

    def test_singular_u_rejected(self):
        s = np.random.default_rng(5).standard_normal((30, 2))
        u_bad = np.zeros((2, 2))
        with pytest.raises(Exception, match="identif"):
            w_matrix(u_bad, -np.eye(2), s, s)


class TestDistinguishability:
    def test_identical_fits_degenerate(self):
        d = mediation_dataset(300, seed=6)
        spec = parse_model(MEDIATION)
        fit_a = fit_ml(spec, d)
        fit_b = fit_ml(parse_model(MEDIATION), d)
        with pytest.warns(UserWarning, match="identical|indistinguishable"):
            stat, eig, p = distinguishability_test(fit_a, fit_b, d)
        assert stat == pytest.approx(0.0, abs=1e-12)
        assert p == 1.0
        assert eig.shape == (fit_a.k + fit_b.k,)

    def test_distinguishable_models_far_in_tail(self):
        d = mediation_dataset(5000, seed=7)
        fit_a = fit_ml(parse_model(MEDIATION), d)
        fit_b = fit_ml(parse_model(DIRECT), d)
        stat, eig, p = distinguishability_test(fit_a, fit_b, d)
        assert stat > 0
        assert p < 1e-6
        assert eig.shape == (fit_a.k + fit_b.k,)

    def test_p_recomputed_from_squared_eigenvalues(self):
        d = mediation_dataset(400, seed=8)
        fit_a = fit_ml(parse_model(MEDIATION), d)
        fit_b = fit_ml(parse_model(DIRECT), d)
        stat, eig, p = distinguishability_test(fit_a, fit_b, d)
        expected = WeightedChiSq(eig**2).upper_p(stat)
        assert p == pytest.approx(expected, abs=1e-10)

    def test_symmetric_in_model_order(self):
        d = mediation_dataset(400, seed=9)
        fit_a = fit_ml(parse_model(MEDIATION), d)
        fit_b = fit_ml(parse_model(DIRECT), d)
        stat_ab, _, p_ab = distinguishability_test(fit_a, fit_b, d)
        stat_ba, _, p_ba = distinguishability_test(fit_b, fit_a, d)
        assert stat_ab == pytest.approx(stat_ba, rel=1e-10)
        assert p_ab == pytest.approx(p_ba, abs=1e-8)


class TestNonNestedLRT:
    def test_hand_fixture(self):
        fit_a = fake_fit([0.0, 1.0, 2.0])
        fit_b = fake_fit([0.0, 0.0, 0.0])
        z, p_one, p_two = nonnested_lrt(fit_a, fit_b, fake_data(3))
        assert z == pytest.approx(2.1213, abs=1e-4)
        assert p_one == pytest.approx(stats.norm.cdf(-2.1213), abs=1e-5)
        assert p_two == pytest.approx(2 * stats.norm.cdf(-2.1213), abs=1e-5)

    def test_reported_z_reproduces_reported_p(self):
        # z = 2.86 must yield a one-sided p of about 0.002.
        d = np.array([0.43, 2.43, 0.43, 2.43])
        z, p_one, _ = nonnested_lrt(fake_fit(d), fake_fit(np.zeros(4)), fake_data(4))
        assert z == pytest.approx(2.86, abs=1e-10)
        assert p_one == pytest.approx(0.0021, abs=1e-4)

    def test_sign_convention_positive_favors_first(self):
        rng = np.random.default_rng(10)
        base = rng.standard_normal(100)
        better = base + 0.3 + 0.1 * rng.standard_normal(100)
        z_ab, _, _ = nonnested_lrt(fake_fit(better), fake_fit(base), fake_data(100))
        z_ba, _, _ = nonnested_lrt(fake_fit(base), fake_fit(better), fake_data(100))
        assert z_ab > 0
        assert z_ba == pytest.approx(-z_ab, abs=1e-12)

    def test_degenerate_variance_rejected(self):
        ll = np.array([-1.0, -2.0, -0.5])
        with pytest.raises(DegenerateComparisonError):
            nonnested_lrt(fake_fit(ll + 0.4), fake_fit(ll), fake_data(3))


class TestNestedTests:
    @staticmethod
    def _nested_pair(n=400, seed=11, rho=0.4):
        rng = np.random.default_rng(seed)
        x1 = rng.standard_normal(n)
        x2 = rho * x1 + np.sqrt(1 - rho * rho) * rng.standard_normal(n)
        d = Dataset(np.column_stack([x1, x2]), ["X1", "X2"])
        full = fit_ml(parse_model("X1 ~~ X1\nX2 ~~ X2\nX1 ~~ X2"), d)
        restricted = fit_ml(parse_model("X1 ~~ X1\nX2 ~~ X2"), d)
        return full, restricted, d

    def test_classical_matches_chi2_arithmetic(self):
        full, restricted, d = self._nested_pair()
        _, _, p_classical = nested_tests(full, restricted, d)
        stat = 2 * (full.loglik_total - restricted.loglik_total)
        df = full.k - restricted.k
        assert p_classical == pytest.approx(stats.chi2(df).sf(stat), abs=1e-12)

    def test_variance_and_lr_stats_recomputed(self):
        full, restricted, d = self._nested_pair(seed=12)
        p_var, p_lr, _ = nested_tests(full, restricted, d)
        stat_var, eig, p_var2 = distinguishability_test(full, restricted, d)
        assert p_var == pytest.approx(p_var2, abs=1e-9)
        lr_stat = 2 * (full.loglik_total - restricted.loglik_total)
        assert p_lr == pytest.approx(WeightedChiSq(eig).upper_p(lr_stat), abs=1e-9)

    def test_equal_loglik_full_not_preferred(self):
        # Orthogonalized columns: the free covariance is estimated at zero,
        # so the classical statistic vanishes.
        rng = np.random.default_rng(13)
        x1 = rng.standard_normal(500)
        x2 = rng.standard_normal(500)
        x2 = x2 - x1 * (x1 @ x2) / (x1 @ x1)
        x2 = x2 - x2.mean() + 0.0
        x1 = x1 - x1.mean()
        d = Dataset(np.column_stack([x1, x2]), ["X1", "X2"])
        full = fit_ml(parse_model("X1 ~~ X1\nX2 ~~ X2\nX1 ~~ X2"), d)
        restricted = fit_ml(parse_model("X1 ~~ X1\nX2 ~~ X2"), d)
        _, _, p_classical = nested_tests(full, restricted, d)
        assert p_classical > 0.99

    def test_equal_complexity_rejected(self):
        full, restricted, d = self._nested_pair(seed=14)
        with pytest.raises(ValueError):
            nested_tests(full, full, d)

    def test_rejects_under_strong_dependence(self):
        full, restricted, d = self._nested_pair(n=2000, seed=15, rho=0.6)
        p_var, p_lr, p_classical = nested_tests(full, restricted, d)
        assert p_classical < 1e-6
        assert p_lr < 1e-4
        assert p_var < 1e-4


class TestICDifferenceCI:
    @staticmethod
    def _fits_with(sum_diff, var_diff, n, k_a=4, k_b=4):
        u = np.sin(np.arange(1, n + 1))
        v = (u - u.mean()) / np.std(u)
        d = sum_diff / n + np.sqrt(var_diff) * v
        ll_b = -1.5 * np.ones(n)
        return fake_fit(ll_b + d, k=k_a), fake_fit(ll_b, k=k_b)

    def test_report_scale_fixture(self):
        # Center 15.2 with n=599 and variance 0.05 gives half-width
        # 1.96 * sqrt(4 * 599 * 0.05) ~ 21.45.
        n = 599
        target_bic_diff = 15.2
        sum_diff = -target_bic_diff / 2.0
        fit_a, fit_b = self._fits_with(sum_diff, 0.05, n)
        lo, hi = ic_difference_ci(fit_a, fit_b, fake_data(n), alpha=0.05,
                                  criterion="bic")
        _, bic_a = information_criteria(fit_a)
        _, bic_b = information_criteria(fit_b)
        assert bic_a - bic_b == pytest.approx(15.2, abs=1e-9)
        assert (hi - lo) / 2 == pytest.approx(21.45, abs=0.01)
        assert lo == pytest.approx(15.2 - 21.452, abs=0.01)
        assert hi == pytest.approx(15.2 + 21.452, abs=0.01)

    def test_aic_center_shares_width(self):
        fit_a, fit_b = self._fits_with(-3.0, 0.1, 200, k_a=5, k_b=3)
        lo_a, hi_a = ic_difference_ci(fit_a, fit_b, fake_data(200), alpha=0.05,
                                      criterion="aic")
        lo_b, hi_b = ic_difference_ci(fit_a, fit_b, fake_data(200), alpha=0.05,
                                      criterion="bic")
        aic_a, bic_a = information_criteria(fit_a)
        aic_b, bic_b = information_criteria(fit_b)
        assert hi_a - lo_a == pytest.approx(hi_b - lo_b, rel=1e-12)
        assert (lo_a + hi_a) / 2 == pytest.approx(aic_a - aic_b, abs=1e-9)
        assert (lo_b + hi_b) / 2 == pytest.approx(bic_a - bic_b, abs=1e-9)

    def test_alpha_changes_quantile(self):
        fit_a, fit_b = self._fits_with(2.0, 0.2, 150)
        lo_05, hi_05 = ic_difference_ci(fit_a, fit_b, fake_data(150), alpha=0.05,
                                        criterion="bic")
        lo_10, hi_10 = ic_difference_ci(fit_a, fit_b, fake_data(150), alpha=0.10,
                                        criterion="bic")
        ratio = (hi_10 - lo_10) / (hi_05 - lo_05)
        assert ratio == pytest.approx(
            stats.norm.ppf(0.95) / stats.norm.ppf(0.975), rel=1e-9
        )

    def test_degenerate_zero_width(self):
        ll = -np.abs(np.random.default_rng(16).standard_normal(50)) - 0.5
        fit_a = fake_fit(ll, k=3)
        fit_b = fake_fit(ll, k=2)
        with pytest.warns(UserWarning, match="indistinguishable|degenerate"):
            lo, hi = ic_difference_ci(fit_a, fit_b, fake_data(50), alpha=0.05,
                                      criterion="bic")
        assert lo == hi
        _, bic_a = information_criteria(fit_a)
        _, bic_b = information_criteria(fit_b)
        assert lo == pytest.approx(bic_a - bic_b, abs=1e-9)

    def test_swap_mirrors_interval(self):
        fit_a, fit_b = self._fits_with(-4.0, 0.3, 120, k_a=6, k_b=2)
        lo_ab, hi_ab = ic_difference_ci(fit_a, fit_b, fake_data(120), alpha=0.05,
                                        criterion="bic")
        lo_ba, hi_ba = ic_difference_ci(fit_b, fit_a, fake_data(120), alpha=0.05,
                                        criterion="bic")
        assert lo_ab == pytest.approx(-hi_ba, abs=1e-9)
        assert hi_ab == pytest.approx(-lo_ba, abs=1e-9)

    def test_bad_alpha_rejected(self):
        fit_a, fit_b = self._fits_with(1.0, 0.1, 50)
        with pytest.raises(ValueError):
            ic_difference_ci(fit_a, fit_b, fake_data(50), alpha=1.5, criterion="bic")
        with pytest.raises(ValueError):
            ic_difference_ci(fit_a, fit_b, fake_data(50), alpha=0.05, criterion="dic")


class TestSequentialCompare:
    def test_identical_models_indistinguishable(self):
        d = mediation_dataset(250, seed=17)
        fit_a = fit_ml(parse_model(MEDIATION), d)
        fit_b = fit_ml(parse_model(MEDIATION), d)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = sequential_compare(fit_a, fit_b, d)
        assert isinstance(res, ComparisonResult)
        assert res.decision == "equivalent-fit-indistinguishable"
        assert not res.lrt_applicable
        assert res.p_distinguish == 1.0

    def test_prefer_first_when_first_generates(self):
        d = mediation_dataset(5000, seed=18)
        fit_a = fit_ml(parse_model(MEDIATION), d)
        fit_b = fit_ml(parse_model(DIRECT), d)
        res = sequential_compare(fit_a, fit_b, d)
        assert res.decision == "prefer-A"
        assert res.z_lrt > 0
        assert res.p_distinguish < 0.05
        assert res.p_lrt_two_sided < 0.05

    def test_swap_antisymmetry(self):
        d = mediation_dataset(5000, seed=18)
        fit_a = fit_ml(parse_model(MEDIATION), d)
        fit_b = fit_ml(parse_model(DIRECT), d)
        res_ab = sequential_compare(fit_a, fit_b, d)
        res_ba = sequential_compare(fit_b, fit_a, d)
        assert res_ba.decision == "prefer-B"
        assert res_ba.z_lrt == pytest.approx(-res_ab.z_lrt, abs=1e-9)
        assert res_ba.p_distinguish == pytest.approx(res_ab.p_distinguish, abs=1e-8)
        assert res_ba.omega_hat_sq == pytest.approx(res_ab.omega_hat_sq, abs=1e-12)
        assert res_ba.ic_ci[0] == pytest.approx(-res_ab.ic_ci[1], abs=1e-7)
        assert res_ba.ic_ci[1] == pytest.approx(-res_ab.ic_ci[0], abs=1e-7)
        assert res_ba.ic_diff[1] == pytest.approx(-res_ab.ic_diff[1], abs=1e-9)

    def test_no_preference_under_symmetric_misspecification(self):
        # X3 depends equally on X1 and X2; each candidate model drops one
        # predictor, so fits are equal in population but distinguishable.
        rng = np.random.default_rng(19)
        n = 4000
        x1 = rng.standard_normal(n)
        x2 = rng.standard_normal(n)
        x3 = 0.5 * x1 + 0.5 * x2 + 0.7 * rng.standard_normal(n)
        d = Dataset(np.column_stack([x1, x2, x3]), ["X1", "X2", "X3"])
        fit_a = fit_ml(parse_model("X3 ~ X1\nX2 ~~ X2"), d)
        fit_b = fit_ml(parse_model("X3 ~ X2\nX1 ~~ X1"), d)
        res = sequential_compare(fit_a, fit_b, d)
        assert res.p_distinguish < 0.05
        assert res.decision == "no-preference"
        assert res.lrt_applicable

    def test_result_fields_complete(self):
        d = mediation_dataset(400, seed=20)
        fit_a = fit_ml(parse_model(MEDIATION), d)
        fit_b = fit_ml(parse_model(DIRECT), d)
        res = sequential_compare(fit_a, fit_b, d)
        assert res.omega_hat_sq >= 0
        assert res.w_eigenvalues.shape == (fit_a.k + fit_b.k,)
        assert 0 <= res.p_distinguish <= 1
        assert 0 <= res.p_lrt_two_sided <= 1
        assert res.n == 400
        assert res.k == fit_a.k and res.q == fit_b.k
        assert res.ic_ci[0] <= res.ic_ci[1]
        assert res.p_nested_variance is None
        assert res.p_nested_lr is None

    def test_nested_variant_surfaces_nested_pvalues(self):
        rng = np.random.default_rng(21)
        x1 = rng.standard_normal(600)
        x2 = 0.5 * x1 + rng.standard_normal(600)
        d = Dataset(np.column_stack([x1, x2]), ["X1", "X2"])
        full = fit_ml(parse_model("X1 ~~ X1\nX2 ~~ X2\nX1 ~~ X2"), d)
        restricted = fit_ml(parse_model("X1 ~~ X1\nX2 ~~ X2"), d)
        res = sequential_compare(full, restricted, d, variant="nested")
        assert res.p_nested_variance is not None
        assert res.p_nested_lr is not None
        assert res.decision in ("prefer-A", "no-preference",
                                "equivalent-fit-indistinguishable")

    def test_decision_thresholds_respect_alphas(self):
        # Re-running with alphas bracketing the observed p-values must flip
        # the decision: it is a pure function of (p_distinguish, z, alphas).
        rng = np.random.default_rng(19)
        n = 4000
        x1 = rng.standard_normal(n)
        x2 = rng.standard_normal(n)
        x3 = 0.5 * x1 + 0.5 * x2 + 0.7 * rng.standard_normal(n)
        d = Dataset(np.column_stack([x1, x2, x3]), ["X1", "X2", "X3"])
        fit_a = fit_ml(parse_model("X3 ~ X1\nX2 ~~ X2"), d)
        fit_b = fit_ml(parse_model("X3 ~ X2\nX1 ~~ X1"), d)
        base = sequential_compare(fit_a, fit_b, d)
        assert base.decision == "no-preference"
        p_two = base.p_lrt_two_sided
        loose = sequential_compare(fit_a, fit_b, d, alpha2=min(0.999, p_two * 1.5))
        assert loose.decision in ("prefer-A", "prefer-B")
        tight = sequential_compare(fit_a, fit_b, d, alpha2=p_two * 0.5)
        assert tight.decision == "no-preference"
