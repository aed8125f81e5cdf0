import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from polid.stats_core import (AdamState, Chi2Spec, adam_update, chi2_cdf, chi2_isf_log, chi2_logsf,
                              chi2_quantile, eigvals_sym, gammainc_lower, make_rng, max_eigenvalue_sym,
                              min_eigenvalue_sym, split_rng)


class TestIncompleteGamma:
    @given(st.floats(0.5, 40.0), st.floats(0.0, 150.0))
    def test_matches_scipy(self, a, x):
        from scipy.special import gammainc
        assert gammainc_lower(a, x) == pytest.approx(gammainc(a, x), abs=1e-12)

    @pytest.mark.parametrize("x, dof", [(1.0, 1), (30.0, 2), (200.0, 3), (900.0, 16)])
    def test_log_tail_matches_scipy(self, x, dof):
        assert chi2_logsf(x, dof) == pytest.approx(stats.chi2.logsf(x, dof), rel=1e-10)


class TestChi2Quantile:
    def test_zero_prob(self):
        assert chi2_quantile(Chi2Spec(1, 0.0)) == 0.0

    def test_textbook_values(self):
        assert chi2_quantile(Chi2Spec(1, 0.95)) == pytest.approx(3.8415, abs=1e-3)
        assert chi2_quantile(Chi2Spec(2, 0.99)) == pytest.approx(9.2103, abs=1e-3)
        # dof 2 has a closed form cdf
        x = chi2_quantile(2, 0.99)
        assert 1 - np.exp(-x / 2) == pytest.approx(0.99, abs=1e-12)

    @given(st.integers(1, 64), st.floats(1e-6, 1 - 1e-9))
    def test_round_trip_and_scipy(self, dof, p):
        x = chi2_quantile(dof, p)
        assert abs(chi2_cdf(x, dof) - p) < 1e-10
        assert x == pytest.approx(stats.chi2.ppf(p, dof), rel=1e-7, abs=1e-9)

    @given(st.integers(1, 30), st.floats(0.01, 0.98), st.floats(0.001, 0.01))
    def test_monotone(self, dof, p, dp):
        assert chi2_quantile(dof, p + dp) > chi2_quantile(dof, p)
        assert chi2_quantile(dof + 1, p) > chi2_quantile(dof, p)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            Chi2Spec(1, 1.0)
        with pytest.raises(ValueError):
            Chi2Spec(0, 0.5)
        with pytest.raises(ValueError):
            chi2_quantile(1, 1.0)

    @pytest.mark.parametrize("log_tail, dof", [(-50.0, 1), (-200.0, 3), (-40 * np.log(2) + np.log(0.01), 16)])
    def test_log_space_tail(self, log_tail, dof):
        x = chi2_isf_log(log_tail, dof)
        assert stats.chi2.logsf(x, dof) == pytest.approx(log_tail, rel=1e-9)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        s = AdamState.zeros(3, learning_rate=0.1)
        p = np.array([1.0, -2.0, 0.5])
        _, out = adam_update(s, p, np.zeros(3))
        assert_array_equal(out, p)

    def test_first_step_moves_by_lr(self):
        s = AdamState.zeros(1, learning_rate=0.1)
        s2, out = adam_update(s, np.zeros(1), np.ones(1), sign=-1)
        assert_allclose(out, [-0.1], atol=1e-8)
        assert s2.step_count == 1
        _, up = adam_update(s, np.zeros(1), np.ones(1), sign=1)
        assert_allclose(up, [0.1], atol=1e-8)

    def test_deterministic_and_pure(self):
        s = AdamState.zeros(2, learning_rate=0.05)
        p, g = np.array([0.3, 0.1]), np.array([1.5, -0.2])
        a = adam_update(s, p, g)
        b = adam_update(s, p, g)
        assert_array_equal(a[1], b[1])
        assert_array_equal(a[0].second_moment, b[0].second_moment)
        assert s.step_count == 0

    def test_minimises_quadratic(self):
        s = AdamState.zeros(2, learning_rate=0.05)
        p = np.array([3.0, -1.0])
        for _ in range(2000):
            s, p = adam_update(s, p, 2 * (p - np.array([1.0, 2.0])))
        assert_allclose(p, [1.0, 2.0], atol=1e-3)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            adam_update(AdamState.zeros(2), np.zeros(2), np.zeros(3))
        with pytest.raises(ValueError):
            adam_update(AdamState.zeros(2), np.zeros(2), np.zeros(2), sign=0)


def _sym(draw_vals, n):
    a = np.array(draw_vals[: n * n]).reshape(n, n)
    return (a + a.T) / 2


class TestEigen:
    def test_examples(self):
        assert min_eigenvalue_sym(np.eye(3)) == pytest.approx(1.0)
        assert min_eigenvalue_sym(np.diag([2.0, 5.0, 0.5])) == pytest.approx(0.5)
        assert min_eigenvalue_sym(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(1.0, abs=1e-12)
        assert max_eigenvalue_sym(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(3.0, abs=1e-12)

    @given(st.integers(1, 12), st.lists(st.floats(-10, 10), min_size=144, max_size=144))
    def test_against_eigvalsh(self, n, vals):
        a = _sym(vals, n)
        ref = np.linalg.eigvalsh(a)
        got = eigvals_sym(a)
        scale = max(1.0, np.abs(ref).max())
        assert_allclose(got, ref, atol=1e-8 * scale)

    @given(st.integers(1, 8), st.lists(st.floats(-5, 5), min_size=64, max_size=64), st.floats(-20, 20))
    def test_shift(self, n, vals, c):
        a = _sym(vals, n)
        assert min_eigenvalue_sym(a + c * np.eye(n)) == pytest.approx(min_eigenvalue_sym(a) + c, abs=1e-7)

    def test_psd_not_negative(self, rng):
        for _ in range(20):
            b = rng.normal(size=(6, 3))
            assert min_eigenvalue_sym(b @ b.T) >= -1e-8

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            min_eigenvalue_sym(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestRng:
    def test_same_seed_same_stream(self):
        assert_array_equal(make_rng(7, 2, 0).random(5), make_rng(7, 2, 0).random(5))

    def test_streams_differ(self):
        assert not np.array_equal(make_rng(7, 2, 0).random(5), make_rng(7, 2, 1).random(5))
        assert not np.array_equal(make_rng(7).random(5), make_rng(8).random(5))

    def test_split(self):
        a = [g.random() for g in split_rng(make_rng(1), 3)]
        b = [g.random() for g in split_rng(make_rng(1), 3)]
        assert a == b and len(set(a)) == 3

    def test_seed_range(self):
        with pytest.raises(ValueError):
            make_rng(-1)
