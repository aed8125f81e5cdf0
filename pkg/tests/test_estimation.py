import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from polid.estimation import DemoDataset, FitOptions, empirical_fim, index_set, mle_fit, neg_log_likelihood
from polid.policies import BoltzmannLinearPolicy, FeatureMap, GaussianLinearPolicy, PolicyError, NeuralGaussianPolicy


def boltz_data(theta, n, seed, q=None):
    rng = np.random.default_rng(seed)
    q = len(theta) if q is None else q
    p = BoltzmannLinearPolicy(FeatureMap.identity(q), 2)
    s = rng.normal(size=(n, q))
    return p, DemoDataset(s, p.sample_action(np.asarray(theta, float), s, rng))


class TestDataset:
    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            DemoDataset(np.zeros((0, 2)), np.zeros(0))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            DemoDataset(np.array([[np.inf]]), np.array([0]))

    def test_index_set(self):
        assert index_set([3, 1], 4) == (1, 3)
        with pytest.raises(ValueError):
            index_set([4], 4)
        with pytest.raises(ValueError):
            index_set([1, 1], 4)


class TestNll:
    def test_boltzmann_uniform(self):
        p = BoltzmannLinearPolicy(FeatureMap.identity(1), 2)
        d = DemoDataset(np.ones((10, 1)), np.arange(10) % 2)
        assert neg_log_likelihood(p, np.zeros(1), d) == pytest.approx(10 * math.log(2))

    def test_gaussian_constant(self):
        p = GaussianLinearPolicy(FeatureMap.identity(1), 1.0)
        d = DemoDataset(np.ones((4, 1)), np.zeros((4, 1)))
        assert neg_log_likelihood(p, np.zeros(1), d) == pytest.approx(4 * 0.91894, abs=1e-4)

    def test_equals_sum_of_log_probs(self, rng):
        p, d = boltz_data([1.0, -0.5], 300, 1)
        theta = rng.normal(size=2)
        assert neg_log_likelihood(p, theta, d) == pytest.approx(-np.sum(p.log_prob(theta, d.states, d.actions)))


class TestFit:
    def test_recovers_truth(self):
        p, d = boltz_data([2.0, 0.0], 5000, 3)
        rep = mle_fit(p, d, [0, 1])
        assert rep.converged
        assert np.linalg.norm(rep.theta_hat - [2.0, 0.0]) < 0.15

    def test_empty_free_set(self):
        p, d = boltz_data([2.0, 0.0], 100, 3)
        rep = mle_fit(p, d, [])
        assert_array_equal(rep.theta_hat, 0.0)
        assert rep.nll == pytest.approx(neg_log_likelihood(p, np.zeros(2), d))

    def test_gaussian_one_hot_means(self, rng):
        p = GaussianLinearPolicy(FeatureMap.identity(3), 1.0)
        idx = rng.integers(0, 3, 60)
        s = np.eye(3)[idx]
        a = rng.normal(size=(60, 1)) + idx[:, None]
        rep = mle_fit(p, DemoDataset(s, a), [0, 1, 2])
        assert_allclose(rep.theta_hat, [a[idx == j].mean() for j in range(3)], atol=1e-10)

    def test_gaussian_degenerate_design_flagged(self):
        p = GaussianLinearPolicy(FeatureMap.identity(2), 1.0)
        s = np.tile([[1.0, 0.0]], (5, 1))
        rep = mle_fit(p, DemoDataset(s, np.ones((5, 1))), [0, 1])
        assert rep.degenerate

    def test_newton_and_adam_agree(self):
        p, d = boltz_data([1.0, -0.5, 0.3], 800, 4)
        newton = mle_fit(p, d, [0, 2], FitOptions(method="newton"))
        adam = mle_fit(p, d, [0, 2], FitOptions(method="adam", max_iter=20000, tol=1e-5))
        assert newton.converged
        assert adam.nll == pytest.approx(newton.nll, abs=1e-6)
        assert_allclose(adam.theta_hat, newton.theta_hat, atol=1e-4)

    @given(st.integers(0, 1000), st.sets(st.integers(0, 3)))
    def test_pinned_coordinates_exactly_zero(self, seed, free):
        p, d = boltz_data([1.0, 0.0, -1.0, 0.5], 200, seed)
        rep = mle_fit(p, d, free)
        pinned = [j for j in range(4) if j not in free]
        assert np.all(rep.theta_hat[pinned] == 0.0)
        if rep.converged:
            assert rep.grad_norm_at_solution <= rep.tol

    @given(st.integers(0, 1000), st.sets(st.integers(0, 3)), st.sets(st.integers(0, 3)))
    def test_nesting(self, seed, a, b):
        p, d = boltz_data([1.0, 0.0, -1.0, 0.5], 200, seed)
        small, big = sorted(a), sorted(a | b)
        opts = FitOptions()
        assert mle_fit(p, d, small, opts).nll >= mle_fit(p, d, big, opts).nll - opts.tol_nll

    def test_fit_beats_any_theta(self, rng):
        p, d = boltz_data([1.0, -2.0], 500, 5)
        rep = mle_fit(p, d, [0, 1])
        for _ in range(20):
            assert neg_log_likelihood(p, rng.normal(size=2) * 3, d) >= rep.nll

    def test_neural_adam_budget(self, rng):
        p = NeuralGaussianPolicy(FeatureMap.identity(2), 1, hidden_dim=4)
        s = rng.normal(size=(200, 2))
        d = DemoDataset(s, np.tanh(s[:, :1]) + 0.3 * rng.normal(size=(200, 1)))
        rep = mle_fit(p, d, range(p.dim), FitOptions(max_iter=300, accept_budget=True))
        assert rep.usable and rep.method == "adam"
        assert rep.nll < neg_log_likelihood(p, p.initial_params(np.random.default_rng(0)), d)


class TestEmpiricalFim:
    def test_single_and_duplicated(self, rng):
        p = BoltzmannLinearPolicy(FeatureMap.identity(2), 3)
        theta, s = rng.normal(size=4), rng.normal(size=2)
        f = p.fisher_state(theta, s)
        assert_allclose(empirical_fim(p, theta, s[None]), f)
        assert_allclose(empirical_fim(p, theta, np.tile(s, (5, 1))), f)

    def test_hand_average(self):
        p = BoltzmannLinearPolicy(FeatureMap.identity(1), 2)
        assert_allclose(empirical_fim(p, np.zeros(1), np.array([[1.0], [3.0]])), [[1.25]])

    def test_neural_rejected(self):
        p = NeuralGaussianPolicy(FeatureMap.identity(1), 1)
        with pytest.raises(PolicyError):
            empirical_fim(p, np.zeros(p.dim), np.ones((2, 1)))

    def test_precondition_nonsingular(self, rng):
        p = BoltzmannLinearPolicy(FeatureMap.identity(3), 3)
        s = rng.normal(size=(500, 3))
        assert np.linalg.eigvalsh(s.T @ s / 500)[0] > 1e-8
        theta = rng.normal(size=p.dim)
        assert np.all(p.probs(theta, s) > 1e-6)
        assert np.linalg.eigvalsh(empirical_fim(p, theta, s))[0] > 0
