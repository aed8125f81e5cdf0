import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from polid.environments import (CarDriving, ConfigError, ContinuousGridWorld, DiscreteGridWorld, Minigolf,
                                TwoStateMdp, make_env)
from polid.environments.gridworld import N_CELLS, grid_features
from polid.learning import TrainSpec, rollout, train_policy
from polid.stats_core import make_rng

ALL = [DiscreteGridWorld, ContinuousGridWorld, Minigolf, CarDriving, TwoStateMdp]


class TestCommon:
    @pytest.mark.parametrize("cls", ALL)
    def test_reproducible(self, cls):
        env = cls()
        policy = env.make_policy()
        theta = np.zeros(policy.dim) if policy.is_exponential_family else policy.initial_params(make_rng(0))
        a = rollout(env, policy, theta, env.omega0, 5, make_rng(3))
        b = rollout(env, policy, theta, env.omega0, 5, make_rng(3))
        assert_array_equal(a.states, b.states)
        assert_array_equal(a.rewards, b.rewards)

    @pytest.mark.parametrize("cls", ALL)
    def test_reset_density_finite(self, cls):
        env = cls()
        s = env.reset_batch(env.omega0, 50, make_rng(1))
        assert np.all(np.isfinite(env.log_init_density(env.omega0, s)))

    def test_make_env(self):
        assert isinstance(make_env("minigolf"), Minigolf)
        with pytest.raises(ConfigError):
            make_env("nope")

    def test_omega_validation(self):
        with pytest.raises(ConfigError):
            Minigolf().reset(np.array([20.0]), make_rng(0))
        with pytest.raises(ConfigError):
            DiscreteGridWorld().reset(np.zeros(3), make_rng(0))

    def test_non_finite_action(self):
        env = ContinuousGridWorld()
        s = env.reset(env.omega0, make_rng(0))
        with pytest.raises(ValueError):
            env.step(s, np.array([np.nan, 0.0]), make_rng(0))


class TestGridWorld:
    def test_uniform_at_zero(self):
        env = DiscreteGridWorld()
        s = env.reset_batch(np.zeros(2 * N_CELLS), 100_000, make_rng(5))
        cells = (s[:, 0] * 5 + s[:, 1]).astype(int)
        counts = np.bincount(cells, minlength=25)
        p = 1 / 25
        assert np.all(np.abs(counts - 100_000 * p) <= 3 * math.sqrt(100_000 * p * (1 - p)) + 1)
        assert_allclose(env.log_init_density(np.zeros(50), s[:10]), math.log(1 / 625))

    def test_density_normalised(self, rng):
        env = DiscreteGridWorld()
        omega = rng.normal(size=50)
        g = np.array([[ar, ac, gr, gc] for ar in range(5) for ac in range(5) for gr in range(5) for gc in range(5)],
                     float)
        assert np.exp(env.log_init_density(omega, g)).sum() == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(0, 49), st.floats(0.01, 3.0))
    def test_softmax_monotone(self, cell, bump):
        env = DiscreteGridWorld()
        w = env.omega0.copy()
        before = np.concatenate(env.cell_probs(w))[cell]
        w[cell] += bump
        assert np.concatenate(env.cell_probs(w))[cell] > before

    def test_dynamics(self):
        env = DiscreteGridWorld()
        rng = make_rng(0)
        s2, r, done = env.step(np.array([2.0, 2.0, 2.0, 3.0]), 3, rng)
        assert done and r == 1.0
        s2, r, done = env.step(np.array([0.0, 0.0, 4.0, 4.0]), 0, rng)
        assert_array_equal(s2, [0, 0, 4, 4]) and r == 0.0 and not done

    def test_features(self):
        phi = grid_features(np.array([[4, 4, 4, 4], [0, 1, 2, 3]], float))
        assert phi.shape == (2, 16)
        assert phi[0].sum() == 0 and phi[1].sum() == 4
        assert set(np.unique(phi)) <= {0.0, 1.0}

    def test_fim_precondition_after_training(self, trained_grid):
        env, policy, res = trained_grid
        batch = rollout(env, policy, res.theta, env.omega0, 2000, make_rng(77))
        s = batch.demo_dataset().states
        phi = policy.features(s)
        assert np.linalg.eigvalsh(phi.T @ phi / len(phi))[0] > 1e-8

    def test_density_gradient(self, rng):
        env = DiscreteGridWorld()
        w = rng.normal(size=50)
        s = env.reset_batch(w, 3, rng)
        g = env.grad_log_init_density(w, s)
        h = 1e-6
        for j in (0, 7, 30):
            e = np.zeros(50)
            e[j] = h
            fd = (env.log_init_density(w + e, s) - env.log_init_density(w - e, s)) / (2 * h)
            assert_allclose(g[:, j], fd, atol=1e-7)


class TestContinuousGrid:
    def test_reset_means(self):
        env = ContinuousGridWorld()
        s = env.reset_batch(np.full(4, 0.5), 20_000, make_rng(2))
        se = s.std(axis=0) / math.sqrt(len(s))
        assert np.all(np.abs(s.mean(axis=0) - 0.5) < 3 * se)

    def test_density_matches_scipy(self, rng):
        env = ContinuousGridWorld()
        w = np.array([0.3, 0.6, 0.1, 0.9])
        s = env.reset_batch(w, 10, rng)
        sd = env.init_std
        ref = stats.truncnorm.logpdf(s, (0 - w) / sd, (1 - w) / sd, loc=w, scale=sd).sum(axis=1)
        assert_allclose(env.log_init_density(w, s), ref, atol=1e-10)

    def test_density_gradient(self, rng):
        env = ContinuousGridWorld()
        w = np.array([0.3, 0.6, 0.1, 0.9])
        s = env.reset_batch(w, 4, rng)
        g = env.grad_log_init_density(w, s)
        for j in range(4):
            e = np.zeros(4)
            e[j] = 1e-6
            fd = (env.log_init_density(w + e, s) - env.log_init_density(w - e, s)) / 2e-6
            assert_allclose(g[:, j], fd, rtol=1e-5, atol=1e-6)

    def test_features(self, rng):
        env = ContinuousGridWorld()
        phi = env.feature_map(rng.random((30, 4)))
        assert phi.shape == (30, 50)
        assert np.all(np.linalg.norm(phi, axis=1) <= env.feature_map.bound + 1e-9)

    def test_fim_precondition_after_training(self):
        env = ContinuousGridWorld()
        policy = env.make_policy()
        hp = env.hyper
        res = train_policy(env, policy, TrainSpec(hp.train_steps, hp.batch_size, hp.train_lr), env.omega0,
                           make_rng(2024))
        states = rollout(env, policy, res.theta, env.omega0, 500, make_rng(78)).demo_dataset().states
        phi = policy.features(states)
        assert np.linalg.eigvalsh(phi.T @ phi / len(phi))[0] > 1e-8

    def test_goal_ends(self):
        env = ContinuousGridWorld()
        _, r, done = env.step(np.array([0.5, 0.5, 0.55, 0.5]), np.array([0.0, 0.0]), make_rng(0))
        assert done and r == 0.0


class TestMinigolf:
    def test_start_is_uniform_whatever_omega(self):
        env = Minigolf()
        for w in (1.0, 9.0):
            x = env.reset_batch(np.array([w]), 20_000, make_rng(4))[:, 0]
            assert stats.kstest(x, "uniform", args=(0, 20)).pvalue > 0.001
        assert env.log_init_density(np.array([3.0]), np.array([5.0, 0.1])) == pytest.approx(
            env.log_init_density(np.array([12.0]), np.array([5.0, 0.1])))

    @pytest.mark.parametrize("capture", ["speed", "stop"])
    def test_three_regimes(self, capture):
        env = Minigolf(capture=capture)
        env.reset(env.omega0, make_rng(0))
        state = np.array([6.0, 0.12])
        forces = np.linspace(0.0, env.max_force, 20_001)
        rewards = np.array([env.step(state, np.array([f]), make_rng(0))[1] for f in forces])
        change = np.flatnonzero(np.diff(rewards) != 0)
        assert len(change) == 2
        assert rewards[0] == -1.0 and rewards[change[0] + 1] == 0.0 and rewards[-1] == -env.overshoot_penalty

    def test_short_putt_moves_ball(self):
        env = Minigolf()
        env.reset(env.omega0, make_rng(0))
        s2, r, done = env.step(np.array([10.0, 0.1]), np.array([0.5]), make_rng(0))
        assert r == -1.0 and not done
        assert s2[0] == pytest.approx(10.0 - env.roll_distance(0.5, 0.1))

    def test_capture_window(self):
        stop, speed = Minigolf(capture="stop"), Minigolf()
        assert stop.capture_length(0.1) == pytest.approx(0.1)
        v2 = (2 * 0.1 - 0.02135) ** 2 * 9.81 / (2 * 0.02135)
        assert speed.capture_length(0.1) == pytest.approx(v2 / (2 * (5 / 7) * 0.1 * 9.81))
        with pytest.raises(ValueError):
            Minigolf(capture="bounce")

    def test_force_for_inverts_roll(self, rng):
        env = Minigolf()
        s = env.reset_batch(np.array([4.0]), 10, rng)
        f = env.force_for(s, s[:, 0], np.array([4.0]))
        assert_allclose(env.roll_distance(f, s[:, 1], np.array([4.0])), s[:, 0])

    def test_restricted_policy(self):
        env = Minigolf()
        p = env.make_policy([0, 1, 3])
        assert p.dim == 3
        assert_allclose(p.features(np.array([[4.0, 0.1]])), [[1.0, 4.0, 2.0]])


class TestCar:
    def test_sensors_in_unit_interval(self, rng):
        env = CarDriving()
        p = env.make_policy()
        batch = rollout(env, p, p.initial_params(rng), env.omega0, 10, rng)
        s, _, _, _ = batch.flat()
        obs = env.observe(s)
        assert np.all((obs[:, 1:] >= 0) & (obs[:, 1:] <= 1))

    def test_off_road(self):
        env = CarDriving()
        s = np.array([env.radius + env.half_width - 0.01, 0.0, 0.0, 1.0])
        _, r, done = env.step(s, np.array([0.0, 0.0]), make_rng(0))
        assert done and r == -1.0

    def test_reward_proportional_to_speed(self):
        env = CarDriving()
        s = np.array([env.radius, 0.0, math.pi / 2, 1.0])
        s2, r, done = env.step(s, np.array([0.0, 0.0]), make_rng(0))
        assert not done and r == pytest.approx(s2[3] * env.dt)

    def test_units_are_input_groups(self):
        env = CarDriving()
        p = env.make_policy()
        units = env.test_units(p)
        assert len(units) == 5 and all(len(u) == 8 for u in units)


class TestToy:
    def test_exact_return_by_monte_carlo(self):
        env = TwoStateMdp()
        p = env.make_policy()
        theta = np.array([0.4, -0.8])
        batch = rollout(env, p, theta, env.omega0, 100_000, make_rng(8))
        g = batch.discounted_returns(env.gamma)
        assert abs(g.mean() - env.exact_return(p, theta)) < 3 * g.std() / math.sqrt(len(g))
