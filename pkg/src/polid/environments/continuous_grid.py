"""Continuous grid world on the unit square with configurable start means."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

from ..policies import FeatureMap, GaussianLinearPolicy, feature_units
from .base import ConfMdp, Hyperparameters

CENTERS_1D = np.linspace(0.0, 1.0, 5)
CENTERS = np.array([(x, y) for x in CENTERS_1D for y in CENTERS_1D])
BANDWIDTH = 0.25


def rbf(points: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - CENTERS[None]) ** 2).sum(-1)
    return np.exp(-d2 / BANDWIDTH ** 2)


def cgrid_features(states: np.ndarray) -> np.ndarray:
    s = np.asarray(states, dtype=float)
    return np.concatenate([rbf(s[:, :2]), rbf(s[:, 2:])], axis=1)


CGRID_FEATURES = FeatureMap(cgrid_features, 50, bound=math.sqrt(50.0))


def _std_pdf(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


class ContinuousGridWorld(ConfMdp):
    """State ``(ax, ay, gx, gy)``; action is a 2-D velocity clipped to ``max_speed`` per axis.

    Start coordinates are independent normals truncated to [0, 1] with
    means omega and a fixed standard deviation.  Reward is minus the
    distance to the goal; entering the goal disc pays 0 and ends the episode.
    """

    name = "continuous_grid"
    hyper = Hyperparameters(train_steps=100, batch_size=100, train_lr=0.01, conf_steps=100,
                            zeta=1e-6, n_conf=3)
    state_dim = 4
    action_dim = 2
    feature_map = CGRID_FEATURES
    omega_low = np.zeros(4)
    omega_high = np.ones(4)

    def __init__(self, horizon: int = 50, gamma: float = 0.98, omega0=None, init_std: float = 0.3,
                 goal_radius: float = 0.1, max_speed: float = 0.1, policy_std: float = 0.02):
        self.horizon = int(horizon)
        self.gamma = float(gamma)
        self.init_std = float(init_std)
        self.goal_radius = float(goal_radius)
        self.max_speed = float(max_speed)
        self.policy_std = float(policy_std)
        self._omega0 = np.array([0.25, 0.25, 0.75, 0.75]) if omega0 is None else np.asarray(omega0, dtype=float)
        super().__init__()

    @property
    def omega0(self):
        return self._omega0

    def _bounds(self, omega):
        lo = (0.0 - omega) / self.init_std
        hi = (1.0 - omega) / self.init_std
        return lo, hi

    def _sample_init(self, omega, n, rng):
        lo, hi = self._bounds(omega)
        plo, phi_ = ndtr(lo), ndtr(hi)
        u = plo + (phi_ - plo) * rng.random((n, 4))
        return np.clip(omega + self.init_std * ndtri(u), 0.0, 1.0)

    def _log_init(self, omega, s):
        if np.any(s < 0.0) or np.any(s > 1.0):
            raise ValueError("state outside the unit square")
        lo, hi = self._bounds(omega)
        z = (s - omega) / self.init_std
        log_mass = np.log(ndtr(hi) - ndtr(lo))
        logpdf = -0.5 * z * z - 0.5 * math.log(2.0 * math.pi) - math.log(self.init_std)
        return (logpdf - log_mass).sum(axis=1)

    def grad_log_init_density(self, omega, s0):
        w = self.check_omega(omega)
        s = np.asarray(s0, dtype=float)
        s = s[None] if s.ndim == 1 else s
        lo, hi = self._bounds(w)
        mass = ndtr(hi) - ndtr(lo)
        # d/dm log Z = (pdf(lo) - pdf(hi)) / (s Z)
        dlogz = (_std_pdf(lo) - _std_pdf(hi)) / (self.init_std * mass)
        return (s - w) / self.init_std ** 2 - dlogz

    def _step(self, states, actions, rng):
        a = np.asarray(actions, dtype=float).reshape(len(states), 2)
        nxt = states.copy()
        nxt[:, :2] = np.clip(states[:, :2] + np.clip(a, -self.max_speed, self.max_speed), 0.0, 1.0)
        dist = np.linalg.norm(nxt[:, :2] - nxt[:, 2:], axis=1)
        done = dist <= self.goal_radius
        return nxt, np.where(done, 0.0, -dist), done

    def make_policy(self) -> GaussianLinearPolicy:
        return GaussianLinearPolicy(self.feature_map, self.policy_std ** 2 * np.eye(2))

    def test_units(self, policy) -> list[list[int]]:
        return feature_units(policy.q, policy.k)

