"""Minigolf: one putt per step towards a hole at distance x on a green with friction f."""
from __future__ import annotations

import math

import numpy as np

from ..policies import FeatureMap, GaussianLinearPolicy
from .base import ConfMdp, Hyperparameters

GRAVITY = 9.81
FEATURE_NAMES = ["1", "x", "f", "sqrt_x", "sqrt_f", "sqrt_xf"]


def golf_features(states: np.ndarray) -> np.ndarray:
    x = np.maximum(states[:, 0], 0.0)
    f = states[:, 1]
    return np.column_stack([np.ones_like(x), x, f, np.sqrt(x), np.sqrt(f), np.sqrt(x * f)])


class Minigolf(ConfMdp):
    """State ``(x, f)``; action is the putter force.

    The ball leaves at speed ``omega * force`` and rolls
    ``v**2 / (2 * (5/7) * f * g)``.  Landing in the hole interval
    ``[x, x + capture_length(f)]`` holes the ball (reward 0, done), rolling
    past it costs ``overshoot_penalty`` and ends the episode, stopping short
    costs 1 and leaves the ball ``x - distance`` from the hole.  omega is the
    putter length.

    With ``capture="speed"`` a ball drops whenever it reaches the hole slower
    than ``sqrt((2 * hole_size - ball_radius)**2 * g / (2 * ball_radius))``,
    which turns into a distance window of ``v_cap**2 / (2 * decel)``.
    ``capture="stop"`` instead requires the ball to stop within
    ``hole_size`` past the hole.
    """

    name = "minigolf"
    hyper = Hyperparameters(train_steps=100, batch_size=100, train_lr=0.003, conf_steps=100,
                            zeta=0.25, n_conf=10)
    state_dim = 2
    action_dim = 1
    transition_depends_on_config = True
    omega_low = np.array([1.0])
    omega_high = np.array([15.0])

    def __init__(self, horizon: int = 20, gamma: float = 0.99, omega0: float = 5.0,
                 x_range=(0.0, 20.0), friction_range=(0.065, 0.196), hole_size: float = 0.1,
                 max_force: float = 5.0, overshoot_penalty: float = 100.0, policy_variance: float = 0.01,
                 capture: str = "speed", ball_radius: float = 0.02135):
        if capture not in ("speed", "stop"):
            raise ValueError("capture must be 'speed' or 'stop'")
        self.capture = capture
        self.ball_radius = float(ball_radius)
        self.horizon = int(horizon)
        self.gamma = float(gamma)
        self.x_range = tuple(float(v) for v in x_range)
        self.friction_range = tuple(float(v) for v in friction_range)
        self.hole_size = float(hole_size)
        self.max_force = float(max_force)
        self.overshoot_penalty = float(overshoot_penalty)
        self.policy_variance = float(policy_variance)
        self._omega0 = np.array([float(omega0)])
        bound = math.sqrt(1 + self.x_range[1] ** 2 + self.friction_range[1] ** 2 + self.x_range[1]
                          + self.friction_range[1] + self.x_range[1] * self.friction_range[1])
        self.feature_map = FeatureMap(golf_features, 6, bound=bound)
        super().__init__()

    @property
    def omega0(self):
        return self._omega0

    def _sample_init(self, omega, n, rng):
        u = rng.random((n, 2))
        x = self.x_range[0] + (self.x_range[1] - self.x_range[0]) * u[:, 0]
        f = self.friction_range[0] + (self.friction_range[1] - self.friction_range[0]) * u[:, 1]
        return np.column_stack([x, f])

    def _log_init(self, omega, s):
        x, f = s[:, 0], s[:, 1]
        if np.any((x < self.x_range[0]) | (x > self.x_range[1]) |
                  (f < self.friction_range[0]) | (f > self.friction_range[1])):
            raise ValueError("state outside the start distribution's support")
        val = -math.log(self.x_range[1] - self.x_range[0]) - math.log(self.friction_range[1] - self.friction_range[0])
        return np.full(len(s), val)

    def decel(self, friction):
        return (5.0 / 7.0) * friction * GRAVITY

    def capture_length(self, friction) -> np.ndarray:
        """Width, in roll distance past the hole, of the holing interval."""
        friction = np.asarray(friction, dtype=float)
        if self.capture == "stop":
            return np.full_like(friction, self.hole_size)
        r = self.ball_radius
        v2 = (2.0 * self.hole_size - r) ** 2 * GRAVITY / (2.0 * r)
        return v2 / (2.0 * self.decel(friction))

    def roll_distance(self, force, friction, omega=None):
        w = float(self.omega[0] if omega is None else np.asarray(omega).reshape(-1)[0])
        v = w * np.clip(force, 0.0, self.max_force)
        return v * v / (2.0 * self.decel(friction))

    def _step(self, states, actions, rng):
        force = np.asarray(actions, dtype=float).reshape(len(states))
        x, f = states[:, 0], states[:, 1]
        dist = self.roll_distance(force, f)
        top = x + self.capture_length(f)
        holed = (dist >= x) & (dist <= top)
        over = dist > top
        reward = np.where(holed, 0.0, np.where(over, -self.overshoot_penalty, -1.0))
        nxt = states.copy()
        nxt[:, 0] = np.where(holed | over, 0.0, x - dist)
        return nxt, reward, holed | over

    def force_for(self, states, distance, omega=None) -> np.ndarray:
        """Force that rolls the ball ``distance`` on each state's green."""
        w = float(self.omega[0] if omega is None else np.asarray(omega).reshape(-1)[0])
        return np.sqrt(2.0 * self.decel(states[:, 1]) * distance) / w

    def cautious_theta(self, policy, free, omega, rng, aim: float, n_states: int = 2000) -> np.ndarray:
        """Least-squares fit, on the free coordinates, of the force that rolls
        ``x + aim * capture_length(f)``."""
        free = list(free)
        states = self._sample_init(np.asarray(omega, dtype=float).reshape(-1), n_states, rng)
        phi = policy.features(states)[:, free]
        dist = states[:, 0] + aim * self.capture_length(states[:, 1])
        target = np.minimum(self.force_for(states, dist, omega), self.max_force)
        theta = np.zeros(policy.dim)
        theta[free] = np.linalg.lstsq(phi, target, rcond=None)[0]
        return theta

    def initial_theta(self, policy, free, omega, rng, aims=(0.0, 0.1, 0.2, 0.3, 0.5), n_eval: int = 500):
        """Best of a few cautious least-squares putting rules, by Monte-Carlo return.

        Rewards are flat until the ball is holed, so policy-gradient training
        started from zero force never sees a signal.
        """
        from ..learning import estimate_return

        best, best_ret = None, -np.inf
        for aim in aims:
            theta = self.cautious_theta(policy, free, omega, rng, aim)
            ret, _ = estimate_return(self, policy, theta, omega, n_eval, rng)
            if ret > best_ret:
                best, best_ret = theta, ret
        return best

    def make_policy(self, features=None) -> GaussianLinearPolicy:
        """Gaussian policy on all six features, or on the listed feature indices only."""
        fm = self.feature_map
        if features is not None:
            idx = list(features)
            fm = FeatureMap(lambda s, idx=idx: golf_features(s)[:, idx], len(idx), bound=self.feature_map.bound)
        return GaussianLinearPolicy(fm, [[self.policy_variance]])
