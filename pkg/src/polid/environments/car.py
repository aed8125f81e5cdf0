"""Car on a constant-curvature road, observed through speed and four range sensors."""
from __future__ import annotations

import math

import numpy as np

from ..policies import FeatureMap, NeuralGaussianPolicy
from .base import ConfMdp, Hyperparameters

SENSOR_ANGLES = np.array([-math.pi / 4, -math.pi / 6, math.pi / 6, math.pi / 4])
INPUT_NAMES = ["speed", "sensor_-pi/4", "sensor_-pi/6", "sensor_pi/6", "sensor_pi/4"]


def _ray_to_circle(px, py, ux, uy, radius):
    """Distance along unit rays to a circle centred at the origin (inf when missed)."""
    b = px * ux + py * uy
    c = px * px + py * py - radius * radius
    disc = b * b - c
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t1 = -b - sq
    t2 = -b + sq
    t = np.where(t1 > 1e-12, t1, np.where(t2 > 1e-12, t2, np.inf))
    return np.where(ok, t, np.inf)


class CarDriving(ConfMdp):
    """Unicycle car on an annular road turning left.

    Internal state ``(px, py, heading, speed)``; the feature map turns it
    into ``(speed / max_speed, four sensor readings in [0, 1])``.  The road
    is the ring ``radius +- half_width`` around the origin; the car starts
    at angle 0 heading counter-clockwise and finishes at ``arc`` radians.
    omega is the mean lateral start offset from the road centre line.
    Actions ``(acceleration, steering)`` are clipped to [-1, 1].
    """

    name = "car"
    hyper = Hyperparameters(train_steps=100, batch_size=50, train_lr=0.03, delta=0.1,
                            fit_max_iter=200, fit_lr=0.1)
    state_dim = 4
    action_dim = 2
    omega_low = np.array([-0.8])
    omega_high = np.array([0.8])

    def __init__(self, horizon: int = 250, gamma: float = 0.996, omega0: float = 0.0,
                 radius: float = 10.0, half_width: float = 1.0, arc: float = math.pi / 2,
                 dt: float = 0.1, max_speed: float = 3.0, accel_gain: float = 2.0,
                 steer_gain: float = 1.0, sensor_range: float = 5.0, offset_std: float = 0.2,
                 heading_std: float = 0.05, speed_range=(0.3, 0.7), policy_variance: float = 0.1,
                 hidden: int = 8):
        self.horizon = int(horizon)
        self.gamma = float(gamma)
        self.radius, self.half_width, self.arc = float(radius), float(half_width), float(arc)
        self.dt, self.max_speed = float(dt), float(max_speed)
        self.accel_gain, self.steer_gain = float(accel_gain), float(steer_gain)
        self.sensor_range = float(sensor_range)
        self.offset_std, self.heading_std = float(offset_std), float(heading_std)
        self.speed_range = tuple(float(v) for v in speed_range)
        self.policy_variance = float(policy_variance)
        self.hidden = int(hidden)
        self._omega0 = np.array([float(omega0)])
        self.feature_map = FeatureMap(self.observe, 5, bound=math.sqrt(5.0))
        super().__init__()

    @property
    def omega0(self):
        return self._omega0

    def observe(self, states: np.ndarray) -> np.ndarray:
        px, py, h, v = (states[:, j] for j in range(4))
        out = np.empty((len(states), 5))
        out[:, 0] = v / self.max_speed
        r_in, r_out = self.radius - self.half_width, self.radius + self.half_width
        for j, ang in enumerate(SENSOR_ANGLES):
            ux, uy = np.cos(h + ang), np.sin(h + ang)
            t = np.minimum(_ray_to_circle(px, py, ux, uy, r_in), _ray_to_circle(px, py, ux, uy, r_out))
            out[:, j + 1] = np.minimum(t / self.sensor_range, 1.0)
        return out

    def _sample_init(self, omega, n, rng):
        off = omega[0] + self.offset_std * rng.standard_normal(n)
        heading = math.pi / 2 + self.heading_std * rng.standard_normal(n)
        lo, hi = self.speed_range
        speed = self.max_speed * (lo + (hi - lo) * rng.random(n))
        return np.column_stack([self.radius + off, np.zeros(n), heading, speed])

    def _log_init(self, omega, s):
        """Density of (lateral offset, heading, speed); the start angle is fixed at 0."""
        if np.any(np.abs(s[:, 1]) > 1e-9):
            raise ValueError("start states lie on the starting line py = 0")
        lo, hi = self.max_speed * self.speed_range[0], self.max_speed * self.speed_range[1]
        if np.any((s[:, 3] < lo) | (s[:, 3] > hi)):
            raise ValueError("start speed outside its range")
        z_off = (s[:, 0] - self.radius - omega[0]) / self.offset_std
        z_h = (s[:, 2] - math.pi / 2) / self.heading_std
        c = -math.log(2.0 * math.pi) - math.log(self.offset_std) - math.log(self.heading_std) - math.log(hi - lo)
        return c - 0.5 * (z_off ** 2 + z_h ** 2)

    def grad_log_init_density(self, omega, s0):
        w = self.check_omega(omega)
        s = np.asarray(s0, dtype=float)
        s = s[None] if s.ndim == 1 else s
        return ((s[:, 0] - self.radius - w[0]) / self.offset_std ** 2)[:, None]

    def _step(self, states, actions, rng):
        a = np.clip(np.asarray(actions, dtype=float).reshape(len(states), 2), -1.0, 1.0)
        px, py, h, v = (states[:, j] for j in range(4))
        v2 = np.clip(v + self.accel_gain * a[:, 0] * self.dt, 0.0, self.max_speed)
        h2 = h + self.steer_gain * a[:, 1] * self.dt
        px2 = px + v2 * self.dt * np.cos(h2)
        py2 = py + v2 * self.dt * np.sin(h2)
        r = np.hypot(px2, py2)
        off = np.abs(r - self.radius) > self.half_width
        done_track = np.arctan2(py2, px2) >= self.arc
        reward = np.where(off, -1.0, v2 * self.dt)
        nxt = np.column_stack([px2, py2, h2, v2])
        return nxt, reward, off | done_track

    def make_policy(self) -> NeuralGaussianPolicy:
        return NeuralGaussianPolicy(self.feature_map, 2, self.hidden, self.policy_variance)

    def test_units(self, policy) -> list[list[int]]:
        return policy.input_groups()
