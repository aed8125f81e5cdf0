"""Two-state, two-action MDP small enough to enumerate every trajectory."""
from __future__ import annotations

import itertools
import math

import numpy as np

from ..policies import BoltzmannLinearPolicy, FeatureMap, feature_units
from .base import ConfMdp


def one_hot2(states):
    s = np.asarray(states).astype(int)[:, 0]
    return np.eye(2)[s]


class TwoStateMdp(ConfMdp):
    """States {0, 1}; ``P[s, a]`` is the probability of moving to state 1.

    omega is the logit of starting in state 1.
    """

    name = "toy"
    state_dim = 1
    action_dim = 0
    n_actions = 2
    feature_map = FeatureMap(one_hot2, 2, bound=1.0)

    def __init__(self, horizon: int = 2, gamma: float = 0.9, omega0: float = 0.0,
                 p_next=((0.2, 0.9), (0.6, 0.3)), rewards=((1.0, 0.0), (0.0, 2.0))):
        self.horizon = int(horizon)
        self.gamma = float(gamma)
        self.p_next = np.asarray(p_next, dtype=float)
        self.rewards = np.asarray(rewards, dtype=float)
        self._omega0 = np.array([float(omega0)])
        super().__init__()

    @property
    def omega0(self):
        return self._omega0

    def p_start(self, omega) -> float:
        return 1.0 / (1.0 + math.exp(-float(np.asarray(omega).reshape(-1)[0])))

    def _sample_init(self, omega, n, rng):
        return (rng.random((n, 1)) < self.p_start(omega)).astype(float)

    def _log_init(self, omega, s):
        p1 = self.p_start(omega)
        si = s[:, 0]
        if np.any((si != 0) & (si != 1)):
            raise ValueError("toy states are 0 or 1")
        return np.where(si == 1, math.log(p1), math.log1p(-p1))

    def grad_log_init_density(self, omega, s0):
        s = np.asarray(s0, dtype=float).reshape(-1, 1)
        return (s[:, 0] - self.p_start(omega))[:, None]

    def _step(self, states, actions, rng):
        s = states[:, 0].astype(int)
        a = np.asarray(actions).astype(int).reshape(-1)
        r = self.rewards[s, a]
        nxt = (rng.random(len(s)) < self.p_next[s, a]).astype(float)[:, None]
        return nxt, r, np.zeros(len(s), dtype=bool)

    def make_policy(self) -> BoltzmannLinearPolicy:
        return BoltzmannLinearPolicy(self.feature_map, 2)

    def test_units(self, policy):
        return feature_units(policy.q, policy.k)

    def exact_return(self, policy, theta, omega=None) -> float:
        """J(theta) by summing over every state/action sequence of length ``horizon``."""
        w = self.omega0 if omega is None else omega
        p1 = self.p_start(w)
        probs = policy.probs(theta, np.array([[0.0], [1.0]]))
        total = 0.0
        for path in itertools.product((0, 1), repeat=2 * self.horizon):
            s_seq, a_seq = path[0::2], path[1::2]
            p = p1 if s_seq[0] == 1 else 1.0 - p1
            ret = 0.0
            for t in range(self.horizon):
                s, a = s_seq[t], a_seq[t]
                p *= probs[s, a]
                ret += self.gamma ** t * self.rewards[s, a]
                if t + 1 < self.horizon:
                    pn = self.p_next[s, a]
                    p *= pn if s_seq[t + 1] == 1 else 1.0 - pn
            total += p * ret
        return total
