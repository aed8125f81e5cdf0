"""5x5 grid world with a configurable product-softmax start distribution."""
from __future__ import annotations

import numpy as np

from ..policies import BoltzmannLinearPolicy, FeatureMap, feature_units
from .base import ConfMdp, Hyperparameters

SIZE = 5
N_CELLS = SIZE * SIZE
# up, down, left, right as (d_row, d_col)
MOVES = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]])


def _softmax(z):
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _log_softmax(z):
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


def grid_features(states: np.ndarray) -> np.ndarray:
    """Indicators of agent row 0..3, agent col 0..3, goal row 0..3, goal col 0..3."""
    s = np.asarray(states).astype(int)
    levels = np.arange(SIZE - 1)
    return np.concatenate([(s[:, [j]] == levels).astype(float) for j in range(4)], axis=1)


GRID_FEATURES = FeatureMap(grid_features, 16, bound=2.0)
# feature index -> human readable name, used in reports
FEATURE_NAMES = [f"{who}_{ax}{i}" for who in ("agent", "goal") for ax in ("row", "col") for i in range(SIZE - 1)]


def default_omega0(sharpness: float = 1.0) -> np.ndarray:
    """Agent mass near the bottom-left corner, goal mass near the bottom-right corner."""
    rows, cols = np.divmod(np.arange(N_CELLS), SIZE)
    agent = -sharpness * (np.abs(rows - (SIZE - 1)) + np.abs(cols - 0))
    goal = -sharpness * (np.abs(rows - (SIZE - 1)) + np.abs(cols - (SIZE - 1)))
    return np.concatenate([agent, goal]).astype(float)


class DiscreteGridWorld(ConfMdp):
    """State ``(agent_row, agent_col, goal_row, goal_col)``; four moves clipped at the walls.

    omega holds 25 agent-cell logits followed by 25 goal-cell logits.
    Moving onto the goal pays 1 and ends the episode; every other step pays 0.
    """

    name = "gridworld"
    hyper = Hyperparameters(train_steps=200, batch_size=250, train_lr=0.05, conf_steps=150,
                            zeta=0.125, n_conf=3, fit_max_iter=1000)
    state_dim = 4
    action_dim = 0
    n_actions = 4
    feature_map = GRID_FEATURES

    def __init__(self, horizon: int = 50, gamma: float = 0.98, omega0=None, sharpness: float = 1.5):
        self.horizon = int(horizon)
        self.gamma = float(gamma)
        self._omega0 = default_omega0(sharpness) if omega0 is None else np.asarray(omega0, dtype=float)
        if self._omega0.shape != (2 * N_CELLS,):
            raise ValueError("grid omega needs 50 logits")
        super().__init__()

    @property
    def omega0(self):
        return self._omega0

    def cell_probs(self, omega):
        w = self.check_omega(omega)
        return _softmax(w[:N_CELLS]), _softmax(w[N_CELLS:])

    def _sample_init(self, omega, n, rng):
        pa, pg = self.cell_probs(omega)
        u = rng.random((n, 2))
        ca = np.minimum(np.searchsorted(np.cumsum(pa), u[:, 0], side="right"), N_CELLS - 1)
        cg = np.minimum(np.searchsorted(np.cumsum(pg), u[:, 1], side="right"), N_CELLS - 1)
        ar, ac = np.divmod(ca, SIZE)
        gr, gc = np.divmod(cg, SIZE)
        return np.column_stack([ar, ac, gr, gc]).astype(float)

    def _cells(self, s):
        si = s.astype(int)
        if np.any(si != s) or np.any(si < 0) or np.any(si >= SIZE):
            raise ValueError("state outside the grid")
        return si[:, 0] * SIZE + si[:, 1], si[:, 2] * SIZE + si[:, 3]

    def _log_init(self, omega, s):
        ca, cg = self._cells(s)
        return _log_softmax(omega[:N_CELLS])[ca] + _log_softmax(omega[N_CELLS:])[cg]

    def grad_log_init_density(self, omega, s0):
        w = self.check_omega(omega)
        s = np.asarray(s0, dtype=float)
        s = s[None] if s.ndim == 1 else s
        ca, cg = self._cells(s)
        pa, pg = _softmax(w[:N_CELLS]), _softmax(w[N_CELLS:])
        g = np.zeros((len(s), 2 * N_CELLS))
        g[:, :N_CELLS] -= pa
        g[:, N_CELLS:] -= pg
        g[np.arange(len(s)), ca] += 1.0
        g[np.arange(len(s)), N_CELLS + cg] += 1.0
        return g

    def _step(self, states, actions, rng):
        a = np.asarray(actions).astype(int).reshape(-1)
        if np.any(a < 0) or np.any(a >= self.n_actions):
            raise ValueError("grid actions are integers in [0, 4)")
        nxt = states.copy()
        nxt[:, :2] = np.clip(states[:, :2] + MOVES[a], 0, SIZE - 1)
        done = np.all(nxt[:, :2] == nxt[:, 2:], axis=1)
        return nxt, done.astype(float), done

    def make_policy(self) -> BoltzmannLinearPolicy:
        return BoltzmannLinearPolicy(self.feature_map, self.n_actions)

    def test_units(self, policy) -> list[list[int]]:
        """One unit per feature: its weights in all parameterized action rows."""
        return feature_units(policy.q, policy.k)
