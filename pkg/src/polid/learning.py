"""Trajectory collection and G(PO)MDP policy-gradient training."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimation import DemoDataset, index_set
from .policies import PolicyModel
from .stats_core import AdamState, adam_update


class TrainingDivergence(RuntimeError):
    pass


@dataclass
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    omega: np.ndarray
    done: bool = False

    def __len__(self):
        return len(self.rewards)

    @property
    def s0(self):
        return self.states[0]


@dataclass
class TrajectoryBatch:
    """Episodes padded to a common horizon; ``mask[i, t]`` marks real steps."""

    states: np.ndarray      # (N, T, state_dim)
    actions: np.ndarray     # (N, T) or (N, T, action_dim)
    rewards: np.ndarray     # (N, T), zero past the end
    mask: np.ndarray        # (N, T) bool
    omega: np.ndarray
    done: np.ndarray        # (N,) bool

    def __len__(self):
        return self.states.shape[0]

    @property
    def lengths(self):
        return self.mask.sum(axis=1)

    @property
    def s0(self):
        return self.states[:, 0]

    def flat(self):
        """(states, actions, trajectory index, time index) of every real step."""
        i, t = np.nonzero(self.mask)
        return self.states[i, t], self.actions[i, t], i, t

    def demo_dataset(self) -> DemoDataset:
        s, a, _, _ = self.flat()
        return DemoDataset(s, a, self.omega)

    def discounted_returns(self, gamma: float) -> np.ndarray:
        disc = gamma ** np.arange(self.rewards.shape[1])
        return (self.rewards * disc).sum(axis=1)

    def to_list(self) -> list[Trajectory]:
        out = []
        for i in range(len(self)):
            n = int(self.mask[i].sum())
            out.append(Trajectory(self.states[i, :n].copy(), self.actions[i, :n].copy(),
                                  self.rewards[i, :n].copy(), self.omega.copy(), bool(self.done[i])))
        return out

    @classmethod
    def from_list(cls, trajs) -> "TrajectoryBatch":
        if isinstance(trajs, TrajectoryBatch):
            return trajs
        trajs = list(trajs)
        if not trajs:
            raise ValueError("no trajectories")
        horizon = max(len(t) for t in trajs)
        n = len(trajs)
        s_shape = trajs[0].states.shape[1:]
        a_shape = trajs[0].actions.shape[1:]
        states = np.zeros((n, horizon) + s_shape)
        actions = np.zeros((n, horizon) + a_shape, dtype=trajs[0].actions.dtype)
        rewards = np.zeros((n, horizon))
        mask = np.zeros((n, horizon), dtype=bool)
        for i, t in enumerate(trajs):
            k = len(t)
            states[i, :k] = t.states
            actions[i, :k] = t.actions
            rewards[i, :k] = t.rewards
            mask[i, :k] = True
        omegas = {tuple(np.asarray(t.omega).ravel()) for t in trajs}
        if len(omegas) != 1:
            raise ValueError("trajectories come from different configurations")
        return cls(states, actions, rewards, mask, np.asarray(trajs[0].omega, dtype=float),
                   np.array([t.done for t in trajs]))


def rollout(env, policy: PolicyModel, theta, omega, count: int, rng: np.random.Generator,
            horizon: int | None = None) -> TrajectoryBatch:
    """Run ``count`` episodes in lock-step; finished episodes stop being stepped."""
    if count < 1:
        raise ValueError("count must be >= 1")
    horizon = env.horizon if horizon is None else int(horizon)
    s = env.reset_batch(omega, count, rng)
    states = np.zeros((count, horizon, s.shape[1]))
    discrete = policy.action_ndim == 0
    actions = np.zeros((count, horizon), dtype=int) if discrete else np.zeros((count, horizon, policy.k))
    rewards = np.zeros((count, horizon))
    mask = np.zeros((count, horizon), dtype=bool)
    done = np.zeros(count, dtype=bool)
    alive = np.arange(count)
    for t in range(horizon):
        if len(alive) == 0:
            break
        states[alive, t] = s
        a = policy.sample_action(theta, s, rng)
        actions[alive, t] = a
        s2, r, d = env.step_batch(s, a, rng)
        rewards[alive, t] = r
        mask[alive, t] = True
        done[alive[d]] = True
        keep = ~d
        alive, s = alive[keep], s2[keep]
    return TrajectoryBatch(states, actions, rewards, mask, np.asarray(env.omega, dtype=float).copy(), done)


def collect_trajectories(env, policy, theta, omega, count, rng) -> list[Trajectory]:
    return rollout(env, policy, theta, omega, count, rng).to_list()


def _reward_to_go(batch: TrajectoryBatch, gamma: float, weights=None) -> np.ndarray:
    """c[i, j] = sum_{t >= j} gamma^t r[i, t] w[i, t]."""
    disc = gamma ** np.arange(batch.rewards.shape[1]) * batch.rewards
    if weights is not None:
        disc = disc * weights
    return np.cumsum(disc[:, ::-1], axis=1)[:, ::-1]


def _weighted_gpomdp(batch: TrajectoryBatch, policy: PolicyModel, theta, gamma: float, weights=None):
    theta = policy._check_theta(theta)
    c = _reward_to_go(batch, gamma, weights)
    s, a, i, t = batch.flat()
    phi = policy.features(s)
    acts = policy._as_actions(a, len(s))
    return policy.weighted_score_phi(theta, phi, acts, c[i, t]) / len(batch)


def gpomdp_gradient(trajectories, policy: PolicyModel, theta, gamma: float) -> np.ndarray:
    """(1/N) sum_i sum_t gamma^t r_t sum_{j <= t} grad log pi(a_j | s_j)."""
    return _weighted_gpomdp(TrajectoryBatch.from_list(trajectories), policy, theta, gamma)


def per_trajectory_gpomdp(batch: TrajectoryBatch, policy: PolicyModel, theta, gamma: float) -> np.ndarray:
    """(N, d) per-episode terms whose mean is the G(PO)MDP gradient."""
    c = _reward_to_go(batch, gamma)
    s, a, i, t = batch.flat()
    phi = policy.features(s)
    sc = policy.score_phi(theta, phi, policy._as_actions(a, len(s))) * c[i, t][:, None]
    out = np.zeros((len(batch), policy.dim))
    np.add.at(out, i, sc)
    return out


@dataclass
class TrainSpec:
    steps: int = 200
    batch_size: int = 250
    learning_rate: float = 0.05
    free: tuple[int, ...] | None = None   # None means every coordinate
    gamma: float | None = None
    max_norm: float = 1e6

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class TrainResult:
    theta: np.ndarray
    returns: list[float] = field(default_factory=list)

    @property
    def final_return(self) -> float:
        return float(np.mean(self.returns[-10:])) if self.returns else float("nan")


def train_policy(env, policy: PolicyModel, spec: TrainSpec, omega, rng: np.random.Generator,
                 theta0=None) -> TrainResult:
    """Adam ascent on the G(PO)MDP gradient, projected onto ``spec.free``.

    The start is ``theta0`` if given, else the environment's
    ``initial_theta`` if it has one, else zero for exponential-family
    policies and a seeded random point for the neural policy (zero is a
    stationary point for it).
    """
    d = policy.dim
    free = tuple(range(d)) if spec.free is None else index_set(spec.free, d)
    mask = np.zeros(d, dtype=bool)
    mask[list(free)] = True
    if not free:
        return TrainResult(np.zeros(d))
    gamma = env.gamma if spec.gamma is None else spec.gamma
    if theta0 is None:
        theta0 = env.initial_theta(policy, free, omega, rng)
    if theta0 is not None:
        theta = np.array(theta0, dtype=float)
    elif policy.is_exponential_family:
        theta = np.zeros(d)
    else:
        theta = policy.initial_params(rng)
    theta[~mask] = 0.0
    state = AdamState.zeros(d, learning_rate=spec.learning_rate)
    result = TrainResult(theta)
    for _ in range(spec.steps):
        batch = rollout(env, policy, theta, omega, spec.batch_size, rng)
        result.returns.append(float(batch.discounted_returns(gamma).mean()))
        g = _weighted_gpomdp(batch, policy, theta, gamma)
        g[~mask] = 0.0
        state, theta = adam_update(state, theta, g, sign=1)
        theta[~mask] = 0.0
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > spec.max_norm:
            raise TrainingDivergence("policy parameters diverged")
    result.theta = theta
    return result


def estimate_return(env, policy, theta, omega, count, rng, gamma=None) -> tuple[float, float]:
    """Monte-Carlo discounted return: (mean, standard error)."""
    batch = rollout(env, policy, theta, omega, count, rng)
    g = batch.discounted_returns(env.gamma if gamma is None else gamma)
    return float(g.mean()), float(g.std(ddof=1) / np.sqrt(len(g))) if len(g) > 1 else 0.0


class SimulatedAgent:
    """An agent restricted to ``free`` that (re)learns its optimal policy in whatever
    configuration it is placed in.  Used to generate demonstrations."""

    def __init__(self, env, policy: PolicyModel, free, spec: TrainSpec, retrain_steps: int | None = None):
        self.env = env
        self.policy = policy
        self.free = index_set(free, policy.dim)
        self.spec = TrainSpec(spec.steps, spec.batch_size, spec.learning_rate, self.free, spec.gamma, spec.max_norm)
        self.retrain_steps = spec.steps if retrain_steps is None else int(retrain_steps)
        self.theta = np.zeros(policy.dim)
        self.trained_at = None
        self.last_result: TrainResult | None = None

    def train(self, omega, rng, warm: bool = False) -> TrainResult:
        spec = self.spec
        if warm and self.trained_at is not None:
            spec = TrainSpec(self.retrain_steps, spec.batch_size, spec.learning_rate, spec.free, spec.gamma,
                             spec.max_norm)
        res = train_policy(self.env, self.policy, spec, omega, rng,
                           theta0=self.theta if (warm and self.trained_at is not None) else None)
        self.theta = res.theta
        self.trained_at = np.asarray(omega, dtype=float).copy()
        self.last_result = res
        return res

    def demonstrate(self, omega, n_episodes: int, rng) -> TrajectoryBatch:
        return rollout(self.env, self.policy, self.theta, omega, n_episodes, rng)

    def snapshot(self):
        return self.theta.copy(), None if self.trained_at is None else self.trained_at.copy()

    def restore(self, snap):
        self.theta, self.trained_at = snap[0].copy(), None if snap[1] is None else snap[1].copy()
