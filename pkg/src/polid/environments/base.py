"""Configurable MDP interface.

Environments are batch-first: ``reset_batch``/``step_batch`` advance many
episodes at once, and the scalar ``reset``/``step`` wrap them.  An
environment remembers the configuration set by its last reset, which the
dynamics may read (``transition_depends_on_config``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..policies import FeatureMap


@dataclass(frozen=True)
class Hyperparameters:
    """Per-environment experiment defaults (training, fitting, configuration, test level)."""

    train_steps: int
    batch_size: int
    train_lr: float
    conf_steps: int = 100
    conf_lr: float = 0.02
    zeta: float = 0.0
    n_conf: int = 3
    delta: float = 0.01
    fit_max_iter: int | None = None
    fit_lr: float = 0.03
    retrain_steps: int = 50


class ConfigError(ValueError):
    """Configuration outside the environment's admissible set."""


class ConfMdp:
    name = "base"
    horizon: int
    gamma: float
    state_dim: int
    action_dim: int            # 0 for a discrete action index
    transition_depends_on_config = False
    omega_low: np.ndarray | None = None
    omega_high: np.ndarray | None = None
    hyper = Hyperparameters(train_steps=100, batch_size=100, train_lr=0.05)

    def __init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        self.omega = self.omega0.copy()

    # configuration ---------------------------------------------------------
    @property
    def omega0(self) -> np.ndarray:
        raise NotImplementedError

    def check_omega(self, omega) -> np.ndarray:
        w = np.asarray(omega, dtype=float).reshape(-1)
        if w.shape != self.omega0.shape:
            raise ConfigError(f"omega has {w.size} entries, expected {self.omega0.size}")
        if not np.all(np.isfinite(w)):
            raise ConfigError("non-finite omega")
        if self.omega_low is not None and np.any(w < self.omega_low):
            raise ConfigError("omega below the admissible range")
        if self.omega_high is not None and np.any(w > self.omega_high):
            raise ConfigError("omega above the admissible range")
        return w

    def project_omega(self, omega) -> np.ndarray:
        w = np.asarray(omega, dtype=float)
        if self.omega_low is not None:
            w = np.maximum(w, self.omega_low)
        if self.omega_high is not None:
            w = np.minimum(w, self.omega_high)
        return w

    # dynamics --------------------------------------------------------------
    def reset_batch(self, omega, n: int, rng: np.random.Generator) -> np.ndarray:
        self.omega = self.check_omega(omega)
        return self._sample_init(self.omega, int(n), rng)

    def step_batch(self, states, actions, rng: np.random.Generator):
        """Returns ``(next_states, rewards, done)`` for a batch."""
        a = np.asarray(actions, dtype=float)
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite action")
        return self._step(np.asarray(states, dtype=float), actions, rng)

    def reset(self, omega, rng: np.random.Generator) -> np.ndarray:
        return self.reset_batch(omega, 1, rng)[0]

    def step(self, state, action, rng: np.random.Generator):
        a = np.asarray(action)
        s2, r, d = self.step_batch(np.asarray(state, dtype=float)[None], a[None], rng)
        return s2[0], float(r[0]), bool(d[0])

    def _sample_init(self, omega, n, rng):
        raise NotImplementedError

    def _step(self, states, actions, rng):
        raise NotImplementedError

    # densities -------------------------------------------------------------
    def log_init_density(self, omega, s0):
        """log mu_omega(s0) for one state or a batch; raises outside the support."""
        w = self.check_omega(omega)
        s = np.asarray(s0, dtype=float)
        single = s.ndim == 1
        out = self._log_init(w, s[None] if single else s)
        return float(out[0]) if single else out

    def grad_log_init_density(self, omega, s0) -> np.ndarray:
        """d/d omega of log mu_omega(s0), shape (n, p) for a batch."""
        raise NotImplementedError(f"{self.name} has no analytic density gradient")

    @property
    def has_density_gradient(self) -> bool:
        return type(self).grad_log_init_density is not ConfMdp.grad_log_init_density

    def _log_init(self, omega, s):
        raise NotImplementedError

    # policy space ----------------------------------------------------------
    feature_map: FeatureMap

    def initial_theta(self, policy, free, omega, rng):
        """Starting point for policy-gradient training, or None for the generic default."""
        return None

    def test_units(self, policy) -> list[list[int]]:
        """Coordinate groups tested together; singletons unless overridden."""
        return [[i] for i in range(policy.dim)]
