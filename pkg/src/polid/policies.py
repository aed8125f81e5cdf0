"""Parametric policy families.

Linear exponential-family policies (Gaussian with fixed covariance and
Boltzmann over a finite action set) plus a one-hidden-layer Gaussian policy.

Matrix parameters are stored as ``theta = vec(Theta~^T)``: the k x q matrix
``Theta~`` is flattened row by row, so coordinate ``a * q + j`` multiplies
feature ``j`` in action row ``a``.  Index sets always refer to this layout.

Every public method accepts a single state/action or a batch (leading axis).
The ``*_phi`` methods work directly on precomputed feature matrices and are
what the estimators use in their inner loops.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .stats_core import min_eigenvalue_sym

_LOG_2PI = math.log(2.0 * math.pi)


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMap:
    """State -> R^q map. ``fn`` takes a batch of states ``(n, ...)`` and returns ``(n, q)``.

    ``bound`` is a declared sup-norm bound on ``||phi(s)||_2`` (``inf`` if unbounded).
    """

    fn: Callable[[np.ndarray], np.ndarray]
    output_dim: int
    bound: float = math.inf
    state_ndim: int = 1

    def __call__(self, states) -> np.ndarray:
        s = np.asarray(states, dtype=float)
        single = s.ndim == self.state_ndim
        batch = s[None] if single else s
        phi = np.asarray(self.fn(batch), dtype=float)
        if phi.shape != (batch.shape[0], self.output_dim):
            raise PolicyError(f"feature map returned {phi.shape}, expected (n, {self.output_dim})")
        return phi[0] if single else phi

    @classmethod
    def identity(cls, q: int, bound: float = math.inf) -> "FeatureMap":
        return cls(lambda s: s, q, bound)


def _as_batch(x, ndim_single):
    x = np.asarray(x)
    single = x.ndim == ndim_single
    return (x[None] if single else x), single


class PolicyModel:
    """Common plumbing; subclasses implement the ``*_phi`` kernels."""

    feature_map: FeatureMap
    is_exponential_family = True
    action_ndim = 0  # 0 for discrete/scalar actions, 1 for vector actions

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def features(self, states) -> np.ndarray:
        phi = self.feature_map(states)
        if not np.all(np.isfinite(phi)):
            raise PolicyError("non-finite features")
        return phi

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise PolicyError(f"theta has shape {theta.shape}, expected ({self.dim},)")
        return theta

    def _prep(self, theta, states, actions):
        theta = self._check_theta(theta)
        phi = self.feature_map(states)
        single = phi.ndim == 1
        phi2 = phi[None] if single else phi
        a = self._as_actions(actions, phi2.shape[0])
        if not (np.all(np.isfinite(phi2)) and np.all(np.isfinite(a))):
            raise PolicyError("non-finite state or action")
        return theta, phi2, a, single

    def _as_actions(self, actions, n):
        return np.asarray(actions, dtype=float).reshape(n, -1)

    def log_prob(self, theta, states, actions):
        theta, phi, a, single = self._prep(theta, states, actions)
        out = self.log_prob_phi(theta, phi, a)
        return float(out[0]) if single else out

    def grad_log_prob(self, theta, states, actions) -> np.ndarray:
        theta, phi, a, single = self._prep(theta, states, actions)
        out = self.score_phi(theta, phi, a)
        return out[0] if single else out

    def sample_action(self, theta, states, rng: np.random.Generator):
        theta = self._check_theta(theta)
        phi = self.features(states)
        single = phi.ndim == 1
        out = self.sample_phi(theta, phi[None] if single else phi, rng)
        return out[0] if single else out

    def sufficient_statistic(self, states, actions) -> np.ndarray:
        if not self.is_exponential_family:
            raise PolicyError(f"{type(self).__name__} has no sufficient statistic")
        phi = self.features(states)
        single = phi.ndim == 1
        phi2 = phi[None] if single else phi
        out = self.stat_phi(phi2, self._as_actions(actions, phi2.shape[0]))
        return out[0] if single else out

    def fisher_state(self, theta, state) -> np.ndarray:
        """Per-state Fisher information (analytic Kronecker form)."""
        if not self.is_exponential_family:
            raise PolicyError(f"{type(self).__name__} has no closed-form Fisher information")
        theta = self._check_theta(theta)
        phi = self.features(state)
        if phi.ndim != 1:
            raise PolicyError("fisher_state takes a single state")
        return self.fisher_sum_phi(theta, phi[None])

    # kernels -------------------------------------------------------------
    def log_prob_phi(self, theta, phi, a) -> np.ndarray:
        raise NotImplementedError

    def score_phi(self, theta, phi, a) -> np.ndarray:
        raise NotImplementedError

    def weighted_score_phi(self, theta, phi, a, w) -> np.ndarray:
        """sum_i w_i * grad log pi(a_i | s_i)."""
        return w @ self.score_phi(theta, phi, a)

    def sample_phi(self, theta, phi, rng) -> np.ndarray:
        raise NotImplementedError

    def stat_phi(self, phi, a) -> np.ndarray:
        raise NotImplementedError

    def fisher_sum_phi(self, theta, phi, weights=None) -> np.ndarray:
        raise NotImplementedError


class BoltzmannLinearPolicy(PolicyModel):
    """Softmax over ``n_actions = k + 1`` actions; the last action has no parameter row."""

    def __init__(self, feature_map: FeatureMap, n_actions: int):
        if n_actions < 2:
            raise PolicyError("need at least two actions")
        self.feature_map = feature_map
        self.n_actions = int(n_actions)
        self.k = self.n_actions - 1
        self.q = feature_map.output_dim

    @property
    def dim(self) -> int:
        return self.k * self.q

    def _as_actions(self, actions, n):
        a = np.asarray(actions).reshape(n)
        if not np.all(np.isfinite(a.astype(float))):
            raise PolicyError("non-finite action")
        ai = a.astype(int)
        if np.any(ai != a) or np.any(ai < 0) or np.any(ai >= self.n_actions):
            raise PolicyError(f"actions must be integers in [0, {self.n_actions})")
        return ai

    def log_probs_phi(self, theta, phi) -> np.ndarray:
        """(n, k+1) log-probabilities for every action."""
        logits = np.zeros((phi.shape[0], self.n_actions))
        logits[:, : self.k] = phi @ theta.reshape(self.k, self.q).T
        mx = logits.max(axis=1, keepdims=True)
        z = logits - mx
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def probs(self, theta, states) -> np.ndarray:
        theta = self._check_theta(theta)
        phi = self.features(states)
        single = phi.ndim == 1
        p = np.exp(self.log_probs_phi(theta, phi[None] if single else phi))
        return p[0] if single else p

    def log_prob_phi(self, theta, phi, a):
        lp = self.log_probs_phi(theta, phi)
        return lp[np.arange(len(a)), a]

    def score_phi(self, theta, phi, a):
        p = np.exp(self.log_probs_phi(theta, phi))[:, : self.k]
        coef = -p
        rows = np.nonzero(a < self.k)[0]
        coef[rows, a[rows]] += 1.0
        return (coef[:, :, None] * phi[:, None, :]).reshape(len(a), self.dim)

    def weighted_score_phi(self, theta, phi, a, w):
        p = np.exp(self.log_probs_phi(theta, phi))[:, : self.k]
        coef = -p * w[:, None]
        rows = np.nonzero(a < self.k)[0]
        np.add.at(coef, (rows, a[rows]), w[rows])
        return (coef.T @ phi).ravel()

    def sample_phi(self, theta, phi, rng):
        p = np.exp(self.log_probs_phi(theta, phi))
        u = rng.random(phi.shape[0])[:, None]
        return np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), self.n_actions - 1)

    def stat_phi(self, phi, a):
        out = np.zeros((len(a), self.k, self.q))
        rows = np.nonzero(a < self.k)[0]
        out[rows, a[rows], :] = phi[rows]
        return out.reshape(len(a), self.dim)

    def fisher_sum_phi(self, theta, phi, weights=None):
        p = np.exp(self.log_probs_phi(theta, phi))[:, : self.k]
        if weights is not None:
            w = np.asarray(weights, dtype=float)
        else:
            w = np.ones(phi.shape[0])
        out = np.empty((self.k, self.q, self.k, self.q))
        for a in range(self.k):
            for b in range(a, self.k):
                c = -p[:, a] * p[:, b]
                if a == b:
                    c = c + p[:, a]
                blk = (phi * (w * c)[:, None]).T @ phi
                out[a, :, b, :] = blk
                out[b, :, a, :] = blk.T
        return out.reshape(self.dim, self.dim)

    def subgaussian_parameter(self) -> float:
        if not math.isfinite(self.feature_map.bound):
            raise PolicyError("feature map declares no finite bound")
        return 2.0 * self.feature_map.bound


class GaussianLinearPolicy(PolicyModel):
    """a ~ N(Theta~ phi(s), Sigma) with fixed covariance ``Sigma`` (k x k)."""

    action_ndim = 1

    def __init__(self, feature_map: FeatureMap, covariance):
        cov = np.atleast_2d(np.asarray(covariance, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise PolicyError("covariance must be square")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise PolicyError("covariance must be symmetric")
        if min_eigenvalue_sym(cov) <= 0.0:
            raise PolicyError("covariance must be positive definite")
        self.feature_map = feature_map
        self.cov = cov
        self.k = cov.shape[0]
        self.q = feature_map.output_dim
        self.cov_inv = np.linalg.inv(cov)
        self.chol = np.linalg.cholesky(cov)
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    @property
    def dim(self) -> int:
        return self.k * self.q

    def _as_actions(self, actions, n):
        return np.asarray(actions, dtype=float).reshape(n, self.k)

    def mean_phi(self, theta, phi):
        return phi @ theta.reshape(self.k, self.q).T

    def mean(self, theta, states):
        theta = self._check_theta(theta)
        phi = self.features(states)
        single = phi.ndim == 1
        m = self.mean_phi(theta, phi[None] if single else phi)
        return m[0] if single else m

    def log_prob_phi(self, theta, phi, a):
        r = a - self.mean_phi(theta, phi)
        maha = np.einsum("ni,ij,nj->n", r, self.cov_inv, r)
        return -0.5 * maha - 0.5 * self.k * _LOG_2PI - 0.5 * self.logdet

    def score_phi(self, theta, phi, a):
        r = (a - self.mean_phi(theta, phi)) @ self.cov_inv
        return (r[:, :, None] * phi[:, None, :]).reshape(len(a), self.dim)

    def weighted_score_phi(self, theta, phi, a, w):
        r = (a - self.mean_phi(theta, phi)) @ self.cov_inv
        return ((r * w[:, None]).T @ phi).ravel()

    def sample_phi(self, theta, phi, rng):
        z = rng.standard_normal((phi.shape[0], self.k))
        return self.mean_phi(theta, phi) + z @ self.chol.T

    def stat_phi(self, phi, a):
        sa = a @ self.cov_inv
        return (sa[:, :, None] * phi[:, None, :]).reshape(len(a), self.dim)

    def fisher_sum_phi(self, theta, phi, weights=None):
        if weights is None:
            gram = phi.T @ phi
        else:
            gram = (phi * np.asarray(weights, dtype=float)[:, None]).T @ phi
        return np.kron(self.cov_inv, gram)

    def subgaussian_parameter(self) -> float:
        if not math.isfinite(self.feature_map.bound):
            raise PolicyError("feature map declares no finite bound")
        return self.feature_map.bound / math.sqrt(min_eigenvalue_sym(self.cov))


class NeuralGaussianPolicy(PolicyModel):
    """Gaussian policy whose mean is a one-hidden-layer tanh network.

    Parameter vector layout (fixed)::

        [ W1 (hidden x input, row-major) | b1 (hidden) | W2 (action x hidden, row-major) | b2 (action) ]

    The covariance is diagonal and fixed.
    """

    is_exponential_family = False
    action_ndim = 1

    def __init__(self, feature_map: FeatureMap, action_dim: int, hidden_dim: int = 8, variance: float = 0.1):
        self.feature_map = feature_map
        self.input_dim = feature_map.output_dim
        self.hidden_dim = int(hidden_dim)
        self.k = int(action_dim)
        self.variance = float(variance)
        if self.variance <= 0:
            raise PolicyError("variance must be positive")
        h, i, k = self.hidden_dim, self.input_dim, self.k
        self._slices = {
            "W1": slice(0, h * i),
            "b1": slice(h * i, h * i + h),
            "W2": slice(h * i + h, h * i + h + k * h),
            "b2": slice(h * i + h + k * h, h * i + h + k * h + k),
        }

    @property
    def dim(self) -> int:
        return self.hidden_dim * self.input_dim + self.hidden_dim + self.k * self.hidden_dim + self.k

    def _as_actions(self, actions, n):
        return np.asarray(actions, dtype=float).reshape(n, self.k)

    def unpack(self, theta):
        s = self._slices
        return (
            theta[s["W1"]].reshape(self.hidden_dim, self.input_dim),
            theta[s["b1"]],
            theta[s["W2"]].reshape(self.k, self.hidden_dim),
            theta[s["b2"]],
        )

    def input_groups(self) -> list[list[int]]:
        """Coordinates of the first-layer weights reading each input (one list per input)."""
        return [[h * self.input_dim + j for h in range(self.hidden_dim)] for j in range(self.input_dim)]

    def initial_params(self, rng: np.random.Generator) -> np.ndarray:
        theta = np.zeros(self.dim)
        s = self._slices
        theta[s["W1"]] = rng.normal(0.0, 1.0 / math.sqrt(self.input_dim), self.hidden_dim * self.input_dim)
        theta[s["W2"]] = rng.normal(0.0, 0.1 / math.sqrt(self.hidden_dim), self.k * self.hidden_dim)
        return theta

    def _forward(self, theta, x):
        w1, b1, w2, b2 = self.unpack(theta)
        h = np.tanh(x @ w1.T + b1)
        return h, h @ w2.T + b2

    def mean_phi(self, theta, phi):
        return self._forward(theta, phi)[1]

    def log_prob_phi(self, theta, phi, a):
        r = a - self.mean_phi(theta, phi)
        return (-0.5 * np.sum(r * r, axis=1) / self.variance
                - 0.5 * self.k * (_LOG_2PI + math.log(self.variance)))

    def score_phi(self, theta, phi, a):
        # reverse-mode pass through mean -> log-density, kept per sample
        _, _, w2, _ = self.unpack(theta)
        h, mu = self._forward(theta, phi)
        r = (a - mu) / self.variance
        dh = (r @ w2) * (1.0 - h * h)
        n = phi.shape[0]
        return np.concatenate(
            [
                (dh[:, :, None] * phi[:, None, :]).reshape(n, -1),
                dh,
                (r[:, :, None] * h[:, None, :]).reshape(n, -1),
                r,
            ],
            axis=1,
        )

    def weighted_score_phi(self, theta, phi, a, w):
        _, _, w2, _ = self.unpack(theta)
        h, mu = self._forward(theta, phi)
        r = (a - mu) / self.variance * w[:, None]
        dh = (r @ w2) * (1.0 - h * h)
        return np.concatenate([(dh.T @ phi).ravel(), dh.sum(0), (r.T @ h).ravel(), r.sum(0)])

    def sample_phi(self, theta, phi, rng):
        z = rng.standard_normal((phi.shape[0], self.k))
        return self.mean_phi(theta, phi) + math.sqrt(self.variance) * z

    def subgaussian_parameter(self) -> float:
        raise PolicyError("no subgaussian parameter for the neural policy")


def feature_units(q: int, k: int) -> list[list[int]]:
    """Group coordinates by feature: unit ``j`` holds ``{a*q + j : a < k}``."""
    return [[a * q + j for a in range(k)] for j in range(q)]
