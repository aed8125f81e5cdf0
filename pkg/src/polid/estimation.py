"""Likelihood, constrained maximum-likelihood fits and empirical Fisher information."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .policies import BoltzmannLinearPolicy, GaussianLinearPolicy, PolicyError, PolicyModel
from .stats_core import AdamState, adam_update, make_rng


class FitError(RuntimeError):
    """A fit failed in a way that makes its likelihood unusable."""


@dataclass
class DemoDataset:
    """(state, action) pairs demonstrated by the agent, and the configuration they came from."""

    states: np.ndarray
    actions: np.ndarray
    source_config: np.ndarray | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.actions = np.asarray(self.actions)
        if len(self.states) == 0:
            raise ValueError("empty dataset")
        if len(self.states) != len(self.actions):
            raise ValueError("states and actions differ in length")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.actions.astype(float)))):
            raise ValueError("non-finite state or action in dataset")

    def __len__(self):
        return len(self.states)

    @classmethod
    def from_trajectories(cls, trajectories) -> "DemoDataset":
        states = np.concatenate([t.states for t in trajectories])
        actions = np.concatenate([t.actions for t in trajectories])
        return cls(states, actions, trajectories[0].omega)


def index_set(free: Iterable[int], d: int) -> tuple[int, ...]:
    idx = sorted(int(i) for i in free)
    if len(set(idx)) != len(idx):
        raise ValueError("duplicate indices in index set")
    if idx and (idx[0] < 0 or idx[-1] >= d):
        raise ValueError(f"index out of range for dimension {d}")
    return tuple(idx)


@dataclass
class FitOptions:
    """Fitting controls.

    ``method`` is ``"auto"`` (closed form for Gaussian linear, Newton for
    Boltzmann, Adam for the neural policy), ``"newton"``, ``"adam"`` or
    ``"closed_form"``.  ``tol`` bounds the norm of the per-sample gradient
    on the free coordinates.  ``accept_budget`` marks iteration-capped fits
    (the neural policy) as usable even when ``tol`` is not reached.
    """

    method: str = "auto"
    tol: float = 1e-6
    tol_nll: float = 1e-6
    max_iter: int | None = None
    lr: float = 0.03
    ridge: float = 1e-9
    accept_budget: bool = False
    init_seed: int = 0


@dataclass
class FitReport:
    theta_hat: np.ndarray
    nll: float
    grad_norm_at_solution: float
    iterations: int
    converged: bool
    free: tuple[int, ...]
    method: str
    tol: float
    degenerate: bool = False
    usable: bool = field(init=False)

    def __post_init__(self):
        self.usable = self.converged


class PreparedData:
    """Features computed once; duplicate (features, action) rows collapsed into counts."""

    def __init__(self, policy: PolicyModel, data: DemoDataset, compress: bool | None = None):
        self.policy = policy
        self.n = len(data)
        phi = policy.features(data.states)
        if phi.ndim == 1:
            phi = phi[None]
        actions = policy._as_actions(data.actions, phi.shape[0])
        if compress is None:
            compress = isinstance(policy, BoltzmannLinearPolicy)
        if compress:
            key = np.column_stack([phi, np.asarray(actions, dtype=float).reshape(len(phi), -1)])
            uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
            first = np.zeros(len(uniq), dtype=int)
            first[inv.ravel()[::-1]] = np.arange(len(inv))[::-1]
            phi, actions = phi[first], actions[first]
            self.counts = counts.astype(float)
        else:
            self.counts = np.ones(len(phi))
        self.phi = phi
        self.actions = actions

    def nll(self, theta) -> float:
        return float(-self.counts @ self.policy.log_prob_phi(theta, self.phi, self.actions))

    def grad(self, theta) -> np.ndarray:
        """Gradient of the summed negative log-likelihood."""
        return -self.policy.weighted_score_phi(theta, self.phi, self.actions, self.counts)

    def hessian(self, theta) -> np.ndarray:
        return self.policy.fisher_sum_phi(theta, self.phi, self.counts)


def _prepare(policy, data) -> PreparedData:
    if isinstance(data, PreparedData):
        if data.policy is not policy:
            raise ValueError("prepared data belongs to another policy")
        return data
    return PreparedData(policy, data)


def neg_log_likelihood(policy: PolicyModel, theta, data) -> float:
    """-sum_i log pi_theta(a_i | s_i)."""
    theta = policy._check_theta(theta)
    return _prepare(policy, data).nll(theta)


def empirical_fim(policy: PolicyModel, theta, states) -> np.ndarray:
    """Average per-state Fisher information over ``states``."""
    if not policy.is_exponential_family:
        raise PolicyError("empirical FIM requires an exponential-family policy")
    theta = policy._check_theta(theta)
    phi = policy.features(states)
    if phi.ndim == 1:
        phi = phi[None]
    if len(phi) == 0:
        raise ValueError("no states")
    f = policy.fisher_sum_phi(theta, phi) / len(phi)
    return 0.5 * (f + f.T)


def _resolve_method(policy, opts: FitOptions) -> str:
    if opts.method != "auto":
        if opts.method == "closed_form" and not isinstance(policy, GaussianLinearPolicy):
            raise ValueError("closed form fits exist only for Gaussian linear policies")
        return opts.method
    if isinstance(policy, GaussianLinearPolicy):
        return "closed_form"
    if policy.is_exponential_family:
        return "newton"
    return "adam"


def _closed_form(prep: PreparedData, free, opts: FitOptions) -> FitReport:
    policy: GaussianLinearPolicy = prep.policy
    d = policy.dim
    theta = np.zeros(d)
    f = np.asarray(free, dtype=int)
    degenerate = False
    if len(f):
        # whitened least squares: rows U (I_k kron phi_i^T), targets U a_i, with U^T U = Sigma^-1
        k, q = policy.k, policy.q
        u = np.linalg.cholesky(policy.cov_inv).T
        sw = np.sqrt(prep.counts)
        n = len(prep.phi)
        x = np.einsum("jl,nm->njlm", u, prep.phi).reshape(n, k, k * q)[:, :, f] * sw[:, None, None]
        y = (prep.actions @ u.T) * sw[:, None]
        # cut only at machine precision: a dropped direction still drops its share of the residual
        sol, _, rank, sv = np.linalg.lstsq(x.reshape(n * k, len(f)), y.reshape(-1), rcond=np.finfo(float).eps)
        if not np.all(np.isfinite(sol)):
            raise FitError("least-squares solve failed")
        # rank-deficient designs get the minimum-norm optimum and a flag
        degenerate = rank < len(f)
        theta[f] = sol
    g = prep.grad(theta)[f] / prep.n if len(f) else np.zeros(0)
    gnorm = float(np.linalg.norm(g))
    return FitReport(theta, prep.nll(theta), gnorm, 1, gnorm <= opts.tol or not degenerate,
                     tuple(int(i) for i in f), "closed_form", opts.tol, degenerate)


def _newton(prep: PreparedData, free, opts: FitOptions, theta0) -> FitReport:
    f = np.asarray(free, dtype=int)
    theta = np.zeros(prep.policy.dim) if theta0 is None else np.array(theta0, dtype=float)
    mask = np.zeros(prep.policy.dim, dtype=bool)
    mask[f] = True
    theta[~mask] = 0.0
    max_iter = opts.max_iter or 100
    nll = prep.nll(theta)
    gnorm = 0.0
    dec = math.inf
    stalled = False
    degenerate = False
    it = 0
    for it in range(1, max_iter + 1):
        g = prep.grad(theta)[f]
        gnorm = float(np.linalg.norm(g)) / prep.n
        h = prep.hessian(theta)[np.ix_(f, f)]
        ridge = 0.0
        scale = max(float(np.trace(h)) / len(f), 1e-300)
        while True:
            try:
                c = np.linalg.cholesky(h + ridge * np.eye(len(f)))
                break
            except np.linalg.LinAlgError:
                degenerate = True
                ridge = max(ridge * 10.0, 1e-12 * scale)
        step = -np.linalg.solve(c.T, np.linalg.solve(c, g))
        # Newton decrement: estimated gap to the infimum.  A small gradient
        # alone is not enough when the data separate along some direction.
        dec = -float(g @ step)
        if gnorm <= opts.tol and dec <= opts.tol_nll:
            return FitReport(theta, nll, gnorm, it - 1, True, tuple(int(i) for i in f),
                             "newton", opts.tol, degenerate)
        slope = float(g @ step)
        t = 1.0
        while True:
            cand = theta.copy()
            cand[f] += t * step
            cand_nll = prep.nll(cand)
            if cand_nll <= nll + 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        if not cand_nll < nll:
            stalled = True   # at the floating-point floor
            break
        theta, nll = cand, cand_nll
    g = prep.grad(theta)[f]
    gnorm = float(np.linalg.norm(g)) / prep.n
    ok = gnorm <= opts.tol and (stalled or dec <= opts.tol_nll)
    return FitReport(theta, nll, gnorm, it, ok, tuple(int(i) for i in f),
                     "newton", opts.tol, degenerate)


def _adam(prep: PreparedData, free, opts: FitOptions, theta0) -> FitReport:
    policy = prep.policy
    f = np.asarray(free, dtype=int)
    mask = np.zeros(policy.dim, dtype=bool)
    mask[f] = True
    if theta0 is not None:
        theta = np.array(theta0, dtype=float)
    elif policy.is_exponential_family:
        theta = np.zeros(policy.dim)
    else:
        theta = policy.initial_params(make_rng(opts.init_seed))
    theta[~mask] = 0.0
    max_iter = opts.max_iter or 1000
    state = AdamState.zeros(policy.dim, learning_rate=opts.lr)
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = prep.grad(theta) / prep.n
        g[~mask] = 0.0
        gnorm = float(np.linalg.norm(g))
        if gnorm <= opts.tol:
            it -= 1
            break
        state, theta = adam_update(state, theta, g, sign=-1)
        theta[~mask] = 0.0
    else:
        g = prep.grad(theta) / prep.n
        g[~mask] = 0.0
        gnorm = float(np.linalg.norm(g))
    nll = prep.nll(theta)
    if not math.isfinite(nll):
        raise FitError("non-finite likelihood during Adam fit")
    return FitReport(theta, nll, gnorm, it, gnorm <= opts.tol, tuple(int(i) for i in f),
                     "adam", opts.tol)


def mle_fit(policy: PolicyModel, data, free: Iterable[int], opts: FitOptions | None = None,
            theta0=None) -> FitReport:
    """Maximum-likelihood fit with every coordinate outside ``free`` pinned to zero.

    ``theta0`` warm-starts iterative methods (pinned coordinates are zeroed);
    the closed form ignores it.
    """
    opts = opts or FitOptions()
    prep = _prepare(policy, data)
    free = index_set(free, policy.dim)
    if not free:
        theta = np.zeros(policy.dim)
        return FitReport(theta, prep.nll(theta), 0.0, 0, True, (), "none", opts.tol)
    method = _resolve_method(policy, opts)
    if method == "closed_form":
        rep = _closed_form(prep, free, opts)
    elif method == "newton":
        if not policy.is_exponential_family:
            raise ValueError("Newton fits need the analytic Fisher information")
        rep = _newton(prep, free, opts, theta0)
    elif method == "adam":
        rep = _adam(prep, free, opts, theta0)
    else:
        raise ValueError(f"unknown fit method {opts.method!r}")
    pinned = np.setdiff1d(np.arange(policy.dim), np.asarray(free, dtype=int))
    rep.theta_hat[pinned] = 0.0
    rep.usable = rep.converged or opts.accept_budget
    return rep
