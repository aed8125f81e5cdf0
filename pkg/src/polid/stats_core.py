"""Numerical kernels shared by the rest of the package.

Chi-square quantiles (regularized incomplete gamma + safeguarded Newton),
a bias-corrected Adam step, a cyclic Jacobi symmetric eigensolver and
seeded random streams.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace

import numpy as np

_EPS = sys.float_info.epsilon
_FPMIN = sys.float_info.min / _EPS
_MAX_ITER = 500


# ---------------------------------------------------------------------------
# Regularized incomplete gamma
# ---------------------------------------------------------------------------

def _gamma_series(a: float, x: float) -> float:
    """Lower regularized P(a, x) by its power series, valid for x < a + 1."""
    if x == 0.0:
        return 0.0
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _log_gamma_cf(a: float, x: float) -> float:
    """log Q(a, x) by the Lentz continued fraction, valid for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return -x + a * math.log(x) - math.lgamma(a) + math.log(h)


def gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be non-negative")
    if x < a + 1.0:
        return _gamma_series(a, x)
    return -math.expm1(_log_gamma_cf(a, x))


def log_gammainc_upper(a: float, x: float) -> float:
    """log of the regularized upper incomplete gamma Q(a, x)."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    if x < 0.0:
        raise ValueError("x must be non-negative")
    if x < a + 1.0:
        return math.log1p(-_gamma_series(a, x))
    return _log_gamma_cf(a, x)


# ---------------------------------------------------------------------------
# Chi-square distribution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Chi2Spec:
    dof: int
    prob: float

    def __post_init__(self):
        if int(self.dof) != self.dof or self.dof < 1:
            raise ValueError(f"dof must be a positive integer, got {self.dof}")
        if not 0.0 <= self.prob < 1.0:
            raise ValueError(f"prob must lie in [0, 1), got {self.prob}")


def chi2_cdf(x: float, dof: int) -> float:
    if x <= 0.0:
        return 0.0
    return gammainc_lower(0.5 * dof, 0.5 * x)


def chi2_logsf(x: float, dof: int) -> float:
    """log P(X > x) for X ~ chi2(dof)."""
    if x <= 0.0:
        return 0.0
    return log_gammainc_upper(0.5 * dof, 0.5 * x)


def chi2_logpdf(x: float, dof: int) -> float:
    k = 0.5 * dof
    return (k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k)


def _solve_increasing(f, dfdx, target: float, lo: float, hi: float, xtol: float = 1e-15) -> float:
    """Root of f(x) = target for increasing f on [lo, hi]; Newton with bisection fallback."""
    x = 0.5 * (lo + hi)
    for _ in range(_MAX_ITER):
        fx = f(x) - target
        if fx == 0.0:
            return x
        if fx > 0.0:
            hi = x
        else:
            lo = x
        slope = dfdx(x)
        step_ok = False
        if slope > 0.0 and math.isfinite(slope):
            xn = x - fx / slope
            if lo < xn < hi:
                step_ok = True
        if not step_ok:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= xtol * max(1.0, abs(x)) or hi - lo <= xtol * max(1.0, hi):
            return xn
        x = xn
    return x


def _upper_bracket(dof: int, log_tail: float) -> float:
    hi = max(1.0, 2.0 * dof)
    while chi2_logsf(hi, dof) > log_tail:
        hi *= 2.0
    return hi


def chi2_isf_log(log_tail: float, dof: int) -> float:
    """x with log P(X > x) = log_tail; safe for tails far below float range."""
    if int(dof) != dof or dof < 1:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    if log_tail > 0.0 or math.isnan(log_tail):
        raise ValueError("log tail probability must be <= 0")
    if log_tail == 0.0:
        return 0.0
    if log_tail == -math.inf:
        raise ValueError("zero tail probability has an infinite quantile")
    hi = _upper_bracket(dof, log_tail)

    # -logsf is increasing; d/dx(-logsf) = pdf / sf
    def neg_logsf(x):
        return -chi2_logsf(x, dof)

    def hazard(x):
        if x <= 0.0:
            return math.inf
        return math.exp(chi2_logpdf(x, dof) - chi2_logsf(x, dof))

    return _solve_increasing(neg_logsf, hazard, -log_tail, 0.0, hi)


def chi2_quantile(spec: Chi2Spec | int, prob: float | None = None) -> float:
    """Quantile of a chi-square distribution.

    Accepts either a ``Chi2Spec`` or ``(dof, prob)``.  ``prob = 1`` is
    rejected since the quantile would be infinite.
    """
    if not isinstance(spec, Chi2Spec):
        spec = Chi2Spec(spec, prob)
    dof, p = spec.dof, spec.prob
    if p == 0.0:
        return 0.0
    if p > 0.5:
        return chi2_isf_log(math.log1p(-p), dof)
    hi = _upper_bracket(dof, math.log1p(-p))
    return _solve_increasing(
        lambda x: chi2_cdf(x, dof),
        lambda x: math.exp(chi2_logpdf(x, dof)) if x > 0 else math.inf,
        p, 0.0, hi,
    )


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, dim: int, learning_rate: float = 1e-3, **kw) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim), 0, learning_rate, **kw)


def adam_update(state: AdamState, params: np.ndarray, grad: np.ndarray, sign: int = -1):
    """One bias-corrected Adam step; ``sign=+1`` ascends, ``-1`` descends.

    Returns ``(new_state, new_params)``; inputs are not modified.
    """
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if params.shape != grad.shape or state.first_moment.shape != params.shape:
        raise ValueError(
            f"dimension mismatch: params {params.shape}, grad {grad.shape}, "
            f"state {state.first_moment.shape}"
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params + sign * state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return replace(state, first_moment=m, second_moment=v, step_count=t), new_params


# ---------------------------------------------------------------------------
# Symmetric eigenvalues
# ---------------------------------------------------------------------------

def _check_symmetric(matrix) -> np.ndarray:
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-9):
        raise ValueError("matrix is not symmetric within 1e-9")
    return 0.5 * (a + a.T)


def eigvals_sym(matrix, tol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a symmetric matrix (ascending) by cyclic Jacobi rotations."""
    a = _check_symmetric(matrix)
    n = a.shape[0]
    if n == 1:
        return a.ravel().copy()
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta   # theta**2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


def min_eigenvalue_sym(matrix) -> float:
    return float(eigvals_sym(matrix)[0])


def max_eigenvalue_sym(matrix) -> float:
    return float(eigvals_sym(matrix)[-1])


# ---------------------------------------------------------------------------
# Seeded randomness
# ---------------------------------------------------------------------------

def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for ``seed``; extra integers select an independent sub-stream.

    ``make_rng(7, 2, 0)`` is the same stream on every call and independent
    of ``make_rng(7, 2, 1)``.
    """
    if seed < 0 or seed >= 2 ** 64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.PCG64(ss))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    return list(rng.spawn(n))
