"""GLR statistics, critical values and the two identification rules.

Tests run over *test units*.  A unit is a group of coordinates that is
pinned or freed together; by default every coordinate is its own unit, so
the rules act on single parameters.  Grouping (all action rows of one
feature, all first-layer weights of one network input) lets the same code
test features instead of coordinates.  Coordinates that belong to no unit
are never pinned.

For a free set of units ``I`` the statistic pins every coordinate of the
units outside ``I``; its chi-square dof is that number of coordinates.
The Bonferroni divisor uses the number of units ``m`` (``m`` tests for the
simplified rule, ``2**m`` for the combinatorial one).
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .estimation import DemoDataset, FitError, FitOptions, FitReport, PreparedData, empirical_fim, index_set, mle_fit
from .policies import PolicyModel
from .stats_core import chi2_isf_log, chi2_quantile

MAX_COMBINATORIAL_UNITS = 20


class IdentificationError(RuntimeError):
    pass


@dataclass
class GlrResult:
    free: tuple[int, ...]          # free units
    pinned: tuple[int, ...]        # pinned units
    lam: float
    dof: int
    critical: float
    rejected: bool
    inconclusive: bool = False


@dataclass
class IdentificationOutcome:
    rule: str
    selected_sets: list[tuple[int, ...]]
    tests: list[GlrResult]
    delta: float
    n_units: int
    units: list[list[int]]
    fim_min_eig: float | None = None
    full_fit: FitReport | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def selected(self) -> tuple[int, ...]:
        """The unique selected set (simplified rule); for the combinatorial rule the
        union is ambiguous, so this requires exactly one member."""
        if len(self.selected_sets) != 1:
            raise IdentificationError(f"{len(self.selected_sets)} selected sets; use selected_sets")
        return self.selected_sets[0]

    def selected_coordinates(self, which: int = 0) -> tuple[int, ...]:
        return tuple(sorted(c for u in self.selected_sets[which] for c in self.units[u]))


def singleton_units(d: int) -> list[list[int]]:
    return [[i] for i in range(d)]


def _log_bonferroni_tail(delta: float, mode: str, m: int) -> float:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if m < 1:
        raise ValueError("need at least one test")
    if mode == "simplified":
        return math.log(delta) - math.log(m)
    if mode == "combinatorial":
        return math.log(delta) - m * math.log(2.0)
    raise ValueError(f"unknown mode {mode!r}")


def chi2_critical(dof: int, delta: float, mode: str, m: int) -> float:
    """chi2_{dof, 1 - delta/m} (simplified) or chi2_{dof, 1 - delta/2^m} (combinatorial)."""
    log_tail = _log_bonferroni_tail(delta, mode, m)
    if log_tail > -30.0:
        return chi2_quantile(dof, -math.expm1(log_tail))
    # 1 - tail rounds to 1 in double precision: stay in log space
    return chi2_isf_log(log_tail, dof)


def critical_value(pinned_count: int, delta: float, mode: str, d: int) -> float:
    """Critical value for ``pinned_count`` single-coordinate pins out of ``d`` parameters."""
    if not 1 <= pinned_count <= d:
        raise ValueError("pinned_count must lie in [1, d]")
    dof = 1 if mode == "simplified" else pinned_count
    return chi2_critical(dof, delta, mode, d)


class GlrEngine:
    """Fits a dataset once for the full model and caches restricted fits by free coordinate set."""

    def __init__(self, policy: PolicyModel, data, opts: FitOptions | None = None,
                 units: Sequence[Sequence[int]] | None = None):
        self.policy = policy
        self.opts = opts or FitOptions()
        self.prep = data if isinstance(data, PreparedData) else PreparedData(policy, data)
        d = policy.dim
        self.units = [list(index_set(u, d)) for u in (units if units is not None else singleton_units(d))]
        flat = [c for u in self.units for c in u]
        if len(set(flat)) != len(flat):
            raise ValueError("test units overlap")
        if any(len(u) == 0 for u in self.units):
            raise ValueError("empty test unit")
        self.always_free = sorted(set(range(d)) - set(flat))
        self.m = len(self.units)
        self._fits: dict[tuple[int, ...], FitReport] = {}
        self.fit_count = 0
        self.full = self._fit(tuple(range(d)), None)
        self.convex = policy.is_exponential_family

    def coords(self, free_units) -> tuple[int, ...]:
        out = list(self.always_free)
        for u in free_units:
            out.extend(self.units[u])
        return tuple(sorted(out))

    def _fit(self, free_coords, theta0) -> FitReport:
        rep = self._fits.get(free_coords)
        if rep is None:
            try:
                rep = mle_fit(self.policy, self.prep, free_coords, self.opts, theta0=theta0)
            except FitError:
                rep = None
            self.fit_count += 1
            self._fits[free_coords] = rep
        return rep

    def fit_units(self, free_units) -> FitReport | None:
        warm = self.full.theta_hat if self.full is not None and self.full.usable else None
        return self._fit(self.coords(free_units), warm)

    def lam(self, free_units) -> tuple[float, bool]:
        """(lambda, conclusive) for the hypothesis that only ``free_units`` are controlled."""
        free_units = tuple(sorted(free_units))
        if len(free_units) == self.m:
            return 0.0, self.full is not None and self.full.usable
        full = self.full
        rep = self.fit_units(free_units)
        if full is None or rep is None or not (full.usable and rep.usable):
            return 0.0, False
        lam = 2.0 * (rep.nll - full.nll)
        if lam < 0.0:
            # budget-limited (non-convex) fits and rank-deficient designs can land
            # either side at the floating-point floor; clamp them
            if self.convex and not full.degenerate and lam < -2.0 * self.opts.tol_nll:
                raise IdentificationError(
                    f"restricted fit beats the full fit by {-lam / 2:.3g} nats; the full fit is broken")
            lam = 0.0
        return lam, True

    def test(self, free_units, mode: str, delta: float) -> GlrResult:
        free_units = tuple(sorted(free_units))
        pinned = tuple(u for u in range(self.m) if u not in free_units)
        dof = sum(len(self.units[u]) for u in pinned)
        lam, ok = self.lam(free_units)
        if dof == 0:
            return GlrResult(free_units, pinned, lam, 0, math.inf, False, not ok)
        crit = chi2_critical(dof, delta, mode, self.m)
        return GlrResult(free_units, pinned, lam, dof, crit, ok and lam > crit, not ok)


def glr_statistic(policy: PolicyModel, data, free_restricted, opts: FitOptions | None = None) -> GlrResult:
    """GLR statistic of pinning every coordinate outside ``free_restricted``.

    The critical value reported uses a single test at the default 0.01
    level; callers that need a rule-specific critical value use the rules.
    """
    free = index_set(free_restricted, policy.dim)
    eng = GlrEngine(policy, data, opts)
    res = eng.test(free, "simplified", 0.01)
    if res.inconclusive:
        raise FitError("fit did not converge")
    if res.dof:
        res.critical = chi2_quantile(res.dof, 0.99)
        res.rejected = res.lam > res.critical
    return res


def _fim_check(engine: GlrEngine) -> float | None:
    if not engine.policy.is_exponential_family or engine.full is None:
        return None
    f = engine.policy.fisher_sum_phi(engine.full.theta_hat, engine.prep.phi, engine.prep.counts) / engine.prep.n
    ev = float(np.linalg.eigvalsh(0.5 * (f + f.T))[0])
    if ev < 1e-8:
        warnings.warn(f"empirical Fisher information is near singular (min eigenvalue {ev:.3g}); "
                      "the parameterization may not be identifiable", RuntimeWarning, stacklevel=3)
    return ev


def _engine(policy, data, opts, units, engine):
    if engine is not None:
        return engine
    return GlrEngine(policy, data, opts, units)


def identify_simplified(policy: PolicyModel, data, delta: float, opts: FitOptions | None = None,
                        units=None, candidates=None, engine: GlrEngine | None = None) -> IdentificationOutcome:
    """Select every unit whose single-unit pin is rejected at chi2_{dof, 1-delta/m}.

    ``candidates`` restricts which units are tested (others are neither
    tested nor selected); the Bonferroni divisor stays ``m``.
    """
    eng = _engine(policy, data, opts, units, engine)
    _log_bonferroni_tail(delta, "simplified", eng.m)
    fim_min = _fim_check(eng)
    todo = range(eng.m) if candidates is None else sorted(set(candidates))
    tests = []
    selected = []
    notes = []
    for u in todo:
        res = eng.test([v for v in range(eng.m) if v != u], "simplified", delta)
        tests.append(res)
        if res.inconclusive:
            notes.append(f"unit {u}: fit failed, test inconclusive")
        elif res.rejected:
            selected.append(u)
    return IdentificationOutcome("simplified", [tuple(selected)], tests, delta, eng.m, eng.units,
                                 fim_min, eng.full, notes)


def identify_combinatorial(policy: PolicyModel, data, delta: float, opts: FitOptions | None = None,
                           units=None, engine: GlrEngine | None = None) -> IdentificationOutcome:
    """Every free set I with lambda_I <= c and lambda_{I minus i} > c for all i in I."""
    eng = _engine(policy, data, opts, units, engine)
    if eng.m > MAX_COMBINATORIAL_UNITS:
        raise IdentificationError(f"combinatorial rule capped at {MAX_COMBINATORIAL_UNITS} units, got {eng.m}")
    _log_bonferroni_tail(delta, "combinatorial", eng.m)
    fim_min = _fim_check(eng)
    results: dict[tuple[int, ...], GlrResult] = {}
    for size in range(eng.m + 1):
        for free in itertools.combinations(range(eng.m), size):
            results[free] = eng.test(free, "combinatorial", delta)
    selected = []
    for free, res in results.items():
        if res.inconclusive or res.rejected:
            continue
        necessary = True
        for i in free:
            sub = results[tuple(u for u in free if u != i)]
            if not sub.rejected:
                necessary = False
                break
        if necessary:
            selected.append(free)
    notes = [f"free set {k}: fit failed, test inconclusive" for k, r in results.items() if r.inconclusive]
    return IdentificationOutcome("combinatorial", selected, list(results.values()), delta, eng.m,
                                 eng.units, fim_min, eng.full, notes)


def identify(policy, data, delta, rule: str, opts=None, units=None, engine=None) -> IdentificationOutcome:
    if rule == "simplified":
        return identify_simplified(policy, data, delta, opts, units, engine=engine)
    if rule == "combinatorial":
        return identify_combinatorial(policy, data, delta, opts, units, engine=engine)
    raise ValueError(f"unknown rule {rule!r}")


def _alpha_beta(selected: set, true_set: set, d: int) -> tuple[float, float]:
    neg = d - len(true_set)
    alpha = len(selected - true_set) / neg if neg else 0.0
    beta = len(true_set - selected) / len(true_set) if true_set else 0.0
    return alpha, beta


@dataclass(frozen=True)
class Metrics:
    alpha_hat: float
    beta_hat: float
    exact_match: bool
    matched: tuple[int, ...]


def identification_metrics(outcome, true_set, d: int | None = None) -> Metrics:
    """alpha = |S minus I*| / (d - |I*|), beta = |I* minus S| / |I*| (0/0 -> 0), in unit indices.

    ``outcome`` is an IdentificationOutcome or a plain selected set.  For
    several selected sets, the member with the smallest alpha + beta is
    scored (ties broken by enumeration order) and exact match means I* is
    one of the members.
    """
    true = set(int(i) for i in true_set)
    if isinstance(outcome, IdentificationOutcome):
        sets = outcome.selected_sets
        d = outcome.n_units if d is None else d
    else:
        sets = [tuple(outcome)]
    if d is None:
        raise ValueError("d is required for a plain selected set")
    if any(i < 0 or i >= d for i in true):
        raise ValueError("true set out of range")
    if not sets:
        a, b = _alpha_beta(set(), true, d)
        return Metrics(a, b, False, ())
    scored = [(sum(_alpha_beta(set(s), true, d)), k) for k, s in enumerate(sets)]
    best = min(scored)[1]
    a, b = _alpha_beta(set(sets[best]), true, d)
    exact = any(set(s) == true for s in sets)
    return Metrics(a, b, exact, tuple(sets[best]))
