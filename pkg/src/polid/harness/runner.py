"""Seeded experiment runner: train, demonstrate, identify (and configure), report."""
from __future__ import annotations

import csv
import io
import json
import math
import time
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..configuration import ConfigObjectiveSpec, identify_with_configuration
from ..environments import make_env
from ..estimation import FitOptions
from ..identification import identification_metrics, identify
from ..learning import SimulatedAgent, TrainSpec, estimate_return, train_policy
from ..stats_core import make_rng
from .config import ExperimentConfig

HEADER = ["env", "rule", "conf", "n", "seed", "alpha_hat", "beta_hat", "exact_match", "wallclock_s"]
STRATEGY_HEADER = HEADER + ["strategy", "omega", "return"]
METRICS = ["alpha_hat", "beta_hat", "exact_match", "wallclock_s"]
STRATEGIES = ["uniform", "reference_optimal", "identified", "oracle"]

# random sub-streams of a seed
TRUTH, TRAIN, DEMO, CONF, CURVE, EVAL, UNIFORM = range(1, 8)


@dataclass
class RunReport:
    header: list[str]
    rows: list[dict]
    aggregates: list[dict] = field(default_factory=list)
    extras: list[dict] = field(default_factory=list)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.header, lineterminator="\n")
        w.writeheader()
        for row in self.rows + self.aggregates:
            w.writerow({k: _fmt(row.get(k)) for k in self.header})
        return buf.getvalue()

    def write(self, out_dir, name: str) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, jsonl_path = out / f"{name}.csv", out / f"{name}.jsonl"
        csv_path.write_text(self.csv_text())
        jsonl_path.write_text("".join(json.dumps(e, sort_keys=True) + "\n" for e in self.extras))
        return csv_path, jsonl_path

    @property
    def failures(self) -> int:
        return sum(1 for e in self.extras if e.get("error"))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def aggregate(rows: list[dict], keys: list[str], metrics: list[str]) -> list[dict]:
    """Mean and 95% half-width (1.96 standard errors over seeds) per group, NaNs skipped."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, members in groups.items():
        mean_row = dict(zip(keys, key), seed="mean")
        ci_row = dict(zip(keys, key), seed="ci95")
        for m in metrics:
            vals = np.array([float(r[m]) for r in members if r.get(m) is not None and not _isnan(r[m])])
            mean_row[m] = float(vals.mean()) if len(vals) else None
            ci_row[m] = float(1.96 * vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else None
        out += [mean_row, ci_row]
    return out


def _isnan(v) -> bool:
    return isinstance(v, float) and math.isnan(v)


# ---------------------------------------------------------------------------
def _fit_options(policy, hp) -> FitOptions:
    if policy.is_exponential_family:
        return FitOptions(max_iter=hp["fit_max_iter"])
    return FitOptions(method="adam", max_iter=hp["fit_max_iter"], lr=hp["fit_lr"], accept_budget=True)


def _true_units(cfg: ExperimentConfig, m: int, seed: int) -> list[int]:
    if cfg.true_units is not None:
        if any(u >= m for u in cfg.true_units):
            raise ValueError(f"true_units out of range for {m} test units")
        return sorted(cfg.true_units)
    rng = make_rng(seed, TRUTH)
    chosen = [u for u in range(m) if rng.random() < cfg.unit_prob]
    if not chosen:
        chosen = [int(rng.integers(m))]
    return chosen


def _free_coords(units, chosen, d) -> list[int]:
    grouped = {c for u in units for c in u}
    return sorted({c for u in chosen for c in units[u]} | (set(range(d)) - grouped))


def _train_spec(hp) -> TrainSpec:
    return TrainSpec(hp["train_steps"], hp["batch_size"], hp["train_lr"])


def _base_row(cfg, rule, conf, n, seed) -> dict:
    return dict(env=cfg.env, rule=rule, conf=conf, n=n, seed=seed,
                alpha_hat=float("nan"), beta_hat=float("nan"), exact_match=None, wallclock_s=None)


def run_identify_seed(cfg: ExperimentConfig, seed: int):
    env = make_env(cfg.env, **cfg.env_kwargs)
    hp = cfg.hyper(env)
    policy = env.make_policy()
    units = env.test_units(policy)
    rows, extras = [], []
    try:
        truth = _true_units(cfg, len(units), seed)
        agent = SimulatedAgent(env, policy, _free_coords(units, truth, policy.dim), _train_spec(hp),
                               retrain_steps=hp["retrain_steps"])
        train_ret = agent.train(env.omega0, make_rng(seed, TRAIN)).final_return
    except Exception as exc:  # recorded, the sweep goes on
        err = f"training failed: {exc!r}"
        for n in cfg.episodes:
            for rule in cfg.rule:
                for conf in cfg.conf:
                    rows.append(_base_row(cfg, rule, conf, n, seed))
                    extras.append(dict(env=cfg.env, rule=rule, conf=conf, n=n, seed=seed, error=err))
        return rows, extras
    fit_opts = _fit_options(policy, hp)
    spec = ConfigObjectiveSpec(zeta=hp["zeta"], steps=hp["conf_steps"], learning_rate=hp["conf_lr"],
                               n_conf=hp["n_conf"])
    for n in cfg.episodes:
        batch0 = agent.demonstrate(env.omega0, n, make_rng(seed, DEMO, n))
        data0 = batch0.demo_dataset()
        for ri, rule in enumerate(cfg.rule):
            base, base_time, base_err = None, 0.0, None
            try:
                t0 = time.perf_counter()
                base = identify(policy, data0, hp["delta"], rule, opts=fit_opts, units=units)
                base_time = time.perf_counter() - t0
            except Exception as exc:
                base_err = f"{exc!r}"
            for conf in cfg.conf:
                row = _base_row(cfg, rule, conf, n, seed)
                extra = dict(env=cfg.env, rule=rule, conf=conf, n=n, seed=seed, true_units=truth,
                             train_return=train_ret, demo_steps=len(data0), error=None)
                try:
                    if base is None:
                        raise RuntimeError(base_err)
                    t0 = time.perf_counter()
                    if conf:
                        co = identify_with_configuration(
                            agent, policy, hp["delta"], spec, rule, make_rng(seed, CONF, n, ri), n,
                            units=units, fit_opts=fit_opts, pool=cfg.pool, baseline_batch=batch0,
                            baseline_outcome=base)
                        outcome = co.outcome
                        extra["rounds"] = [dict(probe=list(r.probe), round=r.round, omega=r.omega.tolist(),
                                                objective=r.objective, found=[list(f) for f in r.found],
                                                aborted=r.aborted) for r in co.rounds]
                        extra["final_omega"] = co.rounds[-1].omega.tolist() if co.rounds else env.omega0.tolist()
                    else:
                        outcome = base
                        extra["final_omega"] = env.omega0.tolist()
                    elapsed = base_time + time.perf_counter() - t0
                    met = identification_metrics(outcome, truth, d=len(units))
                    row.update(alpha_hat=met.alpha_hat, beta_hat=met.beta_hat, exact_match=met.exact_match,
                               wallclock_s=round(elapsed, 3) if cfg.record_wallclock else None)
                    extra.update(selected=[list(s) for s in outcome.selected_sets],
                                 lam=[t.lam for t in outcome.tests], notes=list(outcome.notes),
                                 fim_min_eig=base.fim_min_eig)
                except Exception as exc:
                    extra["error"] = f"{exc!r}"
                    extra["traceback"] = traceback.format_exc(limit=3)
                rows.append(row)
                extras.append(extra)
    return rows, extras


# ---------------------------------------------------------------------------
def return_curve(env, policy, free, omegas, hp, seed: int, eval_episodes: int) -> np.ndarray:
    """Monte-Carlo return of the policy trained in each omega, restricted to ``free``.

    The random streams depend on the omega index only, so curves of different
    policy spaces share common random numbers.
    """
    out = np.empty(len(omegas))
    spec = TrainSpec(hp["train_steps"], hp["batch_size"], hp["train_lr"], tuple(free))
    for j, w in enumerate(omegas):
        res = train_policy(env, policy, spec, [w], make_rng(seed, CURVE, j))
        out[j] = estimate_return(env, policy, res.theta, [w], eval_episodes, make_rng(seed, EVAL, j))[0]
    return out


def run_strategies_seed(cfg: ExperimentConfig, seed: int):
    env = make_env(cfg.env, **cfg.env_kwargs)
    hp = cfg.hyper(env)
    policy = env.make_policy()
    units = env.test_units(policy)
    d, m = policy.dim, len(units)
    omegas = cfg.omegas()
    truth = _true_units(cfg, m, seed)
    reference = sorted(cfg.reference_units) if cfg.reference_units is not None else list(range(m))
    rows, extras = [], []
    curves: dict[tuple, np.ndarray] = {}

    def curve(unit_set) -> np.ndarray:
        key = tuple(sorted(unit_set))
        if key not in curves:
            curves[key] = return_curve(env, policy, _free_coords(units, key, d), omegas, hp, seed,
                                       cfg.eval_episodes)
        return curves[key]

    def fail(err):
        for n in cfg.episodes:
            for rule in cfg.rule:
                for s in STRATEGIES:
                    rows.append(dict(_base_row(cfg, rule, False, n, seed), strategy=s, omega=None,
                                     **{"return": float("nan")}))
                    extras.append(dict(env=cfg.env, rule=rule, n=n, seed=seed, strategy=s, error=err))
        return rows, extras

    try:
        own = curve(truth)
        ref = curve(reference)
        agent = SimulatedAgent(env, policy, _free_coords(units, truth, d), _train_spec(hp))
        agent.train(env.omega0, make_rng(seed, TRAIN))
    except Exception as exc:
        return fail(f"training failed: {exc!r}")
    uniform_j = int(make_rng(seed, UNIFORM).integers(len(omegas)))
    fit_opts = _fit_options(policy, hp)
    for n in cfg.episodes:
        data = agent.demonstrate(env.omega0, n, make_rng(seed, DEMO, n)).demo_dataset()
        for rule in cfg.rule:
            try:
                t0 = time.perf_counter()
                outcome = identify(policy, data, hp["delta"], rule, opts=fit_opts, units=units)
                elapsed = time.perf_counter() - t0
                met = identification_metrics(outcome, truth, d=m)
                # the supervisor cannot tell members apart: take the first (smallest) set
                identified = list(outcome.selected_sets[0]) if outcome.selected_sets else []
                ident_curve = curve(identified)
                picks = dict(uniform=uniform_j, reference_optimal=int(np.argmax(ref)),
                             identified=int(np.argmax(ident_curve)), oracle=int(np.argmax(own)))
                err = None
            except Exception as exc:
                met, picks, err, elapsed, identified = None, {}, f"{exc!r}", 0.0, None
            for s in STRATEGIES:
                row = dict(_base_row(cfg, rule, False, n, seed), strategy=s, omega=None,
                           **{"return": float("nan")})
                if err is None:
                    j = picks[s]
                    row.update(alpha_hat=met.alpha_hat, beta_hat=met.beta_hat, exact_match=met.exact_match,
                               wallclock_s=round(elapsed, 3) if cfg.record_wallclock else None,
                               omega=omegas[j], **{"return": float(own[j])})
                rows.append(row)
                extras.append(dict(env=cfg.env, rule=rule, n=n, seed=seed, strategy=s, true_units=truth,
                                   identified=identified, error=err))
    extras.append(dict(env=cfg.env, seed=seed, omegas=omegas,
                       curves={",".join(map(str, k)): v.tolist() for k, v in curves.items()}))
    return rows, extras


def _seed_task(args):
    cfg_dict, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    with warnings.catch_warnings():
        # near-singular Fisher information is reported per row (fim_min_eig) instead
        warnings.filterwarnings("ignore", message="empirical Fisher information", category=RuntimeWarning)
        if cfg.experiment == "strategies":
            return run_strategies_seed(cfg, seed)
        return run_identify_seed(cfg, seed)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> RunReport:
    """Run every seed (in a process pool when ``jobs > 1``) and merge rows in a fixed order."""
    cfg_dict = cfg.to_dict()
    tasks = [(cfg_dict, s) for s in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_seed_task, tasks))
    else:
        results = [_seed_task(t) for t in tasks]
    rows = [r for res in results for r in res[0]]
    extras = [e for res in results for e in res[1]]
    rule_ix = {r: i for i, r in enumerate(cfg.rule)}
    conf_ix = {c: i for i, c in enumerate(cfg.conf)}
    if cfg.experiment == "strategies":
        strat_ix = {s: i for i, s in enumerate(STRATEGIES)}
        rows.sort(key=lambda r: (rule_ix[r["rule"]], r["n"], r["seed"], strat_ix[r["strategy"]]))
        aggs = aggregate(rows, ["env", "rule", "conf", "n", "strategy"], METRICS + ["return"])
        return RunReport(STRATEGY_HEADER, rows, aggs, extras)
    rows.sort(key=lambda r: (rule_ix[r["rule"]], conf_ix[r["conf"]], r["n"], r["seed"]))
    aggs = aggregate(rows, ["env", "rule", "conf", "n"], METRICS)
    return RunReport(HEADER, rows, aggs, extras)
