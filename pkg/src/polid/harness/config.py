"""Experiment configuration: one strict JSON document per experiment."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..environments import ENVIRONMENTS

EXPERIMENTS = ("identify", "strategies")
RULES = ("simplified", "combinatorial")

# hyperparameters that default to the environment's own values when left unset
HYPER_KEYS = ("train_steps", "batch_size", "train_lr", "retrain_steps", "conf_steps", "conf_lr",
              "zeta", "n_conf", "delta", "fit_max_iter", "fit_lr")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _default_seeds(env: str) -> list[int]:
    return list(range(25 if env in ("gridworld", "continuous_grid") else 20))


@dataclass
class ExperimentConfig:
    """What to run.

    ``rule`` and ``conf`` may be single values or lists; every combination
    becomes a series in the report, all sharing the trained agent and the
    baseline demonstrations of a seed.  ``true_units`` fixes the test units
    the agent controls, otherwise each unit is drawn with ``unit_prob`` per
    seed (at least one is kept).  The ``strategies`` experiment compares
    supervisor choices of omega on ``omega_grid`` (start, stop, step) for
    an agent restricted to ``true_units`` against a reference agent
    restricted to ``reference_units``.
    """

    env: str
    experiment: str = "identify"
    rule: list[str] = field(default_factory=lambda: ["simplified"])
    conf: list[bool] = field(default_factory=lambda: [False])
    episodes: list[int] = field(default_factory=lambda: [100])
    seeds: list[int] | None = None
    true_units: list[int] | None = None
    unit_prob: float = 0.5
    env_kwargs: dict = field(default_factory=dict)
    pool: bool = False
    eval_episodes: int = 1000
    omega_grid: list[float] = field(default_factory=lambda: [1.0, 15.0, 0.5])
    reference_units: list[int] | None = None
    record_wallclock: bool = False
    out_dir: str = "results"
    name: str | None = None
    train_steps: int | None = None
    batch_size: int | None = None
    train_lr: float | None = None
    retrain_steps: int | None = None
    conf_steps: int | None = None
    conf_lr: float | None = None
    zeta: float | None = None
    n_conf: int | None = None
    delta: float | None = None
    fit_max_iter: int | None = None
    fit_lr: float | None = None

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------
    def validate(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown env {self.env!r}; choose from {sorted(ENVIRONMENTS)}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if isinstance(self.rule, str):
            self.rule = [self.rule]
        if isinstance(self.conf, bool):
            self.conf = [self.conf]
        if not self.rule or any(r not in RULES for r in self.rule):
            raise ConfigError(f"rule must be drawn from {RULES}")
        if not self.conf or any(not isinstance(c, bool) for c in self.conf):
            raise ConfigError("conf must be a boolean or a list of booleans")
        if len(set(self.rule)) != len(self.rule) or len(set(self.conf)) != len(self.conf):
            raise ConfigError("duplicate rule or conf entries")
        if not self.episodes or any(not _is_int(n) or n < 1 for n in self.episodes):
            raise ConfigError("episodes must be a non-empty list of positive integers")
        if len(set(self.episodes)) != len(self.episodes):
            raise ConfigError("duplicate episode counts")
        if self.seeds is None:
            self.seeds = _default_seeds(self.env)
        if not self.seeds or any(not _is_int(s) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of non-negative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("duplicate seeds")
        for key in ("true_units", "reference_units"):
            val = getattr(self, key)
            if val is not None and (any(not _is_int(u) or u < 0 for u in val) or len(set(val)) != len(val)):
                raise ConfigError(f"{key} must list distinct non-negative unit indices")
        if not 0.0 < self.unit_prob <= 1.0:
            raise ConfigError("unit_prob must lie in (0, 1]")
        if not isinstance(self.env_kwargs, dict):
            raise ConfigError("env_kwargs must be an object")
        if not _is_int(self.eval_episodes) or self.eval_episodes < 2:
            raise ConfigError("eval_episodes must be an integer >= 2")
        if len(self.omega_grid) != 3 or not all(_is_num(v) for v in self.omega_grid):
            raise ConfigError("omega_grid is [start, stop, step]")
        lo, hi, step = self.omega_grid
        if step <= 0 or hi < lo:
            raise ConfigError("omega_grid needs step > 0 and stop >= start")
        if self.experiment == "strategies":
            if self.true_units is None:
                raise ConfigError("the strategies experiment needs true_units")
            if True in self.conf:
                raise ConfigError("the strategies experiment runs without configuration")
        for key in ("train_steps", "batch_size", "retrain_steps", "conf_steps", "n_conf", "fit_max_iter"):
            val = getattr(self, key)
            if val is not None and (not _is_int(val) or val < 0 or (key == "batch_size" and val < 1)):
                raise ConfigError(f"{key} must be a non-negative integer")
        for key in ("train_lr", "conf_lr", "fit_lr"):
            val = getattr(self, key)
            if val is not None and (not _is_num(val) or val <= 0):
                raise ConfigError(f"{key} must be positive")
        if self.zeta is not None and (not _is_num(self.zeta) or self.zeta < 0):
            raise ConfigError("zeta must be non-negative")
        if self.delta is not None and (not _is_num(self.delta) or not 0.0 < self.delta < 1.0):
            raise ConfigError("delta must lie in (0, 1)")

    # ------------------------------------------------------------------
    def hyper(self, env) -> dict:
        """Hyperparameters with unset entries taken from the environment's defaults."""
        base = asdict(env.hyper)
        return {k: base[k] if getattr(self, k) is None else getattr(self, k) for k in HYPER_KEYS}

    def omegas(self) -> list[float]:
        lo, hi, step = self.omega_grid
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [round(lo + i * step, 12) for i in range(count)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "env" not in raw:
            raise ConfigError("config needs an 'env' entry")
        try:
            return cls(**raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        cfg = cls.from_dict(raw)
        if cfg.name is None:
            cfg.name = path.stem
        return cfg


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
