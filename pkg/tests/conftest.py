import os
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=15, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quiet_fim():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="empirical Fisher information")
        yield


@pytest.fixture(scope="session")
def trained_grid():
    """A full-feature grid-world agent trained at the default configuration."""
    from polid.environments import DiscreteGridWorld
    from polid.learning import TrainSpec, train_policy
    from polid.stats_core import make_rng

    env = DiscreteGridWorld()
    policy = env.make_policy()
    hp = env.hyper
    res = train_policy(env, policy, TrainSpec(hp.train_steps, hp.batch_size, hp.train_lr), env.omega0,
                       make_rng(2024))
    return env, policy, res


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """``record(k, ok, detail)`` stores the outcome of acceptance criterion ``k`` and prints it."""
    def _record(k: int, ok: bool, detail: str):
        ACCEPTANCE[k] = (bool(ok), detail)
        print(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
