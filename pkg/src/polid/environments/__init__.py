from .base import ConfigError, ConfMdp, Hyperparameters
from .car import CarDriving
from .continuous_grid import ContinuousGridWorld
from .gridworld import DiscreteGridWorld
from .minigolf import Minigolf
from .toy import TwoStateMdp

ENVIRONMENTS = {
    "gridworld": DiscreteGridWorld,
    "continuous_grid": ContinuousGridWorld,
    "minigolf": Minigolf,
    "car": CarDriving,
    "toy": TwoStateMdp,
}


def make_env(name: str, **kwargs) -> ConfMdp:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(**kwargs)


__all__ = ["ConfMdp", "ConfigError", "Hyperparameters", "CarDriving", "ContinuousGridWorld", "DiscreteGridWorld",
           "Minigolf", "TwoStateMdp", "ENVIRONMENTS", "make_env"]
